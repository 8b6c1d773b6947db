#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "fixtures.hpp"
#include "labgrade/pipeline.hpp"

using namespace labgrade;
using testing_support::TempDir;

namespace {

const Corpus& scored_corpus() {
  static const Corpus c = testing_support::desk_corpus(250, 7);
  return c;
}

const Checkpoint& scored_checkpoint() {
  static const Checkpoint ck = train_pipeline(scored_corpus(), RunConfig{});
  return ck;
}

const Corpus& presence_corpus() {
  static const Corpus c = [] {
    SyntheticOptions o;
    o.seed = 7;
    o.n_reports = 250;
    o.n_dims = 7;
    o.mode = DimensionMode::presence;
    return generate_synthetic_corpus(o);
  }();
  return c;
}

const Checkpoint& presence_checkpoint() {
  static const Checkpoint ck = [] {
    RunConfig c;
    c.mode = DimensionMode::presence;
    return train_pipeline(presence_corpus(), c);
  }();
  return ck;
}

// A sentence built from `keywords` padded with neutral words.
std::string keyword_sentence(const std::vector<std::string>& family, int variant) {
  const std::string a = family[variant % family.size()];
  const std::string b = family[(variant + 2) % family.size()];
  std::string s = "The " + a + " and " + b + " of our group were in the notebook.";
  return s;
}

const char* kDistractors[] = {
    "The pendulum bob was released from the clamp stand.",
    "We held the wooden ruler next to the string carefully.",
    "Our lab partner moved the heavy metal ball back and forth.",
    "The teacher gave each group a notebook and a pencil.",
    "After the swing the ball slowly came to the floor.",
    "We took a photo of the setup with the materials.",
};

Report distractor_report(const std::string& id) {
  std::string text;
  for (const char* s : kDistractors) text += std::string(s) + " ";
  return make_report(id, text, Split::test, "adhoc");
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

TEST(RunConfig, JsonRoundTrip) {
  RunConfig c;
  c.seed = 42;
  c.learning_rate = 1e-4;
  c.head = HeadKind::per_dimension;
  c.verifier_mode = VerifierMode::random;
  c.provider.embedding_dim = 32;
  EXPECT_EQ(run_config_from_json(nlohmann::json::parse(to_json(c).dump())), c);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"lerning_rate", 0.1}}), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"learning_rate", "fast"}}), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"learning_rate", -1}}), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"k", 0}}), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"provider", {{"dim", 3}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"verifier_mode", "none_truncate"}, {"include_report", false}}),
               ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"mode", "presence"}, {"verifier_mode", "random"}}), ConfigError);
}

TEST(RunConfig, LoadsFromFile) {
  TempDir dir;
  std::ofstream(dir / "c.json") << R"({"epochs": 4, "alpha": 2.0})";
  const RunConfig c = load_run_config(dir / "c.json");
  EXPECT_EQ(c.epochs, 4);
  EXPECT_EQ(c.alpha, 2.0);
  std::ofstream(dir / "bad.json") << "{";
  EXPECT_THROW(load_run_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_run_config(dir / "missing.json"), Error);
}

TEST(RunConfig, EnvironmentOverrides) {
  const std::map<std::string, std::string> env = {
      {"LABGRADE_LEARNING_RATE", "0.001"}, {"LABGRADE_K", "5"}, {"LABGRADE_INCLUDE_REPORT", "false"},
      {"LABGRADE_PROVIDER_EMBEDDING_DIM", "64"}, {"LABGRADE_LOSS", "ce"}};
  auto lookup = [&](const std::string& name) -> std::optional<std::string> {
    auto it = env.find(name);
    return it == env.end() ? std::nullopt : std::optional<std::string>(it->second);
  };
  const RunConfig c = apply_env_overrides(RunConfig{}, lookup);
  EXPECT_EQ(c.learning_rate, 0.001);
  EXPECT_EQ(c.k, 5);
  EXPECT_FALSE(c.include_report);
  EXPECT_EQ(c.provider.embedding_dim, 64);
  EXPECT_EQ(c.loss, GraderLoss::ce);

  auto bad = [](const std::string& name) -> std::optional<std::string> {
    if (name == "LABGRADE_BATCH_SIZE") return "eight";
    return std::nullopt;
  };
  EXPECT_THROW(apply_env_overrides(RunConfig{}, bad), ConfigError);
}

TEST(RunConfig, GraderSettingsFollowVerifierMode) {
  RunConfig c;
  EXPECT_TRUE(c.grader().use_relevant);
  c.verifier_mode = VerifierMode::none_moving_avg;
  EXPECT_FALSE(c.grader().use_relevant);
  EXPECT_EQ(c.grader().report_strategy, ReportStrategy::moving_average);
  c.verifier_mode = VerifierMode::random;
  c.include_report = false;
  EXPECT_EQ(c.grader().slots(), 2);
}

// ---------------------------------------------------------------------------
// Ablations

TEST(Ablation, ChangesOnlyTheNamedComponent) {
  const RunConfig base;
  RunConfig expected = base;
  expected.verifier_mode = VerifierMode::random;
  EXPECT_EQ(apply_ablation(base, Ablation::random_verifier), expected);
  expected = base;
  expected.loss = GraderLoss::ce;
  EXPECT_EQ(apply_ablation(base, Ablation::cross_entropy), expected);
  expected = base;
  expected.include_report = false;
  EXPECT_EQ(apply_ablation(base, parse_ablation("without-report")), expected);
  EXPECT_EQ(parse_ablation("without_verifier_moving_average"), Ablation::without_verifier_moving_average);
  EXPECT_THROW(parse_ablation("no-grader"), ConfigError);
}

TEST(RandomSelection, DeterministicPerSeed) {
  const Report& r = scored_corpus().reports.front();
  const auto a = random_selection(r, "d1", 3, 11);
  EXPECT_EQ(a, random_selection(r, "d1", 3, 11));
  EXPECT_EQ(a.size(), 3u);
  std::set<int> distinct(a.begin(), a.end());
  EXPECT_EQ(distinct.size(), 3u);
  bool differs = false;
  for (std::uint64_t seed = 12; seed < 20 && !differs; ++seed) differs = random_selection(r, "d1", 3, seed) != a;
  EXPECT_TRUE(differs);
  EXPECT_EQ(random_selection(r, "d1", 1000, 11).size(), r.sentences.size());
}

// ---------------------------------------------------------------------------
// Training and assessment

TEST(Pipeline, GraderValidationLossDecreasesEarly) {
  const Corpus c = testing_support::desk_corpus(200, 7);
  RunConfig config;
  config.seed = 7;
  config.epochs = 3;
  const Checkpoint ck = train_pipeline(c, config);
  ASSERT_EQ(ck.grader_log.epochs.size(), 3u);
  EXPECT_LT(ck.grader_log.epochs[1].val_loss, ck.grader_log.epochs[0].val_loss);
  EXPECT_LT(ck.grader_log.epochs[2].val_loss, ck.grader_log.epochs[1].val_loss);
  EXPECT_EQ(ck.selection_loss(), ck.grader_log.best_val_loss);
}

TEST(Pipeline, ModeMismatchIsRejected) {
  RunConfig presence;
  presence.mode = DimensionMode::presence;
  EXPECT_THROW(train_pipeline(scored_corpus(), presence), ModeMismatch);
  EXPECT_THROW(assess_presence(scored_checkpoint(), scored_corpus().reports.front()), ModeMismatch);
  EXPECT_THROW(assess(presence_checkpoint(), presence_corpus().reports.front()), ModeMismatch);
}

TEST(Pipeline, TotalIsSumOfDimensions) {
  for (const Report* r : scored_corpus().reports_in(Split::test)) {
    const AssessedReport a = assess(scored_checkpoint(), *r);
    ASSERT_EQ(a.per_dimension.size(), 7u);
    int sum = 0;
    for (const auto& d : a.per_dimension) {
      EXPECT_GE(d.score, 0);
      EXPECT_LE(d.score, 5);
      if (!d.decision) EXPECT_EQ(d.score, 0);
      sum += d.score;
    }
    EXPECT_EQ(a.total, sum);
  }
}

TEST(Pipeline, KeywordRichDimensionScoresHigh) {
  const std::string text =
      "We hypothesize that the pendulum swings with a testable prediction. "
      "Our prediction was that the long string would swing slowly. "
      "We expect the heavy bob to predict the same period. "
      "The hypothesis of our group was written in the notebook. "
      "It was testable and we predict a longer swing for each length. "
      "The pendulum bob was released from the clamp stand. "
      "We held the wooden ruler next to the string carefully. "
      "Our lab partner moved the heavy metal ball back and forth. "
      "The teacher gave each group a notebook and a pencil. "
      "After the swing the ball slowly came to the floor. "
      "We took a photo of the setup with the materials. "
      "Then the ball was attached to the string again. "
      "The classroom floor was cleared before the first swing.";
  const AssessedReport a = assess(scored_checkpoint(), make_report("kw", text, Split::test, "adhoc"));
  EXPECT_GE(a.per_dimension[0].score, 3);
}

TEST(Pipeline, DistractorOnlyReportScoresZero) {
  EXPECT_EQ(assess(scored_checkpoint(), distractor_report("plain")).total, 0);
}

TEST(Pipeline, PresenceFlagsOnlyTheCoveredIdea) {
  std::string text;
  const auto& family = synthetic_keywords(4);
  for (int i = 0; i < 2; ++i) text += keyword_sentence(family, i) + " ";
  for (const char* s : kDistractors) text += std::string(s) + " ";
  const auto present = assess_presence(presence_checkpoint(), make_report("essay", text, Split::test, "adhoc"));
  ASSERT_EQ(present.size(), 7u);
  for (std::size_t m = 0; m < present.size(); ++m) EXPECT_EQ(present[m], m == 3) << "dimension " << m + 1;
}

TEST(Pipeline, PresenceWithNoIdeasIsAllFalse) {
  const auto present = assess_presence(presence_checkpoint(), distractor_report("empty"));
  for (bool p : present) EXPECT_FALSE(p);
}

TEST(Pipeline, NoVerifierModesStillScore) {
  RunConfig c;
  c.verifier_mode = VerifierMode::none_truncate;
  c.epochs = 2;
  const Checkpoint ck = train_pipeline(scored_corpus(), c);
  EXPECT_FALSE(ck.verifier.has_value());
  const AssessedReport a = assess(ck, scored_corpus().reports.back());
  EXPECT_TRUE(std::isnan(a.per_dimension[0].verifier_probability));
  EXPECT_TRUE(a.per_dimension[0].selected_positions.empty());
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, RoundTripPreservesAssessments) {
  TempDir dir;
  save_checkpoint(scored_checkpoint(), dir / "ck");
  const Checkpoint loaded = load_checkpoint(dir / "ck");
  EXPECT_EQ(loaded.config, scored_checkpoint().config);
  EXPECT_EQ(loaded.rubric, scored_checkpoint().rubric);
  EXPECT_EQ(loaded.grader_log.best_epoch, scored_checkpoint().grader_log.best_epoch);
  for (const Report* r : scored_corpus().reports_in(Split::test)) {
    const auto a = assess(scored_checkpoint(), *r);
    const auto b = assess(loaded, *r);
    for (std::size_t m = 0; m < a.per_dimension.size(); ++m) {
      EXPECT_EQ(a.per_dimension[m].score, b.per_dimension[m].score);
      EXPECT_EQ(a.per_dimension[m].verifier_probability, b.per_dimension[m].verifier_probability);
    }
  }
  // Saving over an existing checkpoint replaces it.
  save_checkpoint(scored_checkpoint(), dir / "ck");
  EXPECT_NO_THROW(load_checkpoint(dir / "ck"));
}

TEST(Checkpoint, TamperedFileFailsManifest) {
  TempDir dir;
  save_checkpoint(scored_checkpoint(), dir / "ck");
  {
    std::ofstream out(dir / "ck" / "config.json", std::ios::app);
    out << " ";
  }
  EXPECT_THROW(load_checkpoint(dir / "ck"), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "nowhere"), CheckpointError);
}

TEST(Checkpoint, PresenceCheckpointHasNoGrader) {
  TempDir dir;
  save_checkpoint(presence_checkpoint(), dir / "ck");
  const Checkpoint loaded = load_checkpoint(dir / "ck");
  EXPECT_FALSE(loaded.grader.has_value());
  EXPECT_EQ(loaded.selection_loss(), presence_checkpoint().verifier_log.best_val_loss);
}

// ---------------------------------------------------------------------------
// Grid search

TEST(Grid, StandardSpaceHas540Cells) {
  const GridSpec g = GridSpec::standard();
  EXPECT_EQ(g.size(), 540u);
  std::set<std::tuple<double, int, double, int>> cells;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const RunConfig c = g.cell(RunConfig{}, i);
    cells.insert({c.learning_rate, c.batch_size, c.alpha, c.k});
  }
  EXPECT_EQ(cells.size(), 540u);
  EXPECT_THROW(g.cell(RunConfig{}, 540), ConfigError);
}

TEST(Grid, SingleCellIsReturned) {
  GridSpec g{{0.01}, {4}, {2.5}, {2}};
  auto evaluator = [](const RunConfig& c) { return CellResult{c, 0.7, nlohmann::ordered_json::object(), false}; };
  std::ostringstream board;
  const GridResult r = grid_search(g, RunConfig{}, evaluator, &board);
  EXPECT_EQ(r.best_index, 0u);
  EXPECT_EQ(r.best.learning_rate, 0.01);
  EXPECT_EQ(r.best.k, 2);
  const std::string lines = board.str();
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 1);
}

TEST(Grid, NanCellIsFlaggedAndSkipped) {
  GridSpec g{{0.01, 0.02, 0.03}, {4}, {1.0}, {3}};
  auto evaluator = [](const RunConfig& c) {
    const double loss = c.learning_rate == 0.02 ? std::numeric_limits<double>::quiet_NaN() : c.learning_rate * 10;
    return CellResult{c, loss, nlohmann::ordered_json::object(), false};
  };
  std::ostringstream board;
  const GridResult r = grid_search(g, RunConfig{}, evaluator, &board);
  EXPECT_TRUE(r.cells[1].diverged);
  EXPECT_FALSE(r.cells[0].diverged);
  EXPECT_EQ(r.best_index, 0u);
  std::istringstream lines(board.str());
  std::string line;
  int diverged = 0;
  while (std::getline(lines, line)) diverged += nlohmann::json::parse(line).at("diverged").get<bool>();
  EXPECT_EQ(diverged, 1);
}

TEST(Grid, TiesKeepEarlierCell) {
  GridSpec g{{0.01, 0.02}, {4}, {1.0}, {3}};
  auto evaluator = [](const RunConfig& c) { return CellResult{c, 1.0, nlohmann::ordered_json::object(), false}; };
  EXPECT_EQ(grid_search(g, RunConfig{}, evaluator).best_index, 0u);
}

TEST(Grid, EmptyGridIsConfigError) {
  GridSpec g{{}, {4}, {1.0}, {3}};
  auto evaluator = [](const RunConfig& c) { return CellResult{c, 1.0, nlohmann::ordered_json::object(), false}; };
  EXPECT_THROW(grid_search(g, RunConfig{}, evaluator), ConfigError);
}

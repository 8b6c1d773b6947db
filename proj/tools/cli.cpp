#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "labgrade/pipeline.hpp"

namespace labgrade::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& content, bool append = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, append ? std::ios::app | std::ios::binary : std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw Error("failed writing " + path.string());
}

RunConfig resolve_config(const std::string& path) {
  const RunConfig base = path.empty() ? RunConfig{} : load_run_config(path);
  return apply_env_overrides(base);
}

std::string fixed(double v, int digits = 6) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::uint64_t seed = 1;
  int n_reports = 50;
  int n_dims = 7;
  double skew = SyntheticOptions{}.skew;
  std::string mode = "scored";
  std::string out;
};

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  SyntheticOptions options;
  options.seed = a.seed;
  options.n_reports = a.n_reports;
  options.n_dims = a.n_dims;
  options.skew = a.skew;
  options.mode = parse_mode(a.mode);
  const Corpus corpus = generate_synthetic_corpus(options);
  std::ostringstream buffer;
  write_corpus(corpus, buffer);
  write_text(a.out, buffer.str());
  out << "wrote " << corpus.reports.size() << " reports to " << a.out << "\n";
}

struct TrainArgs {
  std::string corpus;
  std::string config;
  std::string out_dir;
  std::string ablation;
  std::string leaderboard;
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig config = resolve_config(a.config);
  std::optional<Ablation> ablation;
  if (!a.ablation.empty()) {
    ablation = parse_ablation(a.ablation);
    config = apply_ablation(config, *ablation);
  }
  const Corpus corpus = load_corpus(a.corpus);
  const Checkpoint ck = train_pipeline(corpus, config);
  const fs::path dir(a.out_dir);
  save_checkpoint(ck, dir / "checkpoint");
  if (ck.verifier) write_text(dir / "verifier_log.jsonl", ck.verifier_log.to_jsonl());
  if (ck.grader) write_text(dir / "grader_log.jsonl", ck.grader_log.to_jsonl());
  out << "checkpoint: " << (dir / "checkpoint").string() << "\n";
  out << "validation loss: " << fixed(ck.selection_loss()) << "\n";

  if (ablation) {
    CellResult row;
    row.config = config;
    row.val_loss = ck.selection_loss();
    row.diverged = !std::isfinite(row.val_loss);
    if (!corpus.reports_in(Split::val).empty()) row.metrics = ojson::parse(to_json(evaluate(ck, corpus, Split::val)));
    row.metrics["ablation"] = std::string(to_string(*ablation));
    const fs::path board = a.leaderboard.empty() ? dir / "leaderboard.jsonl" : fs::path(a.leaderboard);
    write_text(board, leaderboard_line(row), true);
    out << "leaderboard: " << board.string() << "\n";
  }
}

struct GradeArgs {
  std::string checkpoint;
  std::string input;
  std::string out;
  std::string diagnostics;
  std::string mode;
};

void cmd_grade(const GradeArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const DimensionMode mode = a.mode.empty() ? ck.config.mode : parse_mode(a.mode);
  if (mode != ck.config.mode) {
    throw ModeMismatch("checkpoint was trained in " + std::string(to_string(ck.config.mode)) + " mode, not " +
                       std::string(to_string(mode)));
  }
  const Corpus input = load_corpus(a.input, false);
  if (!input.rubric.dimensions.empty() && input.rubric != ck.rubric) {
    throw ValidationError("input rubric does not match the checkpoint rubric");
  }

  std::ostringstream csv;
  csv << "report_id";
  for (const auto& d : ck.rubric.dimensions) csv << ',' << d.id;
  csv << (mode == DimensionMode::presence ? ",n_present\n" : ",total\n");

  ojson diagnostics;
  diagnostics["mode"] = to_string(mode);
  ojson rows = ojson::array();
  for (const auto& report : input.reports) {
    ojson row;
    row["report_id"] = report.id;
    ojson dims = ojson::array();
    csv << report.id;
    if (mode == DimensionMode::presence) {
      int present = 0;
      for (const auto& dim : ck.rubric.dimensions) {
        const VerifierOutput v = ck.verifier->verify(report, dim);
        std::vector<int> positions;
        for (const auto& s : v.top_k) positions.push_back(s.sentence_position);
        csv << ',' << (v.decision ? "true" : "false");
        present += v.decision ? 1 : 0;
        dims.push_back({{"dimension_id", dim.id},
                        {"present", v.decision},
                        {"verifier_probability", v.probability},
                        {"selected_positions", positions}});
      }
      csv << ',' << present << '\n';
      row["n_present"] = present;
    } else {
      const AssessedReport assessed = assess(ck, report);
      for (const auto& d : assessed.per_dimension) {
        csv << ',' << d.score;
        dims.push_back({{"dimension_id", d.dimension_id},
                        {"score", d.score},
                        {"decision", d.decision},
                        {"verifier_probability",
                         std::isfinite(d.verifier_probability) ? ojson(d.verifier_probability) : ojson(nullptr)},
                        {"selected_positions", d.selected_positions}});
      }
      csv << ',' << assessed.total << '\n';
      row["total"] = assessed.total;
    }
    row["dimensions"] = std::move(dims);
    rows.push_back(std::move(row));
  }
  diagnostics["reports"] = std::move(rows);

  fs::path diag = a.diagnostics.empty() ? fs::path(a.out).replace_extension(".json") : fs::path(a.diagnostics);
  if (diag == fs::path(a.out)) diag += ".json";
  write_text(a.out, csv.str());
  write_text(diag, diagnostics.dump(2) + "\n");
  out << "graded " << input.reports.size() << " reports: " << a.out << ", " << diag.string() << "\n";
}

struct EvaluateArgs {
  std::string checkpoint;
  std::string corpus;
  std::string split = "test";
  int bootstrap = 0;
  std::uint64_t seed = 1;
  std::string out;
  std::string predictions;
  std::string reading = "normalized";
};

void cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Corpus corpus = load_corpus(a.corpus);
  EvaluationOptions options;
  options.bootstrap_resamples = a.bootstrap;
  options.seed = a.seed;
  options.reading = a.reading == "literal" ? WeightedAccuracyReading::literal : WeightedAccuracyReading::normalized_error;
  const PredictionSet predictions = predict(ck, corpus, parse_split(a.split));
  const std::string report = to_json(evaluate_predictions(predictions, options));
  if (!a.predictions.empty()) write_text(a.predictions, predictions_csv(predictions));
  if (a.out.empty()) {
    out << report;
  } else {
    write_text(a.out, report);
    out << "wrote " << a.out << "\n";
  }
}

void cmd_agreement(const std::string& path, std::ostream& out) {
  const Corpus corpus = load_corpus(path, false);
  out << "alpha: " << fixed(masi_alpha(corpus.selections)) << "\n";
  std::map<std::string, std::vector<double>> sizes;
  for (const auto& s : corpus.selections) sizes[s.rater_id].push_back(static_cast<double>(s.positions.size()));
  for (const auto& [rater, v] : sizes) {
    const Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
    const double mean = x.mean();
    const double sd = std::sqrt((x.array() - mean).square().mean());
    out << "rater " << rater << ": selections=" << v.size() << " mean=" << fixed(mean, 3) << " sd=" << fixed(sd, 3)
        << "\n";
  }
}

struct GridArgs {
  std::string corpus;
  std::string config;
  std::string leaderboard;
  std::string best_out;
  std::vector<double> learning_rates;
  std::vector<int> batch_sizes;
  std::vector<double> alphas;
  std::vector<int> ks;
};

void cmd_grid(const GridArgs& a, std::ostream& out) {
  const RunConfig base = resolve_config(a.config);
  GridSpec grid = GridSpec::standard();
  if (!a.learning_rates.empty()) grid.learning_rates = a.learning_rates;
  if (!a.batch_sizes.empty()) grid.batch_sizes = a.batch_sizes;
  if (!a.alphas.empty()) grid.alphas = a.alphas;
  if (!a.ks.empty()) grid.ks = a.ks;
  const Corpus corpus = load_corpus(a.corpus);
  if (fs::path(a.leaderboard).has_parent_path()) fs::create_directories(fs::path(a.leaderboard).parent_path());
  std::ofstream board(a.leaderboard, std::ios::app | std::ios::binary);
  if (!board) throw Error("cannot write " + a.leaderboard);
  out << "evaluating " << grid.size() << " grid cells\n";
  const GridResult result = grid_search(grid, base, training_evaluator(corpus), &board);
  const std::string best = to_json(result.best).dump(2) + "\n";
  if (!a.best_out.empty()) write_text(a.best_out, best);
  out << "best cell " << result.best_index << " (validation loss " << fixed(result.cells[result.best_index].val_loss)
      << ")\n"
      << best;
}

void route_logging(std::ostream& err, bool verbose) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("labgrade", sink);
  logger->set_pattern("[%l] %v");
  logger->set_level(verbose ? spdlog::level::info : spdlog::level::warn);
  spdlog::set_default_logger(logger);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rubric-based lab report assessment: train, grade and evaluate"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log training progress");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic corpus");
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--n-reports", synth.n_reports, "Number of reports")->check(CLI::Range(1, 1000000))->capture_default_str();
  synth_cmd->add_option("--n-dims", synth.n_dims, "Rubric dimensions (1-8)")->check(CLI::Range(1, 8))->capture_default_str();
  synth_cmd->add_option("--skew", synth.skew, "Score skew (0 = uniform)")->check(CLI::NonNegativeNumber)->capture_default_str();
  synth_cmd->add_option("--mode", synth.mode, "scored or presence")->check(CLI::IsMember({"scored", "presence"}))->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Output JSONL path")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train verifier and grader");
  train_cmd->add_option("--corpus", train.corpus, "Corpus JSONL")->required();
  train_cmd->add_option("--config", train.config, "Run configuration JSON");
  train_cmd->add_option("--out-dir", train.out_dir, "Output directory")->required();
  train_cmd->add_option("--ablation", train.ablation,
                        "random-verifier, without-verifier-truncate, without-verifier-moving-average, "
                        "without-report or cross-entropy");
  train_cmd->add_option("--leaderboard", train.leaderboard, "Ablation leaderboard JSONL (default <out-dir>/leaderboard.jsonl)");

  GradeArgs grade;
  auto* grade_cmd = app.add_subcommand("grade", "Score reports with a checkpoint");
  grade_cmd->add_option("--checkpoint", grade.checkpoint, "Checkpoint directory")->required();
  grade_cmd->add_option("--input", grade.input, "Reports JSONL")->required();
  grade_cmd->add_option("--out", grade.out, "Scores CSV")->required();
  grade_cmd->add_option("--diagnostics", grade.diagnostics, "Diagnostics JSON (default: --out with .json)");
  grade_cmd->add_option("--mode", grade.mode, "scored or presence (default: checkpoint mode)")
      ->check(CLI::IsMember({"scored", "presence"}));

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a corpus split against its labels");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--corpus", eval.corpus, "Corpus JSONL")->required();
  eval_cmd->add_option("--split", eval.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  eval_cmd->add_option("--bootstrap", eval.bootstrap, "Bootstrap resamples (0 disables)")->check(CLI::NonNegativeNumber)->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "Bootstrap seed")->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "Metrics JSON (default stdout)");
  eval_cmd->add_option("--predictions", eval.predictions, "Per-pair predictions CSV");
  eval_cmd->add_option("--accuracy-reading", eval.reading, "normalized or literal")
      ->check(CLI::IsMember({"normalized", "literal"}))
      ->capture_default_str();

  std::string selections;
  auto* agree_cmd = app.add_subcommand("agreement", "MASI alpha over sentence selections");
  agree_cmd->add_option("--selections", selections, "JSONL with selection records")->required();

  GridArgs grid;
  auto* grid_cmd = app.add_subcommand("grid", "Hyperparameter grid search");
  grid_cmd->add_option("--corpus", grid.corpus, "Corpus JSONL")->required();
  grid_cmd->add_option("--config", grid.config, "Base run configuration JSON");
  grid_cmd->add_option("--leaderboard", grid.leaderboard, "Leaderboard JSONL (appended)")->required();
  grid_cmd->add_option("--best-out", grid.best_out, "Write the best configuration here");
  grid_cmd->add_option("--learning-rates", grid.learning_rates, "Learning rates (default: full grid)")->delimiter(',');
  grid_cmd->add_option("--batch-sizes", grid.batch_sizes, "Batch sizes")->delimiter(',');
  grid_cmd->add_option("--alphas", grid.alphas, "OLL alphas")->delimiter(',');
  grid_cmd->add_option("--ks", grid.ks, "Top-k values")->delimiter(',');

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto parsed = app.get_subcommands();
    out << (parsed.empty() ? app.help() : parsed.front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  route_logging(err, verbose);
  try {
    if (*synth_cmd) cmd_synth(synth, out);
    if (*train_cmd) cmd_train(train, out);
    if (*grade_cmd) cmd_grade(grade, out);
    if (*eval_cmd) cmd_evaluate(eval, out);
    if (*agree_cmd) cmd_agreement(selections, out);
    if (*grid_cmd) cmd_grid(grid, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace labgrade::cli

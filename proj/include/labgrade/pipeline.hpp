#ifndef LABGRADE_PIPELINE_HPP_
#define LABGRADE_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "labgrade/corpus.hpp"
#include "labgrade/encoder.hpp"
#include "labgrade/grader.hpp"
#include "labgrade/metrics.hpp"
#include "labgrade/training.hpp"
#include "labgrade/verifier.hpp"

namespace labgrade {

// How the grader receives sentences.
//   learned          trained dual-encoder verifier: gate + top-k selection
//   random           k sentences drawn uniformly, no gate
//   none_truncate    no selection, grader sees [dimension; report(truncate)]
//   none_moving_avg  as above with a moving-average report embedding
enum class VerifierMode { learned, random, none_truncate, none_moving_avg };

std::string_view to_string(VerifierMode mode);
VerifierMode parse_verifier_mode(std::string_view text);

struct RunConfig {
  std::uint64_t seed = 1;
  double learning_rate = 5e-3;
  int batch_size = 8;
  int epochs = 10;
  int k = 3;
  double threshold = 0.5;
  double alpha = 1.5;
  GraderLoss loss = GraderLoss::oll;
  HeadKind head = HeadKind::shared;
  VerifierMode verifier_mode = VerifierMode::learned;
  bool include_report = true;
  RelevantAggregation relevant = RelevantAggregation::mean_embedding;
  ProviderConfig provider;
  DimensionMode mode = DimensionMode::scored;

  bool operator==(const RunConfig&) const = default;

  /// Throws ConfigError on out-of-range values.
  void validate() const;

  OptimizerConfig optimizer() const { return {learning_rate, batch_size, epochs, seed}; }
  VerifierConfig verifier() const { return {k, threshold, 1e-8}; }
  GraderConfig grader() const;
};

nlohmann::ordered_json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys and wrong types are
/// ConfigErrors.
RunConfig run_config_from_json(const nlohmann::json& json);
RunConfig load_run_config(const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;
EnvLookup process_environment();

/// Overrides every key from LABGRADE_<KEY> (nested provider settings as
/// LABGRADE_PROVIDER_<KEY>), e.g. LABGRADE_LEARNING_RATE=0.001.
RunConfig apply_env_overrides(const RunConfig& config, const EnvLookup& lookup = process_environment());

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  RunConfig config;
  Rubric rubric;
  std::optional<VerifierModel> verifier;  // learned verifier mode only
  std::optional<GraderModel> grader;      // scored mode only
  TrainingLog verifier_log;
  TrainingLog grader_log;

  /// Validation loss used for model selection: the grader's, or the
  /// verifier's in presence mode.
  double selection_loss() const;
};

/// Writes into a sibling temporary directory and renames it into place, so
/// a failed save never leaves a partial checkpoint at `dir`.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
/// Verifies manifest hashes and encoder versions; throws CheckpointError.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Training and inference

/// Stage 1 fits the verifier on score > 0 labels; stage 2 fits the grader on
/// every (report, dimension) pair using the frozen verifier's top-k.
Checkpoint train_pipeline(const Corpus& corpus, const RunConfig& config);

struct DimensionAssessment {
  std::string dimension_id;
  int score = 0;
  // NaN when no verifier ran.
  double verifier_probability = 0;
  bool decision = false;
  std::vector<int> selected_positions;
};

struct AssessedReport {
  std::string report_id;
  std::vector<DimensionAssessment> per_dimension;
  int total = 0;
};

/// Sentences the grader sees for one pair under the configured verifier mode.
std::vector<int> random_selection(const Report& report, std::string_view dimension_id, int k, std::uint64_t seed);

AssessedReport assess(const Checkpoint& checkpoint, const Report& report);
/// Per-dimension verifier decisions of a presence-mode checkpoint.
std::vector<bool> assess_presence(const Checkpoint& checkpoint, const Report& report);

/// Assess every report of a split and pair the outputs with the corpus scores.
PredictionSet predict(const Checkpoint& checkpoint, const Corpus& corpus, Split split);
EvaluationReport evaluate(const Checkpoint& checkpoint, const Corpus& corpus, Split split,
                          const EvaluationOptions& options = {});

// ---------------------------------------------------------------------------
// Ablations

enum class Ablation { random_verifier, without_verifier_truncate, without_verifier_moving_average, without_report, cross_entropy };

std::string_view to_string(Ablation ablation);
/// Accepts hyphen or underscore spellings ("random-verifier").
Ablation parse_ablation(std::string_view text);

/// The base configuration with only the ablated component changed.
RunConfig apply_ablation(RunConfig config, Ablation ablation);
EvaluationReport run_ablation(const Corpus& corpus, const RunConfig& base, Ablation ablation, Split split = Split::test);

// ---------------------------------------------------------------------------
// Grid search

struct GridSpec {
  std::vector<double> learning_rates;
  std::vector<int> batch_sizes;
  std::vector<double> alphas;
  std::vector<int> ks;

  /// The full search space: 6 learning rates, 3 batch sizes, 5 alphas, 6 k.
  static GridSpec standard();
  std::size_t size() const;
  /// Cell `index` in learning-rate-major order, built lazily from `base`.
  RunConfig cell(const RunConfig& base, std::size_t index) const;
};

struct CellResult {
  RunConfig config;
  double val_loss = 0;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  bool diverged = false;
};

using CellEvaluator = std::function<CellResult(const RunConfig&)>;

/// Trains the pipeline and scores the validation split.
CellEvaluator training_evaluator(const Corpus& corpus);

struct GridResult {
  std::size_t best_index = 0;
  RunConfig best;
  std::vector<CellResult> cells;
};

/// One leaderboard JSONL line: {config, val_loss, metrics, diverged}.
std::string leaderboard_line(const CellResult& cell);

/// Evaluates every cell in order, appending leaderboard lines to `leaderboard`
/// when given. Lowest finite validation loss wins; ties keep the earlier cell.
GridResult grid_search(const GridSpec& grid, const RunConfig& base, const CellEvaluator& evaluate_cell,
                       std::ostream* leaderboard = nullptr);

}  // namespace labgrade

#endif  // LABGRADE_PIPELINE_HPP_

#ifndef LABGRADE_CORPUS_HPP_
#define LABGRADE_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace labgrade {

enum class Split { train, val, test };
enum class DimensionMode { scored, presence };

std::string_view to_string(Split split);
std::string_view to_string(DimensionMode mode);
Split parse_split(std::string_view text);
DimensionMode parse_mode(std::string_view text);

struct RubricDimension {
  std::string id;
  int index = 1;  // 1-based
  std::string query_text;
  int max_score = 5;
  DimensionMode mode = DimensionMode::scored;

  bool operator==(const RubricDimension&) const = default;
};

struct Rubric {
  std::string id;
  std::vector<RubricDimension> dimensions;

  int total_max() const;
  std::size_t size() const { return dimensions.size(); }
  DimensionMode mode() const;

  /// Position of the dimension in `dimensions`, or nullopt.
  std::optional<std::size_t> find(std::string_view dimension_id) const;

  /// Throws ValidationError when an invariant does not hold.
  void validate() const;

  bool operator==(const Rubric&) const = default;
};

struct Sentence {
  int position = 0;
  std::string text;
  // Character span [begin, end) into the report's raw text.
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const Sentence&) const = default;
};

struct Report {
  std::string id;
  std::string raw_text;
  std::vector<Sentence> sentences;
  Split split = Split::train;
  std::string assignment_id;

  bool operator==(const Report&) const = default;
};

struct DimensionScore {
  std::string report_id;
  std::string dimension_id;
  int score = 0;

  bool operator==(const DimensionScore&) const = default;
};

struct SentenceSelection {
  std::string report_id;
  std::string dimension_id;
  std::string rater_id;
  std::set<int> positions;

  bool operator==(const SentenceSelection&) const = default;
};

struct Corpus {
  Rubric rubric;
  std::vector<Report> reports;
  std::vector<DimensionScore> scores;
  std::vector<SentenceSelection> selections;

  std::vector<const Report*> reports_in(Split split) const;

  /// (report_id, dimension_id) -> score.
  std::map<std::pair<std::string, std::string>, int> score_index() const;

  bool operator==(const Corpus&) const = default;
};

/// Rule-based splitter: breaks after '.', '!' or '?' (optionally followed by
/// closing quotes or brackets) when the next non-space character is an
/// uppercase letter or digit, and at blank lines. Tokens in a fixed
/// abbreviation list ("Fig.", "Eq.", "vs.", ...) never end a sentence.
/// Throws EmptyDocument on input with no visible characters.
std::vector<Sentence> segment_sentences(std::string_view raw_text);

/// Build a report from raw text, segmenting it.
Report make_report(std::string id, std::string raw_text, Split split, std::string assignment_id);

/// Reads rubric, report, score and selection records. With
/// `require_rubric` false a file without a rubric record is accepted and
/// only per-record checks run (used for report batches and selection files).
Corpus read_corpus(std::istream& in, bool require_rubric = true);
Corpus load_corpus(const std::filesystem::path& path, bool require_rubric = true);
void write_corpus(const Corpus& corpus, std::ostream& out);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Checks cross-record invariants: scores/selections reference known reports
/// and dimensions, scores in range, at most one score per pair.
void validate_corpus(const Corpus& corpus);

struct SyntheticOptions {
  std::uint64_t seed = 1;
  int n_reports = 50;
  int n_dims = 7;
  DimensionMode mode = DimensionMode::scored;
  // 0 draws scores uniformly; larger values push each dimension's mass toward
  // its low or high end.
  double skew = 0.25;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  int min_distractors = 6;
  int max_distractors = 14;
};

/// Deterministic synthetic corpus: every dimension owns a keyword family and
/// its ground-truth score equals the number of keyword-bearing sentences the
/// report contains (capped at the dimension's max score).
Corpus generate_synthetic_corpus(const SyntheticOptions& options);

/// Keyword family used by the generator for 1-based dimension `index`.
const std::vector<std::string>& synthetic_keywords(int index);

}  // namespace labgrade

#endif  // LABGRADE_CORPUS_HPP_

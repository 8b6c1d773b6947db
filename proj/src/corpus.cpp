#include "labgrade/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "labgrade/errors.hpp"

namespace labgrade {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

std::string_view to_string(DimensionMode mode) {
  return mode == DimensionMode::scored ? "scored" : "presence";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val" || text == "validation" || text == "dev") return Split::val;
  if (text == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(text) + "'");
}

DimensionMode parse_mode(std::string_view text) {
  if (text == "scored") return DimensionMode::scored;
  if (text == "presence") return DimensionMode::presence;
  throw ValidationError("unknown mode '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Rubric / Corpus

int Rubric::total_max() const {
  int total = 0;
  for (const auto& d : dimensions) total += d.max_score;
  return total;
}

DimensionMode Rubric::mode() const {
  return dimensions.empty() ? DimensionMode::scored : dimensions.front().mode;
}

std::optional<std::size_t> Rubric::find(std::string_view dimension_id) const {
  for (std::size_t i = 0; i < dimensions.size(); ++i) {
    if (dimensions[i].id == dimension_id) return i;
  }
  return std::nullopt;
}

namespace {

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

void Rubric::validate() const {
  if (dimensions.empty()) throw ValidationError("rubric '" + id + "' has no dimensions");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < dimensions.size(); ++i) {
    const auto& d = dimensions[i];
    if (d.index != static_cast<int>(i) + 1) {
      throw ValidationError("rubric '" + id + "': dimension indices must be consecutive from 1 (got " +
                            std::to_string(d.index) + " at position " + std::to_string(i + 1) + ")");
    }
    if (!ids.insert(d.id).second) throw ValidationError("rubric '" + id + "': duplicate dimension id '" + d.id + "'");
    if (blank(d.query_text)) throw ValidationError("dimension '" + d.id + "' has an empty query text");
    const int expected = d.mode == DimensionMode::scored ? 5 : 1;
    if (d.max_score != expected) {
      throw ValidationError("dimension '" + d.id + "': max_score must be " + std::to_string(expected) + " in " +
                            std::string(to_string(d.mode)) + " mode");
    }
    if (d.mode != dimensions.front().mode) throw ValidationError("rubric '" + id + "' mixes scored and presence dimensions");
  }
}

std::vector<const Report*> Corpus::reports_in(Split split) const {
  std::vector<const Report*> out;
  for (const auto& r : reports) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

std::map<std::pair<std::string, std::string>, int> Corpus::score_index() const {
  std::map<std::pair<std::string, std::string>, int> index;
  for (const auto& s : scores) index[{s.report_id, s.dimension_id}] = s.score;
  return index;
}

// ---------------------------------------------------------------------------
// Sentence segmentation

namespace {

constexpr std::array<std::string_view, 30> kAbbreviations = {
    "fig.", "figs.", "eq.",  "eqs.", "vs.",  "e.g.", "i.e.", "al.",  "cf.",  "approx.",
    "dr.",  "mr.",   "mrs.", "ms.",  "prof.", "no.", "nos.", "tab.", "sec.", "ch.",
    "st.",  "jr.",   "sr.",  "vol.", "pp.",  "ca.",  "resp.", "ref.", "refs.", "min."};

bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }
bool is_opener(char c) { return c == '"' || c == '\'' || c == '(' || c == '['; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// The whitespace-delimited token ending at `dot` (inclusive), stripped of
// leading opening punctuation.
std::string_view token_before(std::string_view text, std::size_t dot) {
  std::size_t start = dot;
  while (start > 0 && !is_space(text[start - 1])) --start;
  while (start < dot && is_opener(text[start])) ++start;
  return text.substr(start, dot - start + 1);
}

bool is_abbreviation(std::string_view token) {
  const std::string t = lower(token);
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), t) != kAbbreviations.end();
}

bool starts_sentence(std::string_view text, std::size_t k) {
  while (k < text.size() && is_opener(text[k])) ++k;
  if (k >= text.size()) return false;
  const auto c = static_cast<unsigned char>(text[k]);
  return std::isupper(c) || std::isdigit(c);
}

}  // namespace

std::vector<Sentence> segment_sentences(std::string_view text) {
  if (blank(text)) throw EmptyDocument();

  std::vector<Sentence> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    std::size_t b = start;
    while (b < end && is_space(text[b])) ++b;
    std::size_t e = end;
    while (e > b && is_space(text[e - 1])) --e;
    if (e > b) {
      out.push_back(Sentence{static_cast<int>(out.size()), std::string(text.substr(b, e - b)), b, e});
    }
    start = end;
  };

  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      // Blank line: paragraph break.
      std::size_t j = i + 1;
      while (j < text.size() && text[j] != '\n' && is_space(text[j])) ++j;
      if (j < text.size() && text[j] == '\n') {
        emit(i);
        i = j + 1;
        continue;
      }
    }
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i + 1;
      while (j < text.size() && (text[j] == '.' || text[j] == '!' || text[j] == '?')) ++j;
      while (j < text.size() && is_closer(text[j])) ++j;
      if (j >= text.size()) {
        emit(text.size());
        break;
      }
      if (is_space(text[j])) {
        std::size_t k = j;
        while (k < text.size() && is_space(text[k])) ++k;
        const bool abbreviation = c == '.' && j == i + 1 && is_abbreviation(token_before(text, i));
        if (k >= text.size() || (!abbreviation && starts_sentence(text, k))) {
          emit(j);
          i = j;
          continue;
        }
      }
      i = j;
      continue;
    }
    ++i;
  }
  if (start < text.size()) emit(text.size());
  return out;
}

Report make_report(std::string id, std::string raw_text, Split split, std::string assignment_id) {
  Report r;
  r.id = std::move(id);
  r.sentences = segment_sentences(raw_text);
  r.raw_text = std::move(raw_text);
  r.split = split;
  r.assignment_id = std::move(assignment_id);
  return r;
}

// ---------------------------------------------------------------------------
// JSONL IO

namespace {

template <typename T>
T required(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(line, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(line, std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
T optional_field(const json& obj, const char* key, T fallback, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(line, std::string("field '") + key + "' has the wrong type");
  }
}

int integer_field(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(line, std::string("missing field '") + key + "'");
  if (it->is_number_integer()) return it->get<int>();
  if (it->is_number_float()) {
    const double v = it->get<double>();
    if (std::floor(v) == v && std::abs(v) < 1e9) return static_cast<int>(v);
    throw ValidationError("line " + std::to_string(line) + ": field '" + key + "' must be an integer, got " +
                          it->dump());
  }
  throw SchemaError(line, std::string("field '") + key + "' must be an integer");
}

Rubric parse_rubric(const json& obj, std::size_t line) {
  Rubric rubric;
  rubric.id = required<std::string>(obj, "id", line);
  const DimensionMode mode = parse_mode(optional_field<std::string>(obj, "mode", "scored", line));
  auto dims = obj.find("dimensions");
  if (dims == obj.end() || !dims->is_array()) throw SchemaError(line, "rubric needs a 'dimensions' array");
  int position = 1;
  for (const auto& d : *dims) {
    if (!d.is_object()) throw SchemaError(line, "dimension entries must be objects");
    RubricDimension dim;
    dim.id = required<std::string>(d, "id", line);
    dim.index = d.contains("index") ? integer_field(d, "index", line) : position;
    dim.query_text = required<std::string>(d, "query_text", line);
    dim.mode = mode;
    dim.max_score = d.contains("max_score") ? integer_field(d, "max_score", line)
                                            : (mode == DimensionMode::scored ? 5 : 1);
    rubric.dimensions.push_back(std::move(dim));
    ++position;
  }
  try {
    rubric.validate();
  } catch (const ValidationError& e) {
    throw ValidationError("line " + std::to_string(line) + ": " + e.what());
  }
  return rubric;
}

Report parse_report(const json& obj, std::size_t line) {
  Report r;
  r.id = required<std::string>(obj, "id", line);
  r.split = parse_split(optional_field<std::string>(obj, "split", "train", line));
  r.assignment_id = optional_field<std::string>(obj, "assignment_id", "", line);
  r.raw_text = optional_field<std::string>(obj, "text", "", line);
  auto given = obj.find("sentences");
  if (given != obj.end() && given->is_array() && !given->empty()) {
    // Pre-segmented input: locate each sentence in order within the raw text.
    std::vector<std::string> texts;
    for (const auto& s : *given) {
      if (!s.is_string()) throw SchemaError(line, "'sentences' must hold strings");
      texts.push_back(s.get<std::string>());
    }
    if (r.raw_text.empty()) {
      for (std::size_t i = 0; i < texts.size(); ++i) r.raw_text += (i ? " " : "") + texts[i];
    }
    std::size_t cursor = 0;
    for (const auto& t : texts) {
      if (blank(t)) throw ValidationError("line " + std::to_string(line) + ": empty sentence in report '" + r.id + "'");
      const auto at = r.raw_text.find(t, cursor);
      if (at == std::string::npos) {
        throw ValidationError("line " + std::to_string(line) + ": sentence not found in text of report '" + r.id + "'");
      }
      r.sentences.push_back(Sentence{static_cast<int>(r.sentences.size()), t, at, at + t.size()});
      cursor = at + t.size();
    }
    return r;
  }
  try {
    r.sentences = segment_sentences(r.raw_text);
  } catch (const EmptyDocument&) {
    throw ValidationError("line " + std::to_string(line) + ": report '" + r.id + "' has no text");
  }
  return r;
}

}  // namespace

Corpus read_corpus(std::istream& in, bool require_rubric) {
  Corpus corpus;
  bool have_rubric = false;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (blank(text)) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw SchemaError(line, std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) throw SchemaError(line, "record must be a JSON object");
    const auto kind = required<std::string>(obj, "kind", line);
    if (kind == "rubric") {
      if (have_rubric) throw SchemaError(line, "duplicate rubric record");
      corpus.rubric = parse_rubric(obj, line);
      have_rubric = true;
    } else if (kind == "report") {
      corpus.reports.push_back(parse_report(obj, line));
    } else if (kind == "score") {
      DimensionScore s;
      s.report_id = required<std::string>(obj, "report_id", line);
      s.dimension_id = required<std::string>(obj, "dimension_id", line);
      s.score = integer_field(obj, "score", line);
      if (s.score < 0 || s.score > 5) {
        throw ValidationError("line " + std::to_string(line) + ": score " + std::to_string(s.score) + " for report '" +
                              s.report_id + "' dimension '" + s.dimension_id + "' is out of range");
      }
      corpus.scores.push_back(std::move(s));
    } else if (kind == "selection") {
      SentenceSelection sel;
      sel.report_id = required<std::string>(obj, "report_id", line);
      sel.dimension_id = required<std::string>(obj, "dimension_id", line);
      sel.rater_id = required<std::string>(obj, "rater_id", line);
      for (int p : required<std::vector<int>>(obj, "positions", line)) sel.positions.insert(p);
      corpus.selections.push_back(std::move(sel));
    } else {
      throw SchemaError(line, "unknown record kind '" + kind + "'");
    }
  }
  if (have_rubric) {
    validate_corpus(corpus);
  } else if (require_rubric) {
    throw ValidationError("corpus has no rubric record");
  } else {
    std::set<std::string> ids;
    for (const auto& r : corpus.reports) {
      if (!ids.insert(r.id).second) throw ValidationError("duplicate report id '" + r.id + "'");
    }
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, bool require_rubric) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file " + path.string());
  return read_corpus(in, require_rubric);
}

void validate_corpus(const Corpus& corpus) {
  corpus.rubric.validate();
  std::map<std::string, const Report*> reports;
  for (const auto& r : corpus.reports) {
    if (!reports.emplace(r.id, &r).second) throw ValidationError("duplicate report id '" + r.id + "'");
    if (r.sentences.empty()) throw ValidationError("report '" + r.id + "' has no sentences");
    for (std::size_t i = 0; i < r.sentences.size(); ++i) {
      if (r.sentences[i].position != static_cast<int>(i) || blank(r.sentences[i].text)) {
        throw ValidationError("report '" + r.id + "' has malformed sentence at position " + std::to_string(i));
      }
    }
  }
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& s : corpus.scores) {
    const auto dim = corpus.rubric.find(s.dimension_id);
    if (!dim) throw ValidationError("score record for report '" + s.report_id + "' names unknown dimension '" + s.dimension_id + "'");
    if (!reports.count(s.report_id)) throw ValidationError("score record names unknown report '" + s.report_id + "'");
    const int max_score = corpus.rubric.dimensions[*dim].max_score;
    if (s.score < 0 || s.score > max_score) {
      throw ValidationError("score " + std::to_string(s.score) + " for report '" + s.report_id + "' dimension '" +
                            s.dimension_id + "' is outside [0, " + std::to_string(max_score) + "]");
    }
    if (!seen.insert({s.report_id, s.dimension_id}).second) {
      throw ValidationError("duplicate score for report '" + s.report_id + "' dimension '" + s.dimension_id + "'");
    }
  }
  for (const auto& sel : corpus.selections) {
    auto it = reports.find(sel.report_id);
    if (it == reports.end()) throw ValidationError("selection names unknown report '" + sel.report_id + "'");
    if (!corpus.rubric.find(sel.dimension_id)) throw ValidationError("selection names unknown dimension '" + sel.dimension_id + "'");
    const int n = static_cast<int>(it->second->sentences.size());
    for (int p : sel.positions) {
      if (p < 0 || p >= n) {
        throw ValidationError("selection by '" + sel.rater_id + "' on report '" + sel.report_id + "' names position " +
                              std::to_string(p) + " outside the report");
      }
    }
  }
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  json rubric = {{"kind", "rubric"}, {"id", corpus.rubric.id}, {"mode", to_string(corpus.rubric.mode())}};
  rubric["dimensions"] = json::array();
  for (const auto& d : corpus.rubric.dimensions) {
    rubric["dimensions"].push_back(
        {{"id", d.id}, {"index", d.index}, {"query_text", d.query_text}, {"max_score", d.max_score}});
  }
  out << rubric.dump() << '\n';
  for (const auto& r : corpus.reports) {
    json rec = {{"kind", "report"}, {"id", r.id}, {"text", r.raw_text}, {"split", to_string(r.split)},
                {"assignment_id", r.assignment_id}};
    // Sentences are re-derived on load unless they differ from the segmenter.
    bool resegments = false;
    try {
      resegments = segment_sentences(r.raw_text) == r.sentences;
    } catch (const EmptyDocument&) {
    }
    if (!resegments) {
      rec["sentences"] = json::array();
      for (const auto& s : r.sentences) rec["sentences"].push_back(s.text);
    }
    out << rec.dump() << '\n';
  }
  for (const auto& s : corpus.scores) {
    out << json{{"kind", "score"}, {"report_id", s.report_id}, {"dimension_id", s.dimension_id}, {"score", s.score}}.dump()
        << '\n';
  }
  for (const auto& sel : corpus.selections) {
    out << json{{"kind", "selection"},
                {"report_id", sel.report_id},
                {"dimension_id", sel.dimension_id},
                {"rater_id", sel.rater_id},
                {"positions", std::vector<int>(sel.positions.begin(), sel.positions.end())}}
               .dump()
        << '\n';
  }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus file " + path.string());
  write_corpus(corpus, out);
  if (!out) throw Error("failed writing corpus file " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

struct Family {
  const char* query;
  std::vector<std::string> keywords;
};

const std::vector<Family>& families() {
  static const std::vector<Family> kFamilies = {
      {"States a testable hypothesis that predicts how the period depends on one factor.",
       {"hypothesis", "predict", "prediction", "expect", "hypothesize", "testable"}},
      {"Identifies the independent dependent and controlled variables.",
       {"independent", "dependent", "controlled", "variable", "variables", "manipulated"}},
      {"Describes the procedure used to measure the period with repeated trials.",
       {"procedure", "measure", "stopwatch", "trials", "repeated", "timing"}},
      {"Presents the recorded measurements in an organized table with averages.",
       {"recorded", "measurements", "table", "averages", "organized", "dataset"}},
      {"Relates the results to the theoretical equation for the period.",
       {"theoretical", "equation", "formula", "gravity", "derivation", "model"}},
      {"Discusses sources of error and uncertainty in the results.",
       {"error", "uncertainty", "friction", "imprecision", "deviation", "systematic"}},
      {"Draws a conclusion about whether the evidence supported the claim.",
       {"conclusion", "conclude", "evidence", "supported", "claim", "therefore"}},
      {"Analyzes a graph of the results and interprets its slope.",
       {"graph", "slope", "plot", "axis", "linear", "trend"}},
  };
  return kFamilies;
}

const std::vector<std::string>& function_words() {
  static const std::vector<std::string> kWords = {"the", "we", "a", "of", "to", "and", "in", "was", "it", "our", "with", "on", "for", "at"};
  return kWords;
}

const std::vector<std::string>& distractor_words() {
  static const std::vector<std::string> kWords = {
      "pendulum", "string",  "bob",      "swing",   "swings",   "length",    "angle",    "release",  "released",
      "lab",      "partner", "classroom", "clamp",  "stand",    "ruler",     "meter",    "centimeters", "seconds",
      "oscillation", "back", "forth",    "arc",     "motion",   "moved",     "ball",     "metal",    "wooden",
      "heavy",    "light",   "long",     "short",   "small",    "large",     "first",    "second",   "third",
      "each",     "after",   "before",   "then",    "also",     "again",     "carefully", "quickly", "slowly",
      "holding",  "attached", "hanging", "ceiling", "floor",    "side",      "group",    "today",    "week",
      "teacher",  "notebook", "pencil",  "photo",   "setup",    "materials"};
  return kWords;
}

template <typename Rng>
const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

std::string sentence_from(std::vector<std::string> words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s += ' ';
    s += words[i];
  }
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  s += '.';
  return s;
}

template <typename Rng>
std::string distractor_sentence(Rng& rng) {
  std::uniform_int_distribution<int> length(6, 12);
  std::bernoulli_distribution function_word(0.35);
  std::vector<std::string> words;
  const int n = length(rng);
  for (int i = 0; i < n; ++i) words.push_back(function_word(rng) ? pick(function_words(), rng) : pick(distractor_words(), rng));
  return sentence_from(std::move(words));
}

template <typename Rng>
std::string keyword_sentence(const std::vector<std::string>& family, Rng& rng) {
  std::uniform_int_distribution<int> n_keywords(2, 3);
  std::uniform_int_distribution<int> n_fillers(3, 6);
  std::bernoulli_distribution function_word(0.5);
  std::vector<std::string> keywords = family;
  std::shuffle(keywords.begin(), keywords.end(), rng);
  keywords.resize(n_keywords(rng));
  std::vector<std::string> words = keywords;
  const int fillers = n_fillers(rng);
  for (int i = 0; i < fillers; ++i) words.push_back(function_word(rng) ? pick(function_words(), rng) : pick(distractor_words(), rng));
  std::shuffle(words.begin(), words.end(), rng);
  return sentence_from(std::move(words));
}

}  // namespace

const std::vector<std::string>& synthetic_keywords(int index) {
  if (index < 1 || index > static_cast<int>(families().size())) throw ConfigError("no synthetic family for dimension " + std::to_string(index));
  return families()[index - 1].keywords;
}

Corpus generate_synthetic_corpus(const SyntheticOptions& options) {
  if (options.n_reports < 10) throw ConfigError("synthetic corpus needs at least 10 reports");
  if (options.n_dims < 2 || options.n_dims > 8) throw ConfigError("synthetic corpus supports 2 to 8 dimensions");
  if (options.min_distractors < 0 || options.max_distractors < options.min_distractors) {
    throw ConfigError("invalid distractor range");
  }
  if (options.skew < 0) throw ConfigError("skew must be non-negative");
  if (options.val_fraction < 0 || options.test_fraction < 0 || options.val_fraction + options.test_fraction >= 1) {
    throw ConfigError("invalid split fractions");
  }

  std::mt19937_64 rng(options.seed);
  const bool scored = options.mode == DimensionMode::scored;
  const int max_score = scored ? 5 : 1;

  Corpus corpus;
  corpus.rubric.id = scored ? "synthetic-lab" : "synthetic-essay";
  for (int m = 1; m <= options.n_dims; ++m) {
    corpus.rubric.dimensions.push_back(
        RubricDimension{"d" + std::to_string(m), m, families()[m - 1].query, max_score, options.mode});
  }

  // Odd dimensions skew high, even dimensions skew low.
  std::vector<std::discrete_distribution<int>> count_dists;
  for (int m = 1; m <= options.n_dims; ++m) {
    const double direction = (m % 2 == 1) ? 1.0 : -1.0;
    const int top = scored ? 5 : 2;
    std::vector<double> weights;
    for (int c = 0; c <= top; ++c) weights.push_back(std::exp(direction * options.skew * (c - top / 2.0)));
    count_dists.emplace_back(weights.begin(), weights.end());
  }

  const int n_test = static_cast<int>(std::lround(options.n_reports * options.test_fraction));
  const int n_val = static_cast<int>(std::lround(options.n_reports * options.val_fraction));
  const int n_train = options.n_reports - n_val - n_test;
  std::uniform_int_distribution<int> n_distractors(options.min_distractors, options.max_distractors);

  char id[32];
  for (int i = 0; i < options.n_reports; ++i) {
    std::snprintf(id, sizeof id, "r%04d", i + 1);
    const Split split = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);

    std::vector<std::string> sentences;
    std::vector<int> counts(options.n_dims);
    for (int m = 0; m < options.n_dims; ++m) {
      counts[m] = count_dists[m](rng);
      for (int c = 0; c < counts[m]; ++c) sentences.push_back(keyword_sentence(families()[m].keywords, rng));
    }
    const int distractors = n_distractors(rng);
    for (int d = 0; d < distractors; ++d) sentences.push_back(distractor_sentence(rng));
    if (sentences.empty()) sentences.push_back(distractor_sentence(rng));
    std::shuffle(sentences.begin(), sentences.end(), rng);

    std::string text;
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      if (s) text += (s % 6 == 0) ? "\n\n" : " ";
      text += sentences[s];
    }
    Report report = make_report(id, std::move(text), split, corpus.rubric.id);
    if (report.sentences.size() != sentences.size()) {
      throw Error("synthetic report " + std::string(id) + " did not segment cleanly");
    }
    corpus.reports.push_back(std::move(report));
    for (int m = 0; m < options.n_dims; ++m) {
      corpus.scores.push_back(DimensionScore{id, corpus.rubric.dimensions[m].id, std::min(counts[m], max_score)});
    }
  }
  return corpus;
}

}  // namespace labgrade

#include "labgrade/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "labgrade/hash.hpp"

namespace labgrade {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string_view to_string(VerifierMode mode) {
  switch (mode) {
    case VerifierMode::learned: return "learned";
    case VerifierMode::random: return "random";
    case VerifierMode::none_truncate: return "none_truncate";
    case VerifierMode::none_moving_avg: return "none_moving_avg";
  }
  return "learned";
}

VerifierMode parse_verifier_mode(std::string_view text) {
  for (auto m : {VerifierMode::learned, VerifierMode::random, VerifierMode::none_truncate, VerifierMode::none_moving_avg}) {
    if (text == to_string(m)) return m;
  }
  throw ConfigError("unknown verifier mode '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be a positive number");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (k < 1) throw ConfigError("k must be at least 1");
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("threshold must lie in (0, 1)");
  if (!(alpha > 0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
  if (provider.embedding_dim < 1) throw ConfigError("provider.embedding_dim must be at least 1");
  if (provider.max_tokens < 1) throw ConfigError("provider.max_tokens must be at least 1");
  if (provider.window_stride < 0) throw ConfigError("provider.window_stride must be non-negative");
  const bool no_selection = verifier_mode == VerifierMode::none_truncate || verifier_mode == VerifierMode::none_moving_avg;
  if (no_selection && !include_report) throw ConfigError("grader without verifier needs the report input");
  if (mode == DimensionMode::presence && verifier_mode != VerifierMode::learned) {
    throw ConfigError("presence mode needs the learned verifier");
  }
}

GraderConfig RunConfig::grader() const {
  GraderConfig g;
  g.alpha = alpha;
  g.loss = loss;
  g.head = head;
  g.report_strategy =
      verifier_mode == VerifierMode::none_moving_avg ? ReportStrategy::moving_average : ReportStrategy::truncate;
  g.window_stride = provider.window_stride;
  g.relevant = relevant;
  g.use_report = include_report;
  g.use_relevant = verifier_mode == VerifierMode::learned || verifier_mode == VerifierMode::random;
  return g;
}

ojson to_json(const RunConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["k"] = c.k;
  j["threshold"] = c.threshold;
  j["alpha"] = c.alpha;
  j["loss"] = to_string(c.loss);
  j["head"] = to_string(c.head);
  j["verifier_mode"] = to_string(c.verifier_mode);
  j["include_report"] = c.include_report;
  j["relevant"] = to_string(c.relevant);
  j["mode"] = to_string(c.mode);
  j["provider"] = {{"kind", to_string(c.provider.kind)},
                   {"embedding_dim", c.provider.embedding_dim},
                   {"max_tokens", c.provider.max_tokens},
                   {"window_stride", c.provider.window_stride},
                   {"model", c.provider.model}};
  return j;
}

namespace {

double number_value(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number, got " + v.dump());
  return v.get<double>();
}

long long integer_value(const json& v, const std::string& key) {
  const double d = number_value(v, key);
  if (std::floor(d) != d || std::abs(d) > 9e15) throw ConfigError("config key '" + key + "' must be an integer");
  return v.is_number_integer() ? v.get<long long>() : static_cast<long long>(d);
}

int int_value(const json& v, const std::string& key) {
  const long long i = integer_value(v, key);
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) {
    throw ConfigError("config key '" + key + "' is out of range");
  }
  return static_cast<int>(i);
}

bool bool_value(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError("config key '" + key + "' must be true or false");
  return v.get<bool>();
}

std::string string_value(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        throw ConfigError("config key 'seed' must be a non-negative integer");
      }
      c.seed = v.get<std::uint64_t>();
    } else if (key == "learning_rate") {
      c.learning_rate = number_value(v, key);
    } else if (key == "batch_size") {
      c.batch_size = int_value(v, key);
    } else if (key == "epochs") {
      c.epochs = int_value(v, key);
    } else if (key == "k") {
      c.k = int_value(v, key);
    } else if (key == "threshold") {
      c.threshold = number_value(v, key);
    } else if (key == "alpha") {
      c.alpha = number_value(v, key);
    } else if (key == "loss") {
      c.loss = parse_grader_loss(string_value(v, key));
    } else if (key == "head") {
      c.head = parse_head(string_value(v, key));
    } else if (key == "verifier_mode") {
      c.verifier_mode = parse_verifier_mode(string_value(v, key));
    } else if (key == "include_report") {
      c.include_report = bool_value(v, key);
    } else if (key == "relevant") {
      c.relevant = parse_relevant_aggregation(string_value(v, key));
    } else if (key == "mode") {
      try {
        c.mode = parse_mode(string_value(v, key));
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "provider") {
      if (!v.is_object()) throw ConfigError("config key 'provider' must be an object");
      for (const auto& [pk, pv] : v.items()) {
        const std::string name = "provider." + pk;
        if (pk == "kind") {
          c.provider.kind = parse_provider(string_value(pv, name));
        } else if (pk == "embedding_dim") {
          c.provider.embedding_dim = int_value(pv, name);
        } else if (pk == "max_tokens") {
          c.provider.max_tokens = int_value(pv, name);
        } else if (pk == "window_stride") {
          c.provider.window_stride = int_value(pv, name);
        } else if (pk == "model") {
          c.provider.model = string_value(pv, name);
        } else {
          throw ConfigError("unknown config key '" + name + "'");
        }
      }
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

EnvLookup process_environment() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

namespace {

std::string env_name(const std::string& key) {
  std::string out = "LABGRADE_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

json parse_override(const std::string& name, const std::string& text, const json& like) {
  auto fail = [&] { return ConfigError("environment variable " + name + " has invalid value '" + text + "'"); };
  if (like.is_boolean()) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw fail();
  }
  if (like.is_string()) return text;
  std::size_t used = 0;
  try {
    if (like.is_number_integer()) {
      const long long v = std::stoll(text, &used);
      if (used != text.size()) throw fail();
      return v;
    }
    const double v = std::stod(text, &used);
    if (used != text.size()) throw fail();
    return v;
  } catch (const std::logic_error&) {
    throw fail();
  }
}

}  // namespace

RunConfig apply_env_overrides(const RunConfig& config, const EnvLookup& lookup) {
  json j = to_json(config);
  for (auto& [key, v] : j.items()) {
    if (v.is_object()) {
      for (auto& [sub, sv] : v.items()) {
        const std::string name = env_name(key + "." + sub);
        if (auto value = lookup(name)) sv = parse_override(name, *value, sv);
      }
      continue;
    }
    const std::string name = env_name(key);
    if (auto value = lookup(name)) v = parse_override(name, *value, v);
  }
  return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Checkpoint serialization

double Checkpoint::selection_loss() const {
  return config.mode == DimensionMode::presence ? verifier_log.best_val_loss : grader_log.best_val_loss;
}

namespace {

ojson matrix_json(const Eigen::MatrixXd& m) {
  ojson j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  j["data"] = std::move(data);
  return j;
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
    throw CheckpointError("matrix shape does not match its data");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
  out.close();
  if (!out) throw Error("failed writing " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint file missing: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint file " + path.string() + " is not valid JSON: " + e.what());
  }
}

ojson handle_json(const EncoderHandle& h) {
  ojson j;
  j["side"] = to_string(h.side());
  j["params_version"] = h.params_version();
  j["projection"] = matrix_json(h.projection());
  return j;
}

EncoderHandle handle_from(const json& j, std::shared_ptr<const TextEncoder> provider, Side side) {
  EncoderHandle h(std::move(provider), side, matrix_from(j.at("projection")));
  if (h.params_version() != j.at("params_version").get<std::string>()) {
    throw CheckpointError("encoder version mismatch for " + std::string(to_string(side)) +
                          " side; was the checkpoint written with a different provider?");
  }
  return h;
}

void write_checkpoint_files(const Checkpoint& ck, const fs::path& dir) {
  std::map<std::string, std::string> files;
  files["config.json"] = to_json(ck.config).dump(2) + "\n";
  {
    std::ostringstream rubric;
    write_corpus(Corpus{ck.rubric, {}, {}, {}}, rubric);
    files["rubric.jsonl"] = rubric.str();
  }
  if (ck.verifier) {
    const auto& v = *ck.verifier;
    ojson cfg;
    cfg["k"] = v.config.k;
    cfg["threshold"] = v.config.threshold;
    cfg["epsilon"] = v.config.epsilon;
    cfg["positive_weights"] = v.positive_weights;
    files["verifier/config.json"] = cfg.dump(2) + "\n";
    files["verifier/query.json"] = handle_json(v.encoders.query).dump() + "\n";
    files["verifier/passage.json"] = handle_json(v.encoders.passage).dump() + "\n";
    files["verifier/training_log.jsonl"] = ck.verifier_log.to_jsonl();
  }
  if (ck.grader) {
    const auto& g = *ck.grader;
    const auto& gc = g.config();
    ojson cfg;
    cfg["alpha"] = gc.alpha;
    cfg["loss"] = to_string(gc.loss);
    cfg["head"] = to_string(gc.head);
    cfg["report_strategy"] = to_string(gc.report_strategy);
    cfg["window_stride"] = gc.window_stride;
    cfg["relevant"] = to_string(gc.relevant);
    cfg["use_report"] = gc.use_report;
    cfg["use_relevant"] = gc.use_relevant;
    cfg["dimension_ids"] = g.dimension_ids();
    std::vector<std::string> head_files;
    for (std::size_t h = 0; h < g.heads().size(); ++h) {
      const std::string name = gc.head == HeadKind::shared ? "heads/shared.json" : "heads/" + std::to_string(h) + ".json";
      ojson head;
      head["weight"] = matrix_json(g.heads()[h].weight);
      head["bias"] = matrix_json(g.heads()[h].bias);
      files["grader/" + name] = head.dump() + "\n";
      head_files.push_back(name);
    }
    cfg["heads"] = head_files;
    files["grader/config.json"] = cfg.dump(2) + "\n";
    files["grader/query.json"] = handle_json(g.query_encoder()).dump() + "\n";
    files["grader/report.json"] = handle_json(g.report_encoder()).dump() + "\n";
    files["grader/training_log.jsonl"] = ck.grader_log.to_jsonl();
  }
  ojson manifest;
  manifest["format_version"] = 1;
  ojson hashes = ojson::object();
  for (const auto& [name, content] : files) {
    write_file(dir / name, content);
    hashes[name] = sha256_hex(content);
  }
  manifest["files"] = std::move(hashes);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

fs::path sibling(const fs::path& dir, const std::string& tag) {
  static std::uint64_t counter = 0;
  std::random_device rd;
  const auto nonce = (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^ ++counter;
  std::ostringstream name;
  name << "." << dir.filename().string() << "." << tag << "-" << std::hex << nonce;
  return dir.parent_path() / name.str();
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& target) {
  const fs::path dir = fs::absolute(target).lexically_normal();
  const fs::path staging = sibling(dir, "tmp");
  try {
    fs::create_directories(staging);
    write_checkpoint_files(checkpoint, staging);
    if (fs::exists(dir)) {
      const fs::path old = sibling(dir, "old");
      fs::rename(dir, old);
      fs::rename(staging, dir);
      fs::remove_all(old);
    } else {
      fs::rename(staging, dir);
    }
  } catch (const fs::filesystem_error& e) {
    std::error_code ignored;
    fs::remove_all(staging, ignored);
    throw Error(std::string("cannot write checkpoint: ") + e.what());
  } catch (...) {
    std::error_code ignored;
    fs::remove_all(staging, ignored);
    throw;
  }
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw CheckpointError("checkpoint directory not found: " + dir.string());
  const json manifest = read_json(dir / "manifest.json");
  try {
    for (const auto& [name, hash] : manifest.at("files").items()) {
      if (sha256_file(dir / name) != hash.get<std::string>()) {
        throw CheckpointError("checkpoint file " + name + " does not match its manifest hash");
      }
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(e.what());
  }

  Checkpoint ck;
  try {
    ck.config = run_config_from_json(read_json(dir / "config.json"));
    std::istringstream rubric(read_file(dir / "rubric.jsonl"));
    ck.rubric = read_corpus(rubric).rubric;
    auto provider = make_provider(ck.config.provider);
    if (fs::exists(dir / "verifier")) {
      const json cfg = read_json(dir / "verifier/config.json");
      VerifierModel v{
          VerifierEncoders{handle_from(read_json(dir / "verifier/query.json"), provider, Side::query),
                           handle_from(read_json(dir / "verifier/passage.json"), provider, Side::passage)},
          VerifierConfig{cfg.at("k").get<int>(), cfg.at("threshold").get<double>(), cfg.at("epsilon").get<double>()},
          cfg.at("positive_weights").get<std::vector<double>>()};
      ck.verifier = std::move(v);
      ck.verifier_log = TrainingLog::from_jsonl(read_file(dir / "verifier/training_log.jsonl"));
    }
    if (fs::exists(dir / "grader")) {
      const json cfg = read_json(dir / "grader/config.json");
      GraderConfig gc;
      gc.alpha = cfg.at("alpha").get<double>();
      gc.loss = parse_grader_loss(cfg.at("loss").get<std::string>());
      gc.head = parse_head(cfg.at("head").get<std::string>());
      gc.report_strategy = parse_report_strategy(cfg.at("report_strategy").get<std::string>());
      gc.window_stride = cfg.at("window_stride").get<int>();
      gc.relevant = parse_relevant_aggregation(cfg.at("relevant").get<std::string>());
      gc.use_report = cfg.at("use_report").get<bool>();
      gc.use_relevant = cfg.at("use_relevant").get<bool>();
      std::vector<LinearHead> heads;
      for (const auto& name : cfg.at("heads").get<std::vector<std::string>>()) {
        const json head = read_json(dir / "grader" / name);
        heads.push_back(LinearHead{matrix_from(head.at("weight")), matrix_from(head.at("bias"))});
      }
      ck.grader.emplace(handle_from(read_json(dir / "grader/query.json"), provider, Side::query),
                        handle_from(read_json(dir / "grader/report.json"), provider, Side::passage), gc,
                        cfg.at("dimension_ids").get<std::vector<std::string>>(), std::move(heads));
      ck.grader_log = TrainingLog::from_jsonl(read_file(dir / "grader/training_log.jsonl"));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
  if (ck.config.verifier_mode == VerifierMode::learned && !ck.verifier) throw CheckpointError("checkpoint has no verifier");
  if (ck.config.mode == DimensionMode::scored && !ck.grader) throw CheckpointError("checkpoint has no grader");
  return ck;
}

// ---------------------------------------------------------------------------
// Training and inference

std::vector<int> random_selection(const Report& report, std::string_view dimension_id, int k, std::uint64_t seed) {
  const std::string key = report.id + '\x1f' + std::string(dimension_id);
  std::mt19937_64 rng((seed * 0x9E3779B97F4A7C15ULL) ^ fnv1a64(key));
  const int n = static_cast<int>(report.sentences.size());
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  const int take = std::min(k, n);
  for (int i = 0; i < take; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(take));
  return pool;
}

namespace {

std::vector<int> positions_of(const std::vector<SimilarityScore>& top) {
  std::vector<int> out;
  for (const auto& s : top) out.push_back(s.sentence_position);
  return out;
}

SentenceSelector selector_for(const Checkpoint& ck) {
  const Rubric& rubric = ck.rubric;
  switch (ck.config.verifier_mode) {
    case VerifierMode::learned: {
      const VerifierModel& v = *ck.verifier;
      return [&v, &rubric](const Report& r, std::size_t m) {
        return positions_of(select_top_k(r, rubric.dimensions[m], v.encoders, v.config));
      };
    }
    case VerifierMode::random: {
      const int k = ck.config.k;
      const std::uint64_t seed = ck.config.seed;
      return [&rubric, k, seed](const Report& r, std::size_t m) {
        return random_selection(r, rubric.dimensions[m].id, k, seed);
      };
    }
    default:
      return [](const Report&, std::size_t) { return std::vector<int>{}; };
  }
}

OptimizerConfig stage_optimizer(const RunConfig& config, std::uint64_t stage) {
  OptimizerConfig o = config.optimizer();
  o.seed = config.seed * 0x9E3779B97F4A7C15ULL + stage;
  return o;
}

}  // namespace

Checkpoint train_pipeline(const Corpus& corpus, const RunConfig& config) {
  config.validate();
  if (corpus.rubric.mode() != config.mode) {
    throw ModeMismatch("config mode '" + std::string(to_string(config.mode)) + "' does not match rubric mode '" +
                       std::string(to_string(corpus.rubric.mode())) + "'");
  }
  auto provider = make_provider(config.provider);
  Checkpoint ck;
  ck.config = config;
  ck.rubric = corpus.rubric;

  if (config.verifier_mode == VerifierMode::learned) {
    const VerifierEncoders initial{EncoderHandle(provider, Side::query), EncoderHandle(provider, Side::passage)};
    auto stage1 = train_verifier(corpus, initial, config.verifier(), stage_optimizer(config, 1));
    spdlog::info("verifier: best epoch {} val loss {:.6f}", stage1.log.best_epoch, stage1.log.best_val_loss);
    ck.verifier = std::move(stage1.model);
    ck.verifier_log = std::move(stage1.log);
  }
  if (config.mode == DimensionMode::presence) return ck;

  const GraderModel initial = GraderModel::initial(provider, config.grader(), corpus.rubric, stage_optimizer(config, 2).seed);
  auto stage2 = train_grader(corpus, initial, selector_for(ck), stage_optimizer(config, 3));
  spdlog::info("grader: best epoch {} val loss {:.6f}", stage2.log.best_epoch, stage2.log.best_val_loss);
  ck.grader.emplace(std::move(stage2.model));
  ck.grader_log = std::move(stage2.log);
  return ck;
}

AssessedReport assess(const Checkpoint& ck, const Report& report) {
  if (ck.config.mode != DimensionMode::scored || !ck.grader) {
    throw ModeMismatch("checkpoint is presence-only; it produces no scores");
  }
  if (report.sentences.empty()) throw ValidationError("report '" + report.id + "' has no sentences");
  const SentenceSelector selector = selector_for(ck);
  AssessedReport out;
  out.report_id = report.id;
  for (std::size_t m = 0; m < ck.rubric.size(); ++m) {
    const auto& dim = ck.rubric.dimensions[m];
    DimensionAssessment a;
    a.dimension_id = dim.id;
    a.verifier_probability = std::numeric_limits<double>::quiet_NaN();
    bool gate = true;
    if (ck.config.verifier_mode == VerifierMode::learned) {
      const VerifierOutput v = ck.verifier->verify(report, dim);
      a.verifier_probability = v.probability;
      a.selected_positions = positions_of(v.top_k);
      gate = v.decision;
    } else {
      a.selected_positions = selector(report, m);
    }
    a.score = gate ? ck.grader->grade(report, dim, a.selected_positions).argmax(dim.max_score) : 0;
    a.decision = ck.config.verifier_mode == VerifierMode::learned ? gate : a.score > 0;
    out.total += a.score;
    out.per_dimension.push_back(std::move(a));
  }
  return out;
}

std::vector<bool> assess_presence(const Checkpoint& ck, const Report& report) {
  if (ck.config.mode != DimensionMode::presence) {
    throw ModeMismatch("checkpoint is scored; presence assessment needs a presence-mode checkpoint");
  }
  if (report.sentences.empty()) throw ValidationError("report '" + report.id + "' has no sentences");
  std::vector<bool> out;
  for (const auto& dim : ck.rubric.dimensions) out.push_back(ck.verifier->verify(report, dim).decision);
  return out;
}

PredictionSet predict(const Checkpoint& ck, const Corpus& corpus, Split split) {
  if (corpus.rubric != ck.rubric) throw ValidationError("corpus rubric does not match the checkpoint rubric");
  const auto truths = corpus.score_index();
  PredictionSet set{ck.rubric, {}};
  for (const Report* r : corpus.reports_in(split)) {
    auto truth = [&](const std::string& dim) {
      auto it = truths.find({r->id, dim});
      if (it == truths.end()) throw IncompleteReport("report '" + r->id + "' has no true score for dimension '" + dim + "'");
      return it->second;
    };
    if (ck.config.mode == DimensionMode::presence) {
      const auto present = assess_presence(ck, *r);
      for (std::size_t m = 0; m < ck.rubric.size(); ++m) {
        const auto& id = ck.rubric.dimensions[m].id;
        set.entries.push_back({r->id, id, present[m] ? 1 : 0, truth(id), present[m]});
      }
      continue;
    }
    for (const auto& a : assess(ck, *r).per_dimension) {
      set.entries.push_back({r->id, a.dimension_id, a.score, truth(a.dimension_id), a.decision});
    }
  }
  if (set.entries.empty()) throw ValidationError("split '" + std::string(to_string(split)) + "' has no reports");
  return set;
}

EvaluationReport evaluate(const Checkpoint& ck, const Corpus& corpus, Split split, const EvaluationOptions& options) {
  return evaluate_predictions(predict(ck, corpus, split), options);
}

// ---------------------------------------------------------------------------
// Ablations

std::string_view to_string(Ablation ablation) {
  switch (ablation) {
    case Ablation::random_verifier: return "random_verifier";
    case Ablation::without_verifier_truncate: return "without_verifier_truncate";
    case Ablation::without_verifier_moving_average: return "without_verifier_moving_average";
    case Ablation::without_report: return "without_report";
    case Ablation::cross_entropy: return "cross_entropy";
  }
  return "random_verifier";
}

Ablation parse_ablation(std::string_view text) {
  std::string normalized(text);
  std::replace(normalized.begin(), normalized.end(), '-', '_');
  for (auto a : {Ablation::random_verifier, Ablation::without_verifier_truncate, Ablation::without_verifier_moving_average,
                 Ablation::without_report, Ablation::cross_entropy}) {
    if (normalized == to_string(a)) return a;
  }
  throw ConfigError("unknown ablation '" + std::string(text) + "'");
}

RunConfig apply_ablation(RunConfig config, Ablation ablation) {
  switch (ablation) {
    case Ablation::random_verifier: config.verifier_mode = VerifierMode::random; break;
    case Ablation::without_verifier_truncate: config.verifier_mode = VerifierMode::none_truncate; break;
    case Ablation::without_verifier_moving_average: config.verifier_mode = VerifierMode::none_moving_avg; break;
    case Ablation::without_report: config.include_report = false; break;
    case Ablation::cross_entropy: config.loss = GraderLoss::ce; break;
  }
  return config;
}

EvaluationReport run_ablation(const Corpus& corpus, const RunConfig& base, Ablation ablation, Split split) {
  const Checkpoint ck = train_pipeline(corpus, apply_ablation(base, ablation));
  return evaluate(ck, corpus, split);
}

// ---------------------------------------------------------------------------
// Grid search

GridSpec GridSpec::standard() {
  return GridSpec{{1e-3, 1e-4, 1e-5, 5e-3, 5e-4, 5e-5}, {4, 8, 16}, {1, 1.5, 2, 2.5, 3}, {1, 2, 3, 4, 20, 25}};
}

std::size_t GridSpec::size() const { return learning_rates.size() * batch_sizes.size() * alphas.size() * ks.size(); }

RunConfig GridSpec::cell(const RunConfig& base, std::size_t index) const {
  if (index >= size()) throw ConfigError("grid cell " + std::to_string(index) + " out of range");
  RunConfig c = base;
  c.k = ks[index % ks.size()];
  index /= ks.size();
  c.alpha = alphas[index % alphas.size()];
  index /= alphas.size();
  c.batch_size = batch_sizes[index % batch_sizes.size()];
  index /= batch_sizes.size();
  c.learning_rate = learning_rates[index];
  return c;
}

CellEvaluator training_evaluator(const Corpus& corpus) {
  return [&corpus](const RunConfig& config) {
    const Checkpoint ck = train_pipeline(corpus, config);
    CellResult r;
    r.config = config;
    r.val_loss = ck.selection_loss();
    if (!corpus.reports_in(Split::val).empty()) r.metrics = ojson::parse(to_json(evaluate(ck, corpus, Split::val)));
    return r;
  };
}

std::string leaderboard_line(const CellResult& cell) {
  ojson j;
  j["config"] = to_json(cell.config);
  j["val_loss"] = std::isfinite(cell.val_loss) ? ojson(cell.val_loss) : ojson(nullptr);
  j["metrics"] = cell.metrics;
  j["diverged"] = cell.diverged;
  return j.dump() + "\n";
}

GridResult grid_search(const GridSpec& grid, const RunConfig& base, const CellEvaluator& evaluate_cell,
                       std::ostream* leaderboard) {
  if (grid.size() == 0) throw ConfigError("grid has no cells");
  GridResult result;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const RunConfig config = grid.cell(base, i);
    CellResult cell = evaluate_cell(config);
    cell.config = config;
    cell.diverged = cell.diverged || !std::isfinite(cell.val_loss);
    if (cell.diverged) spdlog::warn("grid cell {} diverged", i);
    if (leaderboard) {
      *leaderboard << leaderboard_line(cell);
      leaderboard->flush();
    }
    if (!cell.diverged && (!best || cell.val_loss < result.cells[*best].val_loss)) best = i;
    result.cells.push_back(std::move(cell));
  }
  if (!best) throw Error("every grid cell diverged");
  result.best_index = *best;
  result.best = result.cells[*best].config;
  return result;
}

}  // namespace labgrade

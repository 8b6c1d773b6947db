#include "labgrade/encoder.hpp"

#include <atomic>
#include <cctype>
#include <map>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <unordered_map>

#include "labgrade/errors.hpp"
#include "labgrade/hash.hpp"

namespace labgrade {

std::string_view to_string(ProviderKind kind) {
  return kind == ProviderKind::deterministic_test ? "deterministic_test" : "pretrained_contextual";
}

std::string_view to_string(Side side) { return side == Side::query ? "query" : "passage"; }

std::string_view to_string(ReportStrategy strategy) {
  return strategy == ReportStrategy::truncate ? "truncate" : "moving_average";
}

ProviderKind parse_provider(std::string_view text) {
  if (text == "deterministic_test") return ProviderKind::deterministic_test;
  if (text == "pretrained_contextual") return ProviderKind::pretrained_contextual;
  throw ConfigError("unknown encoder provider '" + std::string(text) + "'");
}

ReportStrategy parse_report_strategy(std::string_view text) {
  if (text == "truncate") return ReportStrategy::truncate;
  if (text == "moving_average") return ReportStrategy::moving_average;
  throw ConfigError("unknown report strategy '" + std::string(text) + "'");
}

namespace {

std::atomic<std::uint64_t> g_truncated{0};

}  // namespace

std::uint64_t truncated_inputs() { return g_truncated.load(); }

Embedding TextEncoder::embed(std::string_view text) const {
  auto tokens = tokenize(text);
  if (static_cast<int>(tokens.size()) > max_tokens()) {
    tokens.resize(max_tokens());
    ++g_truncated;
  }
  return embed_tokens(tokens);
}

// ---------------------------------------------------------------------------
// HashingEncoder

HashingEncoder::HashingEncoder(int dim, int max_tokens) : dim_(dim), max_tokens_(max_tokens) {
  if (dim <= 0) throw ConfigError("embedding_dim must be positive");
  if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
}

std::vector<std::string> HashingEncoder::tokenize(std::string_view text) const {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || u >= 0x80) {
      current += static_cast<char>(std::tolower(u));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Embedding HashingEncoder::token_vector(std::string_view token) const {
  std::mt19937_64 rng(fnv1a64(token) ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(dim_)));
  std::normal_distribution<double> normal(0.0, 1.0);
  Embedding v(dim_);
  for (int i = 0; i < dim_; ++i) v(i) = normal(rng);
  return v;
}

Embedding HashingEncoder::embed_tokens(std::span<const std::string> tokens) const {
  // Token vectors are pure functions of the token; cache them process-wide.
  static std::shared_mutex mutex;
  static std::unordered_map<std::string, Embedding> cache;

  Embedding sum = Embedding::Zero(dim_);
  auto add = [&](std::string_view token) {
    std::string key = std::to_string(dim_) + '\x1f';
    key += token;
    {
      std::shared_lock lock(mutex);
      auto it = cache.find(key);
      if (it != cache.end()) {
        sum += it->second;
        return;
      }
    }
    Embedding v = token_vector(token);
    sum += v;
    std::unique_lock lock(mutex);
    cache.emplace(std::move(key), std::move(v));
  };
  if (tokens.empty()) {
    add("<empty>");
  } else {
    for (const auto& t : tokens) add(t);
  }
  const double norm = sum.norm();
  return norm > 0 ? Embedding(sum / norm) : sum;
}

std::string HashingEncoder::fingerprint() const {
  return "deterministic_test/fnv1a-gauss/dim=" + std::to_string(dim_) + "/max_tokens=" + std::to_string(max_tokens_);
}

// ---------------------------------------------------------------------------
// Provider registry

namespace {

std::mutex g_registry_mutex;

std::map<ProviderKind, ProviderFactory>& registry() {
  static std::map<ProviderKind, ProviderFactory> r = {
      {ProviderKind::deterministic_test,
       [](const ProviderConfig& c) { return std::make_shared<const HashingEncoder>(c.embedding_dim, c.max_tokens); }},
  };
  return r;
}

}  // namespace

void register_provider(ProviderKind kind, ProviderFactory factory) {
  std::lock_guard lock(g_registry_mutex);
  registry()[kind] = std::move(factory);
}

std::shared_ptr<const TextEncoder> make_provider(const ProviderConfig& config) {
  ProviderFactory factory;
  {
    std::lock_guard lock(g_registry_mutex);
    auto it = registry().find(config.kind);
    if (it == registry().end()) {
      throw ConfigError("no factory registered for encoder provider '" + std::string(to_string(config.kind)) + "'");
    }
    factory = it->second;
  }
  auto provider = factory(config);
  if (!provider) throw ConfigError("encoder provider factory returned nothing");
  return provider;
}

// ---------------------------------------------------------------------------
// EncoderHandle

namespace {

std::string version_of(const TextEncoder& provider, Side side, const Eigen::MatrixXd& projection) {
  std::string bytes = provider.fingerprint();
  bytes += '|';
  bytes += to_string(side);
  bytes += '|' + std::to_string(projection.rows()) + 'x' + std::to_string(projection.cols()) + '|';
  bytes.append(reinterpret_cast<const char*>(projection.data()), sizeof(double) * projection.size());
  return sha256_hex(bytes).substr(0, 16);
}

}  // namespace

EncoderHandle::EncoderHandle(std::shared_ptr<const TextEncoder> provider, Side side)
    : EncoderHandle(provider, side, Eigen::MatrixXd::Identity(provider->dim(), provider->dim())) {}

EncoderHandle::EncoderHandle(std::shared_ptr<const TextEncoder> provider, Side side, Eigen::MatrixXd projection)
    : provider_(std::move(provider)), side_(side), projection_(std::move(projection)) {
  if (!provider_) throw ConfigError("encoder handle needs a provider");
  if (projection_.cols() != provider_->dim()) throw DimensionMismatch(provider_->dim(), projection_.cols());
  if (!projection_.allFinite()) throw ConfigError("encoder projection has non-finite entries");
  params_version_ = version_of(*provider_, side_, projection_);
}

std::vector<Embedding> encode(const EncoderHandle& handle, std::span<const std::string> texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(handle.project(handle.provider().embed(t)));
  return out;
}

Embedding encode(const EncoderHandle& handle, std::string_view text) {
  return handle.project(handle.provider().embed(text));
}

Embedding embed_report(const TextEncoder& provider, const Report& report, ReportStrategy strategy, int window_stride) {
  if (report.sentences.empty()) throw ValidationError("report '" + report.id + "' has no sentences");
  std::vector<std::string> tokens;
  for (const auto& s : report.sentences) {
    auto t = provider.tokenize(s.text);
    tokens.insert(tokens.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
  }
  const std::size_t window = static_cast<std::size_t>(provider.max_tokens());
  if (tokens.size() <= window) return provider.embed_tokens(tokens);

  const std::span<const std::string> all(tokens);
  if (strategy == ReportStrategy::truncate) {
    ++g_truncated;
    return provider.embed_tokens(all.first(window));
  }
  const std::size_t stride = window_stride > 0 ? static_cast<std::size_t>(window_stride) : window;
  Embedding sum = Embedding::Zero(provider.dim());
  int windows = 0;
  for (std::size_t start = 0;; start += stride) {
    const std::size_t length = std::min(window, tokens.size() - start);
    sum += provider.embed_tokens(all.subspan(start, length));
    ++windows;
    if (start + length >= tokens.size()) break;
  }
  return sum / windows;
}

Embedding encode_report(const EncoderHandle& handle, const Report& report, ReportStrategy strategy, int window_stride) {
  return handle.project(embed_report(handle.provider(), report, strategy, window_stride));
}

Eigen::MatrixXd embed_sentences(const TextEncoder& provider, const Report& report) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(report.sentences.size()), provider.dim());
  for (std::size_t i = 0; i < report.sentences.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = provider.embed(report.sentences[i].text).transpose();
  }
  return rows;
}

}  // namespace labgrade

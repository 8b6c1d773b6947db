#ifndef LABGRADE_ENCODER_HPP_
#define LABGRADE_ENCODER_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "labgrade/corpus.hpp"

namespace labgrade {

using Embedding = Eigen::VectorXd;

enum class ProviderKind { pretrained_contextual, deterministic_test };
enum class Side { query, passage };
enum class ReportStrategy { truncate, moving_average };

std::string_view to_string(ProviderKind kind);
std::string_view to_string(Side side);
std::string_view to_string(ReportStrategy strategy);
ProviderKind parse_provider(std::string_view text);
ReportStrategy parse_report_strategy(std::string_view text);

struct ProviderConfig {
  ProviderKind kind = ProviderKind::deterministic_test;
  int embedding_dim = 128;
  // Input budget in tokens; also the moving-average window size.
  int max_tokens = 128;
  // Moving-average stride in tokens; 0 means non-overlapping windows.
  int window_stride = 0;
  // Provider-specific model identifier (unused by the test provider).
  std::string model;

  bool operator==(const ProviderConfig&) const = default;
};

/// A frozen text-embedding backend. Implementations must be safe for
/// concurrent calls.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;

  virtual int dim() const = 0;
  virtual int max_tokens() const = 0;
  virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
  /// Embeds a token sequence that already fits the budget.
  virtual Embedding embed_tokens(std::span<const std::string> tokens) const = 0;
  /// Identifies the backend and its settings; feeds params_version.
  virtual std::string fingerprint() const = 0;

  /// Tokenizes, truncates silently to max_tokens() and embeds.
  Embedding embed(std::string_view text) const;
};

/// Token-hash bag of vectors: every token maps to a Gaussian vector seeded by
/// its FNV-1a hash; a text is the L2-normalised sum of its token vectors.
class HashingEncoder final : public TextEncoder {
 public:
  explicit HashingEncoder(int dim = 128, int max_tokens = 128);

  int dim() const override { return dim_; }
  int max_tokens() const override { return max_tokens_; }
  std::vector<std::string> tokenize(std::string_view text) const override;
  Embedding embed_tokens(std::span<const std::string> tokens) const override;
  std::string fingerprint() const override;

  Embedding token_vector(std::string_view token) const;

 private:
  int dim_;
  int max_tokens_;
};

using ProviderFactory = std::function<std::shared_ptr<const TextEncoder>(const ProviderConfig&)>;

/// Installs the factory used for `kind`. The deterministic_test provider is
/// registered by default; pretrained_contextual must be supplied by the host.
void register_provider(ProviderKind kind, ProviderFactory factory);
std::shared_ptr<const TextEncoder> make_provider(const ProviderConfig& config);

/// Number of inputs truncated to a provider budget since process start.
std::uint64_t truncated_inputs();

/// One side of a dual encoder: a frozen provider followed by a trainable
/// linear projection. Immutable; training builds new handles.
class EncoderHandle {
 public:
  EncoderHandle(std::shared_ptr<const TextEncoder> provider, Side side);
  EncoderHandle(std::shared_ptr<const TextEncoder> provider, Side side, Eigen::MatrixXd projection);

  Side side() const { return side_; }
  int embedding_dim() const { return static_cast<int>(projection_.rows()); }
  const Eigen::MatrixXd& projection() const { return projection_; }
  const TextEncoder& provider() const { return *provider_; }
  std::shared_ptr<const TextEncoder> shared_provider() const { return provider_; }
  const std::string& params_version() const { return params_version_; }

  Embedding project(const Embedding& base) const { return projection_ * base; }

 private:
  std::shared_ptr<const TextEncoder> provider_;
  Side side_;
  Eigen::MatrixXd projection_;
  std::string params_version_;
};

std::vector<Embedding> encode(const EncoderHandle& handle, std::span<const std::string> texts);
Embedding encode(const EncoderHandle& handle, std::string_view text);

/// Provider-level report embedding (before projection).
/// truncate: the longest token prefix that fits the budget.
/// moving_average: mean over windows of max_tokens() tokens advanced by
/// `window_stride` (0 = window size) until the whole text is covered.
Embedding embed_report(const TextEncoder& provider, const Report& report, ReportStrategy strategy,
                       int window_stride = 0);
Embedding encode_report(const EncoderHandle& handle, const Report& report, ReportStrategy strategy,
                        int window_stride = 0);

/// Provider embeddings of every sentence, one row per sentence.
Eigen::MatrixXd embed_sentences(const TextEncoder& provider, const Report& report);

}  // namespace labgrade

#endif  // LABGRADE_ENCODER_HPP_

#pragma once

// Probability-simplex primitives: vocabularies, token distributions stored in
// log space, sampling policies (temperature / top-k), and the distances and
// entropies the rest of the library is built on.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace uwm {

using TokenId = std::uint32_t;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Max-shifted log-sum-exp. Empty or all -inf input yields -inf.
double log_sum_exp(std::span<const double> logs);

/// log(exp(a) + exp(b)) without overflow.
double log_add(double a, double b);

/// log(exp(a) - exp(b)); requires a >= b conceptually, returns -inf when the
/// difference is not positive.
double log_sub(double a, double b);

// ============================================================================
// Vocabulary
// ============================================================================

/// Ordered token set. Index order is the canonical order used everywhere a
/// bijection between tokens and [0, |Sigma|) is needed; it must be identical
/// at generation and detection time.
class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> tokens);

  /// Synthetic vocabulary "0", "1", ..., "size-1".
  static Vocabulary numbered(std::uint32_t size);

  /// One token per line; 0-based line number is the token id.
  static Vocabulary load(const std::string& path);

  std::uint32_t size() const { return static_cast<std::uint32_t>(tokens_.size()); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::optional<TokenId> id_of(std::string_view token) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// ============================================================================
// TokenDistribution
// ============================================================================

/// A point of the probability simplex over a vocabulary. Probabilities are
/// held as log values with an exact -inf sentinel for zero mass; every
/// renormalization goes through max-shifted log-sum-exp.
class TokenDistribution {
 public:
  /// Entries must be >= 0 and sum to 1 within 1e-9.
  static TokenDistribution from_probs(std::span<const double> probs);

  /// Shift-normalizes arbitrary log weights (-inf allowed). Throws if all
  /// entries are -inf.
  static TokenDistribution from_log_weights(std::span<const double> log_weights);

  static TokenDistribution point_mass(std::size_t size, TokenId token);
  static TokenDistribution uniform(std::size_t size);

  std::size_t size() const { return logp_.size(); }
  double log_prob(TokenId t) const { return logp_[t]; }
  double prob(TokenId t) const;
  const std::vector<double>& log_probs() const { return logp_; }
  std::vector<double> probs() const;
  bool in_support(TokenId t) const { return logp_[t] != kNegInf; }
  std::size_t support_size() const;

 private:
  explicit TokenDistribution(std::vector<double> logp) : logp_(std::move(logp)) {}
  std::vector<double> logp_;
};

// ============================================================================
// SamplingPolicy
// ============================================================================

/// Temperature and optional top-k truncation applied to a model distribution
/// before any watermark reweighting.
struct SamplingPolicy {
  double temperature = 1.0;
  std::optional<std::uint32_t> top_k;  // absent = no truncation

  void validate() const;
  bool is_identity() const { return temperature == 1.0 && !top_k; }
};

// ============================================================================
// Operations
// ============================================================================

/// Rescales non-negative weights to a distribution. All-zero input is an
/// error ("degenerate weights").
TokenDistribution normalize(std::span<const double> weights);

/// Log-probabilities divided by temperature, softmax-renormalized, then (if
/// top_k is set) all but the k largest probabilities zeroed and the rest
/// renormalized. Ties at the k-th value keep the lower token index.
TokenDistribution apply_policy(const TokenDistribution& dist, const SamplingPolicy& policy);

/// Running sum of probabilities in canonical token order; non-decreasing,
/// last entry 1 within 1e-9.
std::vector<double> cdf(const TokenDistribution& dist);

/// Total variation distance (1/2) sum |p - q|; requires equal sizes.
double tv_distance(const TokenDistribution& p, const TokenDistribution& q);

/// Renyi entropy of order 2: -ln(sum p(x)^2). Zero for a point mass.
double renyi2_entropy(const TokenDistribution& dist);

}  // namespace uwm

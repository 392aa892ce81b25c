#pragma once

// Reweighting functions R_E: simplex -> simplex, parameterized by a per-step
// watermark code E. Two distribution-preserving methods (delta: inverse
// transform sampling to a point mass; gamma: coded shuffle, reject the first
// half of cumulative mass, double the rest), the two red-list baselines kept
// for bias comparison, and a Gumbel-argmax variant of delta whose code is
// usable for likelihood-free detection. verify_unbiased measures
// E_E[R_E(P)] - P exactly (enumeration / integration) or by Monte Carlo.

#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "uwmark/prob.hpp"

namespace uwm {

// ============================================================================
// Watermark code values
// ============================================================================

/// Code for delta-reweight: one uniform variate in [0,1).
struct UnitRealCode {
  double u = 0.0;
};

/// Code for gamma-reweight: a bijection token -> slot, stored as
/// rank[token] in [0, n). rank defines the shuffled order.
struct PermutationCode {
  std::vector<std::uint32_t> rank;

  static PermutationCode identity(std::uint32_t n);
  /// Validates that ranks form a bijection.
  static PermutationCode from_ranks(std::vector<std::uint32_t> ranks);
  /// Tokens listed in shuffled slot order -> rank array.
  static PermutationCode from_shuffled(const std::vector<std::uint32_t>& shuffled);
};

/// Code for the red-list baselines: green[t] != 0 marks a green token.
struct RedGreenCode {
  std::vector<std::uint8_t> green;

  std::uint32_t green_count() const;
};

/// Code for the Gumbel variant: one standard Gumbel variate per token.
struct GumbelCode {
  std::vector<double> noise;
};

using WatermarkCode = std::variant<UnitRealCode, PermutationCode, RedGreenCode, GumbelCode>;

// ============================================================================
// Reweighter
// ============================================================================

enum class ReweightKind { delta, gamma, hard_red, soft_red, gumbel_delta };

std::string to_string(ReweightKind kind);
ReweightKind reweight_kind_from_string(std::string_view name);

/// A reweighting method plus its parameters. delta_logit applies to soft_red
/// only; gamma_frac (green fraction, default 1/2) to the red-list kinds only.
struct Reweighter {
  ReweightKind kind = ReweightKind::delta;
  double delta_logit = 1.0;
  double gamma_frac = 0.5;

  void validate() const;
  /// Number of green tokens for a red-list code over n tokens.
  std::uint32_t green_count(std::uint32_t vocab_size) const;
  /// Applies this method's reweighting; the code variant must match the kind.
  TokenDistribution apply(const TokenDistribution& dist, const WatermarkCode& code) const;
};

// ============================================================================
// Reweighting functions
// ============================================================================

/// Point mass on the first token (canonical order) whose CDF exceeds u.
TokenDistribution delta_reweight(const TokenDistribution& dist, const UnitRealCode& code);

/// With F_I(i) = sum of P over tokens ranked <= i and F_S(s) = max(2s-1, 0),
/// returns P'(t) = F_S(F_I(rank(t))) - F_S(F_I(rank(t)-1)).
TokenDistribution gamma_reweight(const TokenDistribution& dist, const PermutationCode& code);

/// Red probabilities zeroed, green renormalized. Throws "all mass red" when
/// no green token carries probability.
TokenDistribution hard_red_reweight(const TokenDistribution& dist, const RedGreenCode& code);

/// Softmax of log P(t) + delta_logit * green(t); zero-probability tokens stay
/// at zero.
TokenDistribution soft_red_reweight(const TokenDistribution& dist, const RedGreenCode& code,
                                    double delta_logit);

/// Point mass on argmax over support(P) of log P(t) + noise(t); ties keep the
/// lower token index.
TokenDistribution gumbel_delta_reweight(const TokenDistribution& dist, const GumbelCode& code);

// ============================================================================
// Code sampling and unbiasedness verification
// ============================================================================

/// Draws a code from the method's idealized code distribution P_E.
WatermarkCode sample_code(const Reweighter& rw, std::uint32_t vocab_size, std::mt19937_64& rng);

/// Exact E_E[R_E(P)] per token: delta integrates the piecewise-constant map
/// over u; gamma averages all |Sigma|! permutations (|Sigma| <= 6); red-list
/// kinds average all partitions with the required green count. Throws for
/// gumbel_delta (no finite enumeration).
std::vector<double> exact_code_mean(const Reweighter& rw, const TokenDistribution& dist);

enum class VerifyMode { exact, monte_carlo };

struct UnbiasednessReport {
  double max_abs_error = 0.0;
  bool pass = false;
  VerifyMode mode = VerifyMode::exact;
  std::uint64_t samples = 0;  // Monte Carlo only
  std::vector<double> mean;   // measured E_E[R_E(P)]
};

/// Exact mode: pass iff max_t |E[R_E(P)](t) - P(t)| <= 1e-12. Monte Carlo:
/// pass iff every token's deviation is within 4 sigma of its Bernoulli bound
/// sqrt(P(t)(1-P(t))/N).
UnbiasednessReport verify_unbiased(const Reweighter& rw, const TokenDistribution& dist,
                                   VerifyMode mode, std::uint64_t mc_samples = 200000,
                                   std::uint64_t seed = 0);

}  // namespace uwm

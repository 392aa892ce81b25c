#pragma once

// Score-based watermark detection. Per token the detector replays the context
// code, re-derives the watermark code, reconstructs the reweighted
// distribution Q from the estimated model distribution P, and scores the
// observed token. Admissible score vectors satisfy <P, exp(S)> <= 1 on the
// support of P, which gives the total-score tail bound
// P(sum >= t) <= A * exp(-t) under the null (A = grid size).
//
// Scores:
//  - llr_scores: log(Q/P), the plain likelihood-ratio score.
//  - maximin_scores: worst case over a TV ball of radius d around Q; closed
//    form via water-filling over the extreme-ratio token sets.
//  - gumbel_scores: likelihood-free score ln 2 - exp(-E(x)) from the Gumbel
//    code alone.
//  - green_z_score: green-count z statistic for the red-list baselines.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "uwmark/generate.hpp"

namespace uwm {

// ============================================================================
// Score vectors
// ============================================================================

/// log(Q(x)/P(x)) per token; -inf where Q(x) = 0. Tokens outside the support
/// of P score 0: they are unobservable under the null and carry no admissible
/// evidence.
std::vector<double> llr_scores(const TokenDistribution& p, const TokenDistribution& q);

/// <P, exp(S)> restricted to the support of P.
double admissibility(const TokenDistribution& p, std::span<const double> scores);

/// Water-filling solver for the TV-robust score, sharing the sorted ratio
/// order and prefix mass sums across grid points.
class MaximinScorer {
 public:
  MaximinScorer(const TokenDistribution& p, const TokenDistribution& q);

  /// Score vector for perturbation strength d (on Q) and d_prime (on P).
  /// d = d_prime = 0 reduces exactly to llr_scores.
  std::vector<double> scores(double d, double d_prime = 0.0) const;

 private:
  std::size_t vocab_size_;
  std::vector<double> base_;              // full-size base LLR (0 off support)
  std::vector<std::uint32_t> order_;      // support tokens, ratio descending
  std::vector<double> ratio_;             // base LLR per order position
  std::vector<double> pref_logq_, pref_logp_;  // prefix log-sum-exp over order
  std::vector<double> suf_logq_, suf_logp_;    // suffix log-sum-exp over order
};

/// One-shot convenience wrapper around MaximinScorer.
std::vector<double> maximin_scores(const TokenDistribution& p, const TokenDistribution& q,
                                   double d, double d_prime = 0.0);

/// Grid-search threshold: -ln(alpha) + ln(grid_size).
double detection_threshold(double alpha, std::size_t grid_size);

/// Default 11-point perturbation grid {0.0, 0.1, ..., 1.0}.
std::vector<double> default_grid();

// ============================================================================
// Reports
// ============================================================================

struct TokenScoreRecord {
  TokenId token = 0;
  std::string cc_hex;
  bool skipped = false;
  bool support_violation = false;
  std::vector<double> score_per_d;  // one entry per grid point (one for gumbel)
};

struct DetectionReport {
  std::string method;  // "maximin" or "gumbel"
  std::vector<double> grid;
  std::vector<TokenScoreRecord> tokens;
  std::vector<double> totals;  // per grid point
  double best_d = 0.0;
  double total_score = 0.0;
  double alpha = 0.05;
  double threshold = 0.0;
  double p_value_raw = 1.0;  // A * exp(-total), may exceed 1
  double p_value = 1.0;      // clamped to [0,1]
  std::size_t support_violations = 0;

  bool detected() const { return total_score >= threshold; }
  std::string serialize() const;
  void save(const std::string& path) const;
};

/// Observer for per-step score vectors (testing hook); called once per fresh,
/// in-support step and grid point.
using StepObserver = std::function<void(std::size_t step, const TokenDistribution& p,
                                        const TokenDistribution& q, double d,
                                        std::span<const double> scores)>;

/// Replays a token stream against the model and key: re-derives context
/// codes and skipped flags from the initial history (empty by default; a
/// mismatch with batched generation histories only forfeits score, never
/// admissibility), scores each fresh token at every grid point, and keeps
/// the best grid total. Skipped steps score 0. An observed token outside the
/// support of the detection-time P scores 0 at all grid points and sets a
/// support-violation flag.
DetectionReport replay_and_score(std::span<const TokenId> prompt,
                                 std::span<const TokenId> tokens, const LanguageModel& lm,
                                 const WatermarkKey& key, const Reweighter& rw,
                                 std::uint32_t context_window, const SamplingPolicy& policy,
                                 std::span<const double> grid, double alpha,
                                 CodeHistory history = {}, double d_prime = 0.0,
                                 const StepObserver& observer = {});

/// Likelihood-free detection from the Gumbel code alone: score
/// ln 2 - exp(-E_i(x_i)) for fresh context codes, 0 for repeats. No language
/// model required; threshold -ln(alpha).
DetectionReport gumbel_scores(std::span<const TokenId> prompt, std::span<const TokenId> tokens,
                              const WatermarkKey& key, std::uint32_t context_window,
                              std::uint32_t vocab_size, double alpha, CodeHistory history = {});

/// Red-list baseline detector: z = (g - gamma*T) / sqrt(T*gamma*(1-gamma))
/// with g the green count under the replayed partitions; every token is
/// scored.
double green_z_score(std::span<const TokenId> prompt, std::span<const TokenId> tokens,
                     const WatermarkKey& key, std::uint32_t context_window,
                     std::uint32_t vocab_size, double gamma_frac);

}  // namespace uwm

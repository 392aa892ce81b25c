#pragma once

// Experiment drivers: the substitution attack, Mann-Whitney AUC with
// bootstrap error bars, the robustness sweep over attack strengths, the exact
// undetectability check on table models, and the detection-parameter
// sensitivity study. Drivers fan trials out over threads with per-trial
// derived seeds and merge deterministically by trial index.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uwmark/detect.hpp"

namespace uwm {

// ============================================================================
// Attack and AUC
// ============================================================================

/// Positions touched by a strength-epsilon attack: floor(epsilon * n) indices
/// drawn uniformly without replacement.
std::vector<std::size_t> attack_positions(std::size_t n, double epsilon, std::mt19937_64& rng);

/// Replaces floor(epsilon * n) uniformly chosen positions with uniform random
/// vocabulary tokens (a replacement may equal the original token).
std::vector<TokenId> attack_substitute(std::span<const TokenId> tokens, double epsilon,
                                       std::uint32_t vocab_size, std::mt19937_64& rng);

/// Mann-Whitney AUC: P(W > N) + P(W = N) / 2 over all pairs.
double auc(std::span<const double> watermarked, std::span<const double> null_scores);

/// Bootstrap standard error of the AUC, resampling prompt indices (paired
/// watermarked/null scores) with replacement.
double auc_bootstrap_stderr(std::span<const double> watermarked,
                            std::span<const double> null_scores, std::size_t resamples,
                            std::uint64_t seed);

// ============================================================================
// Robustness sweep
// ============================================================================

struct RobustnessConfig {
  std::string model_spec = "uniform:256";
  Reweighter reweighter{};
  WatermarkKey key{};
  std::uint32_t context_window = 5;
  SamplingPolicy policy{};
  std::vector<double> grid = default_grid();
  double alpha = 0.05;
  std::vector<double> epsilons = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::uint32_t n_prompts = 512;
  std::uint32_t prompt_length = 4;
  std::uint32_t gen_length = 16;
  std::uint32_t bootstrap_resamples = 1000;
  std::uint64_t seed = 0;
  int threads = 0;
};

struct RobustnessRow {
  double epsilon = 0.0;
  double auc_value = 0.0;
  double stderr_value = 0.0;
};

/// For each epsilon: watermarked and plain continuations from seeded random
/// prompts, the attack applied to the watermarked ones, both scored with the
/// true key (maximin total for the unbiased kinds, green z for the red-list
/// baselines), and the AUC between the two score populations.
std::vector<RobustnessRow> run_robustness(const RobustnessConfig& config);

std::string robustness_csv(std::span<const RobustnessRow> rows);

// ============================================================================
// Exact undetectability
// ============================================================================

struct UndetectabilityReport {
  double max_abs_error = 0.0;
  std::size_t strings_checked = 0;
  double tolerance = 1e-12;
  bool unbiased() const { return max_abs_error <= tolerance; }
};

/// Exact check over every string of length 1..depth: the per-step
/// code-averaged reweighted probability (integration for delta, full
/// enumeration for gamma and the red-list kinds) is multiplied along the
/// string and compared with the product of the model's conditionals.
/// Requires a table model with |Sigma| <= 3 and depth <= 3.
UndetectabilityReport run_undetectability(const TableModel& model, const Reweighter& rw,
                                          std::uint32_t depth);

// ============================================================================
// Sensitivity study
// ============================================================================

struct SensitivityConfig {
  std::string model_spec;
  WatermarkKey key{};
  std::uint32_t context_window = 5;
  SamplingPolicy generation_policy{1.0, 50};
  std::vector<double> detect_temperatures = {0.5, 1.0, 1.5};
  // 0 entry means "no truncation".
  std::vector<std::uint32_t> detect_top_ks = {20, 50, 100, 0};
  std::vector<double> grid = default_grid();
  double alpha = 0.05;
  std::uint32_t trials = 1000;
  std::uint32_t prompt_length = 4;
  std::uint32_t gen_length = 32;
  std::uint64_t seed = 0;
  int threads = 0;
};

struct SensitivityRow {
  ReweightKind reweight = ReweightKind::delta;
  std::string setting;  // "temperature" or "top_k"
  std::string value;
  bool matched = false;
  double mean_score_per_token = 0.0;
  double sd_score_per_token = 0.0;
};

struct SensitivityResult {
  std::vector<SensitivityRow> rows;
  // Sign test: trials where gamma retained a larger fraction of its matched
  // score than delta did under mismatched detection parameters.
  std::size_t sign_successes = 0;
  std::size_t sign_trials = 0;
  double sign_p_value = 1.0;
};

/// Generates delta- and gamma-watermarked text under the generation policy,
/// then detects under every temperature / top-k setting; reports mean score
/// per token for each setting and the sign test comparing the two methods'
/// relative degradation under mismatch.
SensitivityResult run_sensitivity(const SensitivityConfig& config);

std::string sensitivity_csv(const SensitivityResult& result);

/// One-sided binomial tail P(Bin(n, 1/2) >= k).
double binomial_tail_ge(std::size_t n, std::size_t k);

}  // namespace uwm

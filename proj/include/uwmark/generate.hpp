#pragma once

// Watermarked generation: per step the model distribution is policy-adjusted,
// the context code of the recent window is derived, and — unless that code
// was already spent — a keyed watermark code reweights the distribution
// before sampling. Repeated context codes skip the reweighting so codes stay
// independent. Transcripts capture everything needed to replay detection.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uwmark/keyed.hpp"
#include "uwmark/lm.hpp"

namespace uwm {

// ============================================================================
// Transcript
// ============================================================================

/// One generation run: prompt, produced tokens, the configuration needed to
/// replay detection, and per-step skipped flags. Replaying context codes over
/// prompt + tokens with an empty initial history reproduces the flags.
struct Transcript {
  std::string model_spec;
  std::optional<ReweightKind> reweight;  // absent for plain sampling
  double delta_logit = 1.0;
  double gamma_frac = 0.5;
  std::uint32_t context_window = 5;
  SamplingPolicy policy;
  std::string key_fingerprint;  // empty for plain sampling
  std::uint64_t seed = 0;
  std::string history_mode = "reset-per-run";
  double attacked_epsilon = 0.0;  // set by the substitution attack
  std::vector<TokenId> prompt;
  std::vector<TokenId> tokens;
  std::vector<std::uint8_t> skipped;  // parallel to tokens

  Reweighter reweighter() const;

  std::string serialize() const;
  static Transcript parse(const std::string& text);
  void save(const std::string& path) const;
  static Transcript load(const std::string& path);
};

// ============================================================================
// Sampling and generation
// ============================================================================

/// Inverse-transform sample: first token whose CDF exceeds u.
TokenId sample_from(const TokenDistribution& dist, double u);

/// Watermarked generation. The history is shared state: passed in, mutated
/// with every fresh context code, and left updated for the caller (persisting
/// it across runs is what keeps repeated requests distribution-preserving).
/// The token sampler is seeded independently of the keyed code streams.
Transcript generate(const LanguageModel& lm, const WatermarkKey& key,
                    std::span<const TokenId> prompt, std::uint32_t n_tokens,
                    const Reweighter& rw, std::uint32_t context_window,
                    const SamplingPolicy& policy, CodeHistory& history, std::uint64_t seed);

/// Plain ancestral sampling under the same policy; no watermark.
Transcript generate_plain(const LanguageModel& lm, std::span<const TokenId> prompt,
                          std::uint32_t n_tokens, const SamplingPolicy& policy,
                          std::uint64_t seed);

/// Recomputes the skipped flags for a transcript's tokens from the given
/// initial history (empty by default).
std::vector<std::uint8_t> replay_skipped_flags(std::span<const TokenId> prompt,
                                               std::span<const TokenId> tokens,
                                               std::uint32_t context_window,
                                               CodeHistory history = {});

}  // namespace uwm

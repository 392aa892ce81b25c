#include "uwmark/reweight.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "uwmark/rand_util.hpp"

namespace uwm {

// ============================================================================
// Codes
// ============================================================================

PermutationCode PermutationCode::identity(std::uint32_t n) {
  PermutationCode code;
  code.rank.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) code.rank[i] = i;
  return code;
}

PermutationCode PermutationCode::from_ranks(std::vector<std::uint32_t> ranks) {
  std::vector<std::uint8_t> seen(ranks.size(), 0);
  for (std::uint32_t r : ranks) {
    if (r >= ranks.size() || seen[r]) throw std::invalid_argument("ranks are not a bijection");
    seen[r] = 1;
  }
  return PermutationCode{std::move(ranks)};
}

PermutationCode PermutationCode::from_shuffled(const std::vector<std::uint32_t>& shuffled) {
  std::vector<std::uint32_t> rank(shuffled.size());
  std::vector<std::uint8_t> seen(shuffled.size(), 0);
  for (std::uint32_t pos = 0; pos < shuffled.size(); ++pos) {
    std::uint32_t t = shuffled[pos];
    if (t >= shuffled.size() || seen[t]) throw std::invalid_argument("shuffle is not a bijection");
    seen[t] = 1;
    rank[t] = pos;
  }
  return PermutationCode{std::move(rank)};
}

std::uint32_t RedGreenCode::green_count() const {
  std::uint32_t n = 0;
  for (auto g : green)
    if (g) ++n;
  return n;
}

// ============================================================================
// Reweighter
// ============================================================================

std::string to_string(ReweightKind kind) {
  switch (kind) {
    case ReweightKind::delta: return "delta";
    case ReweightKind::gamma: return "gamma";
    case ReweightKind::hard_red: return "hard";
    case ReweightKind::soft_red: return "soft";
    case ReweightKind::gumbel_delta: return "gumbel";
  }
  throw std::logic_error("unknown reweight kind");
}

ReweightKind reweight_kind_from_string(std::string_view name) {
  if (name == "delta") return ReweightKind::delta;
  if (name == "gamma") return ReweightKind::gamma;
  if (name == "hard" || name == "hard_red") return ReweightKind::hard_red;
  if (name == "soft" || name == "soft_red") return ReweightKind::soft_red;
  if (name == "gumbel" || name == "gumbel_delta") return ReweightKind::gumbel_delta;
  throw std::invalid_argument("unknown reweight kind: " + std::string(name));
}

void Reweighter::validate() const {
  if (kind == ReweightKind::soft_red && !(delta_logit >= 0.0))
    throw std::invalid_argument("delta_logit must be >= 0");
  if ((kind == ReweightKind::hard_red || kind == ReweightKind::soft_red) &&
      !(gamma_frac > 0.0 && gamma_frac < 1.0))
    throw std::invalid_argument("gamma_frac must be in (0,1)");
}

std::uint32_t Reweighter::green_count(std::uint32_t vocab_size) const {
  auto g = static_cast<std::uint32_t>(std::floor(gamma_frac * vocab_size));
  if (g == 0 || g >= vocab_size)
    throw std::invalid_argument("gamma_frac leaves no red or no green tokens");
  return g;
}

TokenDistribution Reweighter::apply(const TokenDistribution& dist,
                                    const WatermarkCode& code) const {
  switch (kind) {
    case ReweightKind::delta:
      return delta_reweight(dist, std::get<UnitRealCode>(code));
    case ReweightKind::gamma:
      return gamma_reweight(dist, std::get<PermutationCode>(code));
    case ReweightKind::hard_red:
      return hard_red_reweight(dist, std::get<RedGreenCode>(code));
    case ReweightKind::soft_red:
      return soft_red_reweight(dist, std::get<RedGreenCode>(code), delta_logit);
    case ReweightKind::gumbel_delta:
      return gumbel_delta_reweight(dist, std::get<GumbelCode>(code));
  }
  throw std::logic_error("unknown reweight kind");
}

// ============================================================================
// Reweighting functions
// ============================================================================

TokenDistribution delta_reweight(const TokenDistribution& dist, const UnitRealCode& code) {
  if (!(code.u >= 0.0 && code.u < 1.0)) throw std::invalid_argument("code u must be in [0,1)");
  const auto c = cdf(dist);
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] > code.u) return TokenDistribution::point_mass(dist.size(), static_cast<TokenId>(i));
  }
  // Rounding left u at or above the final CDF entry: fall back to the last
  // token that carries mass.
  for (std::size_t i = c.size(); i-- > 0;) {
    if (dist.in_support(static_cast<TokenId>(i)))
      return TokenDistribution::point_mass(dist.size(), static_cast<TokenId>(i));
  }
  throw std::logic_error("distribution has empty support");
}

TokenDistribution gamma_reweight(const TokenDistribution& dist, const PermutationCode& code) {
  const std::size_t n = dist.size();
  if (code.rank.size() != n) throw std::invalid_argument("vocabulary mismatch");
  // order[pos] = token occupying shuffled slot pos.
  std::vector<std::uint32_t> order(n);
  for (std::uint32_t t = 0; t < n; ++t) order[code.rank[t]] = t;

  std::vector<double> out(n, 0.0);
  double cum = 0.0;
  double prev = 0.0;  // F_S(F_I(previous slot))
  for (std::uint32_t pos = 0; pos < n; ++pos) {
    const std::uint32_t t = order[pos];
    cum += dist.prob(t);
    const double cur = std::max(2.0 * cum - 1.0, 0.0);
    out[t] = cur - prev;
    prev = cur;
  }
  return TokenDistribution::from_probs(out);
}

TokenDistribution hard_red_reweight(const TokenDistribution& dist, const RedGreenCode& code) {
  const std::size_t n = dist.size();
  if (code.green.size() != n) throw std::invalid_argument("vocabulary mismatch");
  double green_mass = 0.0;
  for (std::size_t t = 0; t < n; ++t)
    if (code.green[t]) green_mass += dist.prob(static_cast<TokenId>(t));
  if (green_mass <= 0.0) throw std::runtime_error("all mass red");
  std::vector<double> logw(n, kNegInf);
  for (std::size_t t = 0; t < n; ++t)
    if (code.green[t]) logw[t] = dist.log_prob(static_cast<TokenId>(t));
  return TokenDistribution::from_log_weights(logw);
}

TokenDistribution soft_red_reweight(const TokenDistribution& dist, const RedGreenCode& code,
                                    double delta_logit) {
  const std::size_t n = dist.size();
  if (code.green.size() != n) throw std::invalid_argument("vocabulary mismatch");
  if (!(delta_logit >= 0.0)) throw std::invalid_argument("delta_logit must be >= 0");
  std::vector<double> logw(n);
  for (std::size_t t = 0; t < n; ++t) {
    double lp = dist.log_prob(static_cast<TokenId>(t));
    logw[t] = lp == kNegInf ? kNegInf : lp + (code.green[t] ? delta_logit : 0.0);
  }
  return TokenDistribution::from_log_weights(logw);
}

TokenDistribution gumbel_delta_reweight(const TokenDistribution& dist, const GumbelCode& code) {
  const std::size_t n = dist.size();
  if (code.noise.size() != n) throw std::invalid_argument("vocabulary mismatch");
  double best = kNegInf;
  TokenId best_token = 0;
  bool found = false;
  for (std::size_t t = 0; t < n; ++t) {
    double lp = dist.log_prob(static_cast<TokenId>(t));
    if (lp == kNegInf) continue;  // impossible tokens never win
    double v = lp + code.noise[t];
    if (!found || v > best) {
      best = v;
      best_token = static_cast<TokenId>(t);
      found = true;
    }
  }
  if (!found) throw std::logic_error("distribution has empty support");
  return TokenDistribution::point_mass(n, best_token);
}

// ============================================================================
// Code sampling
// ============================================================================

WatermarkCode sample_code(const Reweighter& rw, std::uint32_t vocab_size, std::mt19937_64& rng) {
  rw.validate();
  switch (rw.kind) {
    case ReweightKind::delta:
      return UnitRealCode{unit_real(rng)};
    case ReweightKind::gamma:
      return PermutationCode::from_shuffled(shuffled_indices(rng, vocab_size));
    case ReweightKind::hard_red:
    case ReweightKind::soft_red: {
      const auto shuffled = shuffled_indices(rng, vocab_size);
      const std::uint32_t g = rw.green_count(vocab_size);
      RedGreenCode code;
      code.green.assign(vocab_size, 0);
      for (std::uint32_t i = 0; i < g; ++i) code.green[shuffled[i]] = 1;
      return code;
    }
    case ReweightKind::gumbel_delta: {
      GumbelCode code;
      code.noise.resize(vocab_size);
      for (auto& v : code.noise) v = gumbel_real(rng);
      return code;
    }
  }
  throw std::logic_error("unknown reweight kind");
}

// ============================================================================
// Exact code means
// ============================================================================

namespace {

std::vector<double> delta_exact_mean(const TokenDistribution& dist) {
  // The map u -> R_u(P) is piecewise constant with breakpoints at the CDF
  // values; integrate by evaluating the actual reweight at each piece's
  // midpoint and weighting by the piece length.
  const auto c = cdf(dist);
  std::vector<double> mean(dist.size(), 0.0);
  double lo = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double hi = std::min(c[i], 1.0);
    if (hi > lo) {
      const double mid = 0.5 * (lo + hi);
      const auto out = delta_reweight(dist, UnitRealCode{mid});
      for (std::size_t t = 0; t < mean.size(); ++t)
        mean[t] += (hi - lo) * out.prob(static_cast<TokenId>(t));
      lo = hi;
    }
  }
  return mean;
}

std::vector<double> gamma_exact_mean(const TokenDistribution& dist) {
  const auto n = static_cast<std::uint32_t>(dist.size());
  if (n > 6) throw std::invalid_argument("exact gamma enumeration requires |Sigma| <= 6");
  std::vector<std::uint32_t> ranks(n);
  for (std::uint32_t i = 0; i < n; ++i) ranks[i] = i;
  std::vector<double> mean(n, 0.0);
  std::uint64_t count = 0;
  do {
    const auto out = gamma_reweight(dist, PermutationCode{ranks});
    for (std::size_t t = 0; t < n; ++t) mean[t] += out.prob(static_cast<TokenId>(t));
    ++count;
  } while (std::next_permutation(ranks.begin(), ranks.end()));
  for (double& v : mean) v /= static_cast<double>(count);
  return mean;
}

template <typename Fn>
void for_each_partition(std::uint32_t n, std::uint32_t g, Fn&& fn) {
  // All green masks with exactly g greens, by combination walk.
  std::vector<std::uint32_t> pick(g);
  for (std::uint32_t i = 0; i < g; ++i) pick[i] = i;
  std::vector<std::uint8_t> mask(n);
  for (;;) {
    std::fill(mask.begin(), mask.end(), 0);
    for (std::uint32_t i : pick) mask[i] = 1;
    fn(mask);
    // Advance to the next combination.
    std::uint32_t i = g;
    while (i-- > 0) {
      if (pick[i] != i + n - g) {
        ++pick[i];
        for (std::uint32_t j = i + 1; j < g; ++j) pick[j] = pick[j - 1] + 1;
        break;
      }
      if (i == 0) return;
    }
  }
}

std::vector<double> red_exact_mean(const Reweighter& rw, const TokenDistribution& dist) {
  const auto n = static_cast<std::uint32_t>(dist.size());
  if (n > 16) throw std::invalid_argument("exact red-list enumeration requires |Sigma| <= 16");
  const std::uint32_t g = rw.green_count(n);
  std::vector<double> mean(n, 0.0);
  std::uint64_t count = 0;
  for_each_partition(n, g, [&](const std::vector<std::uint8_t>& mask) {
    const auto out = rw.apply(dist, RedGreenCode{mask});
    for (std::size_t t = 0; t < n; ++t) mean[t] += out.prob(static_cast<TokenId>(t));
    ++count;
  });
  for (double& v : mean) v /= static_cast<double>(count);
  return mean;
}

}  // namespace

std::vector<double> exact_code_mean(const Reweighter& rw, const TokenDistribution& dist) {
  rw.validate();
  switch (rw.kind) {
    case ReweightKind::delta: return delta_exact_mean(dist);
    case ReweightKind::gamma: return gamma_exact_mean(dist);
    case ReweightKind::hard_red:
    case ReweightKind::soft_red: return red_exact_mean(rw, dist);
    case ReweightKind::gumbel_delta:
      throw std::invalid_argument("exact mode unsupported for gumbel (no finite enumeration)");
  }
  throw std::logic_error("unknown reweight kind");
}

UnbiasednessReport verify_unbiased(const Reweighter& rw, const TokenDistribution& dist,
                                   VerifyMode mode, std::uint64_t mc_samples,
                                   std::uint64_t seed) {
  UnbiasednessReport report;
  report.mode = mode;
  const std::size_t n = dist.size();

  if (mode == VerifyMode::exact) {
    report.mean = exact_code_mean(rw, dist);
    for (std::size_t t = 0; t < n; ++t)
      report.max_abs_error =
          std::max(report.max_abs_error, std::abs(report.mean[t] - dist.prob(static_cast<TokenId>(t))));
    report.pass = report.max_abs_error <= 1e-12;
    return report;
  }

  if (mc_samples == 0) throw std::invalid_argument("mc_samples must be positive");
  std::mt19937_64 rng(seed);
  std::vector<double> mean(n, 0.0);
  for (std::uint64_t s = 0; s < mc_samples; ++s) {
    const auto out = rw.apply(dist, sample_code(rw, static_cast<std::uint32_t>(n), rng));
    for (std::size_t t = 0; t < n; ++t) mean[t] += out.prob(static_cast<TokenId>(t));
  }
  for (double& v : mean) v /= static_cast<double>(mc_samples);
  report.samples = mc_samples;
  report.mean = mean;
  report.pass = true;
  for (std::size_t t = 0; t < n; ++t) {
    const double p = dist.prob(static_cast<TokenId>(t));
    const double diff = std::abs(mean[t] - p);
    report.max_abs_error = std::max(report.max_abs_error, diff);
    // Bernoulli variance bounds the variance of any [0,1]-valued output.
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(mc_samples));
    if (diff > 4.0 * sigma + 1e-15) report.pass = false;
  }
  return report;
}

}  // namespace uwm

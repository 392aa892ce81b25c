#include "uwmark/prob.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace uwm {

double log_sum_exp(std::span<const double> logs) {
  double m = kNegInf;
  for (double v : logs) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double v : logs) {
    if (v != kNegInf) acc += std::exp(v - m);
  }
  return m + std::log(acc);
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double log_sub(double a, double b) {
  if (b == kNegInf) return a;
  if (!(a > b)) return kNegInf;
  // a + log(1 - exp(b - a))
  return a + std::log1p(-std::exp(b - a));
}

// ============================================================================
// Vocabulary
// ============================================================================

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty()) throw std::invalid_argument("vocabulary is empty");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) throw std::invalid_argument("duplicate token in vocabulary: " + tokens_[i]);
  }
}

Vocabulary Vocabulary::numbered(std::uint32_t size) {
  std::vector<std::string> toks;
  toks.reserve(size);
  for (std::uint32_t i = 0; i < size; ++i) toks.push_back(std::to_string(i));
  return Vocabulary(std::move(toks));
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
  std::vector<std::string> toks;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    toks.push_back(line);
  }
  return Vocabulary(std::move(toks));
}

std::optional<TokenId> Vocabulary::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

// ============================================================================
// TokenDistribution
// ============================================================================

TokenDistribution TokenDistribution::from_probs(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("empty distribution");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("negative probability entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("distribution does not sum to 1");
  std::vector<double> logp(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    logp[i] = probs[i] > 0.0 ? std::log(probs[i]) : kNegInf;
  return TokenDistribution(std::move(logp));
}

TokenDistribution TokenDistribution::from_log_weights(std::span<const double> log_weights) {
  if (log_weights.empty()) throw std::invalid_argument("empty distribution");
  for (double w : log_weights) {
    if (std::isnan(w) || w == std::numeric_limits<double>::infinity())
      throw std::invalid_argument("log weight must be finite or -inf");
  }
  double lse = log_sum_exp(log_weights);
  if (lse == kNegInf) throw std::invalid_argument("degenerate weights");
  std::vector<double> logp(log_weights.size());
  for (std::size_t i = 0; i < log_weights.size(); ++i)
    logp[i] = log_weights[i] == kNegInf ? kNegInf : log_weights[i] - lse;
  return TokenDistribution(std::move(logp));
}

TokenDistribution TokenDistribution::point_mass(std::size_t size, TokenId token) {
  if (token >= size) throw std::invalid_argument("point mass token out of range");
  std::vector<double> logp(size, kNegInf);
  logp[token] = 0.0;
  return TokenDistribution(std::move(logp));
}

TokenDistribution TokenDistribution::uniform(std::size_t size) {
  if (size == 0) throw std::invalid_argument("empty distribution");
  return TokenDistribution(std::vector<double>(size, -std::log(static_cast<double>(size))));
}

double TokenDistribution::prob(TokenId t) const {
  double lp = logp_[t];
  return lp == kNegInf ? 0.0 : std::exp(lp);
}

std::vector<double> TokenDistribution::probs() const {
  std::vector<double> out(logp_.size());
  for (std::size_t i = 0; i < logp_.size(); ++i) out[i] = prob(static_cast<TokenId>(i));
  return out;
}

std::size_t TokenDistribution::support_size() const {
  std::size_t n = 0;
  for (double lp : logp_)
    if (lp != kNegInf) ++n;
  return n;
}

// ============================================================================
// SamplingPolicy
// ============================================================================

void SamplingPolicy::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (top_k && *top_k == 0) throw std::invalid_argument("top_k must be positive");
}

// ============================================================================
// Operations
// ============================================================================

TokenDistribution normalize(std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("empty distribution");
  std::vector<double> logw(weights.size());
  bool any = false;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double w = weights[i];
    if (!(w >= 0.0)) throw std::invalid_argument("negative weight");
    any = any || w > 0.0;
    logw[i] = w > 0.0 ? std::log(w) : kNegInf;
  }
  if (!any) throw std::invalid_argument("degenerate weights");
  return TokenDistribution::from_log_weights(logw);
}

TokenDistribution apply_policy(const TokenDistribution& dist, const SamplingPolicy& policy) {
  policy.validate();
  if (policy.top_k && *policy.top_k > dist.size())
    throw std::invalid_argument("top_k exceeds vocabulary size");

  std::vector<double> logw = dist.log_probs();
  if (policy.temperature != 1.0) {
    for (double& w : logw)
      if (w != kNegInf) w /= policy.temperature;
  }
  if (policy.top_k && *policy.top_k < dist.size()) {
    std::vector<TokenId> idx(dist.size());
    std::iota(idx.begin(), idx.end(), TokenId{0});
    // Descending weight, lower index wins ties at the cut.
    std::stable_sort(idx.begin(), idx.end(),
                     [&](TokenId a, TokenId b) { return logw[a] > logw[b]; });
    std::vector<double> kept(dist.size(), kNegInf);
    for (std::uint32_t i = 0; i < *policy.top_k; ++i) kept[idx[i]] = logw[idx[i]];
    logw = std::move(kept);
  }
  return TokenDistribution::from_log_weights(logw);
}

std::vector<double> cdf(const TokenDistribution& dist) {
  std::vector<double> out(dist.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    acc += dist.prob(static_cast<TokenId>(i));
    out[i] = acc;
  }
  return out;
}

double tv_distance(const TokenDistribution& p, const TokenDistribution& q) {
  if (p.size() != q.size()) throw std::invalid_argument("vocabulary mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    acc += std::abs(p.prob(static_cast<TokenId>(i)) - q.prob(static_cast<TokenId>(i)));
  return 0.5 * acc;
}

double renyi2_entropy(const TokenDistribution& dist) {
  std::vector<double> twice(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) {
    double lp = dist.log_prob(static_cast<TokenId>(i));
    twice[i] = lp == kNegInf ? kNegInf : 2.0 * lp;
  }
  return std::max(0.0, -log_sum_exp(twice));
}

}  // namespace uwm

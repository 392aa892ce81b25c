#include "uwmark/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace uwm {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

// ============================================================================
// Score vectors
// ============================================================================

std::vector<double> llr_scores(const TokenDistribution& p, const TokenDistribution& q) {
  if (p.size() != q.size()) throw std::invalid_argument("vocabulary mismatch");
  std::vector<double> s(p.size(), 0.0);
  for (std::size_t t = 0; t < p.size(); ++t) {
    const double lp = p.log_prob(static_cast<TokenId>(t));
    if (lp == kNegInf) continue;  // unobservable under the null
    const double lq = q.log_prob(static_cast<TokenId>(t));
    s[t] = lq == kNegInf ? kNegInf : lq - lp;
  }
  return s;
}

double admissibility(const TokenDistribution& p, std::span<const double> scores) {
  if (scores.size() != p.size()) throw std::invalid_argument("vocabulary mismatch");
  std::vector<double> terms;
  terms.reserve(p.size());
  for (std::size_t t = 0; t < p.size(); ++t) {
    const double lp = p.log_prob(static_cast<TokenId>(t));
    if (lp == kNegInf) continue;
    if (scores[t] == kNegInf) continue;  // exp(-inf) contributes nothing
    terms.push_back(lp + scores[t]);
  }
  const double lse = log_sum_exp(terms);
  return lse == kNegInf ? 0.0 : std::exp(lse);
}

MaximinScorer::MaximinScorer(const TokenDistribution& p, const TokenDistribution& q)
    : vocab_size_(p.size()) {
  if (p.size() != q.size()) throw std::invalid_argument("vocabulary mismatch");
  base_ = llr_scores(p, q);

  for (std::uint32_t t = 0; t < vocab_size_; ++t)
    if (p.in_support(t)) order_.push_back(t);
  std::sort(order_.begin(), order_.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (base_[a] != base_[b]) return base_[a] > base_[b];
    return a < b;
  });

  const std::size_t k = order_.size();
  ratio_.resize(k);
  pref_logq_.resize(k);
  pref_logp_.resize(k);
  suf_logq_.resize(k);
  suf_logp_.resize(k);
  double lq = kNegInf, lp = kNegInf;
  for (std::size_t i = 0; i < k; ++i) {
    ratio_[i] = base_[order_[i]];
    lq = log_add(lq, q.log_prob(order_[i]));
    lp = log_add(lp, p.log_prob(order_[i]));
    pref_logq_[i] = lq;
    pref_logp_[i] = lp;
  }
  lq = lp = kNegInf;
  for (std::size_t i = k; i-- > 0;) {
    lq = log_add(lq, q.log_prob(order_[i]));
    lp = log_add(lp, p.log_prob(order_[i]));
    suf_logq_[i] = lq;
    suf_logp_[i] = lp;
  }
}

std::vector<double> MaximinScorer::scores(double d, double d_prime) const {
  if (!(d >= 0.0 && d <= 1.0)) throw std::invalid_argument("d must be in [0,1]");
  if (!(d_prime >= 0.0 && d_prime <= 1.0)) throw std::invalid_argument("d_prime must be in [0,1]");
  if (d == 0.0 && d_prime == 0.0) return base_;

  const std::size_t k = order_.size();
  const double log_d = d > 0.0 ? std::log(d) : kNegInf;
  const double log_dp = d_prime > 0.0 ? std::log(d_prime) : kNegInf;

  // Pooled level of the top set [0..a]: log((Q - d) / (P + d')).
  const auto pool_max = [&](std::size_t a) {
    const double num = log_sub(pref_logq_[a], log_d);
    const double den = log_add(pref_logp_[a], log_dp);
    return num == kNegInf ? kNegInf : num - den;
  };
  // Pooled level of the bottom set [b..k): log((Q + d) / (P - d')).
  const auto pool_min = [&](std::size_t b) {
    const double num = log_add(suf_logq_[b], log_d);
    const double den = log_sub(suf_logp_[b], log_dp);
    if (den == kNegInf) return std::numeric_limits<double>::infinity();
    return num - den;
  };

  // Grow the top set while its pooled level stays below the next base ratio
  // (a non-positive pooled numerator counts as -inf and keeps growing).
  std::size_t a = 0;
  while (a + 1 < k && pool_max(a) < ratio_[a + 1]) ++a;
  const double level_max = pool_max(a);

  // Symmetric growth from the bottom in ascending ratio order.
  std::size_t b = k - 1;
  while (b > 0 && pool_min(b) > ratio_[b - 1]) --b;
  const double level_min = pool_min(b);

  std::vector<double> s(vocab_size_, 0.0);
  if (a >= b || !(level_max > level_min)) return s;  // trivial score

  for (std::size_t i = 0; i < k; ++i) {
    const double v = i <= a ? level_max : (i >= b ? level_min : ratio_[i]);
    s[order_[i]] = v;
  }
  return s;
}

std::vector<double> maximin_scores(const TokenDistribution& p, const TokenDistribution& q,
                                   double d, double d_prime) {
  return MaximinScorer(p, q).scores(d, d_prime);
}

double detection_threshold(double alpha, std::size_t grid_size) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
  if (grid_size < 1) throw std::invalid_argument("grid must be non-empty");
  return -std::log(alpha) + std::log(static_cast<double>(grid_size));
}

std::vector<double> default_grid() {
  std::vector<double> grid(11);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = 0.1 * static_cast<double>(i);
  return grid;
}

// ============================================================================
// Reports
// ============================================================================

std::string DetectionReport::serialize() const {
  std::ostringstream out;
  out << "uwmark.report.v1 method=" << method << " alpha=" << format_double(alpha) << "\n";
  out << "grid";
  for (double d : grid) out << " " << format_double(d);
  out << "\n";
  out << "totals";
  for (double t : totals) out << " " << format_double(t);
  out << "\n";
  out << "best_d " << format_double(best_d) << "\n";
  out << "total_score " << format_double(total_score) << "\n";
  out << "threshold " << format_double(threshold) << "\n";
  out << "detected " << (detected() ? 1 : 0) << "\n";
  out << "p_value_raw " << format_double(p_value_raw) << "\n";
  out << "p_value " << format_double(p_value) << "\n";
  out << "support_violations " << support_violations << "\n";

  std::size_t best_idx = 0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid[i] == best_d) best_idx = i;
  for (const auto& rec : tokens) {
    const double s = rec.score_per_d.empty()
                         ? 0.0
                         : rec.score_per_d[std::min(best_idx, rec.score_per_d.size() - 1)];
    out << "token " << rec.token << " cc=" << rec.cc_hex << " skipped=" << (rec.skipped ? 1 : 0)
        << " violation=" << (rec.support_violation ? 1 : 0) << " score=" << format_double(s)
        << "\n";
  }
  return out.str();
}

void DetectionReport::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report file: " + path);
  out << serialize();
}

namespace {

void finalize_report(DetectionReport& report) {
  // Best grid point: highest total, ties to the smallest d.
  std::size_t best = 0;
  for (std::size_t i = 1; i < report.totals.size(); ++i)
    if (report.totals[i] > report.totals[best]) best = i;
  report.best_d = report.grid.empty() ? 0.0 : report.grid[best];
  report.total_score = report.totals.empty() ? 0.0 : report.totals[best];
  const double a = static_cast<double>(std::max<std::size_t>(report.grid.size(), 1));
  report.threshold = detection_threshold(report.alpha, std::max<std::size_t>(report.grid.size(), 1));
  report.p_value_raw = a * std::exp(-report.total_score);
  report.p_value = std::min(1.0, report.p_value_raw);
}

}  // namespace

DetectionReport replay_and_score(std::span<const TokenId> prompt,
                                 std::span<const TokenId> tokens, const LanguageModel& lm,
                                 const WatermarkKey& key, const Reweighter& rw,
                                 std::uint32_t context_window, const SamplingPolicy& policy,
                                 std::span<const double> grid, double alpha,
                                 CodeHistory history, double d_prime,
                                 const StepObserver& observer) {
  rw.validate();
  policy.validate();
  if (grid.empty()) throw std::invalid_argument("grid must be non-empty");
  for (double d : grid)
    if (!(d >= 0.0 && d <= 1.0)) throw std::invalid_argument("grid values must be in [0,1]");
  for (TokenId t : prompt)
    if (t >= lm.vocab_size()) throw std::invalid_argument("prompt token outside vocabulary");

  DetectionReport report;
  report.method = "maximin";
  report.alpha = alpha;
  report.grid.assign(grid.begin(), grid.end());
  report.totals.assign(grid.size(), 0.0);
  report.tokens.reserve(tokens.size());

  std::vector<TokenId> ctx(prompt.begin(), prompt.end());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const TokenId x = tokens[i];
    if (x >= lm.vocab_size()) throw std::invalid_argument("token outside vocabulary");

    TokenScoreRecord rec;
    rec.token = x;
    const ContextCode code = context_code(ctx, context_window);
    rec.cc_hex = code.hex();
    rec.score_per_d.assign(grid.size(), 0.0);

    if (history.contains(code)) {
      rec.skipped = true;  // repeated context codes carry no evidence
    } else {
      history.insert(code);
      const TokenDistribution p = apply_policy(lm.next_distribution(ctx), policy);
      if (!p.in_support(x)) {
        rec.support_violation = true;
        ++report.support_violations;
      } else {
        const TokenDistribution q = rw.apply(p, derive_code(code, key, rw, lm.vocab_size()));
        const MaximinScorer scorer(p, q);
        for (std::size_t g = 0; g < grid.size(); ++g) {
          const auto s = scorer.scores(grid[g], d_prime);
          rec.score_per_d[g] = s[x];
          if (observer) observer(i, p, q, grid[g], s);
        }
      }
    }
    for (std::size_t g = 0; g < grid.size(); ++g) report.totals[g] += rec.score_per_d[g];
    report.tokens.push_back(std::move(rec));
    ctx.push_back(x);
  }
  finalize_report(report);
  return report;
}

DetectionReport gumbel_scores(std::span<const TokenId> prompt, std::span<const TokenId> tokens,
                              const WatermarkKey& key, std::uint32_t context_window,
                              std::uint32_t vocab_size, double alpha, CodeHistory history) {
  DetectionReport report;
  report.method = "gumbel";
  report.alpha = alpha;
  report.totals.assign(1, 0.0);
  report.tokens.reserve(tokens.size());

  const Reweighter rw{ReweightKind::gumbel_delta, 0.0, 0.5};
  const double ln2 = std::log(2.0);

  std::vector<TokenId> ctx(prompt.begin(), prompt.end());
  for (TokenId x : tokens) {
    if (x >= vocab_size) throw std::invalid_argument("token outside vocabulary");
    TokenScoreRecord rec;
    rec.token = x;
    const ContextCode code = context_code(ctx, context_window);
    rec.cc_hex = code.hex();
    rec.score_per_d.assign(1, 0.0);
    if (history.contains(code)) {
      rec.skipped = true;
    } else {
      history.insert(code);
      const auto noise = std::get<GumbelCode>(derive_code(code, key, rw, vocab_size)).noise;
      rec.score_per_d[0] = ln2 - std::exp(-noise[x]);
    }
    report.totals[0] += rec.score_per_d[0];
    report.tokens.push_back(std::move(rec));
    ctx.push_back(x);
  }
  finalize_report(report);
  return report;
}

double green_z_score(std::span<const TokenId> prompt, std::span<const TokenId> tokens,
                     const WatermarkKey& key, std::uint32_t context_window,
                     std::uint32_t vocab_size, double gamma_frac) {
  if (tokens.empty()) throw std::invalid_argument("need at least one scored token");
  Reweighter rw{ReweightKind::hard_red, 0.0, gamma_frac};
  rw.validate();

  std::size_t greens = 0;
  std::vector<TokenId> ctx(prompt.begin(), prompt.end());
  for (TokenId x : tokens) {
    if (x >= vocab_size) throw std::invalid_argument("token outside vocabulary");
    const ContextCode code = context_code(ctx, context_window);
    const auto mask = std::get<RedGreenCode>(derive_code(code, key, rw, vocab_size)).green;
    if (mask[x]) ++greens;
    ctx.push_back(x);
  }
  const double n = static_cast<double>(tokens.size());
  const double g = static_cast<double>(greens);
  return (g - gamma_frac * n) / std::sqrt(n * gamma_frac * (1.0 - gamma_frac));
}

}  // namespace uwm

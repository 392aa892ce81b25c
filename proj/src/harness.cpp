#include "uwmark/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "uwmark/parallel.hpp"
#include "uwmark/rand_util.hpp"

namespace uwm {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<TokenId> random_prompt(std::mt19937_64& rng, std::uint32_t length,
                                   std::uint32_t vocab_size) {
  std::vector<TokenId> prompt(length);
  for (auto& t : prompt) t = static_cast<TokenId>(below(rng, vocab_size));
  return prompt;
}

}  // namespace

// ============================================================================
// Attack and AUC
// ============================================================================

std::vector<std::size_t> attack_positions(std::size_t n, double epsilon, std::mt19937_64& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in [0,1]");
  const auto count = static_cast<std::size_t>(std::floor(epsilon * static_cast<double>(n)));
  // Partial Fisher-Yates over the index range: first `count` slots are a
  // uniform sample without replacement.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(below(rng, static_cast<std::uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

std::vector<TokenId> attack_substitute(std::span<const TokenId> tokens, double epsilon,
                                       std::uint32_t vocab_size, std::mt19937_64& rng) {
  if (vocab_size == 0) throw std::invalid_argument("empty vocabulary");
  std::vector<TokenId> out(tokens.begin(), tokens.end());
  for (std::size_t pos : attack_positions(out.size(), epsilon, rng))
    out[pos] = static_cast<TokenId>(below(rng, vocab_size));
  return out;
}

double auc(std::span<const double> watermarked, std::span<const double> null_scores) {
  if (watermarked.empty() || null_scores.empty())
    throw std::invalid_argument("auc requires non-empty score lists");
  // Rank-based Mann-Whitney with average ranks on ties; equivalent to pair
  // counting with the half-credit tie convention.
  struct Entry {
    double value;
    bool is_watermarked;
  };
  std::vector<Entry> all;
  all.reserve(watermarked.size() + null_scores.size());
  for (double v : watermarked) all.push_back({v, true});
  for (double v : null_scores) all.push_back({v, false});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.value < b.value; });

  double rank_sum_w = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].value == all[i].value) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k)
      if (all[k].is_watermarked) rank_sum_w += avg_rank;
    i = j;
  }
  const double w = static_cast<double>(watermarked.size());
  const double n = static_cast<double>(null_scores.size());
  const double u = rank_sum_w - w * (w + 1.0) / 2.0;
  return u / (w * n);
}

double auc_bootstrap_stderr(std::span<const double> watermarked,
                            std::span<const double> null_scores, std::size_t resamples,
                            std::uint64_t seed) {
  if (watermarked.size() != null_scores.size())
    throw std::invalid_argument("bootstrap expects paired score lists");
  if (resamples < 2) throw std::invalid_argument("need at least 2 bootstrap resamples");
  const std::size_t n = watermarked.size();
  std::mt19937_64 rng(seed);
  std::vector<double> w(n), nl(n), values(resamples);
  for (std::size_t r = 0; r < resamples; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto pick = static_cast<std::size_t>(below(rng, n));
      w[i] = watermarked[pick];
      nl[i] = null_scores[pick];
    }
    values[r] = auc(w, nl);
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(resamples);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(resamples - 1);
  return std::sqrt(var);
}

// ============================================================================
// Robustness sweep
// ============================================================================

std::vector<RobustnessRow> run_robustness(const RobustnessConfig& config) {
  config.reweighter.validate();
  config.policy.validate();
  if (config.n_prompts == 0 || config.gen_length == 0)
    throw std::invalid_argument("trial counts must be >= 1");
  const auto lm = load_model(config.model_spec);
  const std::uint32_t vocab = lm->vocab_size();
  const bool red_baseline = config.reweighter.kind == ReweightKind::hard_red ||
                            config.reweighter.kind == ReweightKind::soft_red;

  std::vector<RobustnessRow> rows;
  for (std::size_t e = 0; e < config.epsilons.size(); ++e) {
    const double eps = config.epsilons[e];
    std::vector<double> w_scores(config.n_prompts), n_scores(config.n_prompts);
    par::for_each_index(
        config.n_prompts,
        [&](std::size_t i) {
          const std::uint64_t trial = e * config.n_prompts + i;
          std::mt19937_64 rng(derive_seed(config.seed, 0xA11ACE, trial));
          const auto prompt = random_prompt(rng, config.prompt_length, vocab);

          CodeHistory history;
          const auto wm = generate(*lm, config.key, prompt, config.gen_length, config.reweighter,
                                   config.context_window, config.policy, history,
                                   derive_seed(config.seed, 0x9E4, trial));
          const auto attacked = attack_substitute(wm.tokens, eps, vocab, rng);
          const auto plain = generate_plain(*lm, prompt, config.gen_length, config.policy,
                                            derive_seed(config.seed, 0x9E5, trial));

          if (red_baseline) {
            w_scores[i] = green_z_score(prompt, attacked, config.key, config.context_window, vocab,
                                        config.reweighter.gamma_frac);
            n_scores[i] = green_z_score(prompt, plain.tokens, config.key, config.context_window,
                                        vocab, config.reweighter.gamma_frac);
          } else {
            w_scores[i] = replay_and_score(prompt, attacked, *lm, config.key, config.reweighter,
                                           config.context_window, config.policy, config.grid,
                                           config.alpha)
                              .total_score;
            n_scores[i] = replay_and_score(prompt, plain.tokens, *lm, config.key,
                                           config.reweighter, config.context_window, config.policy,
                                           config.grid, config.alpha)
                              .total_score;
          }
        },
        config.threads);

    RobustnessRow row;
    row.epsilon = eps;
    row.auc_value = auc(w_scores, n_scores);
    row.stderr_value = auc_bootstrap_stderr(w_scores, n_scores, config.bootstrap_resamples,
                                            derive_seed(config.seed, 0xB007, e));
    rows.push_back(row);
  }
  return rows;
}

std::string robustness_csv(std::span<const RobustnessRow> rows) {
  std::ostringstream out;
  out << "# null population: plain generations scored with the true key; attack applied to "
         "watermarked generations only\n";
  out << "epsilon,auc,stderr\n";
  for (const auto& row : rows)
    out << format_double(row.epsilon) << "," << format_double(row.auc_value) << ","
        << format_double(row.stderr_value) << "\n";
  return out.str();
}

// ============================================================================
// Exact undetectability
// ============================================================================

namespace {

void undetectability_walk(const TableModel& model, const Reweighter& rw, std::uint32_t depth,
                          std::vector<TokenId>& prefix, double marg, double plain,
                          UndetectabilityReport& report) {
  const TokenDistribution p = model.next_distribution(prefix);
  const auto mean = exact_code_mean(rw, p);
  for (TokenId t = 0; t < model.vocab_size(); ++t) {
    const double next_marg = marg * mean[t];
    const double next_plain = plain * p.prob(t);
    report.max_abs_error = std::max(report.max_abs_error, std::abs(next_marg - next_plain));
    ++report.strings_checked;
    if (prefix.size() + 1 < depth) {
      prefix.push_back(t);
      undetectability_walk(model, rw, depth, prefix, next_marg, next_plain, report);
      prefix.pop_back();
    }
  }
}

}  // namespace

UndetectabilityReport run_undetectability(const TableModel& model, const Reweighter& rw,
                                          std::uint32_t depth) {
  rw.validate();
  if (model.vocab_size() > 3 || depth > 3)
    throw std::invalid_argument("model too large for exact enumeration");
  if (depth == 0) throw std::invalid_argument("depth must be >= 1");

  UndetectabilityReport report;
  std::vector<TokenId> prefix;
  undetectability_walk(model, rw, depth, prefix, 1.0, 1.0, report);
  return report;
}

// ============================================================================
// Sensitivity study
// ============================================================================

double binomial_tail_ge(std::size_t n, std::size_t k) {
  if (k == 0) return 1.0;
  if (k > n) return 0.0;
  // log C(n, j) - n log 2, summed over j >= k.
  const double log_half_n = static_cast<double>(n) * std::log(2.0);
  std::vector<double> terms;
  terms.reserve(n - k + 1);
  for (std::size_t j = k; j <= n; ++j) {
    const double log_choose = std::lgamma(static_cast<double>(n) + 1.0) -
                              std::lgamma(static_cast<double>(j) + 1.0) -
                              std::lgamma(static_cast<double>(n - j) + 1.0);
    terms.push_back(log_choose - log_half_n);
  }
  return std::min(1.0, std::exp(log_sum_exp(terms)));
}

SensitivityResult run_sensitivity(const SensitivityConfig& config) {
  config.generation_policy.validate();
  if (config.trials == 0 || config.gen_length == 0)
    throw std::invalid_argument("trial counts must be >= 1");
  const auto lm = load_model(config.model_spec);
  const std::uint32_t vocab = lm->vocab_size();

  // Detection settings: the temperature row varies T at the generation top_k;
  // the top-k row varies truncation at the generation temperature.
  struct Setting {
    std::string group;
    std::string label;
    SamplingPolicy policy;
    bool matched;
  };
  std::vector<Setting> settings;
  for (double t : config.detect_temperatures) {
    SamplingPolicy pol{t, config.generation_policy.top_k};
    settings.push_back({"temperature", format_double(t), pol,
                        t == config.generation_policy.temperature});
  }
  for (std::uint32_t k : config.detect_top_ks) {
    SamplingPolicy pol{config.generation_policy.temperature,
                       k == 0 ? std::nullopt : std::optional<std::uint32_t>(k)};
    settings.push_back({"top_k", k == 0 ? "none" : std::to_string(k), pol,
                        pol.top_k == config.generation_policy.top_k});
  }
  for (const auto& s : settings) {
    s.policy.validate();
    if (s.policy.top_k && *s.policy.top_k > vocab)
      throw std::invalid_argument("detection top_k exceeds vocabulary size");
  }

  const std::vector<ReweightKind> kinds = {ReweightKind::delta, ReweightKind::gamma};
  const std::size_t n_settings = settings.size();

  // totals[kind][setting][trial] = detection total score.
  std::vector<std::vector<std::vector<double>>> totals(
      kinds.size(), std::vector<std::vector<double>>(n_settings,
                                                     std::vector<double>(config.trials, 0.0)));

  par::for_each_index(
      config.trials,
      [&](std::size_t trial) {
        std::mt19937_64 rng(derive_seed(config.seed, 0x5E45, trial));
        const auto prompt = random_prompt(rng, config.prompt_length, vocab);
        for (std::size_t kind_idx = 0; kind_idx < kinds.size(); ++kind_idx) {
          Reweighter rw;
          rw.kind = kinds[kind_idx];
          CodeHistory history;
          const auto wm = generate(*lm, config.key, prompt, config.gen_length, rw,
                                   config.context_window, config.generation_policy, history,
                                   derive_seed(config.seed, 0x6E0 + kind_idx, trial));
          for (std::size_t s = 0; s < n_settings; ++s) {
            totals[kind_idx][s][trial] =
                replay_and_score(prompt, wm.tokens, *lm, config.key, rw, config.context_window,
                                 settings[s].policy, config.grid, config.alpha)
                    .total_score;
          }
        }
      },
      config.threads);

  SensitivityResult result;
  const double len = static_cast<double>(config.gen_length);
  for (std::size_t kind_idx = 0; kind_idx < kinds.size(); ++kind_idx) {
    for (std::size_t s = 0; s < n_settings; ++s) {
      double mean = 0.0;
      for (double v : totals[kind_idx][s]) mean += v / len;
      mean /= static_cast<double>(config.trials);
      double var = 0.0;
      for (double v : totals[kind_idx][s]) {
        const double x = v / len - mean;
        var += x * x;
      }
      var /= static_cast<double>(std::max<std::size_t>(config.trials - 1, 1));
      result.rows.push_back({kinds[kind_idx], settings[s].group, settings[s].label,
                             settings[s].matched, mean, std::sqrt(var)});
    }
  }

  // Sign test on relative degradation: per trial, the drop from matched to
  // the mismatched-average, as a fraction of the matched score.
  std::vector<std::size_t> mismatched_idx;
  std::size_t matched_idx = 0;
  for (std::size_t s = 0; s < n_settings; ++s) {
    if (settings[s].matched) matched_idx = s;  // both matched rows share the policy
    else mismatched_idx.push_back(s);
  }
  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    double deg[2];
    for (std::size_t kind_idx = 0; kind_idx < kinds.size(); ++kind_idx) {
      const double matched = totals[kind_idx][matched_idx][trial];
      double mism = 0.0;
      for (std::size_t s : mismatched_idx) mism += totals[kind_idx][s][trial];
      mism /= static_cast<double>(mismatched_idx.size());
      deg[kind_idx] = (matched - mism) / std::max(std::abs(matched), 1e-9);
    }
    ++result.sign_trials;
    if (deg[1] < deg[0]) ++result.sign_successes;  // gamma degrades less than delta
  }
  result.sign_p_value = binomial_tail_ge(result.sign_trials, result.sign_successes);
  return result;
}

std::string sensitivity_csv(const SensitivityResult& result) {
  std::ostringstream out;
  out << "reweight,setting,value,matched,mean_score_per_token,sd_score_per_token\n";
  for (const auto& row : result.rows)
    out << to_string(row.reweight) << "," << row.setting << "," << row.value << ","
        << (row.matched ? 1 : 0) << "," << format_double(row.mean_score_per_token) << ","
        << format_double(row.sd_score_per_token) << "\n";
  out << "# sign test (gamma degrades less than delta): " << result.sign_successes << "/"
      << result.sign_trials << " trials, p=" << format_double(result.sign_p_value) << "\n";
  return out.str();
}

}  // namespace uwm

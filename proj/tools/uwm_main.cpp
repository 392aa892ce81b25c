// uwm: command-line surface for unbiased watermarking of token generators.
//
// Subcommands: keygen, generate, detect, detect-gumbel, verify-unbiased,
// undetectability, attack, auc, robustness, sensitivity. Exit code 0 on
// success, 2 on any validation error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>

#include "uwmark/harness.hpp"
#include "uwmark/rand_util.hpp"

using namespace uwm;

namespace {

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const auto item = text.substr(pos, comma - pos);
    if (!item.empty()) out.push_back(std::stod(item));
    pos = comma + 1;
  }
  if (out.empty()) throw std::invalid_argument("empty list: " + text);
  return out;
}

std::vector<TokenId> parse_id_list(const std::string& text) {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find_first_of(", ", pos);
    if (comma == std::string::npos) comma = text.size();
    const auto item = text.substr(pos, comma - pos);
    if (!item.empty()) {
      const long long id = std::stoll(item);
      if (id < 0 || id > 0xFFFFFFFFll) throw std::invalid_argument("token id out of range");
      out.push_back(static_cast<TokenId>(id));
    }
    pos = comma + 1;
  }
  return out;
}

void write_output(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write output file: " + out_path);
  out << content;
}

std::vector<double> load_score_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open score file: " + path);
  std::vector<double> scores;
  double v;
  while (in >> v) scores.push_back(v);
  if (scores.empty()) throw std::runtime_error("empty score file: " + path);
  return scores;
}

WatermarkKey key_from_seed(std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0x4B3Cull, 0));
  WatermarkKey key;
  for (auto& b : key.bytes) b = static_cast<std::uint8_t>(rng());
  return key;
}

SamplingPolicy make_policy(double temperature, long long top_k) {
  SamplingPolicy policy;
  policy.temperature = temperature;
  if (top_k > 0) policy.top_k = static_cast<std::uint32_t>(top_k);
  return policy;
}

Reweighter make_reweighter(const std::string& kind, double delta_logit, double gamma_frac) {
  Reweighter rw;
  rw.kind = reweight_kind_from_string(kind);
  rw.delta_logit = delta_logit;
  rw.gamma_frac = gamma_frac;
  rw.validate();
  return rw;
}

/// Context codes of this transcript's fresh steps, in step order, relative to
/// the pre-generation history.
std::vector<ContextCode> fresh_codes(const Transcript& t, CodeHistory pre) {
  std::vector<ContextCode> fresh;
  std::vector<TokenId> ctx(t.prompt.begin(), t.prompt.end());
  for (TokenId x : t.tokens) {
    const auto code = context_code(ctx, t.context_window);
    if (pre.insert(code)) fresh.push_back(code);
    ctx.push_back(x);
  }
  return fresh;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uwm: distribution-preserving watermarking for token generators"};
  app.require_subcommand(1);

  // ------------------------------------------------------------------ keygen
  auto* keygen = app.add_subcommand("keygen", "Generate a 1024-bit watermark key");
  std::string keygen_out;
  keygen->add_option("--out", keygen_out, "Key file path")->required();
  keygen->callback([&] {
    const auto key = WatermarkKey::random();
    key.save(keygen_out);
    std::cout << "key written to " << keygen_out << " fingerprint " << key.fingerprint() << "\n";
  });

  // ---------------------------------------------------------------- generate
  auto* gen = app.add_subcommand("generate", "Generate watermarked (or plain) tokens");
  std::string gen_key, gen_model, gen_reweight = "delta", gen_prompt, gen_out;
  std::string gen_history_mode = "persist", gen_history_file;
  double gen_delta_logit = 1.0, gen_gamma_frac = 0.5, gen_temperature = 1.0;
  long long gen_top_k = 0;
  std::uint32_t gen_window = 5, gen_length = 32;
  std::uint64_t gen_seed = 0;
  bool gen_plain = false;
  gen->add_option("--key", gen_key, "Key file")->required();
  gen->add_option("--model", gen_model, "Model spec (uniform:N | table:PATH | ngram:...)")
      ->required();
  gen->add_option("--reweight", gen_reweight, "delta|gamma|soft|hard|gumbel");
  gen->add_option("--delta-logit", gen_delta_logit, "Soft red-list logit boost");
  gen->add_option("--gamma-frac", gen_gamma_frac, "Red-list green fraction");
  gen->add_option("--context-window", gen_window, "Context code window m");
  gen->add_option("--temperature", gen_temperature, "Sampling temperature");
  gen->add_option("--top-k", gen_top_k, "Top-k truncation (0 = none)");
  gen->add_option("--prompt", gen_prompt, "Prompt token ids, comma separated");
  gen->add_option("--length", gen_length, "Tokens to generate");
  gen->add_option("--seed", gen_seed, "Sampler seed");
  gen->add_option("--history", gen_history_mode, "persist|reset-per-run")
      ->check(CLI::IsMember({"persist", "reset-per-run"}));
  gen->add_option("--history-file", gen_history_file, "History file (default KEY.history)");
  gen->add_flag("--plain", gen_plain, "Skip watermarking (null-hypothesis sampler)");
  gen->add_option("--out", gen_out, "Transcript file (default stdout)");
  gen->callback([&] {
    const auto model = load_model(gen_model);
    const auto prompt = parse_id_list(gen_prompt);
    const auto policy = make_policy(gen_temperature, gen_top_k);

    Transcript t;
    if (gen_plain) {
      t = generate_plain(*model, prompt, gen_length, policy, gen_seed);
    } else {
      const auto key = WatermarkKey::load(gen_key);
      const auto rw = make_reweighter(gen_reweight, gen_delta_logit, gen_gamma_frac);
      const std::string hist_file =
          gen_history_file.empty() ? gen_key + ".history" : gen_history_file;
      CodeHistory history;
      if (gen_history_mode == "persist" && std::filesystem::exists(hist_file))
        history = CodeHistory::load(hist_file);
      const CodeHistory pre = history;
      t = generate(*model, key, prompt, gen_length, rw, gen_window, policy, history, gen_seed);
      t.history_mode = gen_history_mode;
      if (gen_history_mode == "persist")
        CodeHistory::append_to_file(hist_file, fresh_codes(t, pre));
    }
    t.model_spec = gen_model;
    write_output(gen_out, t.serialize());
  });

  // ------------------------------------------------------------------ detect
  auto* det = app.add_subcommand("detect", "Replay a transcript and score it");
  std::string det_key, det_in, det_model, det_reweight, det_grid, det_history_file, det_out;
  std::optional<double> det_temperature;
  std::optional<long long> det_top_k;
  std::optional<std::uint32_t> det_window;
  double det_alpha = 0.05, det_d_prime = 0.0;
  det->add_option("--key", det_key, "Key file")->required();
  det->add_option("--in", det_in, "Transcript file")->required();
  det->add_option("--model", det_model, "Override the transcript's model spec");
  det->add_option("--reweight", det_reweight, "Override the transcript's reweight kind");
  det->add_option("--context-window", det_window, "Override the context window");
  det->add_option("--temperature", det_temperature, "Detection-side temperature");
  det->add_option("--top-k", det_top_k, "Detection-side top-k (0 = none)");
  det->add_option("--grid", det_grid, "Perturbation grid, comma separated");
  det->add_option("--alpha", det_alpha, "Type-I error level");
  det->add_option("--d-prime", det_d_prime, "P-side perturbation strength");
  det->add_option("--history", det_history_file, "Initial history file (default empty)");
  det->add_option("--out", det_out, "Report file (default stdout)");
  det->callback([&] {
    const auto key = WatermarkKey::load(det_key);
    const auto t = Transcript::load(det_in);
    const std::string model_spec = det_model.empty() ? t.model_spec : det_model;
    if (model_spec.empty())
      throw std::invalid_argument("transcript has no model spec; pass --model");
    const auto model = load_model(model_spec);

    Reweighter rw = det_reweight.empty()
                        ? t.reweighter()
                        : make_reweighter(det_reweight, t.delta_logit, t.gamma_frac);
    SamplingPolicy policy = t.policy;
    if (det_temperature) policy.temperature = *det_temperature;
    if (det_top_k) policy.top_k = *det_top_k > 0
                                      ? std::optional<std::uint32_t>(
                                            static_cast<std::uint32_t>(*det_top_k))
                                      : std::nullopt;
    const auto grid = det_grid.empty() ? default_grid() : parse_double_list(det_grid);
    CodeHistory history;
    if (!det_history_file.empty()) history = CodeHistory::load(det_history_file);

    const auto report =
        replay_and_score(t.prompt, t.tokens, *model, key, rw,
                         det_window ? *det_window : t.context_window, policy, grid, det_alpha,
                         std::move(history), det_d_prime);
    write_output(det_out, report.serialize());
  });

  // ----------------------------------------------------------- detect-gumbel
  auto* detg = app.add_subcommand("detect-gumbel", "Likelihood-free Gumbel detection");
  std::string detg_key, detg_in, detg_history_file, detg_out;
  std::optional<std::uint32_t> detg_window;
  std::optional<std::uint32_t> detg_vocab;
  double detg_alpha = 0.05;
  detg->add_option("--key", detg_key, "Key file")->required();
  detg->add_option("--in", detg_in, "Transcript file")->required();
  detg->add_option("--context-window", detg_window, "Override the context window");
  detg->add_option("--vocab-size", detg_vocab, "Vocabulary size (default from model spec)");
  detg->add_option("--alpha", detg_alpha, "Type-I error level");
  detg->add_option("--history", detg_history_file, "Initial history file (default empty)");
  detg->add_option("--out", detg_out, "Report file (default stdout)");
  detg->callback([&] {
    const auto key = WatermarkKey::load(detg_key);
    const auto t = Transcript::load(detg_in);
    std::uint32_t vocab_size;
    if (detg_vocab) {
      vocab_size = *detg_vocab;
    } else {
      if (t.model_spec.empty())
        throw std::invalid_argument("transcript has no model spec; pass --vocab-size");
      vocab_size = load_model(t.model_spec)->vocab_size();
    }
    CodeHistory history;
    if (!detg_history_file.empty()) history = CodeHistory::load(detg_history_file);
    const auto report =
        gumbel_scores(t.prompt, t.tokens, key, detg_window ? *detg_window : t.context_window,
                      vocab_size, detg_alpha, std::move(history));
    write_output(detg_out, report.serialize());
  });

  // --------------------------------------------------------- verify-unbiased
  auto* ver = app.add_subcommand("verify-unbiased", "Measure a reweighting function's bias");
  std::string ver_reweight, ver_dist, ver_mode = "exact";
  double ver_delta_logit = 1.0, ver_gamma_frac = 0.5;
  std::uint64_t ver_samples = 200000, ver_seed = 0;
  ver->add_option("--reweight", ver_reweight, "delta|gamma|soft|hard|gumbel")->required();
  ver->add_option("--dist", ver_dist, "Probabilities, comma separated")->required();
  ver->add_option("--mode", ver_mode, "exact|mc")->check(CLI::IsMember({"exact", "mc"}));
  ver->add_option("--samples", ver_samples, "Monte Carlo sample count");
  ver->add_option("--seed", ver_seed, "Monte Carlo seed");
  ver->add_option("--delta-logit", ver_delta_logit, "Soft red-list logit boost");
  ver->add_option("--gamma-frac", ver_gamma_frac, "Red-list green fraction");
  ver->callback([&] {
    const auto rw = make_reweighter(ver_reweight, ver_delta_logit, ver_gamma_frac);
    const auto dist = TokenDistribution::from_probs(parse_double_list(ver_dist));
    const auto report = verify_unbiased(
        rw, dist, ver_mode == "exact" ? VerifyMode::exact : VerifyMode::monte_carlo, ver_samples,
        ver_seed);
    std::printf("reweight=%s mode=%s max_abs_error=%.17g pass=%d\n", ver_reweight.c_str(),
                ver_mode.c_str(), report.max_abs_error, report.pass ? 1 : 0);
  });

  // --------------------------------------------------------- undetectability
  auto* und = app.add_subcommand("undetectability",
                                 "Exact distribution-preservation check on a table model");
  std::string und_model, und_reweight = "delta";
  double und_delta_logit = 1.0, und_gamma_frac = 0.5;
  std::uint32_t und_depth = 3;
  und->add_option("--model", und_model, "table:PATH model spec")->required();
  und->add_option("--reweight", und_reweight, "delta|gamma|soft|hard");
  und->add_option("--depth", und_depth, "String length to enumerate (<= 3)");
  und->add_option("--delta-logit", und_delta_logit, "Soft red-list logit boost");
  und->add_option("--gamma-frac", und_gamma_frac, "Red-list green fraction");
  und->callback([&] {
    if (und_model.rfind("table:", 0) != 0)
      throw std::invalid_argument("undetectability requires a table: model");
    const auto model = TableModel::load(und_model.substr(6));
    const auto rw = make_reweighter(und_reweight, und_delta_logit, und_gamma_frac);
    const auto report = run_undetectability(model, rw, und_depth);
    std::printf("reweight=%s strings=%zu max_abs_error=%.17g unbiased=%d\n", und_reweight.c_str(),
                report.strings_checked, report.max_abs_error, report.unbiased() ? 1 : 0);
  });

  // ------------------------------------------------------------------ attack
  auto* att = app.add_subcommand("attack", "Random token substitution attack");
  std::string att_in, att_out;
  double att_epsilon = 0.0;
  std::optional<std::uint32_t> att_vocab;
  std::uint64_t att_seed = 0;
  att->add_option("--in", att_in, "Transcript file")->required();
  att->add_option("--epsilon", att_epsilon, "Fraction of tokens to replace")->required();
  att->add_option("--vocab-size", att_vocab, "Vocabulary size (default from model spec)");
  att->add_option("--seed", att_seed, "Attack seed");
  att->add_option("--out", att_out, "Attacked transcript (default stdout)");
  att->callback([&] {
    auto t = Transcript::load(att_in);
    std::uint32_t vocab_size;
    if (att_vocab) {
      vocab_size = *att_vocab;
    } else {
      if (t.model_spec.empty())
        throw std::invalid_argument("transcript has no model spec; pass --vocab-size");
      vocab_size = load_model(t.model_spec)->vocab_size();
    }
    std::mt19937_64 rng(att_seed);
    t.tokens = attack_substitute(t.tokens, att_epsilon, vocab_size, rng);
    t.attacked_epsilon = att_epsilon;
    std::fill(t.skipped.begin(), t.skipped.end(), 0);  // generation flags are stale now
    write_output(att_out, t.serialize());
  });

  // --------------------------------------------------------------------- auc
  auto* aucc = app.add_subcommand("auc", "Mann-Whitney AUC between two score files");
  std::string auc_w, auc_n;
  aucc->add_option("--watermarked", auc_w, "Scores of watermarked texts, one per line")
      ->required();
  aucc->add_option("--null", auc_n, "Scores of unwatermarked texts, one per line")->required();
  aucc->callback([&] {
    const double value = auc(load_score_file(auc_w), load_score_file(auc_n));
    std::printf("auc=%.17g\n", value);
  });

  // -------------------------------------------------------------- robustness
  auto* rob = app.add_subcommand("robustness", "AUC vs substitution-attack strength");
  RobustnessConfig rob_config;
  std::string rob_key, rob_reweight = "delta", rob_epsilons, rob_grid, rob_out;
  double rob_delta_logit = 1.0, rob_gamma_frac = 0.5, rob_temperature = 1.0;
  long long rob_top_k = 0;
  rob->add_option("--key", rob_key, "Key file (default: derived from seed)");
  rob->add_option("--model", rob_config.model_spec, "Model spec");
  rob->add_option("--reweight", rob_reweight, "delta|gamma|soft|hard|gumbel");
  rob->add_option("--delta-logit", rob_delta_logit, "Soft red-list logit boost");
  rob->add_option("--gamma-frac", rob_gamma_frac, "Red-list green fraction");
  rob->add_option("--epsilons", rob_epsilons, "Attack strengths, comma separated");
  rob->add_option("--prompts", rob_config.n_prompts, "Prompts per attack strength");
  rob->add_option("--length", rob_config.gen_length, "Tokens per continuation");
  rob->add_option("--prompt-length", rob_config.prompt_length, "Random prompt length");
  rob->add_option("--context-window", rob_config.context_window, "Context code window");
  rob->add_option("--temperature", rob_temperature, "Sampling temperature");
  rob->add_option("--top-k", rob_top_k, "Top-k truncation (0 = none)");
  rob->add_option("--grid", rob_grid, "Perturbation grid, comma separated");
  rob->add_option("--alpha", rob_config.alpha, "Type-I error level");
  rob->add_option("--bootstrap", rob_config.bootstrap_resamples, "Bootstrap resamples");
  rob->add_option("--seed", rob_config.seed, "Master seed");
  rob->add_option("--threads", rob_config.threads, "Worker threads (0 = all, 1 = serial)");
  rob->add_option("--out", rob_out, "CSV file (default stdout)");
  rob->callback([&] {
    rob_config.reweighter = make_reweighter(rob_reweight, rob_delta_logit, rob_gamma_frac);
    rob_config.key = rob_key.empty() ? key_from_seed(rob_config.seed)
                                     : WatermarkKey::load(rob_key);
    rob_config.policy = make_policy(rob_temperature, rob_top_k);
    if (!rob_epsilons.empty()) rob_config.epsilons = parse_double_list(rob_epsilons);
    if (!rob_grid.empty()) rob_config.grid = parse_double_list(rob_grid);
    const auto rows = run_robustness(rob_config);
    write_output(rob_out, robustness_csv(rows));
  });

  // ------------------------------------------------------------- sensitivity
  auto* sen = app.add_subcommand("sensitivity",
                                 "Score degradation under mismatched detection parameters");
  SensitivityConfig sen_config;
  std::string sen_key, sen_temps, sen_topks, sen_grid, sen_out;
  double sen_gen_temperature = 1.0;
  long long sen_gen_top_k = 50;
  sen->add_option("--model", sen_config.model_spec, "Model spec")->required();
  sen->add_option("--key", sen_key, "Key file (default: derived from seed)");
  sen->add_option("--trials", sen_config.trials, "Generation trials");
  sen->add_option("--length", sen_config.gen_length, "Tokens per trial");
  sen->add_option("--prompt-length", sen_config.prompt_length, "Random prompt length");
  sen->add_option("--context-window", sen_config.context_window, "Context code window");
  sen->add_option("--gen-temperature", sen_gen_temperature, "Generation temperature");
  sen->add_option("--gen-top-k", sen_gen_top_k, "Generation top-k (0 = none)");
  sen->add_option("--temperatures", sen_temps, "Detection temperatures, comma separated");
  sen->add_option("--top-ks", sen_topks, "Detection top-ks, comma separated (0 = none)");
  sen->add_option("--grid", sen_grid, "Perturbation grid, comma separated");
  sen->add_option("--alpha", sen_config.alpha, "Type-I error level");
  sen->add_option("--seed", sen_config.seed, "Master seed");
  sen->add_option("--threads", sen_config.threads, "Worker threads (0 = all, 1 = serial)");
  sen->add_option("--out", sen_out, "CSV file (default stdout)");
  sen->callback([&] {
    sen_config.key = sen_key.empty() ? key_from_seed(sen_config.seed)
                                     : WatermarkKey::load(sen_key);
    sen_config.generation_policy = make_policy(sen_gen_temperature, sen_gen_top_k);
    if (!sen_temps.empty()) sen_config.detect_temperatures = parse_double_list(sen_temps);
    if (!sen_topks.empty()) {
      sen_config.detect_top_ks.clear();
      for (double v : parse_double_list(sen_topks))
        sen_config.detect_top_ks.push_back(static_cast<std::uint32_t>(v));
    }
    if (!sen_grid.empty()) sen_config.grid = parse_double_list(sen_grid);
    const auto result = run_sensitivity(sen_config);
    write_output(sen_out, sensitivity_csv(result));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

#include "uwmark/generate.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "uwmark/rand_util.hpp"

namespace uwm {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_ids(std::span<const TokenId> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(ids[i]);
  }
  return out;
}

std::vector<TokenId> split_ids(const std::string& text) {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string item = text.substr(pos, comma - pos);
    if (!item.empty()) {
      const long long id = std::stoll(item);
      if (id < 0 || id > 0xFFFFFFFFll) throw std::invalid_argument("token id out of range");
      out.push_back(static_cast<TokenId>(id));
    }
    pos = comma + 1;
  }
  return out;
}

}  // namespace

// ============================================================================
// Transcript
// ============================================================================

Reweighter Transcript::reweighter() const {
  if (!reweight) throw std::logic_error("transcript has no reweighter (plain sampling)");
  Reweighter rw;
  rw.kind = *reweight;
  rw.delta_logit = delta_logit;
  rw.gamma_frac = gamma_frac;
  return rw;
}

std::string Transcript::serialize() const {
  std::ostringstream out;
  out << "uwmark.transcript.v1";
  out << " model=" << model_spec;
  out << " reweight=" << (reweight ? to_string(*reweight) : std::string("none"));
  out << " delta_logit=" << format_double(delta_logit);
  out << " gamma_frac=" << format_double(gamma_frac);
  out << " context_window=" << context_window;
  out << " temperature=" << format_double(policy.temperature);
  out << " top_k=" << (policy.top_k ? std::to_string(*policy.top_k) : std::string("none"));
  out << " key_fp=" << (key_fingerprint.empty() ? "none" : key_fingerprint);
  out << " seed=" << seed;
  out << " history_mode=" << history_mode;
  out << " attacked_epsilon=" << format_double(attacked_epsilon);
  out << " prompt=" << join_ids(prompt);
  out << "\n";
  for (std::size_t i = 0; i < tokens.size(); ++i)
    out << tokens[i] << " " << (skipped.size() > i && skipped[i] ? 1 : 0) << "\n";
  return out.str();
}

Transcript Transcript::parse(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw std::invalid_argument("empty transcript");

  std::istringstream fields(header);
  std::string magic;
  fields >> magic;
  if (magic != "uwmark.transcript.v1")
    throw std::invalid_argument("not a transcript file (bad magic)");

  Transcript t;
  std::string field;
  while (fields >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("malformed transcript header");
    const std::string k = field.substr(0, eq);
    const std::string v = field.substr(eq + 1);
    if (k == "model") t.model_spec = v;
    else if (k == "reweight")
      t.reweight = v == "none" ? std::nullopt
                               : std::optional<ReweightKind>(reweight_kind_from_string(v));
    else if (k == "delta_logit") t.delta_logit = std::stod(v);
    else if (k == "gamma_frac") t.gamma_frac = std::stod(v);
    else if (k == "context_window") t.context_window = static_cast<std::uint32_t>(std::stoul(v));
    else if (k == "temperature") t.policy.temperature = std::stod(v);
    else if (k == "top_k")
      t.policy.top_k = v == "none" ? std::nullopt
                                   : std::optional<std::uint32_t>(std::stoul(v));
    else if (k == "key_fp") t.key_fingerprint = v == "none" ? "" : v;
    else if (k == "seed") t.seed = std::stoull(v);
    else if (k == "history_mode") t.history_mode = v;
    else if (k == "attacked_epsilon") t.attacked_epsilon = std::stod(v);
    else if (k == "prompt") t.prompt = split_ids(v);
    else throw std::invalid_argument("unknown transcript header field: " + k);
  }

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream rec(line);
    long long id = -1;
    int flag = 0;
    if (!(rec >> id >> flag) || id < 0 || id > 0xFFFFFFFFll || (flag != 0 && flag != 1))
      throw std::invalid_argument("malformed transcript token record: " + line);
    t.tokens.push_back(static_cast<TokenId>(id));
    t.skipped.push_back(static_cast<std::uint8_t>(flag));
  }
  return t;
}

void Transcript::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write transcript file: " + path);
  out << serialize();
}

Transcript Transcript::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open transcript file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

// ============================================================================
// Sampling and generation
// ============================================================================

TokenId sample_from(const TokenDistribution& dist, double u) {
  if (!(u >= 0.0 && u < 1.0)) throw std::invalid_argument("sample u must be in [0,1)");
  const auto c = cdf(dist);
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c[i] > u) return static_cast<TokenId>(i);
  for (std::size_t i = c.size(); i-- > 0;)
    if (dist.in_support(static_cast<TokenId>(i))) return static_cast<TokenId>(i);
  throw std::logic_error("distribution has empty support");
}

Transcript generate(const LanguageModel& lm, const WatermarkKey& key,
                    std::span<const TokenId> prompt, std::uint32_t n_tokens,
                    const Reweighter& rw, std::uint32_t context_window,
                    const SamplingPolicy& policy, CodeHistory& history, std::uint64_t seed) {
  rw.validate();
  policy.validate();
  if (context_window == 0) throw std::invalid_argument("context window m must be >= 1");
  for (TokenId t : prompt)
    if (t >= lm.vocab_size()) throw std::invalid_argument("prompt token outside vocabulary");

  Transcript out;
  out.reweight = rw.kind;
  out.delta_logit = rw.delta_logit;
  out.gamma_frac = rw.gamma_frac;
  out.context_window = context_window;
  out.policy = policy;
  out.key_fingerprint = key.fingerprint();
  out.seed = seed;
  out.prompt.assign(prompt.begin(), prompt.end());
  out.tokens.reserve(n_tokens);
  out.skipped.reserve(n_tokens);

  std::vector<TokenId> ctx(prompt.begin(), prompt.end());
  std::mt19937_64 sampler(seed);
  for (std::uint32_t i = 0; i < n_tokens; ++i) {
    const TokenDistribution p = apply_policy(lm.next_distribution(ctx), policy);
    const ContextCode code = context_code(ctx, context_window);
    const bool skip = history.contains(code);
    TokenDistribution q = p;
    if (!skip) {
      history.insert(code);
      q = rw.apply(p, derive_code(code, key, rw, lm.vocab_size()));
    }
    const TokenId x = sample_from(q, unit_real(sampler));
    ctx.push_back(x);
    out.tokens.push_back(x);
    out.skipped.push_back(skip ? 1 : 0);
  }
  return out;
}

Transcript generate_plain(const LanguageModel& lm, std::span<const TokenId> prompt,
                          std::uint32_t n_tokens, const SamplingPolicy& policy,
                          std::uint64_t seed) {
  policy.validate();
  for (TokenId t : prompt)
    if (t >= lm.vocab_size()) throw std::invalid_argument("prompt token outside vocabulary");

  Transcript out;
  out.policy = policy;
  out.seed = seed;
  out.history_mode = "none";
  out.prompt.assign(prompt.begin(), prompt.end());

  std::vector<TokenId> ctx(prompt.begin(), prompt.end());
  std::mt19937_64 sampler(seed);
  for (std::uint32_t i = 0; i < n_tokens; ++i) {
    const TokenDistribution p = apply_policy(lm.next_distribution(ctx), policy);
    const TokenId x = sample_from(p, unit_real(sampler));
    ctx.push_back(x);
    out.tokens.push_back(x);
    out.skipped.push_back(0);
  }
  return out;
}

std::vector<std::uint8_t> replay_skipped_flags(std::span<const TokenId> prompt,
                                               std::span<const TokenId> tokens,
                                               std::uint32_t context_window,
                                               CodeHistory history) {
  std::vector<std::uint8_t> flags;
  flags.reserve(tokens.size());
  std::vector<TokenId> ctx(prompt.begin(), prompt.end());
  for (TokenId x : tokens) {
    const ContextCode code = context_code(ctx, context_window);
    const bool fresh = history.insert(code);
    flags.push_back(fresh ? 0 : 1);
    ctx.push_back(x);
  }
  return flags;
}

}  // namespace uwm

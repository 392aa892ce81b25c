#include "uwmark/lm.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace uwm {

// ============================================================================
// NgramModel
// ============================================================================

NgramModel::NgramModel(Vocabulary vocab, const std::vector<std::vector<TokenId>>& corpus,
                       std::uint32_t order, double alpha)
    : vocab_(std::move(vocab)), order_(order), alpha_(alpha) {
  if (order_ < 1) throw std::invalid_argument("ngram order must be >= 1");
  if (!(alpha_ > 0.0)) throw std::invalid_argument("smoothing alpha must be > 0");
  if (corpus.empty()) throw std::invalid_argument("empty corpus");

  const std::uint32_t ctx_len = order_ - 1;
  bool any_token = false;
  for (const auto& seq : corpus) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq[i] >= vocab_.size()) throw std::invalid_argument("corpus token outside vocabulary");
      any_token = true;
      const std::size_t take = std::min<std::size_t>(ctx_len, i);
      std::vector<TokenId> ctx(seq.begin() + (i - take), seq.begin() + i);
      auto& row = counts_[std::move(ctx)];
      if (row.empty()) row.assign(vocab_.size(), 0);
      ++row[seq[i]];
    }
  }
  if (!any_token) throw std::invalid_argument("empty corpus");
}

TokenDistribution NgramModel::next_distribution(std::span<const TokenId> prefix) const {
  const std::uint32_t ctx_len = order_ - 1;
  const std::size_t take = std::min<std::size_t>(ctx_len, prefix.size());
  std::vector<TokenId> ctx(prefix.end() - take, prefix.end());
  const auto it = counts_.find(ctx);
  if (it == counts_.end()) return TokenDistribution::uniform(vocab_.size());
  std::vector<double> weights(vocab_.size());
  for (std::size_t t = 0; t < weights.size(); ++t)
    weights[t] = static_cast<double>(it->second[t]) + alpha_;
  return normalize(weights);
}

// ============================================================================
// TableModel
// ============================================================================

TableModel::TableModel(std::uint32_t vocab_size,
                       std::map<std::vector<TokenId>, TokenDistribution> rows)
    : vocab_(Vocabulary::numbered(vocab_size)), rows_(std::move(rows)) {
  if (rows_.empty()) throw std::invalid_argument("table model has no rows");
  for (const auto& [prefix, dist] : rows_) {
    if (dist.size() != vocab_size) throw std::invalid_argument("table row width mismatch");
    for (TokenId t : prefix)
      if (t >= vocab_size) throw std::invalid_argument("table prefix token outside vocabulary");
    max_depth_ = std::max(max_depth_, static_cast<std::uint32_t>(prefix.size()) + 1);
  }
}

TokenDistribution TableModel::next_distribution(std::span<const TokenId> prefix) const {
  const auto it = rows_.find(std::vector<TokenId>(prefix.begin(), prefix.end()));
  if (it == rows_.end()) {
    std::string desc;
    for (TokenId t : prefix) desc += std::to_string(t) + " ";
    throw std::runtime_error("no table row for prefix: [" + desc + "]");
  }
  return it->second;
}

TableModel TableModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open table model file: " + path);

  std::map<std::vector<TokenId>, TokenDistribution> rows;
  std::uint32_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto bar = line.find('|');
    if (bar == std::string::npos)
      throw std::runtime_error("table line " + std::to_string(line_no) + ": missing '|'");

    std::vector<TokenId> prefix;
    {
      std::istringstream ids(line.substr(0, bar));
      long long id;
      while (ids >> id) {
        if (id < 0 || id > 0xFFFFFFFFll)
          throw std::runtime_error("table line " + std::to_string(line_no) + ": bad token id");
        prefix.push_back(static_cast<TokenId>(id));
      }
    }
    std::vector<double> probs;
    {
      std::istringstream ps(line.substr(bar + 1));
      double p;
      while (ps >> p) probs.push_back(p);
    }
    if (probs.empty())
      throw std::runtime_error("table line " + std::to_string(line_no) + ": no probabilities");
    if (width == 0) width = static_cast<std::uint32_t>(probs.size());
    if (probs.size() != width)
      throw std::runtime_error("table line " + std::to_string(line_no) + ": row width mismatch");
    if (!rows.emplace(std::move(prefix), TokenDistribution::from_probs(probs)).second)
      throw std::runtime_error("table line " + std::to_string(line_no) + ": duplicate prefix");
  }
  return TableModel(width, std::move(rows));
}

// ============================================================================
// Corpus / model loading
// ============================================================================

std::vector<std::vector<TokenId>> load_corpus(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  std::vector<std::vector<TokenId>> corpus;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    std::vector<TokenId> seq;
    std::string word;
    while (words >> word) {
      const auto id = vocab.id_of(word);
      if (!id) throw std::runtime_error("corpus token not in vocabulary: " + word);
      seq.push_back(*id);
    }
    if (!seq.empty()) corpus.push_back(std::move(seq));
  }
  if (corpus.empty()) throw std::runtime_error("empty corpus");
  return corpus;
}

Vocabulary vocab_from_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  std::vector<std::string> tokens;
  std::unordered_map<std::string, bool> seen;
  std::string word;
  while (in >> word) {
    if (seen.emplace(word, true).second) tokens.push_back(word);
  }
  if (tokens.empty()) throw std::runtime_error("empty corpus");
  return Vocabulary(std::move(tokens));
}

namespace {

std::unordered_map<std::string, std::string> parse_kv(const std::string& args) {
  std::unordered_map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos < args.size()) {
    auto comma = args.find(',', pos);
    if (comma == std::string::npos) comma = args.size();
    const std::string item = args.substr(pos, comma - pos);
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("expected key=value in model spec");
    out[item.substr(0, eq)] = item.substr(eq + 1);
    pos = comma + 1;
  }
  return out;
}

}  // namespace

std::unique_ptr<LanguageModel> load_model(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("malformed model spec: " + spec);
  const std::string kind = spec.substr(0, colon);
  const std::string args = spec.substr(colon + 1);

  if (kind == "uniform") {
    const long long n = std::stoll(args);
    if (n < 1 || n > 0xFFFFFFFFll) throw std::invalid_argument("bad uniform vocabulary size");
    return std::make_unique<UniformModel>(Vocabulary::numbered(static_cast<std::uint32_t>(n)));
  }
  if (kind == "table") {
    return std::make_unique<TableModel>(TableModel::load(args));
  }
  if (kind == "ngram") {
    auto kv = parse_kv(args);
    const auto corpus_it = kv.find("corpus");
    if (corpus_it == kv.end()) throw std::invalid_argument("ngram spec requires corpus=PATH");
    const std::uint32_t order =
        kv.count("order") ? static_cast<std::uint32_t>(std::stoul(kv["order"])) : 2;
    const double alpha = kv.count("alpha") ? std::stod(kv["alpha"]) : 1.0;
    Vocabulary vocab =
        kv.count("vocab") ? Vocabulary::load(kv["vocab"]) : vocab_from_corpus(corpus_it->second);
    auto corpus = load_corpus(corpus_it->second, vocab);
    return std::make_unique<NgramModel>(std::move(vocab), corpus, order, alpha);
  }
  throw std::invalid_argument("unknown model kind: " + kind);
}

}  // namespace uwm

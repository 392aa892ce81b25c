#pragma once

// Toy autoregressive language models behind a single abstract interface:
// uniform, add-alpha smoothed n-gram, and an explicit conditional table used
// by the exact-enumeration drivers. Models are deterministic and stateless;
// the same prefix always yields the same distribution.

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "uwmark/prob.hpp"

namespace uwm {

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual const Vocabulary& vocab() const = 0;
  virtual TokenDistribution next_distribution(std::span<const TokenId> prefix) const = 0;
  std::uint32_t vocab_size() const { return vocab().size(); }
};

/// Every prefix maps to the uniform distribution.
class UniformModel final : public LanguageModel {
 public:
  explicit UniformModel(Vocabulary vocab) : vocab_(std::move(vocab)) {}
  const Vocabulary& vocab() const override { return vocab_; }
  TokenDistribution next_distribution(std::span<const TokenId>) const override {
    return TokenDistribution::uniform(vocab_.size());
  }

 private:
  Vocabulary vocab_;
};

/// Add-alpha smoothed n-gram model: conditionals on the last order-1 tokens
/// (shorter contexts near sequence starts are counted too). A context never
/// seen in the corpus falls back to the uniform distribution.
class NgramModel final : public LanguageModel {
 public:
  NgramModel(Vocabulary vocab, const std::vector<std::vector<TokenId>>& corpus,
             std::uint32_t order, double alpha);
  const Vocabulary& vocab() const override { return vocab_; }
  TokenDistribution next_distribution(std::span<const TokenId> prefix) const override;
  std::uint32_t order() const { return order_; }

 private:
  Vocabulary vocab_;
  std::uint32_t order_;
  double alpha_;
  std::map<std::vector<TokenId>, std::vector<std::uint32_t>> counts_;
};

/// Exact conditional table: every queried prefix must have a row. Rows are
/// validated as simplex members on load.
class TableModel final : public LanguageModel {
 public:
  TableModel(std::uint32_t vocab_size, std::map<std::vector<TokenId>, TokenDistribution> rows);
  static TableModel load(const std::string& path);

  const Vocabulary& vocab() const override { return vocab_; }
  TokenDistribution next_distribution(std::span<const TokenId> prefix) const override;

  std::uint32_t max_depth() const { return max_depth_; }
  const std::map<std::vector<TokenId>, TokenDistribution>& rows() const { return rows_; }

 private:
  Vocabulary vocab_;
  std::map<std::vector<TokenId>, TokenDistribution> rows_;
  std::uint32_t max_depth_ = 0;
};

/// Whitespace-separated tokens, one sequence per line, mapped through the
/// vocabulary. Unknown tokens are an error.
std::vector<std::vector<TokenId>> load_corpus(const std::string& path, const Vocabulary& vocab);

/// Vocabulary of a corpus file's unique tokens in first-appearance order.
Vocabulary vocab_from_corpus(const std::string& path);

/// Builds a model from a spec string:
///   uniform:N
///   table:PATH
///   ngram:corpus=PATH[,vocab=PATH][,order=N][,alpha=X]
std::unique_ptr<LanguageModel> load_model(const std::string& spec);

}  // namespace uwm

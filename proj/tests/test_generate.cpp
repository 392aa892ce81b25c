#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "uwmark/generate.hpp"

using namespace uwm;

namespace {

WatermarkKey test_key(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WatermarkKey key;
  for (auto& b : key.bytes) b = static_cast<std::uint8_t>(rng());
  return key;
}

const std::string kDataDir = UWM_DATA_DIR;

}  // namespace

TEST_CASE("sample_from follows the first-crossing rule") {
  const auto p = TokenDistribution::from_probs(std::vector<double>{0.2, 0.3, 0.5});
  CHECK(sample_from(p, 0.0) == 0);
  CHECK(sample_from(p, 0.19) == 0);
  CHECK(sample_from(p, 0.2) == 1);
  CHECK(sample_from(p, 0.49) == 1);
  CHECK(sample_from(p, 0.9999) == 2);
  CHECK_THROWS_AS(sample_from(p, 1.0), std::invalid_argument);
}

TEST_CASE("soft_red with zero logit samples exactly like the plain model") {
  UniformModel lm(Vocabulary::numbered(8));
  const auto key = test_key(1);
  const Reweighter rw{ReweightKind::soft_red, 0.0, 0.5};
  CodeHistory history;
  const auto wm = generate(lm, key, std::vector<TokenId>{3}, 500, rw, 5, SamplingPolicy{},
                           history, 99);
  const auto plain = generate_plain(lm, std::vector<TokenId>{3}, 500, SamplingPolicy{}, 99);
  CHECK(wm.tokens == plain.tokens);
}

TEST_CASE("single-step binary generation is the key-coin warm-up") {
  const auto model = TableModel::load(kDataDir + "/warmup.table");
  const Reweighter rw{ReweightKind::delta, 0.0, 0.5};

  // For a fixed key the delta reweight collapses the fair coin to a point
  // mass, so the one generated bit is a function of the key only.
  const auto key = test_key(2);
  std::vector<TokenId> first;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    CodeHistory history;
    first.push_back(
        generate(model, key, {}, 1, rw, 5, SamplingPolicy{}, history, seed).tokens[0]);
  }
  CHECK(first[0] == first[1]);
  CHECK(first[1] == first[2]);

  // Averaged over random keys the bit is fair again.
  std::mt19937_64 rng(7);
  double ones = 0.0;
  const int n_keys = 2000;
  for (int i = 0; i < n_keys; ++i) {
    WatermarkKey k;
    for (auto& b : k.bytes) b = static_cast<std::uint8_t>(rng());
    CodeHistory history;
    ones += generate(model, k, {}, 1, rw, 5, SamplingPolicy{}, history, 1).tokens[0];
  }
  const double sigma = 0.5 / std::sqrt(static_cast<double>(n_keys));
  CHECK(std::abs(ones / n_keys - 0.5) <= 4.0 * sigma);
}

TEST_CASE("repeated context codes are skipped and replayable") {
  UniformModel lm(Vocabulary::numbered(2));
  const auto key = test_key(3);
  const Reweighter rw{ReweightKind::delta, 0.0, 0.5};
  CodeHistory history;
  const auto t = generate(lm, key, std::vector<TokenId>{0}, 64, rw, 1, SamplingPolicy{},
                          history, 5);

  // With m = 1 over a binary vocabulary there are only two possible windows;
  // every step after both appeared must be skipped.
  std::size_t fresh = 0;
  for (auto f : t.skipped) fresh += f ? 0 : 1;
  CHECK(fresh <= 2);
  CHECK(t.skipped[0] == 0);

  CHECK(replay_skipped_flags(t.prompt, t.tokens, t.context_window) == t.skipped);
}

TEST_CASE("history persists across generations") {
  UniformModel lm(Vocabulary::numbered(4));
  const auto key = test_key(4);
  const Reweighter rw{ReweightKind::gamma, 0.0, 0.5};
  CodeHistory history;
  const auto first = generate(lm, key, std::vector<TokenId>{1, 2}, 8, rw, 3, SamplingPolicy{},
                              history, 11);
  const std::size_t after_first = history.size();
  CHECK(after_first > 0);

  // Replaying the same prompt against the persisted history skips the prompt
  // window's code immediately.
  const auto second = generate(lm, key, std::vector<TokenId>{1, 2}, 1, rw, 3, SamplingPolicy{},
                               history, 12);
  CHECK(second.skipped[0] == 1);
  (void)first;
}

TEST_CASE("generate_plain is reproducible and unbiased on the uniform model") {
  UniformModel lm(Vocabulary::numbered(4));
  const auto a = generate_plain(lm, {}, 64, SamplingPolicy{}, 123);
  const auto b = generate_plain(lm, {}, 64, SamplingPolicy{}, 123);
  CHECK(a.tokens == b.tokens);
  CHECK(generate_plain(lm, {}, 0, SamplingPolicy{}, 1).tokens.empty());

  const auto long_run = generate_plain(lm, {}, 100000, SamplingPolicy{}, 42);
  std::array<double, 4> freq{};
  for (TokenId t : long_run.tokens) freq[t] += 1.0;
  const double n = static_cast<double>(long_run.tokens.size());
  const double sigma = std::sqrt(0.25 * 0.75 / n);
  for (double f : freq) CHECK(std::abs(f / n - 0.25) <= 4.0 * sigma);
}

TEST_CASE("transcripts round trip byte-identically") {
  UniformModel lm(Vocabulary::numbered(6));
  const auto key = test_key(5);
  const Reweighter rw{ReweightKind::soft_red, 1.5, 0.5};
  CodeHistory history;
  auto t = generate(lm, key, std::vector<TokenId>{4, 0}, 20, rw, 5,
                    SamplingPolicy{0.8, std::optional<std::uint32_t>{3}}, history, 77);
  t.model_spec = "uniform:6";
  t.history_mode = "persist";

  const auto text = t.serialize();
  const auto parsed = Transcript::parse(text);
  CHECK(parsed.serialize() == text);
  CHECK(parsed.tokens == t.tokens);
  CHECK(parsed.skipped == t.skipped);
  CHECK(parsed.prompt == t.prompt);
  CHECK(parsed.reweight == ReweightKind::soft_red);
  CHECK(parsed.delta_logit == 1.5);
  CHECK(parsed.policy.temperature == 0.8);
  CHECK(parsed.policy.top_k == std::uint32_t{3});
  CHECK(parsed.key_fingerprint == key.fingerprint());

  const auto path = (std::filesystem::temp_directory_path() / "uwm_test_transcript.txt").string();
  t.save(path);
  const auto loaded = Transcript::load(path);
  CHECK(loaded.serialize() == text);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(Transcript::parse("bogus"), std::invalid_argument);
  CHECK_THROWS_AS(Transcript::parse("uwmark.transcript.v1 model=x\n1 2\n"),
                  std::invalid_argument);
}

TEST_CASE("plain transcripts mark the reweight as none") {
  UniformModel lm(Vocabulary::numbered(3));
  auto t = generate_plain(lm, {}, 4, SamplingPolicy{}, 9);
  t.model_spec = "uniform:3";
  const auto parsed = Transcript::parse(t.serialize());
  CHECK_FALSE(parsed.reweight.has_value());
  CHECK_THROWS_AS(parsed.reweighter(), std::logic_error);
}

TEST_CASE("generation validates prompts and windows") {
  UniformModel lm(Vocabulary::numbered(3));
  const auto key = test_key(6);
  const Reweighter rw{ReweightKind::delta, 0.0, 0.5};
  CodeHistory history;
  CHECK_THROWS_AS(
      generate(lm, key, std::vector<TokenId>{9}, 1, rw, 5, SamplingPolicy{}, history, 1),
      std::invalid_argument);
  CHECK_THROWS_AS(generate(lm, key, {}, 1, rw, 0, SamplingPolicy{}, history, 1),
                  std::invalid_argument);
}

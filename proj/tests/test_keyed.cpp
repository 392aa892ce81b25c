#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <random>

#include "oracles.hpp"
#include "uwmark/keyed.hpp"

using namespace uwm;

namespace {

WatermarkKey test_key(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WatermarkKey key;
  for (auto& b : key.bytes) b = static_cast<std::uint8_t>(rng());
  return key;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

// ============================================================================
// Primitives
// ============================================================================

TEST_CASE("sha256 matches the FIPS 180-4 'abc' vector") {
  const std::string msg = "abc";
  const auto digest = sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(msg.data()), msg.size()));
  CHECK(to_hex(digest) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("chacha keystream matches the RFC 8439 block vector") {
  std::array<std::uint8_t, 32> key{};
  for (std::size_t i = 0; i < 32; ++i) key[i] = static_cast<std::uint8_t>(i);
  const std::array<std::uint8_t, 12> nonce = {0x00, 0x00, 0x00, 0x09, 0x00, 0x00,
                                              0x00, 0x4a, 0x00, 0x00, 0x00, 0x00};
  ChaChaStream stream(key, nonce, 1);
  std::array<std::uint8_t, 16> out{};
  stream.fill(out);
  CHECK(to_hex(out) == "10f1e7e4d13b5915500fdd1fa32071c4");
}

TEST_CASE("hex round trip") {
  const std::vector<std::uint8_t> bytes = {0x00, 0xde, 0xad, 0xbe, 0xef, 0x7f};
  CHECK(from_hex(to_hex(bytes)) == bytes);
  CHECK_THROWS_AS(from_hex("abc"), std::invalid_argument);
  CHECK_THROWS_AS(from_hex("zz"), std::invalid_argument);
}

// ============================================================================
// Keys
// ============================================================================

TEST_CASE("key hex and file round trip") {
  const auto key = test_key(1);
  CHECK(key.hex().size() == 256);
  CHECK(WatermarkKey::from_hex(key.hex()).bytes == key.bytes);
  CHECK_THROWS_AS(WatermarkKey::from_hex("ab"), std::invalid_argument);

  const auto path = temp_path("uwm_test_key.hex");
  key.save(path);
  CHECK(WatermarkKey::load(path).bytes == key.bytes);
  CHECK(std::filesystem::file_size(path) == 257);  // 256 hex chars + newline
  std::filesystem::remove(path);

  CHECK(key.fingerprint().size() == 16);
  CHECK(WatermarkKey::random().bytes != WatermarkKey::random().bytes);
}

// ============================================================================
// Context codes
// ============================================================================

TEST_CASE("context_code serializes the recent window") {
  const std::vector<TokenId> prefix = {7, 8, 9};
  const auto code = context_code(prefix, 5);
  CHECK(code.bytes().size() == 1 + 4 * 3);
  CHECK(code.bytes()[0] == 3);  // only three tokens are available

  const auto empty = context_code(std::vector<TokenId>{}, 5);
  CHECK(empty.bytes() == std::vector<std::uint8_t>{0});
  CHECK(empty == ContextCode{});

  const std::vector<TokenId> a = {1, 2, 3, 4, 5, 6};
  const std::vector<TokenId> b = {99, 2, 3, 4, 5, 6};
  CHECK(context_code(a, 5) == context_code(b, 5));      // window drops position 0
  CHECK_FALSE(context_code(a, 6) == context_code(b, 6));

  CHECK_THROWS_AS(context_code(a, 0), std::invalid_argument);
  CHECK_THROWS_AS(context_code(std::vector<TokenId>(300, 1), 300), std::invalid_argument);
}

TEST_CASE("context_code hex round trip and big-endian layout") {
  const std::vector<TokenId> window = {0x01020304u};
  const auto code = ContextCode::from_window(window);
  CHECK(code.hex() == "0101020304");
  CHECK(ContextCode::from_hex(code.hex()) == code);
  CHECK_THROWS_AS(ContextCode::from_hex("02aabbccdd"), std::invalid_argument);
}

TEST_CASE("context_code serialization is injective on random windows") {
  std::mt19937_64 rng(41);
  std::map<std::vector<std::uint8_t>, std::vector<TokenId>> seen;
  for (int round = 0; round < 5000; ++round) {
    std::vector<TokenId> window(rng() % 6);
    for (auto& t : window) t = static_cast<TokenId>(rng() % 50);
    const auto code = ContextCode::from_window(window);
    const auto [it, inserted] = seen.emplace(code.bytes(), window);
    if (!inserted) CHECK(it->second == window);
  }
}

// ============================================================================
// History
// ============================================================================

TEST_CASE("history set semantics") {
  CodeHistory history;
  const auto c1 = ContextCode::from_window(std::vector<TokenId>{1, 2});
  const auto c2 = ContextCode::from_window(std::vector<TokenId>{2, 1});
  CHECK_FALSE(history.contains(c1));
  CHECK(history.insert(c1));
  CHECK(history.contains(c1));
  CHECK_FALSE(history.insert(c1));  // idempotent
  CHECK(history.size() == 1);
  CHECK(history.insert(c2));
  CHECK(history.size() == 2);
}

TEST_CASE("history file round trip is append-only") {
  const auto path = temp_path("uwm_test_history.txt");
  std::filesystem::remove(path);
  const auto c1 = ContextCode::from_window(std::vector<TokenId>{3});
  const auto c2 = ContextCode::from_window(std::vector<TokenId>{4, 5});
  CodeHistory::append_to_file(path, std::vector<ContextCode>{c1});
  CodeHistory::append_to_file(path, std::vector<ContextCode>{c2});
  const auto loaded = CodeHistory::load(path);
  CHECK(loaded.size() == 2);
  CHECK(loaded.contains(c1));
  CHECK(loaded.contains(c2));
  std::filesystem::remove(path);
}

// ============================================================================
// Code derivation
// ============================================================================

TEST_CASE("derive_code is deterministic per (context, key)") {
  const auto key = test_key(2);
  const auto code = context_code(std::vector<TokenId>{5, 6, 7}, 5);
  const Reweighter delta{ReweightKind::delta, 0.0, 0.5};

  const auto u1 = std::get<UnitRealCode>(derive_code(code, key, delta, 16)).u;
  const auto u2 = std::get<UnitRealCode>(derive_code(code, key, delta, 16)).u;
  CHECK(u1 == u2);
  CHECK(u1 >= 0.0);
  CHECK(u1 < 1.0);

  const auto other_key = test_key(3);
  CHECK(u1 != std::get<UnitRealCode>(derive_code(code, other_key, delta, 16)).u);

  const Reweighter gamma{ReweightKind::gamma, 0.0, 0.5};
  const auto p1 = std::get<PermutationCode>(derive_code(code, key, gamma, 16)).rank;
  const auto p2 = std::get<PermutationCode>(derive_code(code, key, gamma, 16)).rank;
  CHECK(p1 == p2);

  const Reweighter soft{ReweightKind::soft_red, 1.0, 0.5};
  const Reweighter hard{ReweightKind::hard_red, 0.0, 0.5};
  const auto mask_soft = std::get<RedGreenCode>(derive_code(code, key, soft, 16)).green;
  const auto mask_hard = std::get<RedGreenCode>(derive_code(code, key, hard, 16)).green;
  CHECK(mask_soft == mask_hard);  // both red-list kinds share the partition space
  CHECK(RedGreenCode{mask_hard}.green_count() == 8);
}

TEST_CASE("unit reals over distinct contexts pass a KS uniformity test") {
  const auto key = test_key(4);
  const Reweighter delta{ReweightKind::delta, 0.0, 0.5};
  const std::size_t n = 10000;
  std::vector<double> values;
  values.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto code = ContextCode::from_window(std::vector<TokenId>{static_cast<TokenId>(i)});
    values.push_back(std::get<UnitRealCode>(derive_code(code, key, delta, 4)).u);
  }
  // 1% critical value for the two-sided KS statistic.
  const double critical = 1.628 / std::sqrt(static_cast<double>(n));
  CHECK(oracle::ks_uniform_statistic(values) < critical);

  // Streams from distinct contexts look independent: adjacent-pair
  // correlation within 4 sigma of zero.
  std::vector<double> x(values.begin(), values.end() - 1);
  std::vector<double> y(values.begin() + 1, values.end());
  CHECK(std::abs(oracle::correlation(x, y)) < 4.0 / std::sqrt(static_cast<double>(n - 1)));
}

TEST_CASE("derived permutations over |Sigma|=4 are uniform across all 24") {
  const auto key = test_key(5);
  const Reweighter gamma{ReweightKind::gamma, 0.0, 0.5};
  const std::size_t n = 10000;
  std::map<std::vector<std::uint32_t>, std::size_t> counts;
  for (std::size_t i = 0; i < n; ++i) {
    const auto code = ContextCode::from_window(
        std::vector<TokenId>{static_cast<TokenId>(i), static_cast<TokenId>(i >> 8)});
    ++counts[std::get<PermutationCode>(derive_code(code, key, gamma, 4)).rank];
  }
  CHECK(counts.size() == 24);
  const double p = 1.0 / 24.0;
  const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  for (const auto& [perm, count] : counts) {
    const double freq = static_cast<double>(count) / static_cast<double>(n);
    CHECK(std::abs(freq - p) <= 4.0 * sigma);
  }
}

TEST_CASE("gumbel codes have the right moments") {
  const auto key = test_key(6);
  const Reweighter rw{ReweightKind::gumbel_delta, 0.0, 0.5};
  double sum = 0.0, count = 0.0;
  for (std::size_t i = 0; i < 4000; ++i) {
    const auto code = ContextCode::from_window(std::vector<TokenId>{static_cast<TokenId>(i), 9});
    const auto noise = std::get<GumbelCode>(derive_code(code, key, rw, 8)).noise;
    for (double g : noise) {
      sum += g;
      count += 1.0;
    }
  }
  // Gumbel(0,1) mean is the Euler-Mascheroni constant; sd is pi/sqrt(6).
  const double mean = sum / count;
  const double sigma = (3.14159265358979 / std::sqrt(6.0)) / std::sqrt(count);
  CHECK(std::abs(mean - 0.57721566490153286) <= 4.0 * sigma);
}

TEST_CASE("fixed context averaged over random keys reproduces the distribution") {
  // Keyed unbiasedness: for fixed c, E_k[R_{E(c,k)}(P)] = P.
  const auto code = ContextCode::from_window(std::vector<TokenId>{11, 12, 13});
  const auto p = TokenDistribution::from_probs(std::vector<double>{0.5, 0.2, 0.2, 0.1});
  const Reweighter delta{ReweightKind::delta, 0.0, 0.5};
  const std::size_t n_keys = 100000;

  std::vector<double> mean(p.size(), 0.0);
  std::mt19937_64 rng(42);
  for (std::size_t i = 0; i < n_keys; ++i) {
    WatermarkKey key;
    for (auto& b : key.bytes) b = static_cast<std::uint8_t>(rng());
    const auto out = delta.apply(p, derive_code(code, key, delta, 4));
    for (std::size_t t = 0; t < p.size(); ++t) mean[t] += out.prob(static_cast<TokenId>(t));
  }
  for (std::size_t t = 0; t < p.size(); ++t) {
    const double pt = p.prob(static_cast<TokenId>(t));
    const double sigma = std::sqrt(pt * (1.0 - pt) / static_cast<double>(n_keys));
    CHECK(std::abs(mean[t] / static_cast<double>(n_keys) - pt) <= 4.0 * sigma);
  }
}

#pragma once

// Keyed watermark-code derivation: context codes serialized from the recent
// token window, SHA-256(context || key) seeding a ChaCha20 keystream, and the
// context-code history that makes repeated windows skip reweighting. All
// derivations are bit-exact across platforms and runs.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "uwmark/reweight.hpp"

namespace uwm {

std::string to_hex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> from_hex(std::string_view hex);

/// SHA-256 digest.
std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data);

// ============================================================================
// WatermarkKey
// ============================================================================

/// 1024-bit secret key. On disk: 256 lowercase hex characters plus newline.
struct WatermarkKey {
  static constexpr std::size_t kBytes = 128;
  std::array<std::uint8_t, kBytes> bytes{};

  static WatermarkKey random();  // OS entropy
  static WatermarkKey from_hex(std::string_view hex);
  static WatermarkKey load(const std::string& path);
  void save(const std::string& path) const;

  std::string hex() const;
  /// First 8 bytes of SHA-256(key) as 16 hex characters.
  std::string fingerprint() const;
};

// ============================================================================
// ContextCode
// ============================================================================

/// Deterministic serialization of a token window: one count byte followed by
/// the window's token ids as 4-byte big-endian words. Equal windows produce
/// equal bytes; distinct windows (up to 255 tokens) produce distinct bytes.
class ContextCode {
 public:
  ContextCode() : bytes_(1, 0) {}  // count-0 code
  static ContextCode from_window(std::span<const TokenId> window);
  static ContextCode from_hex(std::string_view hex);

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::string hex() const { return to_hex(bytes_); }

  bool operator==(const ContextCode& other) const { return bytes_ == other.bytes_; }

 private:
  explicit ContextCode(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}
  std::vector<std::uint8_t> bytes_;
};

/// Context code of the last min(m, available) tokens of prompt + prefix.
ContextCode context_code(std::span<const TokenId> prompt_and_prefix, std::uint32_t m);

// ============================================================================
// CodeHistory
// ============================================================================

/// Set of context codes already spent on a reweighting step. On disk: one
/// lowercase-hex code per line, append-only.
class CodeHistory {
 public:
  bool contains(const ContextCode& code) const;
  /// Returns true when the code was newly inserted.
  bool insert(const ContextCode& code);
  std::size_t size() const { return seen_.size(); }

  static CodeHistory load(const std::string& path);
  /// Appends codes (in the given order) to an existing or new history file.
  static void append_to_file(const std::string& path, std::span<const ContextCode> codes);

 private:
  std::unordered_set<std::string> seen_;  // raw code bytes
};

// ============================================================================
// ChaChaStream
// ============================================================================

/// Deterministic ChaCha20 keystream reader (RFC 8439 layout: 32-byte key,
/// 12-byte nonce, 32-bit block counter). 64-bit draws consume 8 keystream
/// bytes interpreted little-endian.
class ChaChaStream {
 public:
  explicit ChaChaStream(const std::array<std::uint8_t, 32>& key,
                        const std::array<std::uint8_t, 12>& nonce = {},
                        std::uint32_t counter = 0);
  ~ChaChaStream();
  ChaChaStream(ChaChaStream&&) noexcept;
  ChaChaStream& operator=(ChaChaStream&&) noexcept;
  ChaChaStream(const ChaChaStream&) = delete;
  ChaChaStream& operator=(const ChaChaStream&) = delete;

  void fill(std::span<std::uint8_t> out);
  std::uint64_t operator()() { return next_u64(); }
  std::uint64_t next_u64();

  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// ============================================================================
// Code derivation
// ============================================================================

/// Derives the per-step watermark code: SHA-256(context bytes || key bytes)
/// keys a ChaCha20 stream which produces the code for the reweighter's code
/// space (uniform real / permutation / red-green partition / Gumbel vector).
WatermarkCode derive_code(const ContextCode& context, const WatermarkKey& key,
                          const Reweighter& rw, std::uint32_t vocab_size);

}  // namespace uwm

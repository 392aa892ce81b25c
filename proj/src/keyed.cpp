#include "uwmark/keyed.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "uwmark/rand_util.hpp"

namespace uwm {

// ============================================================================
// Hex / hashing
// ============================================================================

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xF]);
  }
  return out;
}

namespace {
int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

std::vector<std::uint8_t> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw std::invalid_argument("hex string has odd length");
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex character");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data) {
  std::array<std::uint8_t, 32> out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size())
    throw std::runtime_error("SHA-256 failed");
  return out;
}

// ============================================================================
// WatermarkKey
// ============================================================================

WatermarkKey WatermarkKey::random() {
  WatermarkKey key;
  std::random_device rd;
  for (std::size_t i = 0; i < kBytes; i += 4) {
    std::uint32_t word = rd();
    std::memcpy(key.bytes.data() + i, &word, 4);
  }
  return key;
}

WatermarkKey WatermarkKey::from_hex(std::string_view hex) {
  auto raw = uwm::from_hex(hex);
  if (raw.size() != kBytes) throw std::invalid_argument("key must be exactly 128 bytes");
  WatermarkKey key;
  std::memcpy(key.bytes.data(), raw.data(), kBytes);
  return key;
}

WatermarkKey WatermarkKey::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open key file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty key file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return from_hex(line);
}

void WatermarkKey::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write key file: " + path);
  out << hex() << "\n";
}

std::string WatermarkKey::hex() const { return to_hex(bytes); }

std::string WatermarkKey::fingerprint() const {
  const auto digest = sha256(bytes);
  return to_hex(std::span<const std::uint8_t>(digest.data(), 8));
}

// ============================================================================
// ContextCode
// ============================================================================

ContextCode ContextCode::from_window(std::span<const TokenId> window) {
  if (window.size() > 255)
    throw std::invalid_argument("context window longer than 255 tokens cannot be serialized");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(1 + 4 * window.size());
  bytes.push_back(static_cast<std::uint8_t>(window.size()));
  for (TokenId id : window) {
    bytes.push_back(static_cast<std::uint8_t>(id >> 24));
    bytes.push_back(static_cast<std::uint8_t>(id >> 16));
    bytes.push_back(static_cast<std::uint8_t>(id >> 8));
    bytes.push_back(static_cast<std::uint8_t>(id));
  }
  return ContextCode(std::move(bytes));
}

ContextCode ContextCode::from_hex(std::string_view hex) {
  auto bytes = uwm::from_hex(hex);
  if (bytes.empty() || bytes.size() != 1 + 4 * static_cast<std::size_t>(bytes[0]))
    throw std::invalid_argument("malformed context code");
  return ContextCode(std::move(bytes));
}

ContextCode context_code(std::span<const TokenId> prompt_and_prefix, std::uint32_t m) {
  if (m == 0) throw std::invalid_argument("context window m must be >= 1");
  const std::size_t take = std::min<std::size_t>(m, prompt_and_prefix.size());
  return ContextCode::from_window(prompt_and_prefix.subspan(prompt_and_prefix.size() - take));
}

// ============================================================================
// CodeHistory
// ============================================================================

namespace {
std::string code_key(const ContextCode& code) {
  return std::string(code.bytes().begin(), code.bytes().end());
}
}  // namespace

bool CodeHistory::contains(const ContextCode& code) const {
  return seen_.count(code_key(code)) != 0;
}

bool CodeHistory::insert(const ContextCode& code) { return seen_.insert(code_key(code)).second; }

CodeHistory CodeHistory::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open history file: " + path);
  CodeHistory history;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    history.insert(ContextCode::from_hex(line));
  }
  return history;
}

void CodeHistory::append_to_file(const std::string& path, std::span<const ContextCode> codes) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot write history file: " + path);
  for (const auto& code : codes) out << code.hex() << "\n";
}

// ============================================================================
// ChaChaStream
// ============================================================================

struct ChaChaStream::Impl {
  EVP_CIPHER_CTX* ctx = nullptr;
  std::array<std::uint8_t, 512> buf{};
  std::size_t pos = sizeof(buf);

  ~Impl() {
    if (ctx) EVP_CIPHER_CTX_free(ctx);
  }

  void refill() {
    static const std::array<std::uint8_t, 512> zeros{};
    int out_len = 0;
    if (EVP_EncryptUpdate(ctx, buf.data(), &out_len, zeros.data(), static_cast<int>(zeros.size())) != 1 ||
        out_len != static_cast<int>(zeros.size()))
      throw std::runtime_error("ChaCha20 keystream generation failed");
    pos = 0;
  }
};

ChaChaStream::ChaChaStream(const std::array<std::uint8_t, 32>& key,
                           const std::array<std::uint8_t, 12>& nonce, std::uint32_t counter)
    : impl_(std::make_unique<Impl>()) {
  impl_->ctx = EVP_CIPHER_CTX_new();
  if (!impl_->ctx) throw std::runtime_error("cannot allocate cipher context");
  // OpenSSL's ChaCha20 IV is the 4-byte little-endian block counter followed
  // by the 12-byte nonce.
  std::array<std::uint8_t, 16> iv{};
  iv[0] = static_cast<std::uint8_t>(counter);
  iv[1] = static_cast<std::uint8_t>(counter >> 8);
  iv[2] = static_cast<std::uint8_t>(counter >> 16);
  iv[3] = static_cast<std::uint8_t>(counter >> 24);
  std::memcpy(iv.data() + 4, nonce.data(), nonce.size());
  if (EVP_EncryptInit_ex(impl_->ctx, EVP_chacha20(), nullptr, key.data(), iv.data()) != 1)
    throw std::runtime_error("ChaCha20 init failed");
}

ChaChaStream::~ChaChaStream() = default;
ChaChaStream::ChaChaStream(ChaChaStream&&) noexcept = default;
ChaChaStream& ChaChaStream::operator=(ChaChaStream&&) noexcept = default;

void ChaChaStream::fill(std::span<std::uint8_t> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    if (impl_->pos == impl_->buf.size()) impl_->refill();
    const std::size_t take = std::min(out.size() - done, impl_->buf.size() - impl_->pos);
    std::memcpy(out.data() + done, impl_->buf.data() + impl_->pos, take);
    impl_->pos += take;
    done += take;
  }
}

std::uint64_t ChaChaStream::next_u64() {
  std::array<std::uint8_t, 8> raw{};
  fill(raw);
  std::uint64_t v = 0;
  for (std::size_t i = 8; i-- > 0;) v = (v << 8) | raw[i];  // little-endian
  return v;
}

// ============================================================================
// Code derivation
// ============================================================================

WatermarkCode derive_code(const ContextCode& context, const WatermarkKey& key,
                          const Reweighter& rw, std::uint32_t vocab_size) {
  rw.validate();
  if (vocab_size == 0) throw std::invalid_argument("empty vocabulary");

  std::vector<std::uint8_t> material;
  material.reserve(context.bytes().size() + key.bytes.size());
  material.insert(material.end(), context.bytes().begin(), context.bytes().end());
  material.insert(material.end(), key.bytes.begin(), key.bytes.end());
  ChaChaStream stream(sha256(material));

  switch (rw.kind) {
    case ReweightKind::delta:
      return UnitRealCode{unit_real(stream)};
    case ReweightKind::gamma:
      return PermutationCode::from_shuffled(shuffled_indices(stream, vocab_size));
    case ReweightKind::hard_red:
    case ReweightKind::soft_red: {
      const auto shuffled = shuffled_indices(stream, vocab_size);
      const std::uint32_t g = rw.green_count(vocab_size);
      RedGreenCode code;
      code.green.assign(vocab_size, 0);
      for (std::uint32_t i = 0; i < g; ++i) code.green[shuffled[i]] = 1;
      return code;
    }
    case ReweightKind::gumbel_delta: {
      GumbelCode code;
      code.noise.resize(vocab_size);
      for (auto& v : code.noise) v = gumbel_real(stream);
      return code;
    }
  }
  throw std::logic_error("unknown reweight kind");
}

}  // namespace uwm

#include "nsc/cipher.hpp"

#include <algorithm>
#include <cstring>

namespace nsc {
namespace {

Word32 load_le32(const std::uint8_t* p) {
  return static_cast<Word32>(p[0]) | (static_cast<Word32>(p[1]) << 8) |
         (static_cast<Word32>(p[2]) << 16) | (static_cast<Word32>(p[3]) << 24);
}

void store_le32(std::uint8_t* p, Word32 w) {
  p[0] = static_cast<std::uint8_t>(w);
  p[1] = static_cast<std::uint8_t>(w >> 8);
  p[2] = static_cast<std::uint8_t>(w >> 16);
  p[3] = static_cast<std::uint8_t>(w >> 24);
}

template <std::size_t N>
std::array<std::uint8_t, N> fixed_from_hex(const std::string& hex, const char* what) {
  auto raw = from_hex(hex);
  if (raw.size() != N) {
    throw InputError(std::string(what) + " must be " + std::to_string(2 * N) + " hex digits");
  }
  std::array<std::uint8_t, N> out{};
  std::copy(raw.begin(), raw.end(), out.begin());
  return out;
}

void check_nbits(std::size_t nbits) {
  if (nbits == 0) throw InputError("keystream length must be positive");
  if (nbits % 8 != 0) throw InputError("keystream length must be a multiple of 8 bits");
}

ScheduleTable make_schedule() {
  ScheduleTable t{};
  constexpr std::size_t R = EChaChaState::kRows;
  constexpr std::size_t C = EChaChaState::kCols;
  for (std::size_t row = 0; row < R; ++row) {
    for (std::size_t c = 0; c < C; ++c) t[row][c] = row * C + c;
  }
  for (std::size_t k = 0; k < R; ++k) {
    for (std::size_t c = 0; c < C; ++c) t[R + k][c] = ((k + c) % R) * C + c;
  }
  return t;
}

}  // namespace

Word32 rotl32(Word32 x, unsigned r) {
  if (r > 31) throw std::out_of_range("rotation amount must be in 0..31");
  return rotl32_unchecked(x, r);
}

Word32 Key256::word(std::size_t i) const { return load_le32(bytes.data() + 4 * i); }

Key256 Key256::from_words(std::span<const Word32, 8> words) {
  Key256 k;
  for (std::size_t i = 0; i < 8; ++i) store_le32(k.bytes.data() + 4 * i, words[i]);
  return k;
}

Key256 Key256::from_hex(const std::string& hex) { return {fixed_from_hex<32>(hex, "key")}; }
std::string Key256::hex() const { return to_hex(bytes); }

Word32 Nonce128::word(std::size_t i) const { return load_le32(bytes.data() + 4 * i); }
Nonce128 Nonce128::from_hex(const std::string& hex) { return {fixed_from_hex<16>(hex, "nonce")}; }
std::string Nonce128::hex() const { return to_hex(bytes); }

RoundCount::RoundCount(int r) : r_(r) {
  if (r < 2 || r % 2 != 0) {
    throw ConfigError("round count must be even and >= 2, got " + std::to_string(r));
  }
}

Qr6Words echacha_qr6(const Qr6Words& y) noexcept {
  Qr6Words z{};
  z[1] = y[1] ^ rotl32_unchecked(y[0] + y[5], 2);
  z[2] = y[2] ^ rotl32_unchecked(z[1] + y[3], 4);
  z[3] = y[3] ^ rotl32_unchecked(z[2] + y[4], 7);
  z[4] = y[4] ^ rotl32_unchecked(z[3] + y[0], 8);
  z[5] = y[5] ^ rotl32_unchecked(z[4] + z[1], 12);
  z[0] = y[0] ^ rotl32_unchecked(z[5] + z[2], 16);
  return z;
}

const std::array<Word32, 10>& echacha_constants() {
  static const std::array<Word32, 10> constants = [] {
    static constexpr char kSigma[] = "expand 40-byte key extended state!!";
    constexpr std::size_t len = sizeof(kSigma) - 1;
    std::array<std::uint8_t, 40> raw{};
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<std::uint8_t>(kSigma[i % len]);
    std::array<Word32, 10> c{};
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = load_le32(raw.data() + 4 * i);
    return c;
  }();
  return constants;
}

const ScheduleTable& echacha_schedule() {
  static const ScheduleTable table = make_schedule();
  return table;
}

EChaChaState EChaChaState::initial(const Key256& key, const Nonce128& nonce, std::uint64_t counter) {
  const auto& c = echacha_constants();
  EChaChaState s;
  for (std::size_t i = 0; i < 6; ++i) s.words[i] = c[i];
  for (std::size_t i = 0; i < 8; ++i) s.words[6 + i] = key.word(i);
  for (std::size_t i = 0; i < 4; ++i) s.words[14 + i] = nonce.word(i);
  s.words[18] = static_cast<Word32>(counter);
  s.words[19] = static_cast<Word32>(counter >> 32);
  for (std::size_t i = 0; i < 4; ++i) s.words[20 + i] = c[6 + i];
  return s;
}

EChaChaState echacha_round_pair(const EChaChaState& state) noexcept {
  EChaChaState s = state;
  for (const auto& idx : echacha_schedule()) {
    Qr6Words in;
    for (std::size_t j = 0; j < 6; ++j) in[j] = s.words[idx[j]];
    const auto out = echacha_qr6(in);
    for (std::size_t j = 0; j < 6; ++j) s.words[idx[j]] = out[j];
  }
  return s;
}

EChaChaBlock echacha_block(const Key256& key, const Nonce128& nonce, std::uint64_t counter,
                           RoundCount rounds) {
  const auto init = EChaChaState::initial(key, nonce, counter);
  auto s = init;
  for (int i = 0; i < rounds.pairs(); ++i) s = echacha_round_pair(s);
  EChaChaBlock out{};
  for (std::size_t i = 0; i < EChaChaState::kWords; ++i) {
    store_le32(out.data() + 4 * i, s.words[i] + init.words[i]);
  }
  return out;
}

std::string to_string(Generator g) {
  switch (g) {
    case Generator::echacha20: return "echacha20";
    case Generator::chacha20: return "chacha20";
    case Generator::urandom: return "urandom";
  }
  return "unknown";
}

Generator generator_from_string(const std::string& s) {
  if (s == "echacha20") return Generator::echacha20;
  if (s == "chacha20") return Generator::chacha20;
  if (s == "urandom") return Generator::urandom;
  throw ConfigError("unknown generator '" + s + "'");
}

Keystream echacha_keystream(const Key256& key, const Nonce128& nonce, RoundCount rounds,
                            std::size_t nbits) {
  check_nbits(nbits);
  Keystream ks;
  ks.n_bits = nbits;
  ks.generator = Generator::echacha20;
  ks.rounds = rounds.value();
  const std::size_t nbytes = nbits / 8;
  ks.bytes.reserve(nbytes + EChaChaState::kBlockBytes);
  for (std::uint64_t counter = 0; ks.bytes.size() < nbytes; ++counter) {
    const auto block = echacha_block(key, nonce, counter, rounds);
    ks.bytes.insert(ks.bytes.end(), block.begin(), block.end());
  }
  ks.bytes.resize(nbytes);
  return ks;
}

ChaChaWords chacha_quarter_round(const ChaChaWords& w) noexcept {
  auto [a, b, c, d] = w;
  a += b; d ^= a; d = rotl32_unchecked(d, 16);
  c += d; b ^= c; b = rotl32_unchecked(b, 12);
  a += b; d ^= a; d = rotl32_unchecked(d, 8);
  c += d; b ^= c; b = rotl32_unchecked(b, 7);
  return {a, b, c, d};
}

ChaChaBlock chacha20_block(const Key256& key, const Nonce96& nonce, std::uint32_t counter,
                           RoundCount rounds) {
  std::array<Word32, 16> init{0x61707865, 0x3320646e, 0x79622d32, 0x6b206574};
  for (std::size_t i = 0; i < 8; ++i) init[4 + i] = key.word(i);
  init[12] = counter;
  for (std::size_t i = 0; i < 3; ++i) init[13 + i] = load_le32(nonce.data() + 4 * i);

  static constexpr std::array<std::array<std::size_t, 4>, 8> kIdx{{
      {0, 4, 8, 12}, {1, 5, 9, 13}, {2, 6, 10, 14}, {3, 7, 11, 15},
      {0, 5, 10, 15}, {1, 6, 11, 12}, {2, 7, 8, 13}, {3, 4, 9, 14},
  }};
  auto s = init;
  for (int pair = 0; pair < rounds.pairs(); ++pair) {
    for (const auto& idx : kIdx) {
      const auto out = chacha_quarter_round({s[idx[0]], s[idx[1]], s[idx[2]], s[idx[3]]});
      for (std::size_t j = 0; j < 4; ++j) s[idx[j]] = out[j];
    }
  }
  ChaChaBlock out{};
  for (std::size_t i = 0; i < 16; ++i) store_le32(out.data() + 4 * i, s[i] + init[i]);
  return out;
}

Nonce96 truncate_nonce(const Nonce128& nonce) {
  Nonce96 n{};
  std::copy_n(nonce.bytes.begin(), n.size(), n.begin());
  return n;
}

Keystream chacha20_keystream(const Key256& key, const Nonce96& nonce, RoundCount rounds,
                             std::size_t nbits, std::uint32_t first_counter) {
  check_nbits(nbits);
  Keystream ks;
  ks.n_bits = nbits;
  ks.generator = Generator::chacha20;
  ks.rounds = rounds.value();
  const std::size_t nbytes = nbits / 8;
  if ((nbytes + 63) / 64 > (std::uint64_t{1} << 32) - first_counter) {
    throw InputError("keystream length exceeds the 32-bit block counter");
  }
  ks.bytes.reserve(nbytes + 64);
  for (std::uint32_t counter = first_counter; ks.bytes.size() < nbytes; ++counter) {
    const auto block = chacha20_block(key, nonce, counter, rounds);
    ks.bytes.insert(ks.bytes.end(), block.begin(), block.end());
  }
  ks.bytes.resize(nbytes);
  return ks;
}

std::vector<std::uint8_t> xor_combine(const Keystream& ks, std::span<const std::uint8_t> data) {
  if (ks.bytes.size() < data.size()) {
    throw InputError("keystream shorter than data (" + std::to_string(ks.bytes.size()) +
                     " < " + std::to_string(data.size()) + " bytes)");
  }
  std::vector<std::uint8_t> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = data[i] ^ ks.bytes[i];
  return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 0xf]);
  }
  return s;
}

std::vector<std::uint8_t> from_hex(const std::string& hex) {
  if (hex.size() % 2 != 0) throw InputError("hex string has odd length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw InputError(std::string("invalid hex digit '") + c + "'");
  };
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return out;
}

}  // namespace nsc

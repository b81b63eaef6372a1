// ARX keystream generators: a round-parameterized extended ChaCha variant
// with a 24-word state and six-word quarter round, plus reference ChaCha20.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsc {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Word32 = std::uint32_t;

constexpr Word32 rotl32_unchecked(Word32 x, unsigned r) noexcept {
  return (x << (r & 31u)) | (x >> ((32u - r) & 31u));
}

// Circular left rotation. Throws std::out_of_range for r > 31.
Word32 rotl32(Word32 x, unsigned r);

struct Key256 {
  std::array<std::uint8_t, 32> bytes{};

  // Little-endian word i of the key.
  Word32 word(std::size_t i) const;
  static Key256 from_words(std::span<const Word32, 8> words);
  static Key256 from_hex(const std::string& hex);
  std::string hex() const;
  bool operator==(const Key256&) const = default;
};

struct Nonce128 {
  std::array<std::uint8_t, 16> bytes{};

  Word32 word(std::size_t i) const;
  static Nonce128 from_hex(const std::string& hex);
  std::string hex() const;
  bool operator==(const Nonce128&) const = default;
};

// Number of single rounds (row or diagonal). Must be even and >= 2.
class RoundCount {
 public:
  explicit RoundCount(int r);
  int value() const noexcept { return r_; }
  int pairs() const noexcept { return r_ / 2; }

 private:
  int r_;
};

inline constexpr int kFullRounds = 20;

// Six-word extended quarter round. Rotation schedule (2,4,7,8,12,16);
// z1 is computed first and z0 last, each step consuming the freshest words.
using Qr6Words = std::array<Word32, 6>;
Qr6Words echacha_qr6(const Qr6Words& y) noexcept;
inline constexpr std::array<unsigned, 6> kQr6Rotations{2, 4, 7, 8, 12, 16};

// 4 rows x 6 columns, row-major. Layout:
//   0..5   constants C0..C5
//   6..13  key words 0..7
//   14..17 nonce words 0..3
//   18,19  block counter (low, high)
//   20..23 constants C6..C9
struct EChaChaState {
  static constexpr std::size_t kRows = 4;
  static constexpr std::size_t kCols = 6;
  static constexpr std::size_t kWords = kRows * kCols;
  static constexpr std::size_t kBlockBytes = kWords * 4;

  std::array<Word32, kWords> words{};

  static EChaChaState initial(const Key256& key, const Nonce128& nonce, std::uint64_t counter);
  std::uint64_t counter() const noexcept {
    return static_cast<std::uint64_t>(words[18]) | (static_cast<std::uint64_t>(words[19]) << 32);
  }
  bool operator==(const EChaChaState&) const = default;
};

// Ten little-endian words taken from "expand 40-byte key extended state!!"
// extended cyclically to 40 bytes.
const std::array<Word32, 10>& echacha_constants();

// Word indices fed to QR6 for the row round (first 4 entries) and the
// diagonal round (last 4 entries). Diagonal k takes column c from row
// (k + c) mod 4, so each column contributes one word to every diagonal.
using ScheduleTable = std::array<std::array<std::size_t, 6>, 8>;
const ScheduleTable& echacha_schedule();

// One row round followed by one diagonal round.
EChaChaState echacha_round_pair(const EChaChaState& state) noexcept;

using EChaChaBlock = std::array<std::uint8_t, EChaChaState::kBlockBytes>;
EChaChaBlock echacha_block(const Key256& key, const Nonce128& nonce, std::uint64_t counter,
                           RoundCount rounds);

enum class Generator { echacha20, chacha20, urandom };
std::string to_string(Generator g);
Generator generator_from_string(const std::string& s);

// Packed keystream bytes; bit order inside a byte is MSB first.
struct Keystream {
  std::vector<std::uint8_t> bytes;
  std::size_t n_bits = 0;
  Generator generator = Generator::echacha20;
  int rounds = kFullRounds;
  std::uint64_t sequence_index = 0;
};

// Blocks with counter 0, 1, 2, ... concatenated and truncated to nbits.
Keystream echacha_keystream(const Key256& key, const Nonce128& nonce, RoundCount rounds,
                            std::size_t nbits);

// Reference ChaCha20 (16-word state, column/diagonal double rounds).
using ChaChaWords = std::array<Word32, 4>;
ChaChaWords chacha_quarter_round(const ChaChaWords& w) noexcept;

using ChaChaBlock = std::array<std::uint8_t, 64>;
using Nonce96 = std::array<std::uint8_t, 12>;
ChaChaBlock chacha20_block(const Key256& key, const Nonce96& nonce, std::uint32_t counter,
                           RoundCount rounds = RoundCount(kFullRounds));

// 96-bit nonce taken as the first 12 bytes of a 128-bit nonce.
Nonce96 truncate_nonce(const Nonce128& nonce);

Keystream chacha20_keystream(const Key256& key, const Nonce96& nonce, RoundCount rounds,
                             std::size_t nbits, std::uint32_t first_counter = 0);

// Bytewise XOR of data with the keystream prefix.
std::vector<std::uint8_t> xor_combine(const Keystream& ks, std::span<const std::uint8_t> data);

std::string to_hex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> from_hex(const std::string& hex);

}  // namespace nsc

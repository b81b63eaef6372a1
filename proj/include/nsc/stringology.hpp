// Keystreams as binary strings: exact matching, m-gram statistics, and the
// feature map from a bit string to a fixed-dimension real vector.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nsc/cipher.hpp"

namespace nsc {

// Bit sequence with O(1) indexing. Storage is packed MSB-first, matching
// Keystream byte order.
class BitString {
 public:
  BitString() = default;
  BitString(std::vector<std::uint8_t> packed, std::size_t n_bits);
  static BitString from_bytes(std::span<const std::uint8_t> bytes);
  static BitString from_keystream(const Keystream& ks);
  // Accepts '0'/'1' characters only.
  static BitString from_text(std::string_view text);
  static BitString from_bits(std::span<const std::uint8_t> bits);

  std::size_t size() const noexcept { return n_; }
  bool empty() const noexcept { return n_ == 0; }
  int operator[](std::size_t i) const noexcept { return (bytes_[i >> 3] >> (7 - (i & 7))) & 1; }
  // Bits [i, i+len) as an integer, first bit most significant. len <= 64.
  std::uint64_t window(std::size_t i, unsigned len) const noexcept;
  const std::vector<std::uint8_t>& packed() const noexcept { return bytes_; }
  std::string to_text() const;
  bool operator==(const BitString&) const = default;

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t n_ = 0;
};

using Pattern = BitString;

// Overlapping occurrences of p in s.
std::size_t count_occurrences(const Pattern& p, const BitString& s);

// Match start positions (0-based, increasing).
std::vector<std::size_t> naive_search(const Pattern& p, const BitString& s);
std::vector<std::size_t> kmp_search(const Pattern& p, const BitString& s);
// Boyer-Moore-Horspool over the packed byte alphabet: each byte phase of the
// pattern is matched against the text's bytes, then candidates are verified
// bitwise. Patterns shorter than 16 bits fall back to KMP.
std::vector<std::size_t> bm_search(const Pattern& p, const BitString& s);

struct NgramHistogram {
  unsigned m = 0;
  std::uint64_t windows = 0;
  std::vector<std::uint64_t> dense;                        // m <= 8
  std::unordered_map<std::uint32_t, std::uint64_t> sparse;  // m > 8

  std::uint64_t count(std::uint32_t value) const;
  std::size_t distinct() const;
  std::uint64_t max_count() const;
  bool is_dense() const noexcept { return !dense.empty(); }
  template <typename F>
  void for_each_nonzero(F&& f) const {
    if (is_dense()) {
      for (std::size_t v = 0; v < dense.size(); ++v) {
        if (dense[v] != 0) f(static_cast<std::uint32_t>(v), dense[v]);
      }
    } else {
      for (const auto& [v, c] : sparse) f(v, c);
    }
  }
};

inline constexpr std::array<unsigned, 3> kNgramLengths{8, 16, 32};

// Stride-1 windows. m must be one of 8, 16, 32.
NgramHistogram ngram_histogram(const BitString& s, unsigned m);
// Same counting for any 1 <= m <= 32 (dense for m <= 8).
NgramHistogram window_histogram(const BitString& s, unsigned m);

double chi_square_uniform(const NgramHistogram& h);
double shannon_entropy(const NgramHistogram& h);

struct CollisionStats {
  double distinct_ratio = 0.0;
  std::uint64_t max_multiplicity = 0;
};
CollisionStats collision_stats(const BitString& s, unsigned m);
CollisionStats collision_stats(const NgramHistogram& h);

std::size_t longest_repeated_substring(const BitString& s);

inline constexpr std::array<std::size_t, 8> kCorrelationLags{1, 2, 4, 7, 8, 12, 16, 32};
double serial_correlation(const BitString& s, std::size_t lag);

struct BlockDensity {
  std::vector<double> fractions;
  double variance = 0.0;
  double min = 0.0;
  double max = 0.0;
};
BlockDensity block_density(const BitString& s, std::size_t blocks);

struct FeatureGroup {
  std::string name;
  std::size_t dim;
};

struct FeatureSchema {
  std::string version;
  std::vector<FeatureGroup> groups;

  std::size_t dimension() const;
  // Offset of the first feature in the named group.
  std::size_t offset(std::string_view group) const;
  static const FeatureSchema& v1();
  static const FeatureSchema& by_version(const std::string& version);
};

inline constexpr std::size_t kMinFeatureBits = std::size_t{1} << 12;
inline constexpr std::size_t kDensityBlocks = 64;

struct FeatureVector {
  std::vector<double> values;
  std::string schema_version;
  std::string source;
};

FeatureVector extract_features(const BitString& s, const FeatureSchema& schema,
                               std::string source = {});

}  // namespace nsc

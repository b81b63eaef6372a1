#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "nsc/stringology.hpp"

using namespace nsc;

namespace {

BitString bits(const char* text) { return BitString::from_text(text); }

BitString random_bits(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::uint8_t> v(n);
  for (auto& b : v) b = static_cast<std::uint8_t>(rng() & 1);
  return BitString::from_bits(v);
}

BitString alternating(std::size_t n) {
  std::string t;
  for (std::size_t i = 0; i < n; ++i) t += (i % 2 == 0) ? '0' : '1';
  return BitString::from_text(t);
}

std::size_t brute_longest_repeat(const std::string& s) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      std::size_t k = 0;
      while (j + k < s.size() && s[i + k] == s[j + k]) ++k;
      best = std::max(best, k);
    }
  }
  return best;
}

std::map<std::uint64_t, std::uint64_t> brute_windows(const std::string& s, unsigned m) {
  std::map<std::uint64_t, std::uint64_t> out;
  for (std::size_t i = 0; i + m <= s.size(); ++i) ++out[std::stoull(s.substr(i, m), nullptr, 2)];
  return out;
}

}  // namespace

TEST(BitString, TextRoundTripAndWindows) {
  const auto s = bits("1011001110001111010");
  EXPECT_EQ(s.size(), 19u);
  EXPECT_EQ(s.to_text(), "1011001110001111010");
  EXPECT_EQ(s.window(0, 4), 0b1011u);
  EXPECT_EQ(s.window(3, 8), 0b10011100u);
  EXPECT_THROW(BitString::from_text("10a"), std::invalid_argument);

  std::mt19937_64 rng(5);
  const auto r = random_bits(rng, 300);
  const auto text = r.to_text();
  for (unsigned len : {1u, 7u, 33u, 64u}) {
    for (std::size_t i = 0; i + len <= r.size(); i += 13) {
      std::uint64_t want = 0;
      for (unsigned k = 0; k < len; ++k) want = (want << 1) | static_cast<std::uint64_t>(text[i + k] - '0');
      ASSERT_EQ(r.window(i, len), want);
    }
  }
}

TEST(BitString, KeystreamBitOrderIsMsbFirst) {
  Keystream ks;
  ks.bytes = {0x80, 0x01};
  ks.n_bits = 16;
  EXPECT_EQ(BitString::from_keystream(ks).to_text(), "1000000000000001");
}

TEST(Search, DocumentedCases) {
  EXPECT_EQ(count_occurrences(bits("101"), bits("10101")), 2u);
  EXPECT_EQ(count_occurrences(bits("10101"), bits("101")), 0u);
  EXPECT_EQ(naive_search(bits("101"), bits("10101")), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(kmp_search(bits("101"), bits("10101")), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(bm_search(bits("101"), bits("10101")), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(kmp_search(bits("0110"), bits("0110")), (std::vector<std::size_t>{0}));
  EXPECT_TRUE(kmp_search(bits("11"), bits("000000")).empty());
  EXPECT_EQ(bm_search(bits("1"), bits("0110")), (std::vector<std::size_t>{1, 2}));
  EXPECT_THROW(kmp_search(BitString{}, bits("01")), InputError);
  EXPECT_THROW(bm_search(BitString{}, bits("01")), InputError);
}

TEST(Search, MatchersAgreeOnRandomInputs) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = 1 + rng() % 2048;
    // Low-entropy texts make long patterns actually occur.
    const bool biased = rng() % 2;
    std::vector<std::uint8_t> tv(n);
    for (auto& b : tv) b = biased ? static_cast<std::uint8_t>(rng() % 8 == 0) : static_cast<std::uint8_t>(rng() & 1);
    const auto text = BitString::from_bits(tv);
    std::size_t m = 1 + rng() % std::min<std::size_t>(n + 4, 80);
    BitString pat;
    if (m <= n && rng() % 2) {
      const std::size_t at = rng() % (n - m + 1);
      std::vector<std::uint8_t> pv(tv.begin() + static_cast<std::ptrdiff_t>(at),
                                   tv.begin() + static_cast<std::ptrdiff_t>(at + m));
      pat = BitString::from_bits(pv);
    } else {
      pat = random_bits(rng, m);
    }
    const auto want = naive_search(pat, text);
    ASSERT_EQ(kmp_search(pat, text), want);
    ASSERT_EQ(bm_search(pat, text), want);
    ASSERT_EQ(count_occurrences(pat, text), want.size());
  }
}

TEST(Search, RandomTextFrequencyNearTwoToMinusM) {
  std::mt19937_64 rng(17);
  const auto s = random_bits(rng, 1 << 16);
  const double windows = static_cast<double>(s.size() - 8 + 1);
  const double freq = static_cast<double>(count_occurrences(bits("10110010"), s)) / windows;
  EXPECT_NEAR(freq, 1.0 / 256.0, 0.0015);
}

TEST(Ngram, SingleWindowAndMass) {
  const auto h = ngram_histogram(bits("00000000"), 8);
  EXPECT_EQ(h.windows, 1u);
  EXPECT_EQ(h.count(0), 1u);
  EXPECT_THROW(ngram_histogram(bits("0000"), 12), InputError);
  EXPECT_THROW(ngram_histogram(bits("0000"), 8), InputError);

  std::mt19937_64 rng(8);
  for (int t = 0; t < 50; ++t) {
    const auto s = random_bits(rng, 40 + rng() % 400);
    const auto text = s.to_text();
    for (unsigned m : {8u, 16u, 32u}) {
      if (m > s.size()) continue;
      const auto h = ngram_histogram(s, m);
      ASSERT_EQ(h.windows, s.size() - m + 1);
      std::uint64_t mass = 0;
      h.for_each_nonzero([&](std::uint32_t, std::uint64_t c) { mass += c; });
      ASSERT_EQ(mass, h.windows);
      const auto want = brute_windows(text, m);
      ASSERT_EQ(h.distinct(), want.size());
      for (const auto& [v, c] : want) ASSERT_EQ(h.count(static_cast<std::uint32_t>(v)), c);
    }
  }
}

TEST(ChiSquare, ExactExpectationIsZero) {
  NgramHistogram h;
  h.m = 8;
  h.windows = 512;
  h.dense.assign(256, 2);
  EXPECT_DOUBLE_EQ(chi_square_uniform(h), 0.0);
  EXPECT_DOUBLE_EQ(shannon_entropy(h), 8.0);
}

TEST(ChiSquare, AllMassInOneBin) {
  NgramHistogram h;
  h.m = 8;
  h.windows = 256;
  h.dense.assign(256, 0);
  h.dense[17] = 256;
  EXPECT_DOUBLE_EQ(chi_square_uniform(h), 65280.0);
  EXPECT_DOUBLE_EQ(shannon_entropy(h), 0.0);
}

TEST(ChiSquare, ClosedFormMatchesDirectSum) {
  std::mt19937_64 rng(21);
  const auto s = random_bits(rng, 5000);
  for (unsigned m : {8u, 16u, 32u}) {
    const auto h = ngram_histogram(s, m);
    const double e = static_cast<double>(h.windows) / std::ldexp(1.0, static_cast<int>(m));
    double occupied = 0;
    double nonzero_bins = 0;
    h.for_each_nonzero([&](std::uint32_t, std::uint64_t c) {
      occupied += (static_cast<double>(c) - e) * (static_cast<double>(c) - e) / e;
      nonzero_bins += 1;
    });
    const double empty = std::ldexp(1.0, static_cast<int>(m)) - nonzero_bins;
    const double want = occupied + empty * e;
    EXPECT_NEAR(chi_square_uniform(h), want, 1e-6 * std::max(1.0, want));
    EXPECT_GE(chi_square_uniform(h), 0.0);
    EXPECT_LE(shannon_entropy(h), static_cast<double>(m));
  }
}

TEST(Collision, DocumentedCases) {
  const auto one = collision_stats(bits("10110010"), 8);
  EXPECT_DOUBLE_EQ(one.distinct_ratio, 1.0);
  EXPECT_EQ(one.max_multiplicity, 1u);
  for (std::size_t n : {64u, 500u, 4096u}) {
    const auto h = ngram_histogram(alternating(n), 8);
    EXPECT_EQ(h.distinct(), 2u);
  }
  std::mt19937_64 rng(4);
  const auto s = random_bits(rng, 3000);
  const auto c = collision_stats(s, 8);
  EXPECT_GE(static_cast<double>(c.max_multiplicity), std::ceil((3000.0 - 7.0) / 256.0));
}

TEST(LongestRepeat, DocumentedCases) {
  EXPECT_EQ(longest_repeated_substring(bits("0101")), 2u);
  EXPECT_EQ(longest_repeated_substring(bits("01")), 0u);
  EXPECT_EQ(longest_repeated_substring(bits("0000000000")), 9u);
  EXPECT_THROW(longest_repeated_substring(bits("1")), InputError);
}

TEST(LongestRepeat, MatchesBruteForce) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng() % 255;
    const auto s = (t % 3 == 0) ? BitString::from_bits([&] {
      std::vector<std::uint8_t> v(n);
      for (auto& b : v) b = static_cast<std::uint8_t>(rng() % 10 == 0);
      return v;
    }())
                                : random_bits(rng, n);
    ASSERT_EQ(longest_repeated_substring(s), brute_longest_repeat(s.to_text())) << s.to_text();
  }
}

TEST(SerialCorrelation, AlternatingString) {
  const auto s = alternating(1000);
  EXPECT_NEAR(serial_correlation(s, 1), -1.0, 1e-12);
  EXPECT_NEAR(serial_correlation(s, 2), 1.0, 1e-12);
  EXPECT_EQ(kCorrelationLags, (std::array<std::size_t, 8>{1, 2, 4, 7, 8, 12, 16, 32}));
  EXPECT_THROW(serial_correlation(s, 0), InputError);
}

TEST(BlockDensity, DocumentedCases) {
  const auto ones = block_density(bits("11111111"), 4);
  for (double f : ones.fractions) EXPECT_DOUBLE_EQ(f, 1.0);
  EXPECT_DOUBLE_EQ(ones.variance, 0.0);
  const auto half = block_density(bits("00001111"), 2);
  EXPECT_EQ(half.fractions, (std::vector<double>{0.0, 1.0}));
  EXPECT_DOUBLE_EQ(half.variance, 0.25);
  EXPECT_DOUBLE_EQ(half.min, 0.0);
  EXPECT_DOUBLE_EQ(half.max, 1.0);
}

TEST(Features, SchemaV1) {
  const auto& schema = FeatureSchema::v1();
  EXPECT_EQ(schema.dimension(), 280u);
  EXPECT_EQ(schema.offset("ngram_statistics"), 256u);
  EXPECT_EQ(schema.offset("block_density"), 277u);
  EXPECT_THROW(FeatureSchema::by_version("v9"), ConfigError);
}

TEST(Features, ExtractionShapeAndNormalization) {
  std::mt19937_64 rng(13);
  const auto s = random_bits(rng, 8192);
  const auto fv = extract_features(s, FeatureSchema::v1(), "probe");
  ASSERT_EQ(fv.values.size(), 280u);
  EXPECT_EQ(fv.schema_version, "v1");
  const double mass = std::accumulate(fv.values.begin(), fv.values.begin() + 256, 0.0);
  EXPECT_NEAR(mass, 1.0, 1e-9);
  for (double v : fv.values) EXPECT_TRUE(std::isfinite(v));
  // Entropy ratios for m = 8, 16, 32 sit at positions 1, 5, 9 of the statistics group.
  for (std::size_t k : {1u, 5u, 9u}) {
    EXPECT_GT(fv.values[256 + k], 0.0);
    EXPECT_LE(fv.values[256 + k], 1.0);
  }
  EXPECT_EQ(fv.values, extract_features(s, FeatureSchema::v1()).values);
  EXPECT_THROW(extract_features(random_bits(rng, 1024), FeatureSchema::v1()), std::invalid_argument);
}

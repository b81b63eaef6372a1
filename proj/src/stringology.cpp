#include "nsc/stringology.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace nsc {
namespace {

void require_pattern(const Pattern& p) {
  if (p.empty()) throw InputError("pattern must be non-empty");
}

// Bits [a, a+len) and [b, b+len) of s and t are equal.
bool equal_ranges(const BitString& s, std::size_t a, const BitString& t, std::size_t b,
                  std::size_t len) {
  std::size_t k = 0;
  for (; k + 64 <= len; k += 64) {
    if (s.window(a + k, 64) != t.window(b + k, 64)) return false;
  }
  if (k < len) {
    const auto rest = static_cast<unsigned>(len - k);
    if (s.window(a + k, rest) != t.window(b + k, rest)) return false;
  }
  return true;
}

std::vector<std::size_t> prefix_function(const Pattern& p) {
  std::vector<std::size_t> pi(p.size(), 0);
  for (std::size_t i = 1, k = 0; i < p.size(); ++i) {
    while (k > 0 && p[i] != p[k]) k = pi[k - 1];
    if (p[i] == p[k]) ++k;
    pi[i] = k;
  }
  return pi;
}

// Horspool over bytes. Appends every byte offset where `needle` occurs.
void horspool_bytes(std::span<const std::uint8_t> needle, std::span<const std::uint8_t> hay,
                    std::vector<std::size_t>& hits) {
  const std::size_t k = needle.size();
  if (k == 0 || k > hay.size()) return;
  std::array<std::size_t, 256> shift;
  shift.fill(k);
  for (std::size_t i = 0; i + 1 < k; ++i) shift[needle[i]] = k - 1 - i;
  std::size_t pos = 0;
  while (pos + k <= hay.size()) {
    std::size_t j = k;
    while (j > 0 && hay[pos + j - 1] == needle[j - 1]) --j;
    if (j == 0) hits.push_back(pos);
    pos += shift[hay[pos + k - 1]];
  }
}

constexpr std::uint64_t kHashMod = (std::uint64_t{1} << 61) - 1;

std::uint64_t mulmod(std::uint64_t a, std::uint64_t b) {
  const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  std::uint64_t r = static_cast<std::uint64_t>(p & kHashMod) + static_cast<std::uint64_t>(p >> 61);
  if (r >= kHashMod) r -= kHashMod;
  return r;
}

// True if some substring of length len occurs at two distinct positions.
bool has_repeat(const BitString& s, std::size_t len) {
  if (len == 0) return true;
  const std::size_t n = s.size();
  if (len >= n) return false;
  constexpr std::uint64_t kBase = 1000003;
  std::uint64_t top = 1;
  for (std::size_t i = 0; i < len; ++i) top = mulmod(top, kBase);

  std::vector<std::pair<std::uint64_t, std::size_t>> hashes;
  hashes.reserve(n - len + 1);
  std::uint64_t h = 0;
  for (std::size_t i = 0; i < n; ++i) {
    h = mulmod(h, kBase) + static_cast<std::uint64_t>(s[i] + 1);
    if (h >= kHashMod) h -= kHashMod;
    if (i >= len) {
      const std::uint64_t drop = mulmod(top, static_cast<std::uint64_t>(s[i - len] + 1));
      h = h >= drop ? h - drop : h + kHashMod - drop;
    }
    if (i + 1 >= len) hashes.emplace_back(h, i + 1 - len);
  }
  std::sort(hashes.begin(), hashes.end());
  for (std::size_t g = 0; g < hashes.size();) {
    std::size_t e = g + 1;
    while (e < hashes.size() && hashes[e].first == hashes[g].first) ++e;
    for (std::size_t a = g; a < e; ++a) {
      for (std::size_t b = a + 1; b < e; ++b) {
        if (equal_ranges(s, hashes[a].second, s, hashes[b].second, len)) return true;
      }
    }
    g = e;
  }
  return false;
}

}  // namespace

BitString::BitString(std::vector<std::uint8_t> packed, std::size_t n_bits)
    : bytes_(std::move(packed)), n_(n_bits) {
  if (bytes_.size() * 8 < n_) throw InputError("packed storage shorter than bit length");
  bytes_.resize((n_ + 7) / 8);
  if (n_ % 8 != 0) bytes_.back() &= static_cast<std::uint8_t>(0xFF << (8 - n_ % 8));
}

BitString BitString::from_bytes(std::span<const std::uint8_t> bytes) {
  return BitString({bytes.begin(), bytes.end()}, bytes.size() * 8);
}

BitString BitString::from_keystream(const Keystream& ks) { return BitString(ks.bytes, ks.n_bits); }

BitString BitString::from_text(std::string_view text) {
  std::vector<std::uint8_t> packed((text.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '1') {
      packed[i >> 3] |= static_cast<std::uint8_t>(0x80 >> (i & 7));
    } else if (text[i] != '0') {
      throw InputError("bit text may only contain '0' and '1'");
    }
  }
  return BitString(std::move(packed), text.size());
}

BitString BitString::from_bits(std::span<const std::uint8_t> bits) {
  std::vector<std::uint8_t> packed((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] & 1) packed[i >> 3] |= static_cast<std::uint8_t>(0x80 >> (i & 7));
  }
  return BitString(std::move(packed), bits.size());
}

std::uint64_t BitString::window(std::size_t i, unsigned len) const noexcept {
  if (len == 0) return 0;
  const std::size_t b = i >> 3;
  const unsigned o = static_cast<unsigned>(i & 7);
  unsigned __int128 acc = 0;
  for (std::size_t k = 0; k < 9; ++k) {
    acc = (acc << 8) | (b + k < bytes_.size() ? bytes_[b + k] : 0u);
  }
  const auto v = static_cast<std::uint64_t>(acc >> (72 - o - len));
  return len == 64 ? v : v & ((std::uint64_t{1} << len) - 1);
}

std::string BitString::to_text() const {
  std::string t(n_, '0');
  for (std::size_t i = 0; i < n_; ++i) t[i] = (*this)[i] ? '1' : '0';
  return t;
}

std::size_t count_occurrences(const Pattern& p, const BitString& s) {
  require_pattern(p);
  const std::size_t m = p.size();
  if (m > s.size()) return 0;
  std::size_t count = 0;
  if (m <= 64) {
    const auto target = p.window(0, static_cast<unsigned>(m));
    const std::uint64_t mask = m == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << m) - 1;
    std::uint64_t v = s.window(0, static_cast<unsigned>(m));
    for (std::size_t i = 0;; ++i) {
      if (v == target) ++count;
      if (i + m >= s.size()) break;
      v = ((v << 1) | static_cast<std::uint64_t>(s[i + m])) & mask;
    }
    return count;
  }
  return kmp_search(p, s).size();
}

std::vector<std::size_t> naive_search(const Pattern& p, const BitString& s) {
  require_pattern(p);
  std::vector<std::size_t> out;
  if (p.size() > s.size()) return out;
  for (std::size_t i = 0; i + p.size() <= s.size(); ++i) {
    std::size_t j = 0;
    while (j < p.size() && s[i + j] == p[j]) ++j;
    if (j == p.size()) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> kmp_search(const Pattern& p, const BitString& s) {
  require_pattern(p);
  std::vector<std::size_t> out;
  const std::size_t m = p.size();
  if (m > s.size()) return out;
  const auto pi = prefix_function(p);
  for (std::size_t i = 0, k = 0; i < s.size(); ++i) {
    while (k > 0 && s[i] != p[k]) k = pi[k - 1];
    if (s[i] == p[k]) ++k;
    if (k == m) {
      out.push_back(i + 1 - m);
      k = pi[k - 1];
    }
  }
  return out;
}

std::vector<std::size_t> bm_search(const Pattern& p, const BitString& s) {
  require_pattern(p);
  const std::size_t m = p.size();
  const std::size_t n = s.size();
  if (m > n) return {};
  if (m < 16) return kmp_search(p, s);

  // Only whole text bytes can contain a whole pattern byte.
  const std::span<const std::uint8_t> hay(s.packed().data(), n / 8);
  std::vector<std::size_t> out;
  std::vector<std::size_t> hits;
  std::vector<std::uint8_t> needle;
  for (std::size_t phase = 0; phase < 8; ++phase) {
    // A match starting at bit 8q + phase has its first whole byte at q + lead.
    const std::size_t skip = (8 - phase) % 8;
    const std::size_t lead = phase == 0 ? 0 : 1;
    const std::size_t whole = (m - skip) / 8;
    needle.resize(whole);
    for (std::size_t j = 0; j < whole; ++j) {
      needle[j] = static_cast<std::uint8_t>(p.window(skip + 8 * j, 8));
    }
    hits.clear();
    horspool_bytes(needle, hay, hits);
    for (auto byte_pos : hits) {
      if (byte_pos < lead) continue;
      const std::size_t start = 8 * (byte_pos - lead) + phase;
      if (start + m > n) continue;
      // Head bits before the first whole byte and the tail after the last.
      if (!equal_ranges(s, start, p, 0, skip)) continue;
      const std::size_t tail_from = skip + 8 * whole;
      if (!equal_ranges(s, start + tail_from, p, tail_from, m - tail_from)) continue;
      out.push_back(start);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t NgramHistogram::count(std::uint32_t value) const {
  if (is_dense()) return value < dense.size() ? dense[value] : 0;
  const auto it = sparse.find(value);
  return it == sparse.end() ? 0 : it->second;
}

std::size_t NgramHistogram::distinct() const {
  if (is_dense()) {
    return static_cast<std::size_t>(
        std::count_if(dense.begin(), dense.end(), [](auto c) { return c != 0; }));
  }
  return sparse.size();
}

std::uint64_t NgramHistogram::max_count() const {
  std::uint64_t best = 0;
  for_each_nonzero([&](std::uint32_t, std::uint64_t c) { best = std::max(best, c); });
  return best;
}

NgramHistogram window_histogram(const BitString& s, unsigned m) {
  if (m == 0 || m > 32) throw InputError("window length must be in 1..32");
  if (m > s.size()) throw InputError("window length exceeds string length");
  NgramHistogram h;
  h.m = m;
  h.windows = s.size() - m + 1;
  if (m <= 8) {
    h.dense.assign(std::size_t{1} << m, 0);
  } else {
    h.sparse.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(h.windows, 1u << 20)));
  }
  const std::uint64_t mask = (std::uint64_t{1} << m) - 1;
  std::uint64_t v = s.window(0, m);
  for (std::size_t i = 0;; ++i) {
    if (h.is_dense()) {
      ++h.dense[v];
    } else {
      ++h.sparse[static_cast<std::uint32_t>(v)];
    }
    if (i + m >= s.size()) break;
    v = ((v << 1) | static_cast<std::uint64_t>(s[i + m])) & mask;
  }
  return h;
}

NgramHistogram ngram_histogram(const BitString& s, unsigned m) {
  if (std::find(kNgramLengths.begin(), kNgramLengths.end(), m) == kNgramLengths.end()) {
    throw InputError("m-gram length must be 8, 16 or 32");
  }
  return window_histogram(s, m);
}

double chi_square_uniform(const NgramHistogram& h) {
  if (h.windows == 0) throw InputError("histogram has no windows");
  const double bins = std::ldexp(1.0, static_cast<int>(h.m));
  const double expected = static_cast<double>(h.windows) / bins;
  if (h.m <= 16) {
    double chi = 0.0;
    const auto nbins = static_cast<std::uint32_t>(bins);
    for (std::uint32_t v = 0; v < nbins; ++v) {
      const double d = static_cast<double>(h.count(v)) - expected;
      chi += d * d / expected;
    }
    return chi;
  }
  // Absent bins each contribute `expected`; summing over all bins gives
  // sum(o^2)/e - windows.
  double sum_sq = 0.0;
  h.for_each_nonzero([&](std::uint32_t, std::uint64_t c) {
    sum_sq += static_cast<double>(c) * static_cast<double>(c);
  });
  return std::max(0.0, sum_sq / expected - static_cast<double>(h.windows));
}

double shannon_entropy(const NgramHistogram& h) {
  if (h.windows == 0) throw InputError("histogram has no windows");
  const double total = static_cast<double>(h.windows);
  double entropy = 0.0;
  h.for_each_nonzero([&](std::uint32_t, std::uint64_t c) {
    const double p = static_cast<double>(c) / total;
    entropy -= p * std::log2(p);
  });
  return std::clamp(entropy, 0.0, static_cast<double>(h.m));
}

CollisionStats collision_stats(const NgramHistogram& h) {
  const double cells = std::min(static_cast<double>(h.windows), std::ldexp(1.0, static_cast<int>(h.m)));
  return {static_cast<double>(h.distinct()) / cells, h.max_count()};
}

CollisionStats collision_stats(const BitString& s, unsigned m) {
  return collision_stats(window_histogram(s, m));
}

std::size_t longest_repeated_substring(const BitString& s) {
  if (s.size() < 2) throw InputError("longest repeated substring needs at least 2 bits");
  std::size_t lo = 0;
  std::size_t hi = s.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo + 1) / 2;
    if (has_repeat(s, mid)) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return lo;
}

double serial_correlation(const BitString& s, std::size_t lag) {
  if (lag == 0 || lag >= s.size()) throw InputError("lag must be in 1..n-1");
  const std::size_t pairs = s.size() - lag;
  std::int64_t sx = 0, sy = 0, sxy = 0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const int x = 2 * s[i] - 1;
    const int y = 2 * s[i + lag] - 1;
    sx += x;
    sy += y;
    sxy += x * y;
  }
  const double n = static_cast<double>(pairs);
  const double mx = static_cast<double>(sx) / n;
  const double my = static_cast<double>(sy) / n;
  const double vx = 1.0 - mx * mx;
  const double vy = 1.0 - my * my;
  if (vx <= 0.0 || vy <= 0.0) return 0.0;
  const double cov = static_cast<double>(sxy) / n - mx * my;
  return std::clamp(cov / std::sqrt(vx * vy), -1.0, 1.0);
}

BlockDensity block_density(const BitString& s, std::size_t blocks) {
  if (blocks == 0 || blocks > s.size()) throw InputError("block count must be in 1..n");
  BlockDensity out;
  out.fractions.resize(blocks);
  const std::size_t n = s.size();
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t from = b * n / blocks;
    const std::size_t to = (b + 1) * n / blocks;
    std::size_t ones = 0;
    for (std::size_t i = from; i < to; ++i) ones += static_cast<std::size_t>(s[i]);
    out.fractions[b] = static_cast<double>(ones) / static_cast<double>(to - from);
  }
  const double mean =
      std::accumulate(out.fractions.begin(), out.fractions.end(), 0.0) / static_cast<double>(blocks);
  double var = 0.0;
  for (double f : out.fractions) var += (f - mean) * (f - mean);
  out.variance = var / static_cast<double>(blocks);
  const auto [lo, hi] = std::minmax_element(out.fractions.begin(), out.fractions.end());
  out.min = *lo;
  out.max = *hi;
  return out;
}

std::size_t FeatureSchema::dimension() const {
  std::size_t d = 0;
  for (const auto& g : groups) d += g.dim;
  return d;
}

std::size_t FeatureSchema::offset(std::string_view group) const {
  std::size_t off = 0;
  for (const auto& g : groups) {
    if (g.name == group) return off;
    off += g.dim;
  }
  throw InputError("schema " + version + " has no group '" + std::string(group) + "'");
}

const FeatureSchema& FeatureSchema::v1() {
  static const FeatureSchema schema{
      "v1",
      {{"ngram8_frequencies", 256},
       {"ngram_statistics", 12},
       {"longest_repeat", 1},
       {"serial_correlation", kCorrelationLags.size()},
       {"block_density", 3}}};
  return schema;
}

const FeatureSchema& FeatureSchema::by_version(const std::string& version) {
  if (version == "v1") return v1();
  throw ConfigError("unsupported feature schema '" + version + "'");
}

FeatureVector extract_features(const BitString& s, const FeatureSchema& schema, std::string source) {
  if (schema.version != "v1") throw ConfigError("unsupported feature schema '" + schema.version + "'");
  if (s.size() < kMinFeatureBits) {
    throw InputError("feature extraction needs at least " + std::to_string(kMinFeatureBits) + " bits");
  }
  FeatureVector fv;
  fv.schema_version = schema.version;
  fv.source = std::move(source);
  auto& x = fv.values;
  x.reserve(schema.dimension());

  const double n = static_cast<double>(s.size());
  std::array<NgramHistogram, kNgramLengths.size()> hists;
  for (std::size_t k = 0; k < kNgramLengths.size(); ++k) hists[k] = ngram_histogram(s, kNgramLengths[k]);

  const double w8 = static_cast<double>(hists[0].windows);
  for (auto c : hists[0].dense) x.push_back(static_cast<double>(c) / w8);
  for (const auto& h : hists) {
    const unsigned m = h.m;
    const double bins = std::ldexp(1.0, static_cast<int>(m));
    const double dof = std::min(bins - 1.0, static_cast<double>(h.windows) - 1.0);
    const double chi = chi_square_uniform(h);
    x.push_back(dof > 0 ? (chi - dof) / std::sqrt(2.0 * dof) : 0.0);
    x.push_back(shannon_entropy(h) / m);
    const auto coll = collision_stats(h);
    x.push_back(coll.distinct_ratio);
    const double expected_max = std::max(1.0, static_cast<double>(h.windows) / bins);
    x.push_back(static_cast<double>(coll.max_multiplicity) / expected_max);
  }
  x.push_back(static_cast<double>(longest_repeated_substring(s)) / (2.0 * std::log2(n)));
  for (auto lag : kCorrelationLags) x.push_back(serial_correlation(s, lag));
  const auto density = block_density(s, kDensityBlocks);
  x.push_back(density.variance);
  x.push_back(density.min);
  x.push_back(density.max);

  if (x.size() != schema.dimension()) throw std::logic_error("feature dimension mismatch");
  for (double v : x) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite feature value");
  }
  return fv;
}

}  // namespace nsc

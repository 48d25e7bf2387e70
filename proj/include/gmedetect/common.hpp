// common.hpp
// Shared infrastructure: error taxonomy, the project RNG, seed derivation,
// hashing and little-endian binary I/O.

#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gme {

inline constexpr const char* kToolName = "gmedetect";
inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps these onto its exit-code contract:
//   UsageError -> 1, DataError -> 2, NumericalError -> 3.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CapacityError : DataError {
  using DataError::DataError;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// RNG. Every stochastic operation takes an explicit 64-bit seed; the engine
// is xoshiro256++ seeded through splitmix64. Distributions are implemented
// here (not std::) so that streams are identical across standard libraries.

struct SplitMix64 {
  uint64_t state;
  uint64_t next() {
    uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

class Rng {
 public:
  explicit Rng(uint64_t seed) {
    SplitMix64 sm{seed};
    for (auto& w : s_) w = sm.next();
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  double pick_sign() { return (next_u64() & 1) ? 1.0 : -1.0; }

  // Standard normal via the Marsaglia polar method (no trig, one cached value).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, q;
    do {
      u = uniform(-1.0, 1.0);
      v = uniform(-1.0, 1.0);
      q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    const double f = std::sqrt(-2.0 * std::log(q) / q);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  std::complex<double> normal_complex() {
    const double re = normal();
    const double im = normal();
    return {re, im};
  }

  // Symmetric Dirichlet(1,...,1) over k components.
  std::vector<double> dirichlet(std::size_t k) {
    std::vector<double> x(k);
    double total = 0.0;
    for (auto& v : x) {
      v = -std::log(uniform_pos());
      total += v;
    }
    for (auto& v : x) v /= total;
    return x;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Per-item seed derivation: seed_i = hash(master_seed, i).
inline uint64_t derive_seed(uint64_t master, uint64_t index) {
  SplitMix64 sm{master ^ (index + 1) * 0x9E3779B97F4A7C15ULL};
  return sm.next();
}

// ---------------------------------------------------------------------------
// Hashing (FNV-1a, 64-bit) for provenance hashes and file digests.

inline uint64_t fnv1a64(const void* data, std::size_t size,
                        uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

inline uint64_t file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for digest: " + path.string());
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  return h;
}

// ---------------------------------------------------------------------------
// Little-endian binary I/O. All file formats in this project are
// little-endian float64/uintN regardless of host order.

namespace detail {
template <typename T>
inline T byteswap_integral(T v) {
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
  std::array<unsigned char, sizeof(T)> rev{};
  for (std::size_t i = 0; i < sizeof(T); ++i) rev[i] = bytes[sizeof(T) - 1 - i];
  return std::bit_cast<T>(rev);
}
template <typename T>
inline T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big)
    return byteswap_integral(v);
  else
    return v;
}
}  // namespace detail

class ByteWriter {
 public:
  void u8(uint8_t v) { raw(&v, 1); }
  void i8(int8_t v) { raw(&v, 1); }
  void u16(uint16_t v) { put(v); }
  void u32(uint32_t v) { put(v); }
  void u64(uint64_t v) { put(v); }
  void f64(double v) { put(std::bit_cast<uint64_t>(v)); }
  void f64s(const double* p, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) f64(p[i]);
  }
  void bytes(const void* p, std::size_t count) { raw(p, count); }
  void magic(const char m[4]) { raw(m, 4); }
  const std::string& data() const { return buf_; }

 private:
  template <typename T>
  void put(T v) {
    T le = detail::to_le(v);
    raw(&le, sizeof(T));
  }
  void raw(const void* p, std::size_t count) {
    buf_.append(static_cast<const char*>(p), count);
  }
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const void* data, std::size_t size)
      : p_(static_cast<const unsigned char*>(data)), size_(size) {}
  explicit ByteReader(const std::string& s) : ByteReader(s.data(), s.size()) {}

  uint8_t u8() { return take<uint8_t>(); }
  int8_t i8() { return take<int8_t>(); }
  uint16_t u16() { return take<uint16_t>(); }
  uint32_t u32() { return take<uint32_t>(); }
  uint64_t u64() { return take<uint64_t>(); }
  double f64() { return std::bit_cast<double>(take<uint64_t>()); }
  void f64s(double* out, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) out[i] = f64();
  }
  void expect_magic(const char m[4], const char* what) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, m, 4) != 0)
      throw DataError(std::string("bad magic for ") + what);
  }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  template <typename T>
  T take() {
    T v;
    raw(&v, sizeof(T));
    return detail::to_le(v);
  }
  void raw(void* out, std::size_t count) {
    if (pos_ + count > size_) throw DataError("truncated binary input");
    std::memcpy(out, p_ + pos_, count);
    pos_ += count;
  }
  const unsigned char* p_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

// Atomic file write: write to a temp sibling then rename into place, so a
// partial file is never left behind under the target name.
inline void atomic_write_file(const std::filesystem::path& path,
                              const std::string& bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path() && !path.parent_path().empty())
    fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

inline int env_thread_cap() {
  if (const char* v = std::getenv("GME_DETECT_THREADS")) {
    int n = std::atoi(v);
    if (n >= 1) return n;
  }
  return 0;  // 0 = unlimited (use hardware concurrency)
}

}  // namespace gme

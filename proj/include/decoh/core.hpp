#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace decoh {

using Vec = std::vector<double>;

// Errors carry the module that raised them so the CLI can report provenance.
struct Error : std::runtime_error {
  std::string module;
  Error(std::string mod, const std::string& what) : std::runtime_error(mod + ": " + what), module(std::move(mod)) {}
};
struct ConfigError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};

// Sum of squares in ascending magnitude order.  The result depends only on the
// multiset of |k_i|, so signed permutations of k give bitwise-identical norms.
inline double norm(const Vec& k) {
  double buf[8];
  const std::size_t n = k.size();
  if (n <= 8) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = std::abs(k[i]);
    std::sort(buf, buf + n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += buf[i] * buf[i];
    return std::sqrt(s);
  }
  Vec a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = std::abs(k[i]);
  std::sort(a.begin(), a.end());
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec add(const Vec& a, const Vec& b, double sb = 1.0) {
  Vec c(a);
  for (std::size_t i = 0; i < a.size(); ++i) c[i] += sb * b[i];
  return c;
}

inline Vec scale(const Vec& a, double s) {
  Vec c(a);
  for (auto& x : c) x *= s;
  return c;
}

inline double japanese(double r) { return std::sqrt(1.0 + r * r); }

// Global worker cap, set from --threads.
inline unsigned& thread_cap() {
  static unsigned n = 1;
  return n;
}

// Runs body(i) for i in [0,n) on up to thread_cap() workers.  Work is split into
// contiguous blocks; callers write into per-index slots and reduce in index order,
// so results do not depend on the worker count.
template <class F>
void parallel_for(std::size_t n, F&& body) {
  const unsigned nt = std::max(1u, std::min<unsigned>(thread_cap(), static_cast<unsigned>(n)));
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + nt - 1) / nt;
  for (unsigned t = 0; t < nt; ++t) {
    const std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

// Counter-based generator: output i of stream (seed, stream) is a pure function
// of the triple, so shards can be replayed independently.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t next() { return mix(key_ + 0x9e3779b97f4a7c15ULL * (++ctr_)); }

  // uniform in (0,1)
  double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform(), u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * 3.14159265358979323846 * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Welford mean/variance for complex samples (real and imaginary parts separately).
struct Welford {
  long n = 0;
  double mr = 0, mi = 0, s2r = 0, s2i = 0;
  void add(double re, double im) {
    ++n;
    const double dr = re - mr, di = im - mi;
    mr += dr / n;
    mi += di / n;
    s2r += dr * (re - mr);
    s2i += di * (im - mi);
  }
  void merge(const Welford& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double N = static_cast<double>(n + o.n);
    const double dr = o.mr - mr, di = o.mi - mi;
    mr += dr * o.n / N;
    mi += di * o.n / N;
    s2r += o.s2r + dr * dr * n * o.n / N;
    s2i += o.s2i + di * di * n * o.n / N;
    n += o.n;
  }
  // standard error of the complex mean, |.| of (se_re, se_im)
  double stderr_abs() const {
    if (n < 2) return 0.0;
    return std::sqrt((s2r + s2i) / (n - 1) / n);
  }
};

}  // namespace decoh

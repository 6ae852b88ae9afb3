#include "adacap/math_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace adacap {

Vec matvec(const Matrix& m, const Vec& x) {
  if (x.size() != m.cols) throw std::invalid_argument("matvec: dimension mismatch");
  Vec y(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) acc += r[j] * x[j];
    y[i] = acc;
  }
  return y;
}

Vec matvec_t(const Matrix& m, const Vec& x) {
  if (x.size() != m.rows) throw std::invalid_argument("matvec_t: dimension mismatch");
  Vec y(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < m.cols; ++j) y[j] += xi * r[j];
  }
  return y;
}

void add_outer(Matrix& m, const Vec& u, const Vec& x, double scale) {
  if (u.size() != m.rows || x.size() != m.cols)
    throw std::invalid_argument("add_outer: dimension mismatch");
  for (std::size_t i = 0; i < m.rows; ++i) {
    double* r = m.row(i);
    const double ui = scale * u[i];
    if (ui == 0.0) continue;
    for (std::size_t j = 0; j < m.cols; ++j) r[j] += ui * x[j];
  }
}

void axpy(Vec& y, const Vec& x, double scale) {
  if (y.size() != x.size()) throw std::invalid_argument("axpy: dimension mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale * x[i];
}

double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2_sq(const Vec& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool all_finite(const Matrix& m) { return all_finite(m.data); }

// --------------------------------------------------------------------------
// Rng
// --------------------------------------------------------------------------

static std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

static inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (auto& w : state_) w = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("uniform: lo must be < hi");
  return lo + (hi - lo) * next_double();
}

std::uint64_t Rng::next_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("next_below: bound must be > 0");
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

double Rng::normal() {
  // Box-Muller; u1 in (0,1] to keep the log finite.
  double u1 = 1.0 - next_double();
  double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed ^ (stream * 0xD1B54A32D192ED03ULL);
  return splitmix64(x);
}

Vec rng_uniform(Rng& rng, double lo, double hi, std::size_t n) {
  if (!(lo < hi)) throw std::invalid_argument("rng_uniform: lo must be < hi");
  Vec out(n);
  for (auto& x : out) x = lo + (hi - lo) * rng.next_double();
  return out;
}

// --------------------------------------------------------------------------
// Stable reductions
// --------------------------------------------------------------------------

double log_sum_exp(const Vec& v) {
  if (v.empty()) throw std::invalid_argument("empty reduction");
  double m = v[0];
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("log_sum_exp: non-finite input");
    m = std::max(m, x);
  }
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

Vec softmax(const Vec& v) {
  const double lse = log_sum_exp(v);
  Vec p(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = std::exp(v[i] - lse);
  return p;
}

double grad_check(const std::function<double(const Vec&)>& f,
                  const Vec& analytic, const Vec& x, double h) {
  if (analytic.size() != x.size())
    throw std::invalid_argument("grad_check: gradient/point size mismatch");
  if (!std::isfinite(f(x))) throw std::invalid_argument("grad_check: f(x) not finite");
  Vec xp = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + h;
    const double fp = f(xp);
    xp[i] = xi - h;
    const double fm = f(xp);
    xp[i] = xi;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace adacap

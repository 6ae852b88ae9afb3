#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace adacap {

// ---------------------------------------------------------------------------
// Matrix: dense row-major, 64-bit floats only. Sizes here are tiny, so there
// are no views or strides; copies are fine.
// ---------------------------------------------------------------------------
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, length rows*cols

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }

  std::size_t size() const { return data.size(); }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Matrix& o) const {
    return rows == o.rows && cols == o.cols;
  }
  bool operator==(const Matrix& o) const {
    return rows == o.rows && cols == o.cols && data == o.data;
  }
};

using Vec = std::vector<double>;

// y = M x
Vec matvec(const Matrix& m, const Vec& x);
// y = M^T x
Vec matvec_t(const Matrix& m, const Vec& x);
// m += scale * (u x^T), u has m.rows entries, x has m.cols entries
void add_outer(Matrix& m, const Vec& u, const Vec& x, double scale = 1.0);
// y += scale * x
void axpy(Vec& y, const Vec& x, double scale);
double dot(const Vec& a, const Vec& b);
double norm2_sq(const Vec& v);

bool all_finite(const Vec& v);
bool all_finite(const Matrix& m);

// ---------------------------------------------------------------------------
// Rng: xoshiro256** seeded through splitmix64. Implemented in-repo so streams
// are identical across platforms; state advances only through next_u64().
// ---------------------------------------------------------------------------
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // [0, 1), 53-bit mantissa
  double next_double();
  double uniform(double lo, double hi);
  // unbiased integer in [0, bound)
  std::uint64_t next_below(std::uint64_t bound);
  // standard normal via Box-Muller
  double normal();

  const std::string& algorithm() const { return algorithm_; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> state_{};
  std::string algorithm_ = "xoshiro256**";
};

// Deterministic stream derivation for sub-seeds (init / epoch shuffles / ...).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// n uniform draws in [lo, hi); lo >= hi is an error.
Vec rng_uniform(Rng& rng, double lo, double hi, std::size_t n);

// ---------------------------------------------------------------------------
// Stable reductions
// ---------------------------------------------------------------------------

// log sum_i exp(v_i) with max subtraction; empty input -> "empty reduction".
double log_sum_exp(const Vec& v);
// exp(v - lse(v)); sums to 1 within 1e-12.
Vec softmax(const Vec& v);

// ---------------------------------------------------------------------------
// Finite-difference gradient check. `f` is the scalar function, `analytic`
// its gradient at x. Returns max over coordinates of
//   |analytic_i - central_i| / max(1, |analytic_i|, |central_i|)
// with central differences of step h.
// ---------------------------------------------------------------------------
double grad_check(const std::function<double(const Vec&)>& f,
                  const Vec& analytic, const Vec& x, double h = 1e-5);

}  // namespace adacap

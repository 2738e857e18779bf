#pragma once

// Dense numeric carriers, the softmax family, divergences and the seeded PRNG
// shared by every other module. All arithmetic is in double precision.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace aoe {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Takes ownership of row-major `data`; throws InvalidArgument if the size
  // does not equal rows * cols or any entry is non-finite.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  // Rows selected by index, in the given order.
  Matrix gather_rows(std::span<const std::size_t> indices) const;
  // Leading `n` columns of every row.
  Matrix leading_cols(std::size_t n) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// A probability distribution over K outcomes. Construction validates that
// every entry lies in [0, 1] and that the entries sum to 1 within 1e-9.
class ProbVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit ProbVector(std::vector<double> entries);
  static ProbVector uniform(std::size_t k);

  std::size_t size() const noexcept { return p_.size(); }
  double operator[](std::size_t i) const noexcept { return p_[i]; }
  std::span<const double> entries() const noexcept { return p_; }

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  struct Trusted {};
  ProbVector(std::vector<double> entries, Trusted) : p_(std::move(entries)) {}
  friend ProbVector softmax(std::span<const double> z, double temperature);

  std::vector<double> p_;
};

// s(z / T), evaluated with a max shift so that large logits cannot overflow.
ProbVector softmax(std::span<const double> z, double temperature = 1.0);

// Unchecked kernel behind softmax(): writes s(z / T) into `out` (same length as z).
void softmax_into(std::span<const double> z, double temperature, std::span<double> out) noexcept;

// log sum_j exp(z_j) via the max shift.
double log_sum_exp(std::span<const double> z);

// sum_k p_k log(p_k / q_k) with 0 log 0 = 0. Throws DivergenceUndefined when
// q_k == 0 < p_k.
double kl_divergence(const ProbVector& p, const ProbVector& q);
double entropy(const ProbVector& p);
// -sum_k target_k log pred_k. Throws DivergenceUndefined when pred_k == 0 < target_k.
double cross_entropy(const ProbVector& target, const ProbVector& pred);

// Span-level forms used by the loss kernels. Arguments must have equal length.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double entropy(std::span<const double> p);

// xoshiro256** seeded through splitmix64. The stream is fully specified in
// docs/rng.md so that other implementations can reproduce it bit for bit.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  // 53 high bits scaled into [0, 1).
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  // Unbiased integer in [0, n) by rejection; n must be positive.
  std::uint64_t below(std::uint64_t n);
  // Box-Muller, one normal per two uniforms, no caching.
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept;

  // Fisher-Yates from the back.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // uniform_random_bit_generator surface, so <random> adaptors work too.
  using result_type = std::uint64_t;
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }
  result_type operator()() noexcept { return next_u64(); }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

// One step of splitmix64 on `state` (advances it) returning the mixed output.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

}  // namespace aoe

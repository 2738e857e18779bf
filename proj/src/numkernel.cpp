#include "aoe/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "aoe/error.hpp"

namespace aoe {

namespace {

constexpr double kLogFloor = 1e-300;

bool finite_all(std::span<const double> v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                          std::to_string(b) + ")");
  }
}

// p log(p / q) for one coordinate, 0 log 0 = 0.
double kl_term(double p, double q, const char* what) {
  if (p <= 0.0) return 0.0;
  if (q <= 0.0) throw DivergenceUndefined(std::string(what) + ": zero mass where target is positive");
  return p * (std::log(p) - std::log(std::max(q, kLogFloor)));
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (!std::isfinite(fill)) throw InvalidArgument("Matrix: non-finite fill value");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw InvalidArgument("Matrix: data length " + std::to_string(data_.size()) + " != " +
                          std::to_string(rows_) + " x " + std::to_string(cols_));
  }
  if (!finite_all(data_)) throw InvalidArgument("Matrix: non-finite entry");
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw InvalidArgument("Matrix::gather_rows: index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }
  return out;
}

Matrix Matrix::leading_cols(std::size_t n) const {
  if (n > cols_) throw InvalidArgument("Matrix::leading_cols: more columns requested than present");
  Matrix out(rows_, n);
  for (std::size_t r = 0; r < rows_; ++r) std::copy_n(row(r).begin(), n, out.row(r).begin());
  return out;
}

bool Matrix::all_finite() const noexcept { return finite_all(data_); }

ProbVector::ProbVector(std::vector<double> entries) : p_(std::move(entries)) {
  if (p_.empty()) throw InvalidArgument("ProbVector: empty");
  double sum = 0.0;
  for (double v : p_) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("ProbVector: entry outside [0, 1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) throw InvalidArgument("ProbVector: entries do not sum to 1");
}

ProbVector ProbVector::uniform(std::size_t k) {
  if (k == 0) throw InvalidArgument("ProbVector::uniform: K must be positive");
  return ProbVector(std::vector<double>(k, 1.0 / static_cast<double>(k)), Trusted{});
}

void softmax_into(std::span<const double> z, double temperature, std::span<double> out) noexcept {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    out[k] = std::exp((z[k] - zmax) / temperature);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
}

ProbVector softmax(std::span<const double> z, double temperature) {
  if (z.empty()) throw InvalidArgument("softmax: empty logit vector");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidArgument("softmax: temperature must be positive and finite");
  }
  if (!finite_all(z)) throw InvalidArgument("softmax: non-finite logit");
  std::vector<double> out(z.size());
  softmax_into(z, temperature, out);
  return ProbVector(std::move(out), ProbVector::Trusted{});
}

double log_sum_exp(std::span<const double> z) {
  if (z.empty()) throw InvalidArgument("log_sum_exp: empty vector");
  if (!finite_all(z)) throw InvalidArgument("log_sum_exp: non-finite entry");
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  return zmax + std::log(sum);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  require_same_length(p.size(), q.size(), "kl_divergence");
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) acc += kl_term(p[k], q[k], "kl_divergence");
  // Rounding can leave a tiny negative value when p == q.
  return std::max(acc, 0.0);
}

double entropy(std::span<const double> p) {
  double acc = 0.0;
  for (double v : p) {
    if (v > 0.0) acc -= v * std::log(v);
  }
  return acc;
}

double kl_divergence(const ProbVector& p, const ProbVector& q) { return kl_divergence(p.entries(), q.entries()); }

double entropy(const ProbVector& p) { return entropy(p.entries()); }

double cross_entropy(const ProbVector& target, const ProbVector& pred) {
  require_same_length(target.size(), pred.size(), "cross_entropy");
  double acc = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    const double t = target[k];
    if (t <= 0.0) continue;
    if (pred[k] <= 0.0) throw DivergenceUndefined("cross_entropy: zero predicted mass on a target class");
    acc -= t * std::log(std::max(pred[k], kLogFloor));
  }
  return acc;
}

// ---------------------------------------------------------------------------
// PRNG

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {
constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }
}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& word : s_) word = splitmix64(sm);
}

std::uint64_t SeededRng::next_u64() noexcept {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double SeededRng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double SeededRng::uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

std::uint64_t SeededRng::below(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("SeededRng::below: n must be positive");
  // Reject the low (2^64 mod n) values so every residue is equally likely.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

double SeededRng::normal() noexcept {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double SeededRng::normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

}  // namespace aoe

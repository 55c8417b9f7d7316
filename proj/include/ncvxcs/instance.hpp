#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace ncvxcs {

/// Counter-based generator: every draw is a pure function of (seed, stream, index),
/// computed with the SplitMix64 finalizer. Draws from different streams are
/// decorrelated, and the k-th draw of a stream never depends on how many draws
/// another stream made.
class CounterRng {
 public:
  enum class Stream : std::uint64_t { Support = 1, Value = 2, Matrix = 3 };

  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t bits(Stream stream, std::uint64_t index) const;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform(Stream stream, std::uint64_t index) const;
  /// Standard normal; draws 2k and 2k+1 are the two Box-Muller outputs of pair k.
  double normal(Stream stream, std::uint64_t index) const;
  /// Fills out[i] = normal(stream, offset + i) * scale; offset must be even.
  void fill_normal(Stream stream, std::uint64_t offset, double scale, std::span<float> out) const;

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t seed_;
};

struct EnsembleParams {
  std::uint64_t n = 1000;
  double alpha = 0.5;
  double rho = 0.1;
  double sigma_x2 = 1.0;
  std::uint64_t seed = 0;

  static constexpr std::uint64_t kMaxN = 10'000'000;

  /// round(alpha * n).
  std::uint64_t m_rows() const;
  /// Throws std::invalid_argument with a remedial message.
  void validate() const;
};

/// Dense row-major M x N matrix held in single precision; products accumulate in double.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  /// out = A x.
  void multiply(std::span<const double> x, std::span<double> out) const;
  /// out = A^T r.
  void multiply_transposed(std::span<const double> r, std::span<double> out) const;

  /// One pass over the rows: d_r = (A x)_r, then out += f(r, d_r) * row r. out is zeroed first.
  template <class RowFn>
  void sweep(std::span<const double> x, std::span<double> out, RowFn&& f) const {
    if (x.size() != cols_ || out.size() != cols_) throw std::invalid_argument("dimension mismatch in row sweep");
    std::fill(out.begin(), out.end(), 0.0);
    double* o = out.data();
    const double* xp = x.data();
    for (std::size_t r = 0; r < rows_; ++r) {
      const float* a = data_.data() + r * cols_;
      const double coef = f(r, row_dot(a, xp));
      for (std::size_t c = 0; c < cols_; ++c) o[c] += coef * static_cast<double>(a[c]);
    }
  }

 private:
  double row_dot(const float* a, const double* x) const;

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

struct ProblemInstance {
  EnsembleParams params;
  std::vector<double> x0;
  DenseMatrix matrix;
  std::vector<double> y;

  std::size_t n() const { return x0.size(); }
  std::size_t m() const { return y.size(); }
};

/// x0_i = 0 w.p. 1-rho, else N(0, sigma_x2); A_{mu i} ~ N(0, 1/N); y = A x0.
ProblemInstance gen_instance(const EnsembleParams& params);

/// (1/N) sum_i (xhat_i - x0_i)^2.
double mse_against_truth(std::span<const double> xhat, const ProblemInstance& inst);

/// Little-endian binary: 8-byte magic, n, m, seed as uint64, rho, alpha, sigma_x2
/// as double, then x0 (n doubles), A (m*n doubles, row-major), y (m doubles).
void save_instance(const ProblemInstance& inst, const std::filesystem::path& path);
ProblemInstance load_instance(const std::filesystem::path& path);

}  // namespace ncvxcs

#include "ncvxcs/instance.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace ncvxcs {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
constexpr char kMagic[8] = {'N', 'C', 'V', 'X', 'C', 'S', '1', '\0'};

std::pair<double, double> box_muller(double u1, double u2) {
  // u1 in (0, 1] keeps the log finite.
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(phi), r * std::sin(phi)};
}

template <class T>
void write_le(std::ostream& os, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw std::runtime_error("instance file is truncated");
  return value;
}

}  // namespace

std::uint64_t CounterRng::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t CounterRng::bits(Stream stream, std::uint64_t index) const {
  const std::uint64_t key = mix(seed_ + kGolden * static_cast<std::uint64_t>(stream));
  return mix(key + kGolden * (index + 1));
}

double CounterRng::uniform(Stream stream, std::uint64_t index) const {
  return static_cast<double>(bits(stream, index) >> 11) * 0x1.0p-53;
}

double CounterRng::normal(Stream stream, std::uint64_t index) const {
  const std::uint64_t pair = index / 2;
  const auto [a, b] = box_muller(uniform(stream, 2 * pair), uniform(stream, 2 * pair + 1));
  return index % 2 == 0 ? a : b;
}

void CounterRng::fill_normal(Stream stream, std::uint64_t offset, double scale, std::span<float> out) const {
  if (offset % 2 != 0) throw std::invalid_argument("fill_normal offset must be even");
  const std::size_t n = out.size();
  std::size_t i = 0;
  for (; i + 1 < n; i += 2) {
    const std::uint64_t pair = (offset + i) / 2;
    const auto [a, b] = box_muller(uniform(stream, 2 * pair), uniform(stream, 2 * pair + 1));
    out[i] = static_cast<float>(a * scale);
    out[i + 1] = static_cast<float>(b * scale);
  }
  if (i < n) out[i] = static_cast<float>(normal(stream, offset + i) * scale);
}

std::uint64_t EnsembleParams::m_rows() const {
  return static_cast<std::uint64_t>(std::llround(alpha * static_cast<double>(n)));
}

void EnsembleParams::validate() const {
  if (n == 0) throw std::invalid_argument("n must be positive");
  if (n > kMaxN) throw std::invalid_argument("n exceeds the supported maximum of 10^7");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in (0, 1)");
  if (!(sigma_x2 > 0.0) || !std::isfinite(sigma_x2)) throw std::invalid_argument("sigma_x2 must be positive");
  if (m_rows() < 1) throw std::invalid_argument("round(alpha * n) must be at least 1; increase n or alpha");
}

double DenseMatrix::row_dot(const float* a, const double* x) const {
  std::array<double, 8> acc{};
  std::size_t c = 0;
  for (; c + 8 <= cols_; c += 8) {
    for (std::size_t k = 0; k < 8; ++k) acc[k] += static_cast<double>(a[c + k]) * x[c + k];
  }
  double tail = 0.0;
  for (; c < cols_; ++c) tail += static_cast<double>(a[c]) * x[c];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

void DenseMatrix::multiply(std::span<const double> x, std::span<double> out) const {
  if (x.size() != cols_ || out.size() != rows_) throw std::invalid_argument("dimension mismatch in A x");
  for (std::size_t r = 0; r < rows_; ++r) out[r] = row_dot(data_.data() + r * cols_, x.data());
}

void DenseMatrix::multiply_transposed(std::span<const double> r, std::span<double> out) const {
  if (r.size() != rows_ || out.size() != cols_) throw std::invalid_argument("dimension mismatch in A^T r");
  std::fill(out.begin(), out.end(), 0.0);
  double* o = out.data();
  for (std::size_t row = 0; row < rows_; ++row) {
    const float* a = data_.data() + row * cols_;
    const double coef = r[row];
    for (std::size_t c = 0; c < cols_; ++c) o[c] += coef * static_cast<double>(a[c]);
  }
}

ProblemInstance gen_instance(const EnsembleParams& params) {
  params.validate();
  const std::size_t n = params.n;
  const std::size_t m = params.m_rows();
  const CounterRng rng(params.seed);
  ProblemInstance inst;
  inst.params = params;
  inst.x0.assign(n, 0.0);
  const double sx = std::sqrt(params.sigma_x2);
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform(CounterRng::Stream::Support, i) < params.rho) {
      inst.x0[i] = sx * rng.normal(CounterRng::Stream::Value, i);
    }
  }
  inst.matrix = DenseMatrix(m, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  // Row offsets stay even so each row is a whole number of Box-Muller pairs.
  const std::uint64_t stride = n + (n % 2);
  for (std::size_t r = 0; r < m; ++r) {
    rng.fill_normal(CounterRng::Stream::Matrix, r * stride, scale, inst.matrix.row(r));
  }
  inst.y.assign(m, 0.0);
  inst.matrix.multiply(inst.x0, inst.y);
  return inst;
}

double mse_against_truth(std::span<const double> xhat, const ProblemInstance& inst) {
  if (xhat.size() != inst.x0.size()) {
    std::ostringstream os;
    os << "estimate has length " << xhat.size() << " but the signal has length " << inst.x0.size();
    throw std::invalid_argument(os.str());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < xhat.size(); ++i) {
    const double d = xhat[i] - inst.x0[i];
    acc += d * d;
  }
  return acc / static_cast<double>(xhat.size());
}

void save_instance(const ProblemInstance& inst, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_le<std::uint64_t>(os, inst.n());
  write_le<std::uint64_t>(os, inst.m());
  write_le<std::uint64_t>(os, inst.params.seed);
  write_le<double>(os, inst.params.rho);
  write_le<double>(os, inst.params.alpha);
  write_le<double>(os, inst.params.sigma_x2);
  for (double v : inst.x0) write_le<double>(os, v);
  for (float v : inst.matrix.data()) write_le<double>(os, static_cast<double>(v));
  for (double v : inst.y) write_le<double>(os, v);
  if (!os) throw std::runtime_error("write to " + path.string() + " failed");
}

ProblemInstance load_instance(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + " is not an instance file");
  }
  ProblemInstance inst;
  const auto n = read_le<std::uint64_t>(is);
  const auto m = read_le<std::uint64_t>(is);
  inst.params.n = n;
  inst.params.seed = read_le<std::uint64_t>(is);
  inst.params.rho = read_le<double>(is);
  inst.params.alpha = read_le<double>(is);
  inst.params.sigma_x2 = read_le<double>(is);
  if (n == 0 || n > EnsembleParams::kMaxN || m == 0 || m > n) {
    throw std::runtime_error(path.string() + " has invalid dimensions");
  }
  inst.x0.resize(n);
  for (auto& v : inst.x0) v = read_le<double>(is);
  inst.matrix = DenseMatrix(m, n);
  for (auto& v : inst.matrix.data()) v = static_cast<float>(read_le<double>(is));
  inst.y.resize(m);
  for (auto& v : inst.y) v = read_le<double>(is);
  return inst;
}

}  // namespace ncvxcs

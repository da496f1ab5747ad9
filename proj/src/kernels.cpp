#include "parametrix/kernels.hpp"

#include <algorithm>
#include <stdexcept>

namespace parametrix::kernels {

namespace {

// Rough work estimate used to decide when spawning threads pays off.
double conv_flops(const MatrixList& a, const MatrixList& b, int horizon) {
  if (a.empty() || b.empty()) return 0.0;
  const double per_term = 2.0 * static_cast<double>(a[0].rows()) * a[0].cols() * b[0].cols();
  const double terms = static_cast<double>(std::min<std::size_t>(a.size(), horizon + 1)) *
                       static_cast<double>(std::min<std::size_t>(b.size(), horizon + 1));
  return per_term * terms;
}

constexpr double kParallelCutoff = 2.0e5;

inline void conv_coefficient(const MatrixList& a, const MatrixList& b, int k, Eigen::MatrixXd& out) {
  out.setZero();
  const int lo = std::max(0, k - static_cast<int>(b.size()) + 1);
  const int hi = std::min(k, static_cast<int>(a.size()) - 1);
  for (int j = lo; j <= hi; ++j) out.noalias() += a[j] * b[k - j];
}

}  // namespace

void conv_serial(const MatrixList& a, const MatrixList& b, int horizon, MatrixList& out) {
  if (a.empty() || b.empty()) throw std::invalid_argument("conv: empty coefficient list");
  if (a[0].cols() != b[0].rows()) throw std::invalid_argument("conv: inner dimension mismatch");
  out.assign(horizon + 1, Eigen::MatrixXd(a[0].rows(), b[0].cols()));
  for (int k = 0; k <= horizon; ++k) conv_coefficient(a, b, k, out[k]);
}

void conv_parallel(const MatrixList& a, const MatrixList& b, int horizon, MatrixList& out) {
  if (a.empty() || b.empty()) throw std::invalid_argument("conv: empty coefficient list");
  if (a[0].cols() != b[0].rows()) throw std::invalid_argument("conv: inner dimension mismatch");
  out.assign(horizon + 1, Eigen::MatrixXd(a[0].rows(), b[0].cols()));
#pragma omp parallel for schedule(static)
  for (int k = 0; k <= horizon; ++k) conv_coefficient(a, b, k, out[k]);
}

void conv(const MatrixList& a, const MatrixList& b, int horizon, MatrixList& out) {
  if (conv_flops(a, b, horizon) >= kParallelCutoff) {
    conv_parallel(a, b, horizon, out);
  } else {
    conv_serial(a, b, horizon, out);
  }
}

namespace {

// Horner evaluation in z^{-1}: fixed order regardless of thread ownership.
inline void eval_point(const MatrixList& coeffs, const std::complex<double>& z, Eigen::MatrixXcd& out) {
  const std::complex<double> zinv = 1.0 / z;
  out = coeffs.back().cast<std::complex<double>>();
  for (int k = static_cast<int>(coeffs.size()) - 2; k >= 0; --k) {
    out = out * zinv + coeffs[k].cast<std::complex<double>>();
  }
}

}  // namespace

void eval_grid_serial(const MatrixList& coeffs, const std::vector<std::complex<double>>& points,
                      ComplexMatrixList& out) {
  if (coeffs.empty()) throw std::invalid_argument("eval_grid: empty coefficient list");
  out.assign(points.size(), Eigen::MatrixXcd(coeffs[0].rows(), coeffs[0].cols()));
  for (std::size_t p = 0; p < points.size(); ++p) eval_point(coeffs, points[p], out[p]);
}

void eval_grid_parallel(const MatrixList& coeffs, const std::vector<std::complex<double>>& points,
                        ComplexMatrixList& out) {
  if (coeffs.empty()) throw std::invalid_argument("eval_grid: empty coefficient list");
  out.assign(points.size(), Eigen::MatrixXcd(coeffs[0].rows(), coeffs[0].cols()));
  const int n = static_cast<int>(points.size());
#pragma omp parallel for schedule(static)
  for (int p = 0; p < n; ++p) eval_point(coeffs, points[p], out[p]);
}

void eval_grid(const MatrixList& coeffs, const std::vector<std::complex<double>>& points,
               ComplexMatrixList& out) {
  const double work = static_cast<double>(coeffs.size()) * points.size() *
                      coeffs[0].rows() * coeffs[0].cols();
  if (work >= kParallelCutoff) {
    eval_grid_parallel(coeffs, points, out);
  } else {
    eval_grid_serial(coeffs, points, out);
  }
}

double max_abs_serial(const MatrixList& coeffs, int first, int last) {
  double m = 0.0;
  for (int k = first; k <= last && k < static_cast<int>(coeffs.size()); ++k) {
    if (coeffs[k].size() > 0) m = std::max(m, coeffs[k].cwiseAbs().maxCoeff());
  }
  return m;
}

double max_abs_parallel(const MatrixList& coeffs, int first, int last) {
  double m = 0.0;
  const int hi = std::min(last, static_cast<int>(coeffs.size()) - 1);
#pragma omp parallel for schedule(static) reduction(max : m)
  for (int k = first; k <= hi; ++k) {
    if (coeffs[k].size() > 0) m = std::max(m, coeffs[k].cwiseAbs().maxCoeff());
  }
  return m;
}

}  // namespace parametrix::kernels

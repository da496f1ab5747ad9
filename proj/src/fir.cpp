#include "parametrix/fir.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "parametrix/errors.hpp"
#include "parametrix/kernels.hpp"

namespace parametrix {

FirTransferMatrix::FirTransferMatrix(std::vector<Eigen::MatrixXd> coeffs, double truncation)
    : coeffs_(std::move(coeffs)), truncation_(truncation) {
  if (coeffs_.empty()) throw std::invalid_argument("FirTransferMatrix: empty coefficient list");
  for (const auto& c : coeffs_) {
    if (c.rows() != coeffs_[0].rows() || c.cols() != coeffs_[0].cols()) {
      throw std::invalid_argument("FirTransferMatrix: inconsistent coefficient shapes");
    }
  }
}

FirTransferMatrix FirTransferMatrix::zero(Eigen::Index rows, Eigen::Index cols, int horizon) {
  std::vector<Eigen::MatrixXd> c(horizon + 1, Eigen::MatrixXd::Zero(rows, cols));
  return FirTransferMatrix(std::move(c));
}

FirTransferMatrix FirTransferMatrix::identity(Eigen::Index n) {
  return constant(Eigen::MatrixXd::Identity(n, n));
}

FirTransferMatrix FirTransferMatrix::constant(const Eigen::MatrixXd& g0) {
  return FirTransferMatrix({g0});
}

FirTransferMatrix FirTransferMatrix::delay(const Eigen::MatrixXd& g1) {
  return FirTransferMatrix({Eigen::MatrixXd::Zero(g1.rows(), g1.cols()), g1});
}

const Eigen::MatrixXd& FirTransferMatrix::coeff(int k) const {
  if (k < 0 || k >= static_cast<int>(coeffs_.size())) {
    throw std::out_of_range("FirTransferMatrix::coeff: index outside stored horizon");
  }
  return coeffs_[k];
}

Eigen::MatrixXd FirTransferMatrix::coeff_or_zero(int k) const {
  if (k < 0 || k >= static_cast<int>(coeffs_.size())) return Eigen::MatrixXd::Zero(rows(), cols());
  return coeffs_[k];
}

bool FirTransferMatrix::strictly_proper(double tol) const {
  return coeffs_.empty() || coeffs_[0].cwiseAbs().maxCoeff() <= tol;
}

double FirTransferMatrix::max_abs() const {
  return kernels::max_abs_serial(coeffs_, 0, horizon());
}

FirTransferMatrix FirTransferMatrix::truncated(int horizon) const {
  if (horizon < 0) throw std::invalid_argument("truncated: negative horizon");
  std::vector<Eigen::MatrixXd> c(coeffs_.begin(),
                                 coeffs_.begin() + std::min<std::size_t>(horizon + 1, coeffs_.size()));
  c.resize(horizon + 1, Eigen::MatrixXd::Zero(rows(), cols()));
  const double discarded = kernels::max_abs_serial(coeffs_, horizon + 1, this->horizon());
  return FirTransferMatrix(std::move(c), truncation_ + discarded);
}

FirTransferMatrix FirTransferMatrix::advanced(double tol) const {
  if (!strictly_proper(tol)) {
    throw PreconditionError("advanced: FIR is not strictly proper, cannot multiply by z");
  }
  if (horizon() == 0) return zero(rows(), cols(), 0);
  std::vector<Eigen::MatrixXd> c(coeffs_.begin() + 1, coeffs_.end());
  return FirTransferMatrix(std::move(c), truncation_);
}

FirTransferMatrix& FirTransferMatrix::operator+=(const FirTransferMatrix& rhs) {
  if (rows() != rhs.rows() || cols() != rhs.cols()) {
    throw std::invalid_argument("fir_add: shape mismatch");
  }
  if (rhs.horizon() > horizon()) coeffs_.resize(rhs.horizon() + 1, Eigen::MatrixXd::Zero(rows(), cols()));
  for (int k = 0; k <= rhs.horizon(); ++k) coeffs_[k] += rhs.coeffs()[k];
  truncation_ += rhs.truncation_;
  return *this;
}

FirTransferMatrix& FirTransferMatrix::operator-=(const FirTransferMatrix& rhs) {
  if (rows() != rhs.rows() || cols() != rhs.cols()) {
    throw std::invalid_argument("fir_sub: shape mismatch");
  }
  if (rhs.horizon() > horizon()) coeffs_.resize(rhs.horizon() + 1, Eigen::MatrixXd::Zero(rows(), cols()));
  for (int k = 0; k <= rhs.horizon(); ++k) coeffs_[k] -= rhs.coeffs()[k];
  truncation_ += rhs.truncation_;
  return *this;
}

FirTransferMatrix& FirTransferMatrix::operator*=(double s) {
  for (auto& c : coeffs_) c *= s;
  return *this;
}

FirTransferMatrix operator+(FirTransferMatrix a, const FirTransferMatrix& b) { return a += b; }
FirTransferMatrix operator-(FirTransferMatrix a, const FirTransferMatrix& b) { return a -= b; }
FirTransferMatrix operator-(FirTransferMatrix a) { return a *= -1.0; }
FirTransferMatrix operator*(double s, FirTransferMatrix a) { return a *= s; }

FirTransferMatrix fir_add(const FirTransferMatrix& a, const FirTransferMatrix& b) { return a + b; }

FirTransferMatrix fir_mul(const FirTransferMatrix& a, const FirTransferMatrix& b) {
  return fir_mul(a, b, a.horizon() + b.horizon());
}

FirTransferMatrix fir_mul(const FirTransferMatrix& a, const FirTransferMatrix& b, int horizon) {
  if (a.cols() != b.rows()) throw std::invalid_argument("fir_mul: inner dimension mismatch");
  if (horizon < 0) throw std::invalid_argument("fir_mul: negative horizon");
  const int full = a.horizon() + b.horizon();
  kernels::MatrixList out;
  double discarded = 0.0;
  if (horizon >= full) {
    kernels::conv(a.coeffs(), b.coeffs(), horizon, out);
  } else {
    // Compute the full product, measure the dropped tail, then cut.
    kernels::conv(a.coeffs(), b.coeffs(), full, out);
    discarded = kernels::max_abs_serial(out, horizon + 1, full);
    out.resize(horizon + 1);
  }
  return FirTransferMatrix(std::move(out),
                           a.truncation_residual() + b.truncation_residual() + discarded);
}

FirTransferMatrix fir_mul(const Eigen::MatrixXd& left, const FirTransferMatrix& a) {
  if (left.cols() != a.rows()) throw std::invalid_argument("fir_mul: inner dimension mismatch");
  std::vector<Eigen::MatrixXd> c;
  c.reserve(a.horizon() + 1);
  for (const auto& g : a.coeffs()) c.push_back(left * g);
  return FirTransferMatrix(std::move(c), a.truncation_residual());
}

FirTransferMatrix fir_mul(const FirTransferMatrix& a, const Eigen::MatrixXd& right) {
  if (a.cols() != right.rows()) throw std::invalid_argument("fir_mul: inner dimension mismatch");
  std::vector<Eigen::MatrixXd> c;
  c.reserve(a.horizon() + 1);
  for (const auto& g : a.coeffs()) c.push_back(g * right);
  return FirTransferMatrix(std::move(c), a.truncation_residual());
}

FirTransferMatrix fir_inverse(const FirTransferMatrix& a, int horizon, double* cond) {
  if (a.rows() != a.cols()) throw std::invalid_argument("fir_inverse: FIR is not square");
  if (horizon < 0) throw std::invalid_argument("fir_inverse: negative horizon");
  const Eigen::MatrixXd& g0 = a.coeff(0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(g0);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (cond != nullptr) *cond = (smin > 0.0) ? smax / smin : std::numeric_limits<double>::infinity();
  if (smin <= 1e-13 * std::max(1.0, smax)) {
    throw PreconditionError("fir_inverse: leading coefficient is singular");
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(g0);
  std::vector<Eigen::MatrixXd> x(horizon + 1);
  x[0] = lu.solve(Eigen::MatrixXd::Identity(a.rows(), a.rows()));
  for (int k = 1; k <= horizon; ++k) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(a.rows(), a.rows());
    const int hi = std::min(k, a.horizon());
    for (int j = 1; j <= hi; ++j) acc.noalias() += a.coeffs()[j] * x[k - j];
    x[k] = -lu.solve(acc);
  }
  return FirTransferMatrix(std::move(x), a.truncation_residual());
}

Eigen::MatrixXcd fir_eval(const FirTransferMatrix& a, std::complex<double> z) {
  if (std::abs(std::abs(z) - 1.0) > 1e-12) {
    throw PreconditionError("fir_eval: evaluation point is not on the unit circle");
  }
  kernels::ComplexMatrixList out;
  kernels::eval_grid_serial(a.coeffs(), {z}, out);
  return out[0];
}

std::vector<std::complex<double>> unit_circle_points(int npoints) {
  if (npoints <= 0) throw std::invalid_argument("unit_circle_points: need npoints > 0");
  std::vector<std::complex<double>> pts(npoints);
  for (int j = 0; j < npoints; ++j) {
    const double theta = 2.0 * std::numbers::pi * j / npoints;
    pts[j] = {std::cos(theta), std::sin(theta)};
  }
  return pts;
}

std::vector<Eigen::MatrixXcd> fir_eval_grid(const FirTransferMatrix& a, int npoints) {
  kernels::ComplexMatrixList out;
  kernels::eval_grid(a.coeffs(), unit_circle_points(npoints), out);
  return out;
}

double h2_norm(const FirTransferMatrix& a) {
  double s = 0.0;
  for (const auto& c : a.coeffs()) s += c.squaredNorm();
  return std::sqrt(s);
}

double fir_distance(const FirTransferMatrix& a, const FirTransferMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("fir_distance: shape mismatch");
  }
  double m = 0.0;
  const int hi = std::max(a.horizon(), b.horizon());
  for (int k = 0; k <= hi; ++k) {
    m = std::max(m, (a.coeff_or_zero(k) - b.coeff_or_zero(k)).cwiseAbs().maxCoeff());
  }
  return m;
}

}  // namespace parametrix

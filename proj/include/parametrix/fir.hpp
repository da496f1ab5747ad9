#pragma once

#include <Eigen/Core>
#include <complex>
#include <vector>

namespace parametrix {

// Finite impulse response transfer matrix
//
//   G(z) = G_0 + G_1 z^{-1} + ... + G_T z^{-T},
//
// stored as the coefficient list [G_0 .. G_T]. All entries share one shape.
// Truncating products discards coefficients; the largest absolute entry ever
// discarded is accumulated in truncation_residual() so verification passes
// can refuse results that lost too much mass.
class FirTransferMatrix {
 public:
  FirTransferMatrix() = default;
  explicit FirTransferMatrix(std::vector<Eigen::MatrixXd> coeffs, double truncation = 0.0);

  static FirTransferMatrix zero(Eigen::Index rows, Eigen::Index cols, int horizon = 0);
  static FirTransferMatrix identity(Eigen::Index n);
  // Single constant coefficient G_0 = g0.
  static FirTransferMatrix constant(const Eigen::MatrixXd& g0);
  // g1 * z^{-1}.
  static FirTransferMatrix delay(const Eigen::MatrixXd& g1);

  Eigen::Index rows() const { return coeffs_.empty() ? 0 : coeffs_[0].rows(); }
  Eigen::Index cols() const { return coeffs_.empty() ? 0 : coeffs_[0].cols(); }
  int horizon() const { return static_cast<int>(coeffs_.size()) - 1; }
  bool empty() const { return coeffs_.empty(); }

  const std::vector<Eigen::MatrixXd>& coeffs() const { return coeffs_; }
  const Eigen::MatrixXd& coeff(int k) const;
  // Coefficients beyond the horizon are structurally zero.
  Eigen::MatrixXd coeff_or_zero(int k) const;

  double truncation_residual() const { return truncation_; }
  void add_truncation(double t) { truncation_ += t; }

  bool strictly_proper(double tol = 1e-12) const;
  double max_abs() const;

  // Drops coefficients beyond `horizon` (or pads with zeros), accumulating
  // the largest discarded entry into the truncation residual.
  FirTransferMatrix truncated(int horizon) const;
  // Multiplication by z for a strictly proper FIR: [0, G_1, .., G_T] ->
  // [G_1, .., G_T]. Throws if G_0 is not negligible.
  FirTransferMatrix advanced(double tol = 1e-9) const;

  FirTransferMatrix& operator+=(const FirTransferMatrix& rhs);
  FirTransferMatrix& operator-=(const FirTransferMatrix& rhs);
  FirTransferMatrix& operator*=(double s);

 private:
  std::vector<Eigen::MatrixXd> coeffs_;
  double truncation_ = 0.0;
};

FirTransferMatrix operator+(FirTransferMatrix a, const FirTransferMatrix& b);
FirTransferMatrix operator-(FirTransferMatrix a, const FirTransferMatrix& b);
FirTransferMatrix operator-(FirTransferMatrix a);
FirTransferMatrix operator*(double s, FirTransferMatrix a);

// Exact (untruncated) Cauchy product, degree = deg a + deg b.
FirTransferMatrix fir_mul(const FirTransferMatrix& a, const FirTransferMatrix& b);
// Product truncated at `horizon`; discarded mass accumulates in the result's
// truncation residual.
FirTransferMatrix fir_mul(const FirTransferMatrix& a, const FirTransferMatrix& b, int horizon);
// Constant-matrix multiplication (exact).
FirTransferMatrix fir_mul(const Eigen::MatrixXd& left, const FirTransferMatrix& a);
FirTransferMatrix fir_mul(const FirTransferMatrix& a, const Eigen::MatrixXd& right);

FirTransferMatrix fir_add(const FirTransferMatrix& a, const FirTransferMatrix& b);

// Truncated inverse of a square FIR with invertible leading coefficient:
//   X_0 = G_0^{-1},  X_k = -G_0^{-1} sum_{j=1..k} G_j X_{k-j}.
// If `cond` is non-null it receives the condition number of G_0.
FirTransferMatrix fir_inverse(const FirTransferMatrix& a, int horizon, double* cond = nullptr);

// Pointwise evaluation sum_k G_k z^{-k}; z must lie on the unit circle
// (| |z| - 1 | <= 1e-12).
Eigen::MatrixXcd fir_eval(const FirTransferMatrix& a, std::complex<double> z);

// Batch unit-circle evaluation at `npoints` equispaced points exp(2*pi*i*j/npoints).
std::vector<Eigen::MatrixXcd> fir_eval_grid(const FirTransferMatrix& a, int npoints);
std::vector<std::complex<double>> unit_circle_points(int npoints);

// H2 norm sqrt(sum_k ||G_k||_F^2) of the impulse response.
double h2_norm(const FirTransferMatrix& a);

// Largest absolute coefficient-entry difference, implicit zero padding.
double fir_distance(const FirTransferMatrix& a, const FirTransferMatrix& b);

}  // namespace parametrix

#include "parametrix/plant.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "parametrix/errors.hpp"

namespace parametrix {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw PreconditionError(msg);
}

// Rank of [lambda*I - A, B] against the PBH threshold.
bool pbh_full_rank(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                   std::complex<double> lambda) {
  const Eigen::Index n = A.rows();
  Eigen::MatrixXcd M(n, n + B.cols());
  M.leftCols(n) = lambda * Eigen::MatrixXcd::Identity(n, n) - A.cast<std::complex<double>>();
  M.rightCols(B.cols()) = B.cast<std::complex<double>>();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(M);
  const auto& s = svd.singularValues();
  return s(n - 1) > 1e-9 * std::max(1.0, s(0));
}

}  // namespace

StateSpacePlant::StateSpacePlant(Eigen::MatrixXd A_, Eigen::MatrixXd B1_, Eigen::MatrixXd B2_,
                                 Eigen::MatrixXd C1_, Eigen::MatrixXd C2_, Eigen::MatrixXd D11_,
                                 Eigen::MatrixXd D12_, Eigen::MatrixXd D21_)
    : A(std::move(A_)),
      B1(std::move(B1_)),
      B2(std::move(B2_)),
      C1(std::move(C1_)),
      C2(std::move(C2_)),
      D11(std::move(D11_)),
      D12(std::move(D12_)),
      D21(std::move(D21_)) {
  const Eigen::Index n = A.rows();
  require(A.cols() == n, "plant: A must be square");
  require(B1.rows() == n && B2.rows() == n, "plant: B1/B2 row count must match A");
  require(C1.cols() == n && C2.cols() == n, "plant: C1/C2 column count must match A");
  require(D11.rows() == C1.rows() && D11.cols() == B1.cols(), "plant: D11 shape mismatch");
  require(D12.rows() == C1.rows() && D12.cols() == B2.cols(), "plant: D12 shape mismatch");
  require(D21.rows() == C2.rows() && D21.cols() == B1.cols(), "plant: D21 shape mismatch");
  require(is_stabilizable(A, B2), "plant: (A, B2) is not stabilizable");
  require(is_detectable(A, C2), "plant: (A, C2) is not detectable");
}

double spectral_radius(const Eigen::MatrixXd& A) {
  if (A.rows() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

StabilityInfo is_stable(const Eigen::MatrixXd& A) {
  const double rho = spectral_radius(A);
  return {rho < 1.0 - kStabilityMargin, rho};
}

bool is_stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const auto lambda = es.eigenvalues()(i);
    if (std::abs(lambda) >= 1.0 - kStabilityMargin && !pbh_full_rank(A, B, lambda)) return false;
  }
  return true;
}

bool is_detectable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C) {
  return is_stabilizable(A.transpose(), C.transpose());
}

bool is_controllable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol) {
  return detail::krylov_basis(A, B, tol).cols() == A.rows();
}

bool is_observable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C, double tol) {
  return is_controllable(A.transpose(), C.transpose(), tol);
}

bool is_nilpotent(const Eigen::MatrixXd& A, double tol) {
  const Eigen::Index n = A.rows();
  if (n == 0) return true;
  Eigen::MatrixXd pw = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) pw = A * pw;
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  return pw.cwiseAbs().maxCoeff() <= tol * std::pow(scale, static_cast<double>(n));
}

FirTransferMatrix markov_expand(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                const Eigen::MatrixXd& C, const Eigen::MatrixXd& D, int horizon) {
  if (horizon < 0) throw std::invalid_argument("markov_expand: negative horizon");
  std::vector<Eigen::MatrixXd> coeffs;
  coeffs.reserve(horizon + 1);
  coeffs.push_back(D);
  Eigen::MatrixXd akb = B;  // A^{k-1} B
  for (int k = 1; k <= horizon; ++k) {
    coeffs.push_back(C * akb);
    if (k < horizon) akb = A * akb;
  }
  return FirTransferMatrix(std::move(coeffs));
}

Eigen::MatrixXcd rational_eval(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                               const Eigen::MatrixXd& C, const Eigen::MatrixXd& D,
                               std::complex<double> z) {
  const Eigen::Index n = A.rows();
  if (n == 0) return D.cast<std::complex<double>>();
  Eigen::MatrixXcd zIA = z * Eigen::MatrixXcd::Identity(n, n) - A.cast<std::complex<double>>();
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(zIA);
  return C.cast<std::complex<double>>() * lu.solve(B.cast<std::complex<double>>()) +
         D.cast<std::complex<double>>();
}

int expansion_horizon(const Eigen::MatrixXd& A, double tol, int min_horizon, int cap) {
  const auto info = is_stable(A);
  if (!info.stable) {
    throw PreconditionError("expansion_horizon: A is not Schur stable");
  }
  const Eigen::Index n = A.rows();
  int k = std::max<int>(min_horizon, static_cast<int>(n));
  Eigen::MatrixXd pw = Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < k; ++i) pw = A * pw;
  while (k < cap && pw.cwiseAbs().maxCoeff() > tol) {
    pw = A * pw;
    ++k;
  }
  return k;
}

FirTransferMatrix p11_fir(const StateSpacePlant& P, int horizon) {
  return markov_expand(P.A, P.B1, P.C1, P.D11, horizon);
}
FirTransferMatrix p12_fir(const StateSpacePlant& P, int horizon) {
  return markov_expand(P.A, P.B2, P.C1, P.D12, horizon);
}
FirTransferMatrix p21_fir(const StateSpacePlant& P, int horizon) {
  return markov_expand(P.A, P.B1, P.C2, P.D21, horizon);
}
FirTransferMatrix p22_fir(const StateSpacePlant& P, int horizon) {
  return markov_expand(P.A, P.B2, P.C2, Eigen::MatrixXd::Zero(P.ny(), P.nu()), horizon);
}

ClosedLoop lft_closed_loop(const StateSpacePlant& P, const Controller& K) {
  if (K.Dk.rows() != P.nu() || K.Dk.cols() != P.ny()) {
    throw PreconditionError("lft_closed_loop: controller dimensions do not match plant");
  }
  const Eigen::Index n = P.nx();
  const Eigen::Index nk = K.nk();
  ClosedLoop cl;
  cl.A.resize(n + nk, n + nk);
  cl.A.topLeftCorner(n, n) = P.A + P.B2 * K.Dk * P.C2;
  cl.A.topRightCorner(n, nk) = P.B2 * K.Ck;
  cl.A.bottomLeftCorner(nk, n) = K.Bk * P.C2;
  cl.A.bottomRightCorner(nk, nk) = K.Ak;
  cl.B.resize(n + nk, P.nw());
  cl.B.topRows(n) = P.B1 + P.B2 * K.Dk * P.D21;
  cl.B.bottomRows(nk) = K.Bk * P.D21;
  cl.C.resize(P.nz(), n + nk);
  cl.C.leftCols(n) = P.C1 + P.D12 * K.Dk * P.C2;
  cl.C.rightCols(nk) = P.D12 * K.Ck;
  cl.D = P.D11 + P.D12 * K.Dk * P.D21;
  return cl;
}

StabilityInfo internal_stability(const StateSpacePlant& P, const Controller& K) {
  return is_stable(lft_closed_loop(P, K).A);
}

Controller realize_fir_controller(const FirTransferMatrix& k) {
  const Eigen::Index nu = k.rows();
  const Eigen::Index ny = k.cols();
  const int T = k.horizon();
  Controller c;
  c.Dk = k.coeff(0);
  const Eigen::Index nk = static_cast<Eigen::Index>(T) * ny;
  c.Ak = Eigen::MatrixXd::Zero(nk, nk);
  c.Bk = Eigen::MatrixXd::Zero(nk, ny);
  c.Ck = Eigen::MatrixXd::Zero(nu, nk);
  if (T == 0) return c;
  // State blocks hold y[t-1], ..., y[t-T].
  c.Bk.topRows(ny).setIdentity();
  for (int i = 1; i < T; ++i) {
    c.Ak.block(i * ny, (i - 1) * ny, ny, ny).setIdentity();
  }
  for (int i = 1; i <= T; ++i) {
    c.Ck.middleCols((i - 1) * ny, ny) = k.coeff(i);
  }
  return c;
}

namespace detail {

Eigen::MatrixXd krylov_basis(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol) {
  const Eigen::Index n = A.rows();
  if (n == 0 || B.cols() == 0) return Eigen::MatrixXd(n, 0);
  Eigen::MatrixXd K(n, n * B.cols());
  Eigen::MatrixXd blk = B;
  for (Eigen::Index i = 0; i < n; ++i) {
    K.middleCols(i * B.cols(), B.cols()) = blk;
    if (i + 1 < n) blk = A * blk;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(K, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  const double cutoff = tol * std::max(1.0, s.size() > 0 ? s(0) : 0.0);
  Eigen::Index r = 0;
  while (r < s.size() && s(r) > cutoff) ++r;
  return svd.matrixU().leftCols(r);
}

}  // namespace detail

std::vector<std::complex<double>> transfer_poles(const Eigen::MatrixXd& A,
                                                 const Eigen::MatrixXd& B,
                                                 const Eigen::MatrixXd& C, double tol) {
  // Restrict to the controllable subspace, then to its observable subspace.
  Eigen::MatrixXd Vc = detail::krylov_basis(A, B, tol);
  if (Vc.cols() == 0) return {};
  Eigen::MatrixXd Ac = Vc.transpose() * A * Vc;
  Eigen::MatrixXd Cc = C * Vc;
  Eigen::MatrixXd Vo = detail::krylov_basis(Ac.transpose(), Cc.transpose(), tol);
  if (Vo.cols() == 0) return {};
  Eigen::MatrixXd Am = Vo.transpose() * Ac * Vo;
  Eigen::EigenSolver<Eigen::MatrixXd> es(Am, false);
  std::vector<std::complex<double>> poles(Am.rows());
  for (Eigen::Index i = 0; i < Am.rows(); ++i) poles[i] = es.eigenvalues()(i);
  return poles;
}

bool io_maps_stable(const StateSpacePlant& P, const Controller& K) {
  if (K.Dk.rows() != P.nu() || K.Dk.cols() != P.ny()) {
    throw PreconditionError("io_maps_stable: controller dimensions do not match plant");
  }
  // Loop equations  y = P22 u + dy,  u = K y + du  as one realization with
  // inputs (dy, du) and outputs (y, u); the A matrix coincides with the
  // closed-loop matrix, but each of the four blocks is tested on its own
  // minimal (controllable and observable) part.
  const Eigen::Index n = P.nx();
  const Eigen::Index nk = K.nk();
  const Eigen::Index ny = P.ny();
  const Eigen::Index nu = P.nu();
  Eigen::MatrixXd Acl(n + nk, n + nk);
  Acl.topLeftCorner(n, n) = P.A + P.B2 * K.Dk * P.C2;
  Acl.topRightCorner(n, nk) = P.B2 * K.Ck;
  Acl.bottomLeftCorner(nk, n) = K.Bk * P.C2;
  Acl.bottomRightCorner(nk, nk) = K.Ak;

  Eigen::MatrixXd B_dy(n + nk, ny), B_du(n + nk, nu);
  B_dy.topRows(n) = P.B2 * K.Dk;
  B_dy.bottomRows(nk) = K.Bk;
  B_du.topRows(n) = P.B2;
  B_du.bottomRows(nk).setZero();

  Eigen::MatrixXd C_y(ny, n + nk), C_u(nu, n + nk);
  C_y.leftCols(n) = P.C2;
  C_y.rightCols(nk).setZero();
  C_u.leftCols(n) = K.Dk * P.C2;
  C_u.rightCols(nk) = K.Ck;

  for (const auto* Bp : {&B_dy, &B_du}) {
    for (const auto* Cp : {&C_y, &C_u}) {
      for (const auto& pole : transfer_poles(Acl, *Bp, *Cp)) {
        if (std::abs(pole) >= 1.0 - kStabilityMargin) return false;
      }
    }
  }
  return true;
}

}  // namespace parametrix

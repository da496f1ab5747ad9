#include "parametrix/param_maps.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "parametrix/errors.hpp"

namespace parametrix {

namespace {

// z G(z) - G(z) A for strictly proper G, i.e. right-multiplication by
// (zI - A); exact FIR of the same length.
FirTransferMatrix right_mul_zia(const FirTransferMatrix& g, const Eigen::MatrixXd& A) {
  return g.advanced() - fir_mul(g, A);
}

void require_identity(const Eigen::MatrixXd& M, Eigen::Index n, const char* what) {
  if (M.rows() != n || M.cols() != n ||
      (n > 0 && (M - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() > 1e-12)) {
    throw PreconditionError(std::string(what) + ": requires an identity channel");
  }
}

Eigen::MatrixXd inverse_checked(const Eigen::MatrixXd& M, const char* what) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  if (M.rows() != M.cols() || M.rows() == 0 ||
      svd.singularValues()(M.rows() - 1) <= 1e-13 * std::max(1.0, svd.singularValues()(0))) {
    throw PreconditionError(std::string(what) + ": singular matrix");
  }
  return M.partialPivLu().inverse();
}

}  // namespace

FirTransferMatrix k_from_youla(const DoublyCoprimeFactors& f, const YoulaParam& q, int horizon) {
  const FirTransferMatrix num = f.Vr - fir_mul(f.Mr, q.Q);
  const FirTransferMatrix den = f.Ur - fir_mul(f.Nr, q.Q);
  return fir_mul(num, fir_inverse(den, horizon), horizon);
}

FirTransferMatrix k_from_iop(const IopQuadruple& x, int horizon) {
  return fir_mul(x.U, fir_inverse(x.Y, horizon), horizon);
}

FirTransferMatrix k_from_slp(const SlpQuadruple& s, int horizon) {
  // L - M R^{-1} N = L - M (zR)^{-1} (zN); both shifts are exact because the
  // subspace forces R and N strictly proper, and (zR)_0 = R_1 = I.
  const FirTransferMatrix rinv = fir_inverse(s.R.advanced(), horizon);
  const FirTransferMatrix mrn = fir_mul(s.M, fir_mul(rinv, s.N.advanced(), horizon), horizon);
  return (s.L - mrn).truncated(horizon);
}

FirTransferMatrix k_from_slp(const StateSpacePlant& P, const SlpQuadruple& s, int horizon) {
  const FirTransferMatrix den =
      FirTransferMatrix::identity(P.ny()) + fir_mul(P.C2, s.N);
  return fir_mul(s.L, fir_inverse(den, horizon), horizon);
}

IopQuadruple youla_to_iop(const DoublyCoprimeFactors& f, const YoulaParam& q, int horizon) {
  const FirTransferMatrix vq = f.Vr - fir_mul(f.Mr, q.Q);
  const FirTransferMatrix uq = f.Ur - fir_mul(f.Nr, q.Q);
  IopQuadruple x;
  x.Y = fir_mul(uq, f.Ml).truncated(horizon);
  x.U = fir_mul(vq, f.Ml).truncated(horizon);
  x.W = fir_mul(uq, f.Nl).truncated(horizon);
  x.Z = (FirTransferMatrix::identity(vq.rows()) + fir_mul(vq, f.Nl)).truncated(horizon);
  return x;
}

YoulaParam iop_to_youla(const DoublyCoprimeFactors& f, const IopQuadruple& x, int horizon) {
  // Static part of the subspace: strictly proper P22 forces Y_0 = I,
  // Z_0 = I, W_0 = 0. The full residual is the caller's verifier.
  const Eigen::Index ny = x.Y.rows();
  const Eigen::Index nu = x.Z.rows();
  const double d0 =
      std::max({(x.Y.coeff_or_zero(0) - Eigen::MatrixXd::Identity(ny, ny)).cwiseAbs().maxCoeff(),
                (x.Z.coeff_or_zero(0) - Eigen::MatrixXd::Identity(nu, nu)).cwiseAbs().maxCoeff(),
                x.W.coeff_or_zero(0).cwiseAbs().maxCoeff()});
  if (d0 > 1e-6) {
    throw PreconditionError("iop_to_youla: input violates the input-output subspace");
  }
  const FirTransferMatrix Qf = fir_mul(fir_mul(f.Vl, x.Y), f.Ur) -
                               fir_mul(fir_mul(f.Ul, x.U), f.Ur) -
                               fir_mul(fir_mul(f.Vl, x.W), f.Vr) +
                               fir_mul(fir_mul(f.Ul, x.Z), f.Vr) - fir_mul(f.Vl, f.Ur);
  return {Qf.truncated(horizon)};
}

IopQuadruple slp_to_iop(const StateSpacePlant& P, const SlpQuadruple& s) {
  const SubspaceReport rep = verify_slp_subspace(P, s, 1e-6);
  if (!rep.pass) {
    throw PreconditionError("slp_to_iop: input violates the system-level subspace");
  }
  IopQuadruple x;
  x.Y = FirTransferMatrix::identity(P.ny()) + fir_mul(P.C2, s.N);
  x.U = s.L;
  x.W = fir_mul(fir_mul(P.C2, s.R), P.B2);
  x.Z = FirTransferMatrix::identity(P.nu()) + fir_mul(s.M, P.B2);
  return x;
}

SlpQuadruple iop_to_slp(const StateSpacePlant& P, const IopQuadruple& x, int horizon) {
  const SubspaceReport rep = verify_iop_subspace(P, x, 16, 1e-6);
  if (!rep.pass) {
    throw PreconditionError("iop_to_slp: input violates the input-output subspace");
  }
  // Coefficient recursions of the system-level subspace seeded by L = U;
  // they reproduce the rational images (zI-A)^{-1}B2 U etc. prefix-exactly
  // without expanding the possibly unstable (zI-A)^{-1} on its own.
  const Eigen::Index n = P.nx();
  SlpQuadruple s;
  s.L = x.U.truncated(horizon);
  std::vector<Eigen::MatrixXd> R(horizon + 1), M(horizon + 1), N(horizon + 1);
  R[0] = Eigen::MatrixXd::Zero(n, n);
  M[0] = Eigen::MatrixXd::Zero(P.nu(), n);
  N[0] = Eigen::MatrixXd::Zero(n, P.ny());
  for (int k = 0; k < horizon; ++k) {
    const Eigen::MatrixXd Lk = x.U.coeff_or_zero(k);
    R[k + 1] = P.A * R[k] + P.B2 * M[k];
    if (k == 0) R[k + 1] += Eigen::MatrixXd::Identity(n, n);
    N[k + 1] = P.A * N[k] + P.B2 * Lk;
    M[k + 1] = M[k] * P.A + Lk * P.C2;
  }
  s.R = FirTransferMatrix(std::move(R));
  s.M = FirTransferMatrix(std::move(M));
  s.N = FirTransferMatrix(std::move(N));
  return s;
}

SlpQuadruple youla_to_slp(const StateSpacePlant& P, const DoublyCoprimeFactors& f,
                          const YoulaParam& q, int horizon) {
  const int fd = std::max({f.Ul.horizon(), f.Vl.horizon(), f.Nl.horizon(), f.Ml.horizon(),
                           f.Ur.horizon(), f.Vr.horizon(), f.Nr.horizon(), f.Mr.horizon()});
  const int inner = 2 * fd + std::max(q.Q.horizon(), 0);
  return iop_to_slp(P, youla_to_iop(f, q, inner), horizon);
}

YoulaParam slp_to_youla(const StateSpacePlant& P, const DoublyCoprimeFactors& f,
                        const SlpQuadruple& s, int horizon) {
  const SubspaceReport rep = verify_slp_subspace(P, s, 1e-6);
  if (!rep.pass) {
    throw PreconditionError("slp_to_youla: input violates the system-level subspace");
  }
  const FirTransferMatrix C2N = fir_mul(P.C2, s.N);
  const FirTransferMatrix C2RB2 = fir_mul(fir_mul(P.C2, s.R), P.B2);
  const FirTransferMatrix MB2 = fir_mul(s.M, P.B2);
  const FirTransferMatrix Qf =
      fir_mul(fir_mul(f.Vl, C2N), f.Ur) - fir_mul(fir_mul(f.Ul, s.L), f.Ur) -
      fir_mul(fir_mul(f.Vl, C2RB2), f.Vr) + fir_mul(fir_mul(f.Ul, MB2), f.Vr) +
      fir_mul(f.Ul, f.Vr);
  return {Qf.truncated(horizon)};
}

SubspaceReport verify_iop_subspace(const StateSpacePlant& P, const IopQuadruple& x, int npoints,
                                   double tol) {
  if (npoints < 1) throw PreconditionError("verify_iop_subspace: npoints must be >= 1");
  const Eigen::Index nu = P.nu();
  const Eigen::Index ny = P.ny();
  const Eigen::MatrixXd D22 = Eigen::MatrixXd::Zero(ny, nu);
  SubspaceReport rep;
  for (const std::complex<double>& z : unit_circle_points(npoints)) {
    const Eigen::MatrixXcd p22 = rational_eval(P.A, P.B2, P.C2, D22, z);
    const Eigen::MatrixXcd Y = fir_eval(x.Y, z);
    const Eigen::MatrixXcd U = fir_eval(x.U, z);
    const Eigen::MatrixXcd W = fir_eval(x.W, z);
    const Eigen::MatrixXcd Z = fir_eval(x.Z, z);
    const Eigen::MatrixXcd r1 = Y - p22 * U - Eigen::MatrixXcd::Identity(ny, ny);
    const Eigen::MatrixXcd r2 = W - p22 * Z;
    const Eigen::MatrixXcd r3 = -Y * p22 + W;
    const Eigen::MatrixXcd r4 = -U * p22 + Z - Eigen::MatrixXcd::Identity(nu, nu);
    rep.max_residual =
        std::max({rep.max_residual, r1.cwiseAbs().maxCoeff(), r2.cwiseAbs().maxCoeff(),
                  r3.cwiseAbs().maxCoeff(), r4.cwiseAbs().maxCoeff()});
  }
  rep.pass = rep.max_residual < tol;
  return rep;
}

SubspaceReport verify_slp_subspace(const StateSpacePlant& P, const SlpQuadruple& s, double tol) {
  const Eigen::Index n = P.nx();
  const int T = std::max({s.R.horizon(), s.M.horizon(), s.N.horizon(), s.L.horizon()});
  SubspaceReport rep;
  auto track = [&rep](const Eigen::MatrixXd& res) {
    if (res.size() > 0) rep.max_residual = std::max(rep.max_residual, res.cwiseAbs().maxCoeff());
  };
  track(s.R.coeff_or_zero(0));
  track(s.M.coeff_or_zero(0));
  track(s.N.coeff_or_zero(0));
  const Eigen::MatrixXd I_n = Eigen::MatrixXd::Identity(n, n);
  for (int k = 0; k <= T; ++k) {
    const Eigen::MatrixXd Rk = s.R.coeff_or_zero(k);
    const Eigen::MatrixXd Rk1 = s.R.coeff_or_zero(k + 1);
    const Eigen::MatrixXd Mk = s.M.coeff_or_zero(k);
    const Eigen::MatrixXd Nk = s.N.coeff_or_zero(k);
    const Eigen::MatrixXd Lk = s.L.coeff_or_zero(k);
    const Eigen::MatrixXd drive = k == 0 ? I_n : Eigen::MatrixXd::Zero(n, n);
    track(Rk1 - P.A * Rk - P.B2 * Mk - drive);
    track(Rk1 - Rk * P.A - Nk * P.C2 - drive);
    track(s.N.coeff_or_zero(k + 1) - P.A * Nk - P.B2 * Lk);
    track(s.M.coeff_or_zero(k + 1) - Mk * P.A - Lk * P.C2);
  }
  rep.pass = rep.max_residual < tol;
  return rep;
}

Controller realize_rmfd(const FirTransferMatrix& num, const FirTransferMatrix& den) {
  if (den.empty() || num.empty() || den.rows() != den.cols() || num.cols() != den.rows()) {
    throw PreconditionError("realize_rmfd: dimension mismatch");
  }
  const Eigen::Index ny = den.rows();
  const Eigen::Index nu = num.rows();
  const Eigen::MatrixXd den0inv =
      inverse_checked(den.coeff(0), "realize_rmfd: leading denominator coefficient");

  // Right-normalize so the denominator becomes I + D_1/z + ...; the shift
  // register of the internal signal w = den^{-1} y then realizes the
  // fraction exactly.
  const int d = std::max(num.horizon(), den.horizon());
  std::vector<Eigen::MatrixXd> Dp(d + 1), Np(d + 1);
  for (int k = 0; k <= d; ++k) {
    Dp[k] = den.coeff_or_zero(k) * den0inv;
    Np[k] = num.coeff_or_zero(k) * den0inv;
  }
  Controller K;
  K.Ak = Eigen::MatrixXd::Zero(d * ny, d * ny);
  K.Bk = Eigen::MatrixXd::Zero(d * ny, ny);
  K.Ck = Eigen::MatrixXd::Zero(nu, d * ny);
  K.Dk = Np[0];
  for (int j = 0; j < d; ++j) {
    K.Ak.block(0, j * ny, ny, ny) = -Dp[j + 1];
    K.Ck.middleCols(j * ny, ny) = Np[j + 1] - Np[0] * Dp[j + 1];
  }
  for (int i = 0; i + 1 < d; ++i) {
    K.Ak.block((i + 1) * ny, i * ny, ny, ny) = Eigen::MatrixXd::Identity(ny, ny);
  }
  if (d > 0) K.Bk.topRows(ny) = Eigen::MatrixXd::Identity(ny, ny);
  return K;
}

Controller controller_from_youla(const DoublyCoprimeFactors& f, const YoulaParam& q) {
  return realize_rmfd(f.Vr - fir_mul(f.Mr, q.Q), f.Ur - fir_mul(f.Nr, q.Q));
}

Controller controller_from_iop(const IopQuadruple& x) { return realize_rmfd(x.U, x.Y); }

Controller controller_from_slp(const StateSpacePlant& P, const SlpQuadruple& s) {
  return realize_rmfd(s.L, FirTransferMatrix::identity(P.ny()) + fir_mul(P.C2, s.N));
}

SlpQuadruple complete_state_feedback_slp(const StateSpacePlant& P, const FirTransferMatrix& R,
                                         const FirTransferMatrix& M) {
  require_identity(P.C2, P.nx(), "complete_state_feedback_slp");
  SlpQuadruple s;
  s.R = R;
  s.M = M;
  s.L = right_mul_zia(M, P.A);
  s.N = right_mul_zia(R, P.A) - FirTransferMatrix::identity(P.nx());
  return s;
}

IopQuadruple complete_state_feedback_iop(const StateSpacePlant& P, const FirTransferMatrix& W,
                                         const FirTransferMatrix& Z) {
  require_identity(P.C2, P.nx(), "complete_state_feedback_iop");
  if (P.nu() != P.nx()) {
    throw PreconditionError("complete_state_feedback_iop: B2 must be square invertible");
  }
  const Eigen::MatrixXd B2inv = inverse_checked(P.B2, "complete_state_feedback_iop: B2");
  IopQuadruple x;
  x.W = W;
  x.Z = Z;
  x.Y = right_mul_zia(fir_mul(W, B2inv), P.A);
  x.U = right_mul_zia(fir_mul(Z - FirTransferMatrix::identity(Z.rows()), B2inv), P.A);
  return x;
}

FirTransferMatrix k_from_state_feedback_slp(const FirTransferMatrix& R,
                                            const FirTransferMatrix& M, int horizon) {
  return fir_mul(M.advanced(), fir_inverse(R.advanced(), horizon), horizon);
}

FirTransferMatrix k_from_state_feedback_iop(const FirTransferMatrix& W,
                                            const FirTransferMatrix& Z, int horizon) {
  const FirTransferMatrix num = (Z - FirTransferMatrix::identity(Z.rows())).advanced();
  return fir_mul(num, fir_inverse(W.advanced(), horizon), horizon);
}

FirTransferMatrix k_from_stable_youla(const StateSpacePlant& P, const YoulaParam& q,
                                      int horizon) {
  if (!is_stable(P.A).stable) {
    throw PreconditionError("k_from_stable_youla: plant must be stable");
  }
  const FirTransferMatrix p22 = p22_fir(P, horizon);
  const FirTransferMatrix den =
      FirTransferMatrix::identity(P.ny()) - fir_mul(p22, q.Q, horizon);
  return fir_mul(-q.Q, fir_inverse(den, horizon), horizon);
}

}  // namespace parametrix

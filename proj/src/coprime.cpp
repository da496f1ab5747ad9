#include "parametrix/coprime.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "parametrix/errors.hpp"

namespace parametrix {

Eigen::MatrixXd place_deadbeat(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(m, n);
  if (n == 0 || m == 0) return F;

  // Sequential rank-one placement: cycle over input columns, each time
  // driving the spectrum of the restriction to the column's Krylov space to
  // zero with an Ackermann gain. Feedback never moves an eigenvalue away
  // from zero, and any remaining nonzero mode is visible from some column
  // whenever (A, B) is controllable, so at most n sweeps are needed.
  Eigen::MatrixXd Acur = A;
  for (Eigen::Index sweep = 0; sweep < n; ++sweep) {
    if (is_nilpotent(Acur)) break;
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::VectorXd b = B.col(j);
      const Eigen::MatrixXd V = detail::krylov_basis(Acur, b, 1e-10);
      const Eigen::Index r = V.cols();
      if (r == 0) continue;

      // Krylov vectors expressed in the invariant-subspace basis form the
      // restricted controllability matrix, invertible by construction.
      Eigen::MatrixXd ctrb(r, r);
      Eigen::VectorXd kv = b;
      for (Eigen::Index k = 0; k < r; ++k) {
        ctrb.col(k) = V.transpose() * kv;
        kv = Acur * kv;
      }
      Eigen::MatrixXd Apow = Eigen::MatrixXd::Identity(n, n);
      for (Eigen::Index k = 0; k < r; ++k) Apow = Acur * Apow;
      const Eigen::MatrixXd Ar = V.transpose() * Apow * V;

      // Ackermann gain for characteristic polynomial z^r on the restriction.
      const Eigen::MatrixXd ctrbT = ctrb.transpose();
      const Eigen::VectorXd y = ctrbT.colPivHouseholderQr().solve(Eigen::VectorXd::Unit(r, r - 1));
      const Eigen::RowVectorXd f = -(y.transpose() * Ar) * V.transpose();
      F.row(j) += f;
      Acur += b * f;
    }
  }
  return F;
}

Eigen::MatrixXd dare_fixed_point(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  Eigen::MatrixXd X = Eigen::MatrixXd::Identity(n, n);
  if (n == 0) return X;
  const Eigen::MatrixXd I_m = Eigen::MatrixXd::Identity(m, m);
  const Eigen::MatrixXd I_n = Eigen::MatrixXd::Identity(n, n);
  for (int it = 0; it < 10000; ++it) {
    const Eigen::MatrixXd BtXA = B.transpose() * X * A;
    const Eigen::MatrixXd gain = (I_m + B.transpose() * X * B).ldlt().solve(BtXA);
    Eigen::MatrixXd Xn = A.transpose() * X * A - BtXA.transpose() * gain + I_n;
    Xn = 0.5 * (Xn + Xn.transpose());
    const double delta = (Xn - X).cwiseAbs().maxCoeff();
    X = Xn;
    if (delta <= 1e-12 * std::max(1.0, X.cwiseAbs().maxCoeff())) return X;
  }
  throw PreconditionError("dare_fixed_point: no convergence within 10000 iterations");
}

StabilizingGains riccati_gains(const StateSpacePlant& P) {
  const Eigen::MatrixXd& A = P.A;
  const Eigen::Index n = P.nx();
  const Eigen::MatrixXd X = dare_fixed_point(A, P.B2);
  const Eigen::MatrixXd F =
      (-(Eigen::MatrixXd::Identity(P.nu(), P.nu()) + P.B2.transpose() * X * P.B2)
            .ldlt()
            .solve(P.B2.transpose() * X * A))
          .eval();
  const Eigen::MatrixXd Y = dare_fixed_point(A.transpose(), P.C2.transpose());
  const Eigen::MatrixXd Lc =
      (Eigen::MatrixXd::Identity(P.ny(), P.ny()) + P.C2 * Y * P.C2.transpose())
          .ldlt()
          .solve(P.C2 * Y)
          .transpose();
  const Eigen::MatrixXd Ao = A * (Eigen::MatrixXd::Identity(n, n) - Lc * P.C2);
  if (!is_stable(A + P.B2 * F).stable || !is_stable(Ao).stable) {
    throw PreconditionError("riccati_gains: Riccati gains failed to stabilize");
  }
  return {F, -A * Lc, Lc};
}

StabilizingGains deadbeat_gains(const StateSpacePlant& P) {
  const Eigen::MatrixXd& A = P.A;
  const Eigen::Index n = P.nx();
  if (is_controllable(A, P.B2) && is_observable(A, P.C2)) {
    const Eigen::MatrixXd F = place_deadbeat(A, P.B2);
    // Dual placement: A(I - Lc C2) and (I - Lc C2)A are nilpotent together,
    // and the latter transposes to A' + (C2 A)' (-Lc'). Modes of A invisible
    // from C2 A lie in the kernel of A, hence already deadbeat.
    const Eigen::MatrixXd Ft = place_deadbeat(A.transpose(), (P.C2 * A).transpose());
    const Eigen::MatrixXd Lc = -Ft.transpose();
    const Eigen::MatrixXd Ao = A * (Eigen::MatrixXd::Identity(n, n) - Lc * P.C2);
    if (is_nilpotent(A + P.B2 * F) && is_nilpotent(Ao)) return {F, -A * Lc, Lc};
  }
  return riccati_gains(P);
}

StabilizingGains stabilizing_gains(const StateSpacePlant& P, GainMode mode) {
  return mode == GainMode::kDeadbeat ? deadbeat_gains(P) : riccati_gains(P);
}

DoublyCoprimeFactors doubly_coprime_general(const StateSpacePlant& P,
                                            const StabilizingGains& gains, int horizon) {
  const Eigen::Index n = P.nx();
  if (gains.F.rows() != P.nu() || gains.F.cols() != n || gains.Lc.rows() != n ||
      gains.Lc.cols() != P.ny()) {
    throw PreconditionError("doubly_coprime_general: gain dimensions do not match the plant");
  }
  if (horizon < n) {
    throw PreconditionError("doubly_coprime_general: horizon below state dimension");
  }
  const Eigen::MatrixXd& A = P.A;
  const Eigen::MatrixXd AF = A + P.B2 * gains.F;
  const Eigen::MatrixXd E = Eigen::MatrixXd::Identity(n, n) - gains.Lc * P.C2;
  const Eigen::MatrixXd Ao = A * E;
  if (!is_stable(AF).stable || !is_stable(Ao).stable) {
    throw PreconditionError("doubly_coprime_general: gains do not stabilize the plant");
  }

  // Observer-based factors over the closed-loop matrices AF and Ao. The
  // right stack [[Mr, Vr], [Nr, Ur]] is the literal state-space inverse of
  // the left stack [[Ul, -Vl], [-Nl, Ml]], so the Bezout identity holds as
  // rational functions; FIR expansion is exact once both AF and Ao are
  // nilpotent with index <= horizon.
  const Eigen::MatrixXd ALc = A * gains.Lc;
  const Eigen::MatrixXd AFLc = AF * gains.Lc;
  const Eigen::MatrixXd FE = gains.F * E;
  const Eigen::MatrixXd FLc = gains.F * gains.Lc;
  const Eigen::MatrixXd Inu = Eigen::MatrixXd::Identity(P.nu(), P.nu());
  const Eigen::MatrixXd Iny = Eigen::MatrixXd::Identity(P.ny(), P.ny());
  const Eigen::MatrixXd Zyu = Eigen::MatrixXd::Zero(P.ny(), P.nu());

  DoublyCoprimeFactors f;
  f.Mr = markov_expand(AF, P.B2, gains.F, Inu, horizon);
  f.Nr = markov_expand(AF, P.B2, P.C2, Zyu, horizon);
  f.Vr = markov_expand(AF, AFLc, gains.F, FLc, horizon);
  f.Ur = markov_expand(AF, AFLc, P.C2, Iny, horizon);
  f.Ml = markov_expand(Ao, ALc, -P.C2, Iny, horizon);
  f.Nl = markov_expand(Ao, P.B2, P.C2, Zyu, horizon);
  f.Ul = markov_expand(Ao, P.B2, -FE, Inu, horizon);
  f.Vl = markov_expand(Ao, ALc, FE, FLc, horizon);
  f.gains = gains;

  const BezoutReport rep = verify_bezout(f, P, 16);
  if (!rep.pass) {
    throw VerificationError("doubly_coprime_general: Bezout residual " +
                            std::to_string(rep.max_residual) +
                            " above tolerance (horizon too short or gains too slow)");
  }
  return f;
}

DoublyCoprimeFactors doubly_coprime_stable(const StateSpacePlant& P, int horizon) {
  if (!is_stable(P.A).stable) {
    throw PreconditionError("doubly_coprime_stable: plant must be stable");
  }
  if (horizon < 0) throw PreconditionError("doubly_coprime_stable: negative horizon");
  DoublyCoprimeFactors f;
  f.Ul = FirTransferMatrix::identity(P.nu());
  f.Vl = FirTransferMatrix::zero(P.nu(), P.ny());
  f.Nl = p22_fir(P, horizon);
  f.Ml = FirTransferMatrix::identity(P.ny());
  f.Mr = FirTransferMatrix::identity(P.nu());
  f.Vr = FirTransferMatrix::zero(P.nu(), P.ny());
  f.Nr = f.Nl;
  f.Ur = FirTransferMatrix::identity(P.ny());
  f.gains = StabilizingGains{Eigen::MatrixXd::Zero(P.nu(), P.nx()),
                             Eigen::MatrixXd::Zero(P.nx(), P.ny()),
                             Eigen::MatrixXd::Zero(P.nx(), P.ny())};
  return f;
}

DoublyCoprimeFactors doubly_coprime_state_feedback(const StateSpacePlant& P) {
  const Eigen::Index n = P.nx();
  const Eigen::MatrixXd I_n = Eigen::MatrixXd::Identity(n, n);
  if (P.nu() != n || P.ny() != n) {
    throw PreconditionError("doubly_coprime_state_feedback: requires B2 = I and C2 = I");
  }
  if (n > 0 && ((P.B2 - I_n).cwiseAbs().maxCoeff() > 1e-12 ||
                (P.C2 - I_n).cwiseAbs().maxCoeff() > 1e-12)) {
    throw PreconditionError("doubly_coprime_state_feedback: requires B2 = I and C2 = I");
  }
  // Exact degree-one factors, valid for any A since every factor is FIR:
  // Mr = Ml = I - A/z, Nr = Nl = I/z, Ur = Ul = I, Vr = Vl = -A.
  DoublyCoprimeFactors f;
  f.Mr = FirTransferMatrix(std::vector<Eigen::MatrixXd>{I_n, -P.A});
  f.Ml = f.Mr;
  f.Nr = FirTransferMatrix::delay(I_n);
  f.Nl = f.Nr;
  f.Ur = FirTransferMatrix::identity(n);
  f.Ul = f.Ur;
  f.Vr = FirTransferMatrix::constant(-P.A);
  f.Vl = f.Vr;
  f.gains = StabilizingGains{-P.A, -P.A, I_n};
  return f;
}

BezoutReport verify_bezout(const DoublyCoprimeFactors& f, const StateSpacePlant& P, int npoints,
                           double tol) {
  if (npoints < 1) throw PreconditionError("verify_bezout: npoints must be >= 1");
  const Eigen::Index nu = P.nu();
  const Eigen::Index ny = P.ny();
  BezoutReport rep;
  if (nu + ny == 0) {
    rep.pass = true;
    return rep;
  }
  const Eigen::MatrixXd D22 = Eigen::MatrixXd::Zero(ny, nu);
  for (const std::complex<double>& z : unit_circle_points(npoints)) {
    Eigen::MatrixXcd left(nu + ny, nu + ny);
    left.topLeftCorner(nu, nu) = fir_eval(f.Ul, z);
    left.topRightCorner(nu, ny) = -fir_eval(f.Vl, z);
    left.bottomLeftCorner(ny, nu) = -fir_eval(f.Nl, z);
    left.bottomRightCorner(ny, ny) = fir_eval(f.Ml, z);

    const Eigen::MatrixXcd mr = fir_eval(f.Mr, z);
    const Eigen::MatrixXcd nr = fir_eval(f.Nr, z);
    Eigen::MatrixXcd right(nu + ny, nu + ny);
    right.topLeftCorner(nu, nu) = mr;
    right.topRightCorner(nu, ny) = fir_eval(f.Vr, z);
    right.bottomLeftCorner(ny, nu) = nr;
    right.bottomRightCorner(ny, ny) = fir_eval(f.Ur, z);

    const Eigen::MatrixXcd prod =
        left * right - Eigen::MatrixXcd::Identity(nu + ny, nu + ny);
    rep.max_residual = std::max(rep.max_residual, prod.cwiseAbs().maxCoeff());

    // P22 = Nr Mr^{-1}, skipped where Mr(z) is singular (z a pole of P22).
    const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(mr);
    const double smax = nu > 0 ? svd.singularValues()(0) : 0.0;
    const double smin = nu > 0 ? svd.singularValues()(nu - 1) : 0.0;
    if (smin <= 1e-12 * std::max(1.0, smax)) {
      ++rep.skipped_points;
      continue;
    }
    const Eigen::MatrixXcd mrT = mr.transpose();
    const Eigen::MatrixXcd p22 = mrT.partialPivLu().solve(nr.transpose()).transpose();
    const Eigen::MatrixXcd diff = p22 - rational_eval(P.A, P.B2, P.C2, D22, z);
    if (diff.size() > 0) {
      rep.max_residual = std::max(rep.max_residual, diff.cwiseAbs().maxCoeff());
    }
  }
  rep.pass = rep.max_residual < tol;
  return rep;
}

}  // namespace parametrix

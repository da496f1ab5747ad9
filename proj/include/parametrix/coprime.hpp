#pragma once

#include <Eigen/Core>
#include <optional>

#include "parametrix/fir.hpp"
#include "parametrix/plant.hpp"

namespace parametrix {

// Gain pair for the observer-based doubly-coprime construction.
//
// F is a state feedback with A + B2 F Schur. Lc is a current-estimator
// (filter) gain: the estimator updates on the measurement at the same step,
// so its error dynamics are A (I - Lc C2). L = -A Lc is the equivalent
// predictor-form output injection, kept because A + L C2 = A (I - Lc C2) is
// the conventional way to state the stability requirement.
struct StabilizingGains {
  Eigen::MatrixXd F;
  Eigen::MatrixXd L;
  Eigen::MatrixXd Lc;
};

enum class GainMode { kDeadbeat, kRiccati };

// Best-effort sequential rank-one placement driving all reachable modes of
// A + B F to zero. The caller checks nilpotency of the result.
Eigen::MatrixXd place_deadbeat(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

// Fixed-point iteration X <- A'XA - A'XB (I + B'XB)^{-1} B'XA + I
// to tolerance 1e-12, at most 10000 iterations.
Eigen::MatrixXd dare_fixed_point(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

// Deadbeat gains (all closed-loop and estimator poles at the origin) when
// (A, B2) is controllable and (A, C2) is observable; otherwise falls back to
// the Riccati gains. Unstabilizable/undetectable plants cannot be
// constructed, so the fallback always succeeds.
StabilizingGains deadbeat_gains(const StateSpacePlant& P);
StabilizingGains riccati_gains(const StateSpacePlant& P);
StabilizingGains stabilizing_gains(const StateSpacePlant& P, GainMode mode);

// The eight stable factors of Definition-style doubly-coprime factorizations:
// P22 = Nr Mr^{-1} = Ml^{-1} Nl with the 2x2-block Bezout identity
// [[Ul, -Vl], [-Nl, Ml]] [[Mr, Vr], [Nr, Ur]] = I.
// Factors carry their gain provenance when built from a plant; synthesis uses
// it to form exact stable realizations of closed-loop data.
struct DoublyCoprimeFactors {
  FirTransferMatrix Ul, Vl, Nl, Ml, Ur, Vr, Nr, Mr;
  std::optional<StabilizingGains> gains;
};

// Observer-based construction over (A, B2, C2, F, Lc); exact FIR of degree
// <= n under deadbeat gains. Verifies the Bezout identity before returning.
DoublyCoprimeFactors doubly_coprime_general(const StateSpacePlant& P,
                                            const StabilizingGains& gains, int horizon);

// Trivial factorization of a stable plant: Ul = Ur = Ml = Mr = I,
// Vl = Vr = 0, Nl = Nr = FIR expansion of P22. Equals the general
// construction with zero gains.
DoublyCoprimeFactors doubly_coprime_stable(const StateSpacePlant& P, int horizon);

// Exact degree-one factorization available when B2 = C2 = I:
// Mr = Ml = I - A/z, Nr = Nl = I/z, Ur = Ul = I, Vr = Vl = -A.
// Coincides with the general construction under F = -A, Lc = I.
DoublyCoprimeFactors doubly_coprime_state_feedback(const StateSpacePlant& P);

struct BezoutReport {
  double max_residual = 0.0;
  bool pass = false;
  int skipped_points = 0;  // sample points where Mr(z) was singular
};

// Evaluates the block Bezout product minus identity and Nr Mr^{-1} - P22
// (P22 evaluated exactly from the realization) at npoints equispaced
// unit-circle points.
BezoutReport verify_bezout(const DoublyCoprimeFactors& f, const StateSpacePlant& P, int npoints,
                           double tol = 1e-8);

}  // namespace parametrix

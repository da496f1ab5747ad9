#pragma once

#include <Eigen/Core>
#include <complex>
#include <vector>

#include "parametrix/fir.hpp"

namespace parametrix {

// Spectral radius below 1 - kStabilityMargin counts as Schur stable.
inline constexpr double kStabilityMargin = 1e-9;

// Discrete-time generalized plant
//
//        [ A  | B1  B2  ]          z: performance output,  w: disturbance
//   P =  [ C1 | D11 D12 ]          y: measurement,         u: control
//        [ C2 | D21  0  ]
//
// The measurement feedthrough D22 is identically zero by construction, which
// keeps every feedback interconnection well posed. The constructor validates
// dimensions and rejects plants whose unstable modes cannot be stabilized
// through B2 or detected through C2 (PBH rank tests).
struct StateSpacePlant {
  Eigen::MatrixXd A, B1, B2, C1, C2, D11, D12, D21;

  StateSpacePlant(Eigen::MatrixXd A, Eigen::MatrixXd B1, Eigen::MatrixXd B2,
                  Eigen::MatrixXd C1, Eigen::MatrixXd C2, Eigen::MatrixXd D11,
                  Eigen::MatrixXd D12, Eigen::MatrixXd D21);

  Eigen::Index nx() const { return A.rows(); }
  Eigen::Index nw() const { return B1.cols(); }
  Eigen::Index nu() const { return B2.cols(); }
  Eigen::Index nz() const { return C1.rows(); }
  Eigen::Index ny() const { return C2.rows(); }
};

// Dynamic output-feedback controller u = K y with realization
// (Ak, Bk, Ck, Dk); nk = 0 gives a static gain.
struct Controller {
  Eigen::MatrixXd Ak, Bk, Ck, Dk;
  Eigen::Index nk() const { return Ak.rows(); }
};

struct StabilityInfo {
  bool stable;
  double spectral_radius;
};

double spectral_radius(const Eigen::MatrixXd& A);
StabilityInfo is_stable(const Eigen::MatrixXd& A);

// PBH tests over the unstable eigenvalues only.
bool is_stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);
bool is_detectable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C);

// Full Kalman rank tests.
bool is_controllable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol = 1e-9);
bool is_observable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C, double tol = 1e-9);

// ||A^n|| at round-off scale; the honest deadbeat test (numerically placed
// zero eigenvalues of a defective matrix can read as large as eps^(1/n)).
bool is_nilpotent(const Eigen::MatrixXd& A, double tol = 1e-8);

// Impulse-response expansion [D, CB, CAB, CA^2B, ...] up to `horizon`.
// Exact whenever A is nilpotent with index <= horizon.
FirTransferMatrix markov_expand(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                const Eigen::MatrixXd& C, const Eigen::MatrixXd& D, int horizon);

// C (zI - A)^{-1} B + D at a complex point not in the spectrum of A.
Eigen::MatrixXcd rational_eval(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                               const Eigen::MatrixXd& C, const Eigen::MatrixXd& D,
                               std::complex<double> z);

// Smallest horizon at which the impulse-response tail of (A,B,C) falls below
// `tol`, clamped to [min_horizon, cap]. Requires a stable (or nilpotent) A.
int expansion_horizon(const Eigen::MatrixXd& A, double tol = 1e-10, int min_horizon = 1,
                      int cap = 400);

// Plant subblock expansions P_ij = C_i (zI-A)^{-1} B_j + D_ij.
FirTransferMatrix p11_fir(const StateSpacePlant& P, int horizon);
FirTransferMatrix p12_fir(const StateSpacePlant& P, int horizon);
FirTransferMatrix p21_fir(const StateSpacePlant& P, int horizon);
FirTransferMatrix p22_fir(const StateSpacePlant& P, int horizon);

// Closed-loop realization of the disturbance-to-performance map f(P, K)
// = P11 + P12 K (I - P22 K)^{-1} P21 (well posed since D22 = 0).
struct ClosedLoop {
  Eigen::MatrixXd A, B, C, D;
};
ClosedLoop lft_closed_loop(const StateSpacePlant& P, const Controller& K);

// Internal stability: spectral radius of the closed-loop A matrix.
StabilityInfo internal_stability(const StateSpacePlant& P, const Controller& K);

// Shift-register realization of an FIR controller K(z) = K_0 + K_1 z^{-1} + ...
Controller realize_fir_controller(const FirTransferMatrix& k);

// Poles of the transfer matrix C (zI-A)^{-1} B after removing uncontrollable
// and unobservable modes (structural minimal realization).
std::vector<std::complex<double>> transfer_poles(const Eigen::MatrixXd& A,
                                                 const Eigen::MatrixXd& B,
                                                 const Eigen::MatrixXd& C, double tol = 1e-9);

// Input-output stability criterion: the four closed-loop maps from loop
// disturbances (dy, du) to (y, u) must all have pole moduli < 1. Agrees with
// internal_stability whenever plant and controller realizations are
// stabilizable and detectable.
bool io_maps_stable(const StateSpacePlant& P, const Controller& K);

namespace detail {
// Orthonormal basis for the Krylov space span[B, AB, ..., A^{n-1}B]; the
// space is A-invariant, so restricting A to it preserves the reachable modes.
Eigen::MatrixXd krylov_basis(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol);
}  // namespace detail

}  // namespace parametrix

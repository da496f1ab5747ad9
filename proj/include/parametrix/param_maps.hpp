#pragma once

#include "parametrix/coprime.hpp"
#include "parametrix/fir.hpp"
#include "parametrix/plant.hpp"

namespace parametrix {

// Youla parameter: any stable Q (here FIR, nu x ny) yields an internally
// stabilizing controller K = (Vr - Mr Q)(Ur - Nr Q)^{-1}.
struct YoulaParam {
  FirTransferMatrix Q;
};

// Input-output closed-loop responses (Y: ny x ny, U: nu x ny, W: ny x nu,
// Z: nu x nu) constrained by
//   Y - P22 U = I,  W - P22 Z = 0,  -Y P22 + W = 0,  -U P22 + Z = I,
// with K = U Y^{-1}.
struct IopQuadruple {
  FirTransferMatrix Y, U, W, Z;
};

// System-level closed-loop responses (R: n x n, M: nu x n, N: n x ny,
// L: nu x ny) constrained by
//   [zI-A, -B2] [[R, N], [M, L]] = [I, 0],
//   [[R, N], [M, L]] [[zI-A], [-C2]] = [[I], [0]],
// R, M, N strictly proper, with K = L - M R^{-1} N.
struct SlpQuadruple {
  FirTransferMatrix R, M, N, L;
};

struct SubspaceReport {
  double max_residual = 0.0;
  bool pass = false;
};

// Controller transfer matrices, truncated FIR of the rational expression.
FirTransferMatrix k_from_youla(const DoublyCoprimeFactors& f, const YoulaParam& q, int horizon);
FirTransferMatrix k_from_iop(const IopQuadruple& x, int horizon);
// K = L - M R^{-1} N with the strictly proper R inverted as (zR)^{-1} z;
// needs invertible R_1 (the subspace forces R_1 = I).
FirTransferMatrix k_from_slp(const SlpQuadruple& s, int horizon);
// Equivalent proper-inverse form K = L (I + C2 N)^{-1}.
FirTransferMatrix k_from_slp(const StateSpacePlant& P, const SlpQuadruple& s, int horizon);

// Affine mappings between the parameterizations. Products are computed
// exactly and truncated to `horizon` only at the end, so outputs are the
// exact rational images whenever the inputs are exact and the horizon is
// large enough.
IopQuadruple youla_to_iop(const DoublyCoprimeFactors& f, const YoulaParam& q, int horizon);
YoulaParam iop_to_youla(const DoublyCoprimeFactors& f, const IopQuadruple& x, int horizon);
IopQuadruple slp_to_iop(const StateSpacePlant& P, const SlpQuadruple& s);
SlpQuadruple iop_to_slp(const StateSpacePlant& P, const IopQuadruple& x, int horizon);
SlpQuadruple youla_to_slp(const StateSpacePlant& P, const DoublyCoprimeFactors& f,
                          const YoulaParam& q, int horizon);
YoulaParam slp_to_youla(const StateSpacePlant& P, const DoublyCoprimeFactors& f,
                        const SlpQuadruple& s, int horizon);

// Affine-subspace verifiers. The IOP constraints are checked at npoints
// unit-circle frequencies against the exact rational P22; the SLP
// constraints are checked coefficient-wise through the recursions
//   R_{k+1} = A R_k + B2 M_k + [k=0] I,   N_{k+1} = A N_k + B2 L_k,
//   R_{k+1} = R_k A + N_k C2 + [k=0] I,   M_{k+1} = M_k A + L_k C2,
// including the closing conditions at the final horizon.
SubspaceReport verify_iop_subspace(const StateSpacePlant& P, const IopQuadruple& x, int npoints,
                                   double tol = 1e-8);
SubspaceReport verify_slp_subspace(const StateSpacePlant& P, const SlpQuadruple& s,
                                   double tol = 1e-8);

// Exact shift-register realization of the right matrix fraction
// num(z) den(z)^{-1} (den square with invertible leading coefficient).
// Unlike truncating the quotient to FIR, this preserves internal stability
// properties of the represented controller exactly.
Controller realize_rmfd(const FirTransferMatrix& num, const FirTransferMatrix& den);
Controller controller_from_youla(const DoublyCoprimeFactors& f, const YoulaParam& q);
Controller controller_from_iop(const IopQuadruple& x);
Controller controller_from_slp(const StateSpacePlant& P, const SlpQuadruple& s);

// State-feedback reductions (C2 = I): the pair (R, M) with
// (zI - A) R - B2 M = I determines the full quadruple via
// L = M (zI - A), N = R (zI - A) - I, and the controller K = M R^{-1}.
// When B2 is additionally invertible, the pair (W, Z) determines the IOP
// quadruple via Y = W B2^{-1} (zI - A), U = (Z - I) B2^{-1} (zI - A), and
// the controller K = (Z - I) W^{-1}.
SlpQuadruple complete_state_feedback_slp(const StateSpacePlant& P, const FirTransferMatrix& R,
                                         const FirTransferMatrix& M);
IopQuadruple complete_state_feedback_iop(const StateSpacePlant& P, const FirTransferMatrix& W,
                                         const FirTransferMatrix& Z);
FirTransferMatrix k_from_state_feedback_slp(const FirTransferMatrix& R,
                                            const FirTransferMatrix& M, int horizon);
FirTransferMatrix k_from_state_feedback_iop(const FirTransferMatrix& W,
                                            const FirTransferMatrix& Z, int horizon);

// Stable-plant one-parameter reduction K = -Q (I - P22 Q)^{-1}; the trivial
// factorization collapses the three parameterizations onto L = U = -Q.
FirTransferMatrix k_from_stable_youla(const StateSpacePlant& P, const YoulaParam& q, int horizon);

}  // namespace parametrix

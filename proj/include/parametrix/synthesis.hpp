#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "parametrix/coprime.hpp"
#include "parametrix/fir.hpp"
#include "parametrix/param_maps.hpp"
#include "parametrix/plant.hpp"

namespace parametrix {

// ---------------------------------------------------------------------------
// Sparsity patterns (structural constraints applied to every FIR coefficient)
// ---------------------------------------------------------------------------

struct SparsityPattern {
  Eigen::MatrixXi mask;  // entries in {0, 1}

  SparsityPattern() = default;
  explicit SparsityPattern(Eigen::MatrixXi m);

  Eigen::Index rows() const { return mask.rows(); }
  Eigen::Index cols() const { return mask.cols(); }
  bool allows(Eigen::Index i, Eigen::Index j) const { return mask(i, j) != 0; }

  static SparsityPattern full(Eigen::Index rows, Eigen::Index cols);
  static SparsityPattern diagonal(Eigen::Index n);
  // Support of a matrix: entries with |m_ij| > tol.
  static SparsityPattern from_support(const Eigen::MatrixXd& m, double tol = 0.0);
  SparsityPattern unioned(const SparsityPattern& other) const;

  // True iff every coefficient of g is supported inside the mask (up to tol).
  bool contains(const FirTransferMatrix& g, double tol = 0.0) const;
};

// Quadratic invariance of the controller pattern under the plant pattern:
// for every i,j,k,l with Lpat(i,j) = Ppat(j,k) = Lpat(k,l) = 1 the closed
// product entry (i,l) must also be allowed.
bool qi_test(const SparsityPattern& Lpat, const SparsityPattern& Ppat);

// Structural support of the measurement channel C2 (zI - A)^{-1} B2,
// computed as the boolean reachability closure of C2 A^k B2, k < n.
SparsityPattern plant_pattern(const StateSpacePlant& P);

// ---------------------------------------------------------------------------
// Equality-constrained least-squares programs over FIR coefficients
// ---------------------------------------------------------------------------

struct VarBlock {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  int first_tap = 0;  // taps outside [first_tap, last_tap] are fixed to zero
  int last_tap = 0;
  Eigen::Index offset = 0;

  int taps() const { return last_tap - first_tap + 1; }
  Eigen::Index size() const { return rows * cols * static_cast<Eigen::Index>(taps()); }
};

// Flat least-squares program  min ‖Hx - h‖²  s.t.  Aeq x = beq,  where x
// stacks the coefficients of named FIR variable blocks. Rows are assembled
// incrementally; entries addressed by (block, tap, i, j) accumulate, and
// references to taps outside a block's range are silently dropped (those
// coefficients are structurally zero).
class LeastSquaresProgram {
 public:
  int add_variable(const std::string& name, Eigen::Index rows, Eigen::Index cols, int first_tap,
                   int last_tap);
  int block_id(const std::string& name) const;
  bool has_block(const std::string& name) const;
  const VarBlock& block(int id) const { return blocks_.at(static_cast<size_t>(id)); }
  const std::vector<VarBlock>& blocks() const { return blocks_; }
  Eigen::Index num_vars() const { return total_; }

  Eigen::Index var_index(int id, int tap, Eigen::Index i, Eigen::Index j) const;

  Eigen::Index add_objective_row(double target);
  void objective_add(Eigen::Index row, int id, int tap, Eigen::Index i, Eigen::Index j, double w);
  Eigen::Index num_objective_rows() const { return static_cast<Eigen::Index>(obj_target_.size()); }

  Eigen::Index add_constraint_row(double target);
  void constraint_add(Eigen::Index row, int id, int tap, Eigen::Index i, Eigen::Index j, double w);
  Eigen::Index num_constraint_rows() const {
    return static_cast<Eigen::Index>(con_target_.size());
  }

  Eigen::MatrixXd objective_matrix() const;
  Eigen::VectorXd objective_target() const;
  Eigen::MatrixXd constraint_matrix() const;
  Eigen::VectorXd constraint_target() const;

  // Rebuilds the FIR variable from a flat solution vector (taps below
  // first_tap come back as zero coefficients).
  FirTransferMatrix extract(int id, const Eigen::VectorXd& x) const;

 private:
  struct Entry {
    Eigen::Index row;
    Eigen::Index col;
    double w;
  };
  std::vector<VarBlock> blocks_;
  Eigen::Index total_ = 0;
  std::vector<Entry> obj_entries_, con_entries_;
  std::vector<double> obj_target_, con_target_;
};

struct LsSolution {
  Eigen::VectorXd x;
  double objective = 0.0;            // ‖Hx - h‖_2 at the solution
  double constraint_residual = 0.0;  // max-abs residual over all equality rows
  Eigen::Index rank = 0;             // independent constraint rows retained
};

// Rank-revealing elimination of redundant equality rows (column-pivoted QR,
// threshold 1e-10), then one KKT solve with 1e-12 Tikhonov regularization on
// the variable block (minimum-norm tie-breaking on flat optima).
// Deterministic. Throws InfeasibleError when the equality system is
// inconsistent, VerificationError when the KKT solve cannot be certified.
LsSolution solve_equality_ls(const LeastSquaresProgram& prog);

// ---------------------------------------------------------------------------
// H2 synthesis in the three parameterizations
// ---------------------------------------------------------------------------

enum class SynthesisRoute { kYoula, kSlp, kIop };

struct SynthesisResult {
  FirTransferMatrix controller;                    // FIR of K for reporting
  std::map<std::string, FirTransferMatrix> params;  // optimal parameters by name
  double h2_cost = 0.0;                            // closed-loop H2 norm
  double constraint_residual = 0.0;
  bool internally_stable = false;
  double closed_loop_radius = 0.0;
  bool inner_approx = false;
  double wall_time_ms = 0.0;
};

// Unconstrained least squares in Q for ‖T11 + T12 Q T21‖ with the
// closed-loop data built from the factorization's gain provenance (stable
// realizations; exactly FIR under deadbeat gains). Factors without
// provenance require a stable plant (truncated open-loop expansion).
LeastSquaresProgram assemble_youla_program(const StateSpacePlant& P,
                                           const DoublyCoprimeFactors& f, int T);

// Equality-constrained least squares over (R, M, N, L) with the subspace
// recursions and the finite-horizon tail rows that close the impulse
// response exactly at horizon T.
LeastSquaresProgram assemble_slp_program(const StateSpacePlant& P, int T);

// Equality-constrained least squares over (Y, U, W, Z) for a stable plant.
// U keeps horizon T; the determined blocks get the horizons needed to close
// the convolution constraints against the truncated plant expansion.
LeastSquaresProgram assemble_iop_program(const StateSpacePlant& P, int T);

// Solve the chosen route's program; factors for the Youla route are taken
// from `f` or constructed automatically (trivial for stable plants, deadbeat
// otherwise).
SynthesisResult synthesize(const StateSpacePlant& P, int T, SynthesisRoute route,
                           const std::optional<DoublyCoprimeFactors>& f = std::nullopt);

// Structured synthesis under quadratic invariance: appends per-coefficient
// zero rows on the route's structured variable ((Vr - Mr Q)Ml, U, or L).
// Throws QiViolationError when Lpat is not QI under the plant pattern.
SynthesisResult synthesize_structured(const StateSpacePlant& P, int T,
                                      const SparsityPattern& Lpat, SynthesisRoute route,
                                      const std::optional<DoublyCoprimeFactors>& f = std::nullopt);

// Sparsity-invariance inner approximation under state feedback (C2 = I):
// the controller fraction is split into a numerator factor constrained to
// Lpat and a diagonal denominator factor, which guarantees K ∈ Lpat.
//   - SLP route: variables (R, M) with M ∈ Lpat and R diagonal (needs D21=0).
//   - Youla route: Q with Vr - Mr Q ∈ Lpat and Ur - Nr Q diagonal (B2 = I).
//   - IOP route: Z with Z - I ∈ Lpat and W = P22 Z diagonal (stable A,
//     invertible B2, D21 = 0).
SynthesisResult synthesize_si(const StateSpacePlant& P, int T, const SparsityPattern& Lpat,
                              SynthesisRoute route);

// ---------------------------------------------------------------------------
// System-level constraint transfer
// ---------------------------------------------------------------------------

// Convex constraint set on the closed-loop response maps: per-block sparsity
// patterns (absent = unconstrained) plus an optional coefficient box bound
// |coeff| <= box applied to all four maps.
struct SlsConstraint {
  std::optional<SparsityPattern> R, M, N, L;
  std::optional<double> box;
};

// Builds the synthesis program whose variable is the chosen target
// parameterization with the system-level constraints substituted through
// the affine maps onto (R, M, N, L). kSlp is the direct program; kYoula and
// kIop substitute the images of Q and U respectively. Sparsity becomes
// equality rows; the box bound is handled iteratively by synthesize_sls.
LeastSquaresProgram sls_transfer(const StateSpacePlant& P, const SlsConstraint& S,
                                 SynthesisRoute target, int T,
                                 const std::optional<DoublyCoprimeFactors>& f = std::nullopt);

// Solves the transferred program; box bounds are enforced by a deterministic
// clamp-and-resolve loop (violated coefficients pinned at the bound and
// never released).
SynthesisResult synthesize_sls(const StateSpacePlant& P, int T, const SlsConstraint& S,
                               SynthesisRoute target,
                               const std::optional<DoublyCoprimeFactors>& f = std::nullopt);

// ---------------------------------------------------------------------------
// End-to-end consensus-style example
// ---------------------------------------------------------------------------

// Builds the networked double-integrator-free plant x+ = A x + u + w with
// cost on x only, where A is the (scaled) graph adjacency: A = 0.5/rho(adj)
// * adj, or [[0.5]] for n = 1. Runs the three sparsity-invariance routes
// with Lpat = support(A) ∪ diagonal and returns their results in route
// order (SLP, Youla, IOP).
std::array<SynthesisResult, 3> solve_example1(Eigen::Index n,
                                              const std::optional<Eigen::MatrixXd>& adjacency,
                                              int T);

// The plant and pattern used by solve_example1, exposed for reuse.
StateSpacePlant example1_plant(Eigen::Index n, const std::optional<Eigen::MatrixXd>& adjacency);
SparsityPattern example1_pattern(const StateSpacePlant& P);

}  // namespace parametrix

#include "parametrix/synthesis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <tuple>
#include <utility>

#include "parametrix/errors.hpp"

namespace parametrix {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool is_identity(const Eigen::MatrixXd& m, double tol = 1e-12) {
  return m.rows() == m.cols() &&
         (m - Eigen::MatrixXd::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff() <= tol;
}

bool is_zero(const Eigen::MatrixXd& m, double tol = 1e-12) {
  return m.size() == 0 || m.cwiseAbs().maxCoeff() <= tol;
}

Eigen::MatrixXd inverse_checked(const Eigen::MatrixXd& m, const char* what) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (!(smin > 1e-13 * std::max(1.0, smax))) {
    throw PreconditionError(std::string(what) + ": matrix is numerically singular");
  }
  return m.partialPivLu().inverse();
}

void require_pattern_dims(const SparsityPattern& pat, Eigen::Index rows, Eigen::Index cols,
                          const char* what) {
  if (pat.rows() != rows || pat.cols() != cols) {
    throw PreconditionError(std::string(what) + ": sparsity pattern has wrong dimensions");
  }
}

// Convolution weight tensor for an affine map X -> left * X * right:
// W_c(i*left.cols()+p, q*right.cols()+j) = sum_{a+b=c} left_a(i,p) right_b(q,j).
std::vector<Eigen::MatrixXd> pair_conv(const FirTransferMatrix& left,
                                       const FirTransferMatrix& right) {
  const Eigen::Index rl = left.rows(), cl = left.cols();
  const Eigen::Index rr = right.rows(), cr = right.cols();
  const int deg = left.horizon() + right.horizon();
  std::vector<Eigen::MatrixXd> w(static_cast<size_t>(deg) + 1,
                                 Eigen::MatrixXd::Zero(rl * cl, rr * cr));
  for (int a = 0; a <= left.horizon(); ++a) {
    const Eigen::MatrixXd& la = left.coeff(a);
    for (int b = 0; b <= right.horizon(); ++b) {
      const Eigen::MatrixXd& rb = right.coeff(b);
      Eigen::MatrixXd& wc = w[static_cast<size_t>(a + b)];
      for (Eigen::Index i = 0; i < rl; ++i)
        for (Eigen::Index p = 0; p < cl; ++p) {
          const double lv = la(i, p);
          if (lv == 0.0) continue;
          for (Eigen::Index q = 0; q < rr; ++q)
            for (Eigen::Index j = 0; j < cr; ++j) wc(i * cl + p, q * cr + j) += lv * rb(q, j);
        }
    }
  }
  return w;
}

// Objective rows for ‖base + left * X * right‖ with X the block `id`
// holding taps 0..T_var.
void add_affine_h2_rows(LeastSquaresProgram& prog, int id, const FirTransferMatrix& base,
                        const FirTransferMatrix& left, const FirTransferMatrix& right, int t_var) {
  const std::vector<Eigen::MatrixXd> w = pair_conv(left, right);
  const int wdeg = static_cast<int>(w.size()) - 1;
  const int t_obj = std::max(base.horizon(), left.horizon() + t_var + right.horizon());
  const Eigen::Index nz = left.rows(), nu = left.cols();
  const Eigen::Index ny = right.rows(), nw = right.cols();
  for (int k = 0; k <= t_obj; ++k) {
    const Eigen::MatrixXd bk = base.coeff_or_zero(k);
    for (Eigen::Index i = 0; i < nz; ++i)
      for (Eigen::Index j = 0; j < nw; ++j) {
        const Eigen::Index row = prog.add_objective_row(-bk(i, j));
        for (int m = std::max(0, k - wdeg); m <= std::min(t_var, k); ++m) {
          const Eigen::MatrixXd& wc = w[static_cast<size_t>(k - m)];
          for (Eigen::Index p = 0; p < nu; ++p)
            for (Eigen::Index q = 0; q < ny; ++q) {
              const double v = wc(i * nu + p, q * nw + j);
              if (v != 0.0) prog.objective_add(row, id, m, p, q, v);
            }
        }
      }
  }
}

// Closed-loop data (T11, T12, T21) of f(P, K) = T11 + T12 Q T21 for the
// given factorization. With gain provenance the three maps get exact stable
// realizations built around the central controller; otherwise the plant must
// be stable and open-loop expansions are used.
struct ClosedLoopData {
  FirTransferMatrix t11, t12, t21;
};

ClosedLoopData closed_loop_data(const StateSpacePlant& P, const DoublyCoprimeFactors& f) {
  ClosedLoopData d;
  if (f.gains.has_value()) {
    const StabilizingGains& g = *f.gains;
    const Eigen::Index n = P.nx();
    const Eigen::MatrixXd E = Eigen::MatrixXd::Identity(n, n) - g.Lc * P.C2;
    const Eigen::MatrixXd AF = P.A + P.B2 * g.F;
    const Eigen::MatrixXd Ao = P.A * E;
    const Controller k0{AF * E, AF * g.Lc, g.F * E, g.F * g.Lc};
    const ClosedLoop cl = lft_closed_loop(P, k0);
    if (!is_stable(cl.A).stable) {
      throw VerificationError("closed_loop_data: factor gains do not stabilize the plant");
    }
    const int h11 = expansion_horizon(cl.A, 1e-12);
    const int h12 = expansion_horizon(AF, 1e-12);
    const int h21 = expansion_horizon(Ao, 1e-12);
    d.t11 = markov_expand(cl.A, cl.B, cl.C, cl.D, h11);
    d.t12 = -markov_expand(AF, P.B2, P.C1 + P.D12 * g.F, P.D12, h12);
    d.t21 = markov_expand(Ao, P.B1 - P.A * g.Lc * P.D21, P.C2, P.D21, h21);
  } else {
    if (!is_stable(P.A).stable) {
      throw PreconditionError(
          "closed_loop_data: factors without gain provenance require a stable plant");
    }
    const int h = expansion_horizon(P.A, 1e-12);
    const FirTransferMatrix p11 = p11_fir(P, h), p12 = p12_fir(P, h), p21 = p21_fir(P, h);
    d.t11 = p11 + fir_mul(fir_mul(p12, fir_mul(f.Vr, f.Ml)), p21);
    d.t12 = -fir_mul(p12, f.Mr);
    d.t21 = fir_mul(f.Ml, p21);
  }
  return d;
}

DoublyCoprimeFactors default_factors(const StateSpacePlant& P) {
  if (is_stable(P.A).stable) {
    return doubly_coprime_stable(P, expansion_horizon(P.A, 1e-12));
  }
  return doubly_coprime_general(P, deadbeat_gains(P), static_cast<int>(P.nx()) + 1);
}

int controller_fir_horizon(const StateSpacePlant& P, int T) {
  return T + 2 * static_cast<int>(P.nx()) + 2;
}

// Shared result assembly: stability is judged on the exact fraction
// realization. Companion realizations of a matrix fraction can carry
// cancelled (unreachable/unobservable) modes of the denominator; on
// unstable plants those read as unstable eigenvalues even though every
// closed-loop transfer map is stable, so the eigenvalue test falls back to
// the pole test on the four loop maps.
SynthesisResult finish_result(const StateSpacePlant& P, FirTransferMatrix controller,
                              const Controller& realization,
                              std::map<std::string, FirTransferMatrix> params,
                              const LsSolution& sol, bool inner, Clock::time_point t0) {
  SynthesisResult res;
  res.controller = std::move(controller);
  res.params = std::move(params);
  res.h2_cost = sol.objective;
  res.constraint_residual = sol.constraint_residual;
  const StabilityInfo info = internal_stability(P, realization);
  res.internally_stable = info.stable ? true : io_maps_stable(P, realization);
  res.closed_loop_radius = info.spectral_radius;
  res.inner_approx = inner;
  res.wall_time_ms = elapsed_ms(t0);
  return res;
}

// Affine image of the input disturbance response U on the system-level
// quadruple (L = U and the subspace recursions). with_offset=false drops the
// identity seed, giving the linear part of the map alone.
SlpQuadruple slp_image_from_u(const StateSpacePlant& P, const FirTransferMatrix& U, int horizon,
                              bool with_offset) {
  const Eigen::Index n = P.nx(), nu = P.nu(), ny = P.ny();
  std::vector<Eigen::MatrixXd> r(static_cast<size_t>(horizon) + 1, Eigen::MatrixXd::Zero(n, n));
  std::vector<Eigen::MatrixXd> m(static_cast<size_t>(horizon) + 1, Eigen::MatrixXd::Zero(nu, n));
  std::vector<Eigen::MatrixXd> nn(static_cast<size_t>(horizon) + 1, Eigen::MatrixXd::Zero(n, ny));
  const FirTransferMatrix l = U.truncated(horizon);
  for (int k = 0; k < horizon; ++k) {
    const size_t kk = static_cast<size_t>(k);
    const Eigen::MatrixXd lk = l.coeff_or_zero(k);
    r[kk + 1] = P.A * r[kk] + P.B2 * m[kk];
    if (k == 0 && with_offset) r[kk + 1] += Eigen::MatrixXd::Identity(n, n);
    nn[kk + 1] = P.A * nn[kk] + P.B2 * lk;
    m[kk + 1] = m[kk] * P.A + lk * P.C2;
  }
  SlpQuadruple s;
  s.R = FirTransferMatrix(std::move(r));
  s.M = FirTransferMatrix(std::move(m));
  s.N = FirTransferMatrix(std::move(nn));
  s.L = l;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// SparsityPattern
// ---------------------------------------------------------------------------

SparsityPattern::SparsityPattern(Eigen::MatrixXi m) : mask(std::move(m)) {
  mask = (mask.array() != 0).cast<int>();
}

SparsityPattern SparsityPattern::full(Eigen::Index rows, Eigen::Index cols) {
  return SparsityPattern(Eigen::MatrixXi::Ones(rows, cols));
}

SparsityPattern SparsityPattern::diagonal(Eigen::Index n) {
  return SparsityPattern(Eigen::MatrixXi::Identity(n, n));
}

SparsityPattern SparsityPattern::from_support(const Eigen::MatrixXd& m, double tol) {
  return SparsityPattern((m.cwiseAbs().array() > tol).cast<int>());
}

SparsityPattern SparsityPattern::unioned(const SparsityPattern& other) const {
  if (rows() != other.rows() || cols() != other.cols()) {
    throw PreconditionError("SparsityPattern::unioned: dimension mismatch");
  }
  return SparsityPattern(mask + other.mask);
}

bool SparsityPattern::contains(const FirTransferMatrix& g, double tol) const {
  if (g.empty()) return true;
  if (g.rows() != rows() || g.cols() != cols()) {
    throw PreconditionError("SparsityPattern::contains: dimension mismatch");
  }
  for (const Eigen::MatrixXd& c : g.coeffs()) {
    for (Eigen::Index i = 0; i < rows(); ++i)
      for (Eigen::Index j = 0; j < cols(); ++j) {
        if (!allows(i, j) && std::abs(c(i, j)) > tol) return false;
      }
  }
  return true;
}

bool qi_test(const SparsityPattern& Lpat, const SparsityPattern& Ppat) {
  if (Lpat.cols() != Ppat.rows() || Lpat.rows() != Ppat.cols()) {
    throw PreconditionError("qi_test: controller and plant patterns have incompatible shapes");
  }
  const Eigen::Index nu = Lpat.rows(), ny = Lpat.cols();
  for (Eigen::Index i = 0; i < nu; ++i)
    for (Eigen::Index j = 0; j < ny; ++j) {
      if (!Lpat.allows(i, j)) continue;
      for (Eigen::Index k = 0; k < nu; ++k) {
        if (!Ppat.allows(j, k)) continue;
        for (Eigen::Index l = 0; l < ny; ++l) {
          if (Lpat.allows(k, l) && !Lpat.allows(i, l)) return false;
        }
      }
    }
  return true;
}

SparsityPattern plant_pattern(const StateSpacePlant& P) {
  const Eigen::Index n = P.nx();
  const Eigen::MatrixXi ab = (P.A.cwiseAbs().array() > 0.0).cast<int>();
  const Eigen::MatrixXi b2b = (P.B2.cwiseAbs().array() > 0.0).cast<int>();
  const Eigen::MatrixXi c2b = (P.C2.cwiseAbs().array() > 0.0).cast<int>();
  auto bool_mul = [](const Eigen::MatrixXi& x, const Eigen::MatrixXi& y) {
    return Eigen::MatrixXi(((x * y).array() != 0).cast<int>());
  };
  Eigen::MatrixXi reach = b2b;  // support of A^k B2, boolean semiring
  Eigen::MatrixXi acc = Eigen::MatrixXi::Zero(P.ny(), P.nu());
  for (Eigen::Index k = 0; k < n; ++k) {
    acc = (acc + bool_mul(c2b, reach)).array().min(1);
    reach = bool_mul(ab, reach);
  }
  return SparsityPattern(acc);
}

// ---------------------------------------------------------------------------
// LeastSquaresProgram
// ---------------------------------------------------------------------------

int LeastSquaresProgram::add_variable(const std::string& name, Eigen::Index rows,
                                      Eigen::Index cols, int first_tap, int last_tap) {
  if (rows <= 0 || cols <= 0 || last_tap < first_tap || first_tap < 0) {
    throw PreconditionError("LeastSquaresProgram: invalid variable block");
  }
  if (has_block(name)) {
    throw PreconditionError("LeastSquaresProgram: duplicate variable name " + name);
  }
  VarBlock b;
  b.name = name;
  b.rows = rows;
  b.cols = cols;
  b.first_tap = first_tap;
  b.last_tap = last_tap;
  b.offset = total_;
  total_ += b.size();
  blocks_.push_back(std::move(b));
  return static_cast<int>(blocks_.size()) - 1;
}

int LeastSquaresProgram::block_id(const std::string& name) const {
  for (size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].name == name) return static_cast<int>(i);
  }
  throw PreconditionError("LeastSquaresProgram: unknown variable " + name);
}

bool LeastSquaresProgram::has_block(const std::string& name) const {
  for (const VarBlock& b : blocks_) {
    if (b.name == name) return true;
  }
  return false;
}

Eigen::Index LeastSquaresProgram::var_index(int id, int tap, Eigen::Index i,
                                            Eigen::Index j) const {
  const VarBlock& b = block(id);
  if (tap < b.first_tap || tap > b.last_tap || i < 0 || i >= b.rows || j < 0 || j >= b.cols) {
    throw PreconditionError("LeastSquaresProgram::var_index: index out of range");
  }
  return b.offset + static_cast<Eigen::Index>(tap - b.first_tap) * b.rows * b.cols + i * b.cols + j;
}

Eigen::Index LeastSquaresProgram::add_objective_row(double target) {
  obj_target_.push_back(target);
  return static_cast<Eigen::Index>(obj_target_.size()) - 1;
}

void LeastSquaresProgram::objective_add(Eigen::Index row, int id, int tap, Eigen::Index i,
                                        Eigen::Index j, double w) {
  const VarBlock& b = block(id);
  if (tap < b.first_tap || tap > b.last_tap) return;  // structurally zero coefficient
  obj_entries_.push_back({row, var_index(id, tap, i, j), w});
}

Eigen::Index LeastSquaresProgram::add_constraint_row(double target) {
  con_target_.push_back(target);
  return static_cast<Eigen::Index>(con_target_.size()) - 1;
}

void LeastSquaresProgram::constraint_add(Eigen::Index row, int id, int tap, Eigen::Index i,
                                         Eigen::Index j, double w) {
  const VarBlock& b = block(id);
  if (tap < b.first_tap || tap > b.last_tap) return;  // structurally zero coefficient
  con_entries_.push_back({row, var_index(id, tap, i, j), w});
}

Eigen::MatrixXd LeastSquaresProgram::objective_matrix() const {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(num_objective_rows(), total_);
  for (const Entry& e : obj_entries_) h(e.row, e.col) += e.w;
  return h;
}

Eigen::VectorXd LeastSquaresProgram::objective_target() const {
  return Eigen::Map<const Eigen::VectorXd>(obj_target_.data(),
                                           static_cast<Eigen::Index>(obj_target_.size()));
}

Eigen::MatrixXd LeastSquaresProgram::constraint_matrix() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(num_constraint_rows(), total_);
  for (const Entry& e : con_entries_) a(e.row, e.col) += e.w;
  return a;
}

Eigen::VectorXd LeastSquaresProgram::constraint_target() const {
  return Eigen::Map<const Eigen::VectorXd>(con_target_.data(),
                                           static_cast<Eigen::Index>(con_target_.size()));
}

FirTransferMatrix LeastSquaresProgram::extract(int id, const Eigen::VectorXd& x) const {
  const VarBlock& b = block(id);
  if (x.size() != total_) {
    throw PreconditionError("LeastSquaresProgram::extract: solution vector has wrong size");
  }
  std::vector<Eigen::MatrixXd> coeffs(static_cast<size_t>(b.last_tap) + 1,
                                      Eigen::MatrixXd::Zero(b.rows, b.cols));
  for (int tap = b.first_tap; tap <= b.last_tap; ++tap) {
    Eigen::MatrixXd& c = coeffs[static_cast<size_t>(tap)];
    for (Eigen::Index i = 0; i < b.rows; ++i)
      for (Eigen::Index j = 0; j < b.cols; ++j) c(i, j) = x(var_index(id, tap, i, j));
  }
  return FirTransferMatrix(std::move(coeffs));
}

LsSolution solve_equality_ls(const LeastSquaresProgram& prog) {
  const Eigen::Index nv = prog.num_vars();
  if (nv == 0) throw PreconditionError("solve_equality_ls: program has no variables");
  const Eigen::MatrixXd h_mat = prog.objective_matrix();
  const Eigen::VectorXd h_tgt = prog.objective_target();
  const Eigen::MatrixXd a_mat = prog.constraint_matrix();
  const Eigen::VectorXd b_tgt = prog.constraint_target();

  // Rank-revealing selection of independent constraint rows.
  Eigen::Index rank = 0;
  std::vector<Eigen::Index> keep;
  if (a_mat.rows() > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a_mat.transpose());
    qr.setThreshold(1e-10);
    rank = qr.rank();
    const auto& perm = qr.colsPermutation().indices();
    keep.assign(perm.data(), perm.data() + rank);
    std::sort(keep.begin(), keep.end());
  }
  Eigen::MatrixXd a_sel(rank, nv);
  Eigen::VectorXd b_sel(rank);
  for (Eigen::Index r = 0; r < rank; ++r) {
    a_sel.row(r) = a_mat.row(keep[static_cast<size_t>(r)]);
    b_sel(r) = b_tgt(keep[static_cast<size_t>(r)]);
  }

  // Regularized KKT system: the 1e-12 Tikhonov term breaks ties toward the
  // minimum-norm solution when the objective Hessian is rank deficient.
  const Eigen::Index dim = nv + rank;
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
  kkt.topLeftCorner(nv, nv) = h_mat.transpose() * h_mat;
  kkt.topLeftCorner(nv, nv).diagonal().array() += 1e-12;
  if (rank > 0) {
    kkt.topRightCorner(nv, rank) = a_sel.transpose();
    kkt.bottomLeftCorner(rank, nv) = a_sel;
  }
  Eigen::VectorXd rhs(dim);
  rhs.head(nv) = h_mat.transpose() * h_tgt;
  rhs.tail(rank) = b_sel;

  const Eigen::VectorXd sol = kkt.partialPivLu().solve(rhs);
  if (!sol.allFinite()) {
    throw VerificationError("solve_equality_ls: KKT solve produced non-finite values");
  }
  const double kkt_res = (kkt * sol - rhs).cwiseAbs().maxCoeff();
  if (kkt_res > 1e-6 * std::max(1.0, rhs.cwiseAbs().maxCoeff())) {
    throw VerificationError("solve_equality_ls: KKT solve could not be certified");
  }

  LsSolution out;
  out.x = sol.head(nv);
  out.rank = rank;
  out.objective = (h_mat.rows() > 0) ? (h_mat * out.x - h_tgt).norm() : 0.0;
  out.constraint_residual =
      (a_mat.rows() > 0) ? (a_mat * out.x - b_tgt).cwiseAbs().maxCoeff() : 0.0;
  if (out.constraint_residual > 1e-6) {
    throw InfeasibleError("solve_equality_ls: equality constraints are inconsistent (residual " +
                          std::to_string(out.constraint_residual) + ")");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Program assembly
// ---------------------------------------------------------------------------

LeastSquaresProgram assemble_youla_program(const StateSpacePlant& P,
                                           const DoublyCoprimeFactors& f, int T) {
  if (T < 0) throw PreconditionError("assemble_youla_program: horizon must be nonnegative");
  const ClosedLoopData d = closed_loop_data(P, f);
  LeastSquaresProgram prog;
  const int q = prog.add_variable("Q", P.nu(), P.ny(), 0, T);
  add_affine_h2_rows(prog, q, d.t11, d.t12, d.t21, T);
  return prog;
}

LeastSquaresProgram assemble_slp_program(const StateSpacePlant& P, int T) {
  if (T < 1) throw PreconditionError("assemble_slp_program: horizon must be at least 1");
  const Eigen::Index n = P.nx(), nu = P.nu(), ny = P.ny(), nw = P.nw(), nz = P.nz();
  LeastSquaresProgram prog;
  const int r = prog.add_variable("R", n, n, 1, T);
  const int m = prog.add_variable("M", nu, n, 1, T);
  const int nb = prog.add_variable("N", n, ny, 1, T);
  const int l = prog.add_variable("L", nu, ny, 0, T);

  // Taps outside each block's range drop out of the accumulation calls, so
  // the k = 0 rows become the identity seeds and the k = T rows the
  // finite-horizon closing conditions.
  for (int k = 0; k <= T; ++k) {
    // R_{k+1} = A R_k + B2 M_k + [k=0] I
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::Index row = prog.add_constraint_row((k == 0 && i == j) ? 1.0 : 0.0);
        prog.constraint_add(row, r, k + 1, i, j, 1.0);
        for (Eigen::Index p = 0; p < n; ++p) prog.constraint_add(row, r, k, p, j, -P.A(i, p));
        for (Eigen::Index p = 0; p < nu; ++p) prog.constraint_add(row, m, k, p, j, -P.B2(i, p));
      }
    // N_{k+1} = A N_k + B2 L_k
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < ny; ++j) {
        const Eigen::Index row = prog.add_constraint_row(0.0);
        prog.constraint_add(row, nb, k + 1, i, j, 1.0);
        for (Eigen::Index p = 0; p < n; ++p) prog.constraint_add(row, nb, k, p, j, -P.A(i, p));
        for (Eigen::Index p = 0; p < nu; ++p) prog.constraint_add(row, l, k, p, j, -P.B2(i, p));
      }
    // M_{k+1} = M_k A + L_k C2
    for (Eigen::Index i = 0; i < nu; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::Index row = prog.add_constraint_row(0.0);
        prog.constraint_add(row, m, k + 1, i, j, 1.0);
        for (Eigen::Index p = 0; p < n; ++p) prog.constraint_add(row, m, k, i, p, -P.A(p, j));
        for (Eigen::Index p = 0; p < ny; ++p) prog.constraint_add(row, l, k, i, p, -P.C2(p, j));
      }
    // R_{k+1} = R_k A + N_k C2 + [k=0] I
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::Index row = prog.add_constraint_row((k == 0 && i == j) ? 1.0 : 0.0);
        prog.constraint_add(row, r, k + 1, i, j, 1.0);
        for (Eigen::Index p = 0; p < n; ++p) prog.constraint_add(row, r, k, i, p, -P.A(p, j));
        for (Eigen::Index p = 0; p < ny; ++p) prog.constraint_add(row, nb, k, i, p, -P.C2(p, j));
      }
  }

  // f_k = C1 R_k B1 + C1 N_k D21 + D12 M_k B1 + D12 L_k D21 + [k=0] D11
  for (int k = 0; k <= T; ++k) {
    for (Eigen::Index i = 0; i < nz; ++i)
      for (Eigen::Index j = 0; j < nw; ++j) {
        const Eigen::Index row = prog.add_objective_row(k == 0 ? -P.D11(i, j) : 0.0);
        for (Eigen::Index p = 0; p < n; ++p)
          for (Eigen::Index q = 0; q < n; ++q)
            prog.objective_add(row, r, k, p, q, P.C1(i, p) * P.B1(q, j));
        for (Eigen::Index p = 0; p < n; ++p)
          for (Eigen::Index q = 0; q < ny; ++q)
            prog.objective_add(row, nb, k, p, q, P.C1(i, p) * P.D21(q, j));
        for (Eigen::Index p = 0; p < nu; ++p)
          for (Eigen::Index q = 0; q < n; ++q)
            prog.objective_add(row, m, k, p, q, P.D12(i, p) * P.B1(q, j));
        for (Eigen::Index p = 0; p < nu; ++p)
          for (Eigen::Index q = 0; q < ny; ++q)
            prog.objective_add(row, l, k, p, q, P.D12(i, p) * P.D21(q, j));
      }
  }
  return prog;
}

LeastSquaresProgram assemble_iop_program(const StateSpacePlant& P, int T) {
  if (T < 0) throw PreconditionError("assemble_iop_program: horizon must be nonnegative");
  if (!is_stable(P.A).stable) {
    throw PreconditionError("assemble_iop_program: the input-output program requires a stable plant");
  }
  const Eigen::Index nu = P.nu(), ny = P.ny();
  const int tp = expansion_horizon(P.A, 1e-12);
  const FirTransferMatrix p22 = p22_fir(P, tp);
  LeastSquaresProgram prog;
  const int y = prog.add_variable("Y", ny, ny, 0, T + tp);
  const int u = prog.add_variable("U", nu, ny, 0, T);
  const int w = prog.add_variable("W", ny, nu, 1, T + 2 * tp);
  const int z = prog.add_variable("Z", nu, nu, 0, T + tp);

  // Y - P22 U = I and Z - U P22 = I, closed against the truncated plant
  // expansion over the full determined range.
  for (int k = 0; k <= T + tp; ++k) {
    for (Eigen::Index i = 0; i < ny; ++i)
      for (Eigen::Index j = 0; j < ny; ++j) {
        const Eigen::Index row = prog.add_constraint_row((k == 0 && i == j) ? 1.0 : 0.0);
        prog.constraint_add(row, y, k, i, j, 1.0);
        for (int a = 1; a <= std::min(k, tp); ++a) {
          const Eigen::MatrixXd& pa = p22.coeff(a);
          for (Eigen::Index p = 0; p < nu; ++p)
            prog.constraint_add(row, u, k - a, p, j, -pa(i, p));
        }
      }
    for (Eigen::Index i = 0; i < nu; ++i)
      for (Eigen::Index j = 0; j < nu; ++j) {
        const Eigen::Index row = prog.add_constraint_row((k == 0 && i == j) ? 1.0 : 0.0);
        prog.constraint_add(row, z, k, i, j, 1.0);
        for (int a = 1; a <= std::min(k, tp); ++a) {
          const Eigen::MatrixXd& pa = p22.coeff(a);
          for (Eigen::Index p = 0; p < ny; ++p)
            prog.constraint_add(row, u, k - a, i, p, -pa(p, j));
        }
      }
  }
  // W - P22 Z = 0 and W - Y P22 = 0.
  for (int k = 1; k <= T + 2 * tp; ++k) {
    for (Eigen::Index i = 0; i < ny; ++i)
      for (Eigen::Index j = 0; j < nu; ++j) {
        Eigen::Index row = prog.add_constraint_row(0.0);
        prog.constraint_add(row, w, k, i, j, 1.0);
        for (int a = 1; a <= std::min(k, tp); ++a) {
          const Eigen::MatrixXd& pa = p22.coeff(a);
          for (Eigen::Index p = 0; p < nu; ++p)
            prog.constraint_add(row, z, k - a, p, j, -pa(i, p));
        }
        row = prog.add_constraint_row(0.0);
        prog.constraint_add(row, w, k, i, j, 1.0);
        for (int a = 1; a <= std::min(k, tp); ++a) {
          const Eigen::MatrixXd& pa = p22.coeff(a);
          for (Eigen::Index p = 0; p < ny; ++p)
            prog.constraint_add(row, y, k - a, i, p, -pa(p, j));
        }
      }
  }

  add_affine_h2_rows(prog, u, p11_fir(P, tp), p12_fir(P, tp), p21_fir(P, tp), T);
  return prog;
}

// ---------------------------------------------------------------------------
// Route solving
// ---------------------------------------------------------------------------

namespace {

SynthesisResult solve_youla_route(const StateSpacePlant& P, int T,
                                  const DoublyCoprimeFactors& fac, LeastSquaresProgram prog,
                                  Clock::time_point t0, bool inner) {
  const LsSolution sol = solve_equality_ls(prog);
  YoulaParam q{prog.extract(prog.block_id("Q"), sol.x)};
  std::map<std::string, FirTransferMatrix> params{{"Q", q.Q}};
  FirTransferMatrix k = k_from_youla(fac, q, controller_fir_horizon(P, T));
  const Controller real = controller_from_youla(fac, q);
  return finish_result(P, std::move(k), real, std::move(params), sol, inner, t0);
}

SynthesisResult solve_slp_route(const StateSpacePlant& P, int T, LeastSquaresProgram prog,
                                Clock::time_point t0, bool inner) {
  const LsSolution sol = solve_equality_ls(prog);
  SlpQuadruple s;
  s.R = prog.extract(prog.block_id("R"), sol.x);
  s.M = prog.extract(prog.block_id("M"), sol.x);
  s.N = prog.extract(prog.block_id("N"), sol.x);
  s.L = prog.extract(prog.block_id("L"), sol.x);
  std::map<std::string, FirTransferMatrix> params{
      {"R", s.R}, {"M", s.M}, {"N", s.N}, {"L", s.L}};
  FirTransferMatrix k = k_from_slp(s, controller_fir_horizon(P, T));
  const Controller real = controller_from_slp(P, s);
  return finish_result(P, std::move(k), real, std::move(params), sol, inner, t0);
}

SynthesisResult solve_iop_route(const StateSpacePlant& P, int T, LeastSquaresProgram prog,
                                Clock::time_point t0, bool inner) {
  const LsSolution sol = solve_equality_ls(prog);
  IopQuadruple x;
  x.Y = prog.extract(prog.block_id("Y"), sol.x);
  x.U = prog.extract(prog.block_id("U"), sol.x);
  x.W = prog.extract(prog.block_id("W"), sol.x);
  x.Z = prog.extract(prog.block_id("Z"), sol.x);
  std::map<std::string, FirTransferMatrix> params{
      {"Y", x.Y}, {"U", x.U}, {"W", x.W}, {"Z", x.Z}};
  FirTransferMatrix k = k_from_iop(x, controller_fir_horizon(P, T));
  const Controller real = controller_from_iop(x);
  return finish_result(P, std::move(k), real, std::move(params), sol, inner, t0);
}

}  // namespace

SynthesisResult synthesize(const StateSpacePlant& P, int T, SynthesisRoute route,
                           const std::optional<DoublyCoprimeFactors>& f) {
  const auto t0 = Clock::now();
  switch (route) {
    case SynthesisRoute::kYoula: {
      const DoublyCoprimeFactors fac = f.has_value() ? *f : default_factors(P);
      return solve_youla_route(P, T, fac, assemble_youla_program(P, fac, T), t0, false);
    }
    case SynthesisRoute::kSlp:
      return solve_slp_route(P, T, assemble_slp_program(P, T), t0, false);
    case SynthesisRoute::kIop:
      return solve_iop_route(P, T, assemble_iop_program(P, T), t0, false);
  }
  throw PreconditionError("synthesize: unknown route");
}

SynthesisResult synthesize_structured(const StateSpacePlant& P, int T,
                                      const SparsityPattern& Lpat, SynthesisRoute route,
                                      const std::optional<DoublyCoprimeFactors>& f) {
  const auto t0 = Clock::now();
  require_pattern_dims(Lpat, P.nu(), P.ny(), "synthesize_structured");
  if (!qi_test(Lpat, plant_pattern(P))) {
    throw QiViolationError(
        "synthesize_structured: the controller pattern is not quadratically invariant under "
        "the plant pattern; the sparsity-invariance restriction (--si) still applies");
  }

  switch (route) {
    case SynthesisRoute::kYoula: {
      const DoublyCoprimeFactors fac = f.has_value() ? *f : default_factors(P);
      LeastSquaresProgram prog = assemble_youla_program(P, fac, T);
      const int q = prog.block_id("Q");
      // Structured variable (Vr - Mr Q) Ml: per-coefficient zero rows on the
      // complement of the pattern.
      const FirTransferMatrix vrml = fir_mul(fac.Vr, fac.Ml);
      const std::vector<Eigen::MatrixXd> conv = pair_conv(fac.Mr, fac.Ml);
      const int cdeg = static_cast<int>(conv.size()) - 1;
      const int cmax = std::max(vrml.horizon(), fac.Mr.horizon() + T + fac.Ml.horizon());
      for (Eigen::Index i = 0; i < P.nu(); ++i)
        for (Eigen::Index j = 0; j < P.ny(); ++j) {
          if (Lpat.allows(i, j)) continue;
          for (int c = 0; c <= cmax; ++c) {
            const Eigen::Index row =
                prog.add_constraint_row(vrml.coeff_or_zero(c)(i, j));
            for (int m = std::max(0, c - cdeg); m <= std::min(T, c); ++m) {
              const Eigen::MatrixXd& wc = conv[static_cast<size_t>(c - m)];
              for (Eigen::Index p = 0; p < P.nu(); ++p)
                for (Eigen::Index qq = 0; qq < P.ny(); ++qq) {
                  const double v = wc(i * P.nu() + p, qq * P.ny() + j);
                  if (v != 0.0) prog.constraint_add(row, q, m, p, qq, v);
                }
            }
          }
        }
      return solve_youla_route(P, T, fac, std::move(prog), t0, false);
    }
    case SynthesisRoute::kIop: {
      LeastSquaresProgram prog = assemble_iop_program(P, T);
      const int u = prog.block_id("U");
      for (Eigen::Index i = 0; i < P.nu(); ++i)
        for (Eigen::Index j = 0; j < P.ny(); ++j) {
          if (Lpat.allows(i, j)) continue;
          for (int m = 0; m <= T; ++m) {
            const Eigen::Index row = prog.add_constraint_row(0.0);
            prog.constraint_add(row, u, m, i, j, 1.0);
          }
        }
      return solve_iop_route(P, T, std::move(prog), t0, false);
    }
    case SynthesisRoute::kSlp: {
      LeastSquaresProgram prog = assemble_slp_program(P, T);
      const int l = prog.block_id("L");
      for (Eigen::Index i = 0; i < P.nu(); ++i)
        for (Eigen::Index j = 0; j < P.ny(); ++j) {
          if (Lpat.allows(i, j)) continue;
          for (int m = 0; m <= T; ++m) {
            const Eigen::Index row = prog.add_constraint_row(0.0);
            prog.constraint_add(row, l, m, i, j, 1.0);
          }
        }
      return solve_slp_route(P, T, std::move(prog), t0, false);
    }
  }
  throw PreconditionError("synthesize_structured: unknown route");
}

// ---------------------------------------------------------------------------
// Sparsity-invariance inner approximation (state feedback)
// ---------------------------------------------------------------------------

namespace {

void require_state_feedback(const StateSpacePlant& P, const char* what) {
  if (!is_identity(P.C2)) {
    throw PreconditionError(std::string(what) + ": requires full state measurement (C2 = I)");
  }
}

SynthesisResult si_slp(const StateSpacePlant& P, int T, const SparsityPattern& Lpat,
                       Clock::time_point t0) {
  if (T < 1) throw PreconditionError("synthesize_si: horizon must be at least 1");
  if (!is_zero(P.D21)) {
    throw PreconditionError("synthesize_si: the system-level route requires D21 = 0");
  }
  const Eigen::Index n = P.nx(), nu = P.nu(), nw = P.nw(), nz = P.nz();
  LeastSquaresProgram prog;
  const int r = prog.add_variable("R", n, n, 1, T);
  const int m = prog.add_variable("M", nu, n, 1, T);
  for (int k = 0; k <= T; ++k) {
    // R_{k+1} = A R_k + B2 M_k + [k=0] I  (state-feedback subspace)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::Index row = prog.add_constraint_row((k == 0 && i == j) ? 1.0 : 0.0);
        prog.constraint_add(row, r, k + 1, i, j, 1.0);
        for (Eigen::Index p = 0; p < n; ++p) prog.constraint_add(row, r, k, p, j, -P.A(i, p));
        for (Eigen::Index p = 0; p < nu; ++p) prog.constraint_add(row, m, k, p, j, -P.B2(i, p));
      }
  }
  // Split structure: numerator M in the pattern, denominator R diagonal.
  for (int k = 1; k <= T; ++k) {
    for (Eigen::Index i = 0; i < nu; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (Lpat.allows(i, j)) continue;
        const Eigen::Index row = prog.add_constraint_row(0.0);
        prog.constraint_add(row, m, k, i, j, 1.0);
      }
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const Eigen::Index row = prog.add_constraint_row(0.0);
        prog.constraint_add(row, r, k, i, j, 1.0);
      }
  }
  // f_k = C1 R_k B1 + D12 M_k B1 + [k=0] D11
  for (int k = 0; k <= T; ++k) {
    for (Eigen::Index i = 0; i < nz; ++i)
      for (Eigen::Index j = 0; j < nw; ++j) {
        const Eigen::Index row = prog.add_objective_row(k == 0 ? -P.D11(i, j) : 0.0);
        for (Eigen::Index p = 0; p < n; ++p)
          for (Eigen::Index q = 0; q < n; ++q)
            prog.objective_add(row, r, k, p, q, P.C1(i, p) * P.B1(q, j));
        for (Eigen::Index p = 0; p < nu; ++p)
          for (Eigen::Index q = 0; q < n; ++q)
            prog.objective_add(row, m, k, p, q, P.D12(i, p) * P.B1(q, j));
      }
  }

  const LsSolution sol = solve_equality_ls(prog);
  const FirTransferMatrix rr = prog.extract(r, sol.x);
  const FirTransferMatrix mm = prog.extract(m, sol.x);
  const SlpQuadruple full = complete_state_feedback_slp(P, rr, mm);
  std::map<std::string, FirTransferMatrix> params{
      {"R", full.R}, {"M", full.M}, {"N", full.N}, {"L", full.L}};
  FirTransferMatrix k = k_from_state_feedback_slp(rr, mm, controller_fir_horizon(P, T));
  const Controller real = controller_from_slp(P, full);
  return finish_result(P, std::move(k), real, std::move(params), sol, true, t0);
}

SynthesisResult si_youla(const StateSpacePlant& P, int T, const SparsityPattern& Lpat,
                         Clock::time_point t0) {
  const DoublyCoprimeFactors fac = doubly_coprime_state_feedback(P);
  LeastSquaresProgram prog = assemble_youla_program(P, fac, T);
  const int q = prog.block_id("Q");
  const Eigen::Index n = P.nx(), nu = P.nu();
  // Numerator factor Vr - Mr Q = -A - Q + A Q z^{-1} constrained to the
  // pattern; denominator factor Ur - Nr Q = I - Q z^{-1} diagonal, i.e. all
  // Q coefficients diagonal.
  for (Eigen::Index i = 0; i < nu; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (Lpat.allows(i, j)) continue;
      for (int c = 0; c <= T + 1; ++c) {
        const Eigen::Index row = prog.add_constraint_row(c == 0 ? -P.A(i, j) : 0.0);
        prog.constraint_add(row, q, c, i, j, 1.0);
        for (Eigen::Index p = 0; p < n; ++p)
          prog.constraint_add(row, q, c - 1, p, j, -P.A(i, p));
      }
    }
  for (int c = 0; c <= T; ++c) {
    for (Eigen::Index i = 0; i < nu; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const Eigen::Index row = prog.add_constraint_row(0.0);
        prog.constraint_add(row, q, c, i, j, 1.0);
      }
  }
  return solve_youla_route(P, T, fac, std::move(prog), t0, true);
}

SynthesisResult si_iop(const StateSpacePlant& P, int T, const SparsityPattern& Lpat,
                       Clock::time_point t0) {
  if (!is_stable(P.A).stable) {
    throw PreconditionError("synthesize_si: the input-output route requires a stable plant");
  }
  if (!is_zero(P.D21)) {
    throw PreconditionError("synthesize_si: the input-output route requires D21 = 0");
  }
  const Eigen::Index n = P.nx(), nu = P.nu(), nw = P.nw(), nz = P.nz();
  if (nu != n) {
    throw PreconditionError("synthesize_si: the input-output route requires square invertible B2");
  }
  const Eigen::MatrixXd b2inv = inverse_checked(P.B2, "synthesize_si: B2");
  const int tp = expansion_horizon(P.A, 1e-12);
  const FirTransferMatrix p22 = p22_fir(P, tp);

  LeastSquaresProgram prog;
  const int z = prog.add_variable("Z", n, n, 0, T);
  // Z_0 = I pins the feedthrough of the control response.
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index row = prog.add_constraint_row(i == j ? 1.0 : 0.0);
      prog.constraint_add(row, z, 0, i, j, 1.0);
    }
  // Numerator factor Z - I in the pattern.
  for (int c = 1; c <= T; ++c)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (Lpat.allows(i, j)) continue;
        const Eigen::Index row = prog.add_constraint_row(0.0);
        prog.constraint_add(row, z, c, i, j, 1.0);
      }
  // Denominator factor W = P22 Z diagonal.
  for (int c = 1; c <= T + tp; ++c)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const Eigen::Index row = prog.add_constraint_row(0.0);
        for (int a = 1; a <= std::min(c, tp); ++a) {
          const Eigen::MatrixXd& pa = p22.coeff(a);
          for (Eigen::Index p = 0; p < n; ++p)
            prog.constraint_add(row, z, c - a, p, j, pa(i, p));
        }
      }
  // Objective through the determined response maps:
  //   R = P22 Z B2^{-1}   (state response)
  //   U = Z_{+1} B2^{-1} - Z B2^{-1} A + [k=0] B2^{-1} A   (control response)
  //   f_k = C1 R_k B1 + D12 U_k B1 + [k=0] D11.
  const Eigen::MatrixXd h1 = b2inv * P.B1;          // B2^{-1} B1
  const Eigen::MatrixXd h2 = b2inv * P.A * P.B1;    // B2^{-1} A B1
  const Eigen::MatrixXd f0 = P.D12 * b2inv * P.A * P.B1;
  std::vector<Eigen::MatrixXd> g(static_cast<size_t>(tp) + 1);  // C1 P22_a
  for (int a = 1; a <= tp; ++a) g[static_cast<size_t>(a)] = P.C1 * p22.coeff(a);
  for (int k = 0; k <= T + tp; ++k) {
    for (Eigen::Index i = 0; i < nz; ++i)
      for (Eigen::Index j = 0; j < nw; ++j) {
        double target = k == 0 ? -P.D11(i, j) - f0(i, j) : 0.0;
        const Eigen::Index row = prog.add_objective_row(target);
        for (int a = 1; a <= std::min(k, tp); ++a) {
          const Eigen::MatrixXd& ga = g[static_cast<size_t>(a)];
          for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = 0; q < n; ++q)
              prog.objective_add(row, z, k - a, p, q, ga(i, p) * h1(q, j));
        }
        for (Eigen::Index p = 0; p < n; ++p)
          for (Eigen::Index q = 0; q < n; ++q) {
            prog.objective_add(row, z, k + 1, p, q, P.D12(i, p) * h1(q, j));
            prog.objective_add(row, z, k, p, q, -P.D12(i, p) * h2(q, j));
          }
      }
  }

  const LsSolution sol = solve_equality_ls(prog);
  const FirTransferMatrix zz = prog.extract(z, sol.x);
  const FirTransferMatrix ww = fir_mul(p22, zz);
  const IopQuadruple full = complete_state_feedback_iop(P, ww, zz);
  std::map<std::string, FirTransferMatrix> params{
      {"Y", full.Y}, {"U", full.U}, {"W", full.W}, {"Z", full.Z}};
  FirTransferMatrix k = k_from_state_feedback_iop(ww, zz, controller_fir_horizon(P, T));
  const Controller real = controller_from_iop(full);
  return finish_result(P, std::move(k), real, std::move(params), sol, true, t0);
}

}  // namespace

SynthesisResult synthesize_si(const StateSpacePlant& P, int T, const SparsityPattern& Lpat,
                              SynthesisRoute route) {
  const auto t0 = Clock::now();
  require_state_feedback(P, "synthesize_si");
  require_pattern_dims(Lpat, P.nu(), P.ny(), "synthesize_si");
  switch (route) {
    case SynthesisRoute::kSlp:
      return si_slp(P, T, Lpat, t0);
    case SynthesisRoute::kYoula:
      return si_youla(P, T, Lpat, t0);
    case SynthesisRoute::kIop:
      return si_iop(P, T, Lpat, t0);
  }
  throw PreconditionError("synthesize_si: unknown route");
}

// ---------------------------------------------------------------------------
// System-level constraint transfer
// ---------------------------------------------------------------------------

namespace {

struct SlsAssembly {
  LeastSquaresProgram prog;
  SynthesisRoute target = SynthesisRoute::kSlp;
  int T = 0;
  int t_img = 0;
  std::optional<DoublyCoprimeFactors> fac;  // Youla target
  FirTransferMatrix p22;                    // IOP target
  // Affine representation maps(x) = base + sum_b x_b * basis[b] of the four
  // response maps in the single program variable (empty for the direct
  // system-level target, where the maps are the variables).
  SlpQuadruple base;
  std::vector<SlpQuadruple> basis;
};

SlpQuadruple sls_maps_at(const SlsAssembly& a, const LeastSquaresProgram& prog,
                         const Eigen::VectorXd& x) {
  if (a.target == SynthesisRoute::kSlp) {
    SlpQuadruple s;
    s.R = prog.extract(prog.block_id("R"), x);
    s.M = prog.extract(prog.block_id("M"), x);
    s.N = prog.extract(prog.block_id("N"), x);
    s.L = prog.extract(prog.block_id("L"), x);
    return s;
  }
  SlpQuadruple s = a.base;
  for (size_t b = 0; b < a.basis.size(); ++b) {
    const double v = x(static_cast<Eigen::Index>(b));
    if (v == 0.0) continue;
    s.R += v * a.basis[b].R;
    s.M += v * a.basis[b].M;
    s.N += v * a.basis[b].N;
    s.L += v * a.basis[b].L;
  }
  return s;
}

const FirTransferMatrix& quad_block(const SlpQuadruple& s, int which) {
  switch (which) {
    case 0: return s.R;
    case 1: return s.M;
    case 2: return s.N;
    default: return s.L;
  }
}

const std::optional<SparsityPattern>& constraint_block(const SlsConstraint& s, int which) {
  switch (which) {
    case 0: return s.R;
    case 1: return s.M;
    case 2: return s.N;
    default: return s.L;
  }
}

// Adds the equality row  sum_b basis[b].block_c(i,j) x_b = target - base
// pinning one coefficient of one response map; `value` is the pinned value.
void add_image_row(SlsAssembly& a, int which, int c, Eigen::Index i, Eigen::Index j,
                   double value) {
  if (a.target == SynthesisRoute::kSlp) {
    static const char* names[] = {"R", "M", "N", "L"};
    const int id = a.prog.block_id(names[which]);
    const VarBlock& b = a.prog.block(id);
    if (c < b.first_tap || c > b.last_tap) return;  // structurally zero coefficient
    const Eigen::Index row = a.prog.add_constraint_row(value);
    a.prog.constraint_add(row, id, c, i, j, 1.0);
    return;
  }
  const int id = 0;  // single variable block
  const VarBlock& vb = a.prog.block(id);
  const Eigen::Index row =
      a.prog.add_constraint_row(value - quad_block(a.base, which).coeff_or_zero(c)(i, j));
  for (size_t b = 0; b < a.basis.size(); ++b) {
    const double w = quad_block(a.basis[b], which).coeff_or_zero(c)(i, j);
    if (w == 0.0) continue;
    const int tap = vb.first_tap + static_cast<int>(b) / static_cast<int>(vb.rows * vb.cols);
    const Eigen::Index rem = static_cast<Eigen::Index>(b) % (vb.rows * vb.cols);
    a.prog.constraint_add(row, id, tap, rem / vb.cols, rem % vb.cols, w);
  }
}

int sls_image_horizon(const SlsAssembly& a) {
  return a.target == SynthesisRoute::kSlp ? a.T : a.t_img;
}

SlsAssembly build_sls(const StateSpacePlant& P, const SlsConstraint& S, SynthesisRoute target,
                      int T, const std::optional<DoublyCoprimeFactors>& f) {
  if (S.R) require_pattern_dims(*S.R, P.nx(), P.nx(), "sls_transfer: R");
  if (S.M) require_pattern_dims(*S.M, P.nu(), P.nx(), "sls_transfer: M");
  if (S.N) require_pattern_dims(*S.N, P.nx(), P.ny(), "sls_transfer: N");
  if (S.L) require_pattern_dims(*S.L, P.nu(), P.ny(), "sls_transfer: L");

  SlsAssembly a;
  a.target = target;
  a.T = T;
  switch (target) {
    case SynthesisRoute::kSlp:
      a.prog = assemble_slp_program(P, T);
      break;
    case SynthesisRoute::kYoula: {
      a.fac = f.has_value() ? *f : default_factors(P);
      if (!is_stable(P.A).stable) {
        throw PreconditionError(
            "sls_transfer: the Youla-target transfer requires a stable plant (the response-map "
            "images are truncated against the open-loop expansion)");
      }
      a.prog = assemble_youla_program(P, *a.fac, T);
      const int fdeg = std::max({a.fac->Vr.horizon(), a.fac->Mr.horizon(), a.fac->Ml.horizon()});
      a.t_img = expansion_horizon(P.A, 1e-10) + T + 2 * fdeg + 1;
      // U(Q) = (Vr - Mr Q) Ml, then the subspace recursions give (R,M,N,L).
      a.base = slp_image_from_u(P, fir_mul(a.fac->Vr, a.fac->Ml), a.t_img, true);
      const VarBlock& vb = a.prog.block(0);
      a.basis.reserve(static_cast<size_t>(vb.size()));
      for (int tap = vb.first_tap; tap <= vb.last_tap; ++tap)
        for (Eigen::Index i = 0; i < vb.rows; ++i)
          for (Eigen::Index j = 0; j < vb.cols; ++j) {
            std::vector<Eigen::MatrixXd> cs(static_cast<size_t>(tap) + 1,
                                            Eigen::MatrixXd::Zero(vb.rows, vb.cols));
            cs[static_cast<size_t>(tap)](i, j) = 1.0;
            const FirTransferMatrix dq(std::move(cs));
            const FirTransferMatrix du = -fir_mul(fir_mul(a.fac->Mr, dq), a.fac->Ml);
            a.basis.push_back(slp_image_from_u(P, du, a.t_img, false));
          }
      break;
    }
    case SynthesisRoute::kIop: {
      if (!is_stable(P.A).stable) {
        throw PreconditionError("sls_transfer: the input-output target requires a stable plant");
      }
      const int tp = expansion_horizon(P.A, 1e-12);
      a.p22 = p22_fir(P, tp);
      a.t_img = expansion_horizon(P.A, 1e-10) + T + 1;
      LeastSquaresProgram prog;
      const int u = prog.add_variable("U", P.nu(), P.ny(), 0, T);
      add_affine_h2_rows(prog, u, p11_fir(P, tp), p12_fir(P, tp), p21_fir(P, tp), T);
      a.prog = std::move(prog);
      a.base = slp_image_from_u(P, FirTransferMatrix::zero(P.nu(), P.ny(), 0), a.t_img, true);
      const VarBlock& vb = a.prog.block(0);
      a.basis.reserve(static_cast<size_t>(vb.size()));
      for (int tap = vb.first_tap; tap <= vb.last_tap; ++tap)
        for (Eigen::Index i = 0; i < vb.rows; ++i)
          for (Eigen::Index j = 0; j < vb.cols; ++j) {
            std::vector<Eigen::MatrixXd> cs(static_cast<size_t>(tap) + 1,
                                            Eigen::MatrixXd::Zero(vb.rows, vb.cols));
            cs[static_cast<size_t>(tap)](i, j) = 1.0;
            a.basis.push_back(
                slp_image_from_u(P, FirTransferMatrix(std::move(cs)), a.t_img, false));
          }
      break;
    }
  }

  // Sparsity constraints become equality rows on the (images of the)
  // response maps; for non-direct targets the rows run through the image
  // horizon, beyond which the stable tails are below the assembly tolerance.
  const int chor = sls_image_horizon(a);
  for (int which = 0; which < 4; ++which) {
    const std::optional<SparsityPattern>& pat = constraint_block(S, which);
    if (!pat) continue;
    const int first = (which == 3) ? 0 : 1;  // R, M, N strictly proper
    for (int c = first; c <= chor; ++c) {
      for (Eigen::Index i = 0; i < pat->rows(); ++i)
        for (Eigen::Index j = 0; j < pat->cols(); ++j) {
          if (pat->allows(i, j)) continue;
          add_image_row(a, which, c, i, j, 0.0);
        }
    }
  }
  return a;
}

}  // namespace

LeastSquaresProgram sls_transfer(const StateSpacePlant& P, const SlsConstraint& S,
                                 SynthesisRoute target, int T,
                                 const std::optional<DoublyCoprimeFactors>& f) {
  return build_sls(P, S, target, T, f).prog;
}

SynthesisResult synthesize_sls(const StateSpacePlant& P, int T, const SlsConstraint& S,
                               SynthesisRoute target,
                               const std::optional<DoublyCoprimeFactors>& f) {
  const auto t0 = Clock::now();
  SlsAssembly a = build_sls(P, S, target, T, f);

  LsSolution sol = solve_equality_ls(a.prog);
  if (S.box) {
    const double box = *S.box;
    if (!(box > 0)) throw PreconditionError("synthesize_sls: box bound must be positive");
    // Deterministic clamp-and-resolve: violated coefficients are pinned at
    // the bound (scan order R, M, N, L; taps ascending; row major) and never
    // released.
    std::set<std::tuple<int, int, Eigen::Index, Eigen::Index>> pinned;
    const int chor = sls_image_horizon(a);
    bool converged = false;
    for (int pass = 0; pass < 64 && !converged; ++pass) {
      const SlpQuadruple maps = sls_maps_at(a, a.prog, sol.x);
      bool added = false;
      for (int which = 0; which < 4; ++which) {
        const FirTransferMatrix& g = quad_block(maps, which);
        for (int c = 0; c <= std::min(chor, g.horizon()); ++c) {
          const Eigen::MatrixXd& gc = g.coeff(c);
          for (Eigen::Index i = 0; i < gc.rows(); ++i)
            for (Eigen::Index j = 0; j < gc.cols(); ++j) {
              if (std::abs(gc(i, j)) <= box + 1e-9) continue;
              const auto key = std::make_tuple(which, c, i, j);
              if (pinned.count(key)) continue;
              pinned.insert(key);
              add_image_row(a, which, c, i, j, gc(i, j) > 0 ? box : -box);
              added = true;
            }
        }
      }
      if (!added) {
        converged = true;
        break;
      }
      sol = solve_equality_ls(a.prog);
    }
    if (!converged) {
      throw VerificationError("synthesize_sls: box-bound clamping did not converge");
    }
  }

  const SlpQuadruple maps = sls_maps_at(a, a.prog, sol.x);
  std::map<std::string, FirTransferMatrix> params{
      {"R", maps.R}, {"M", maps.M}, {"N", maps.N}, {"L", maps.L}};
  const int kh = controller_fir_horizon(P, T);
  switch (a.target) {
    case SynthesisRoute::kSlp: {
      SlpQuadruple s = maps;
      FirTransferMatrix k = k_from_slp(s, kh);
      const Controller real = controller_from_slp(P, s);
      return finish_result(P, std::move(k), real, std::move(params), sol, false, t0);
    }
    case SynthesisRoute::kYoula: {
      YoulaParam q{a.prog.extract(0, sol.x)};
      params["Q"] = q.Q;
      FirTransferMatrix k = k_from_youla(*a.fac, q, kh);
      const Controller real = controller_from_youla(*a.fac, q);
      return finish_result(P, std::move(k), real, std::move(params), sol, false, t0);
    }
    case SynthesisRoute::kIop: {
      const FirTransferMatrix u = a.prog.extract(0, sol.x);
      IopQuadruple x;
      x.U = u;
      x.Y = FirTransferMatrix::identity(P.ny()) + fir_mul(a.p22, u);
      x.Z = FirTransferMatrix::identity(P.nu()) + fir_mul(u, a.p22);
      x.W = fir_mul(a.p22, x.Z);
      params["Y"] = x.Y;
      params["U"] = x.U;
      params["W"] = x.W;
      params["Z"] = x.Z;
      FirTransferMatrix k = k_from_iop(x, kh);
      const Controller real = controller_from_iop(x);
      return finish_result(P, std::move(k), real, std::move(params), sol, false, t0);
    }
  }
  throw PreconditionError("synthesize_sls: unknown target");
}

// ---------------------------------------------------------------------------
// End-to-end example
// ---------------------------------------------------------------------------

StateSpacePlant example1_plant(Eigen::Index n, const std::optional<Eigen::MatrixXd>& adjacency) {
  Eigen::MatrixXd adj;
  if (adjacency.has_value()) {
    adj = *adjacency;
    if (adj.rows() != adj.cols() || adj.rows() < 1) {
      throw PreconditionError("example1_plant: adjacency matrix must be square and nonempty");
    }
  } else {
    if (n < 1) throw PreconditionError("example1_plant: need at least one node");
    adj = Eigen::MatrixXd::Zero(n, n);
    if (n == 1) {
      adj(0, 0) = 1.0;
    } else {
      for (Eigen::Index i = 0; i + 1 < n; ++i) {
        adj(i, i + 1) = 1.0;
        adj(i + 1, i) = 1.0;
      }
    }
  }
  const Eigen::Index nn = adj.rows();
  const double rho = spectral_radius(adj);
  if (!(rho > 0)) {
    throw PreconditionError("example1_plant: adjacency matrix must have a nonzero spectral radius");
  }
  const Eigen::MatrixXd A = (0.5 / rho) * adj;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(nn, nn);
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(nn, nn);
  return StateSpacePlant(A, I, I, I, I, Z, Z, Z);
}

SparsityPattern example1_pattern(const StateSpacePlant& P) {
  return SparsityPattern::from_support(P.A).unioned(SparsityPattern::diagonal(P.nx()));
}

std::array<SynthesisResult, 3> solve_example1(Eigen::Index n,
                                              const std::optional<Eigen::MatrixXd>& adjacency,
                                              int T) {
  const StateSpacePlant P = example1_plant(n, adjacency);
  const SparsityPattern Lpat = example1_pattern(P);
  return {synthesize_si(P, T, Lpat, SynthesisRoute::kSlp),
          synthesize_si(P, T, Lpat, SynthesisRoute::kYoula),
          synthesize_si(P, T, Lpat, SynthesisRoute::kIop)};
}

}  // namespace parametrix

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "parametrix/coprime.hpp"
#include "parametrix/errors.hpp"
#include "parametrix/plant.hpp"
#include "test_util.hpp"

using namespace parametrix;

namespace {

FirTransferMatrix fir1(const std::vector<double>& taps) {
  std::vector<Eigen::MatrixXd> coeffs;
  for (double t : taps) coeffs.push_back(Eigen::MatrixXd::Constant(1, 1, t));
  return FirTransferMatrix(std::move(coeffs));
}

StabilizingGains zero_gains(const StateSpacePlant& P) {
  return {Eigen::MatrixXd::Zero(P.nu(), P.nx()), Eigen::MatrixXd::Zero(P.nx(), P.ny()),
          Eigen::MatrixXd::Zero(P.nx(), P.ny())};
}

}  // namespace

TEST_CASE("deadbeat gains solve the scalar and identity benchmarks") {
  auto P = testutil::identity_plant(Eigen::MatrixXd::Constant(1, 1, 0.5));
  auto g = deadbeat_gains(P);
  CHECK(std::abs(g.F(0, 0) + 0.5) < 1e-12);
  CHECK(std::abs(g.L(0, 0) + 0.5) < 1e-12);
  CHECK(std::abs(g.Lc(0, 0) - 1.0) < 1e-12);

  auto P2 = testutil::identity_plant(Eigen::MatrixXd::Identity(2, 2));
  auto g2 = deadbeat_gains(P2);
  CHECK((g2.F + Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((g2.L + Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("deadbeat placement leaves an already nilpotent chain alone") {
  Eigen::MatrixXd A(2, 2), B2(2, 1), C2(1, 2);
  A << 0, 1, 0, 0;
  B2 << 0, 1;
  C2 << 1, 0;
  StateSpacePlant P(A, Eigen::MatrixXd::Identity(2, 2), B2, Eigen::MatrixXd::Identity(2, 2), C2,
                    Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 1),
                    Eigen::MatrixXd::Zero(1, 2));
  auto g = deadbeat_gains(P);
  CHECK(g.F.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(is_nilpotent(A + B2 * g.F));
  CHECK(is_nilpotent(A + g.L * C2));
}

TEST_CASE("sequential placement drives random controllable pairs to nilpotency") {
  // Cross-coupled multi-input case first: the second column must finish what
  // the first column's Krylov space cannot reach.
  Eigen::MatrixXd Aj(2, 2);
  Aj << 1, 1, 0, 1;
  Eigen::MatrixXd Fj = place_deadbeat(Aj, Eigen::MatrixXd::Identity(2, 2));
  CHECK(is_nilpotent(Aj + Fj));

  int tested = 0;
  for (unsigned seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(seed % 4);
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(seed % 2);
    Eigen::MatrixXd A = testutil::random_matrix(rng, n, n);
    Eigen::MatrixXd B = testutil::random_matrix(rng, n, m);
    if (!is_controllable(A, B)) continue;
    Eigen::MatrixXd F = place_deadbeat(A, B);
    CHECK(is_nilpotent(A + B * F));
    ++tested;
  }
  CHECK(tested >= 15);
}

TEST_CASE("Riccati gains satisfy the fixed-point equation and stabilize") {
  // Scalar closed form: X^2 = a^2 X + 1 for B = Q = R = 1.
  const double a = 0.5;
  const Eigen::MatrixXd X1 =
      dare_fixed_point(Eigen::MatrixXd::Constant(1, 1, a), Eigen::MatrixXd::Identity(1, 1));
  const double closed = (a * a + std::sqrt(a * a * a * a + 4.0)) / 2.0;
  CHECK(std::abs(X1(0, 0) - closed) < 1e-10);

  testutil::PlantSpecs s;
  s.n = 3;
  s.nw = 2;
  s.nu = 2;
  s.nz = 2;
  s.ny = 2;
  s.rho = 1.2;  // genuinely unstable open loop
  auto P = testutil::random_plant(7, s);
  auto g = riccati_gains(P);
  CHECK(is_stable(P.A + P.B2 * g.F).stable);
  CHECK(is_stable(P.A + g.L * P.C2).stable);

  const Eigen::MatrixXd X = dare_fixed_point(P.A, P.B2);
  const Eigen::MatrixXd BtXA = P.B2.transpose() * X * P.A;
  const Eigen::MatrixXd gain =
      (Eigen::MatrixXd::Identity(2, 2) + P.B2.transpose() * X * P.B2).ldlt().solve(BtXA);
  const Eigen::MatrixXd resid =
      P.A.transpose() * X * P.A - BtXA.transpose() * gain + Eigen::MatrixXd::Identity(3, 3) - X;
  CHECK(resid.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("uncontrollable pairs fall back to Riccati gains") {
  Eigen::MatrixXd A(2, 2), B2(2, 1), C2(1, 2);
  A << 0.5, 0, 0, 2.0;
  B2 << 0, 1;  // the stable mode is unreachable: stabilizable, not controllable
  C2 << 1, 1;
  StateSpacePlant P(A, Eigen::MatrixXd::Identity(2, 2), B2, Eigen::MatrixXd::Identity(2, 2), C2,
                    Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 1),
                    Eigen::MatrixXd::Zero(1, 2));
  auto g = deadbeat_gains(P);
  CHECK(is_stable(P.A + P.B2 * g.F).stable);
  CHECK(is_stable(P.A + g.L * P.C2).stable);
  CHECK_FALSE(is_nilpotent(P.A + P.B2 * g.F));  // unreachable mode stays at 0.5
}

TEST_CASE("observer factorization reproduces the scalar textbook factors") {
  auto P = testutil::identity_plant(Eigen::MatrixXd::Constant(1, 1, 0.5));
  auto f = doubly_coprime_general(P, deadbeat_gains(P), 1);
  CHECK(fir_distance(f.Mr, fir1({1.0, -0.5})) < 1e-12);
  CHECK(fir_distance(f.Nr, fir1({0.0, 1.0})) < 1e-12);
  CHECK(fir_distance(f.Vr, fir1({-0.5})) < 1e-12);
  CHECK(fir_distance(f.Ur, fir1({1.0})) < 1e-12);

  auto rep = verify_bezout(f, P, 16);
  CHECK(rep.pass);
  CHECK(rep.max_residual < 1e-12);
  CHECK(rep.skipped_points == 0);
}

TEST_CASE("zero gains on a stable plant reduce to the trivial factorization") {
  auto P = testutil::random_plant(11, {});
  const int h = expansion_horizon(P.A, 1e-13);
  auto f = doubly_coprime_general(P, zero_gains(P), h);
  auto t = doubly_coprime_stable(P, h);
  CHECK(fir_distance(f.Ul, t.Ul) < 1e-15);
  CHECK(fir_distance(f.Vl, t.Vl) < 1e-15);
  CHECK(fir_distance(f.Nl, t.Nl) < 1e-15);
  CHECK(fir_distance(f.Ml, t.Ml) < 1e-15);
  CHECK(fir_distance(f.Ur, t.Ur) < 1e-15);
  CHECK(fir_distance(f.Vr, t.Vr) < 1e-15);
  CHECK(fir_distance(f.Nr, t.Nr) < 1e-15);
  CHECK(fir_distance(f.Mr, t.Mr) < 1e-15);
}

TEST_CASE("stable trivial factorization matches the closed forms") {
  auto P = testutil::identity_plant(Eigen::MatrixXd::Constant(1, 1, 0.5));
  auto t = doubly_coprime_stable(P, expansion_horizon(P.A, 1e-13));
  CHECK(fir_distance(t.Mr, FirTransferMatrix::identity(1)) == 0.0);
  CHECK(fir_distance(t.Ml, FirTransferMatrix::identity(1)) == 0.0);
  CHECK(fir_distance(t.Ur, FirTransferMatrix::identity(1)) == 0.0);
  CHECK(fir_distance(t.Ul, FirTransferMatrix::identity(1)) == 0.0);
  CHECK(t.Vr.max_abs() == 0.0);
  CHECK(t.Vl.max_abs() == 0.0);
  CHECK(t.Nr.coeff(0)(0, 0) == 0.0);
  CHECK(t.Nr.coeff(1)(0, 0) == doctest::Approx(1.0));
  CHECK(t.Nr.coeff(2)(0, 0) == doctest::Approx(0.5));
  CHECK(t.Nr.coeff(3)(0, 0) == doctest::Approx(0.25));

  auto rep = verify_bezout(t, P, 16);
  CHECK(rep.pass);
  CHECK(rep.max_residual < 1e-12);

  // A = 0 ends the expansion after one tap: Nr = [0, C2 B2].
  Eigen::MatrixXd A0 = Eigen::MatrixXd::Zero(1, 1);
  StateSpacePlant Pz(A0, Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Constant(1, 1, 2.0),
                     Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Constant(1, 1, 3.0),
                     Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1),
                     Eigen::MatrixXd::Zero(1, 1));
  auto tz = doubly_coprime_stable(Pz, 2);
  CHECK(fir_distance(tz.Nr, fir1({0.0, 6.0})) == 0.0);

  CHECK_THROWS_AS(
      doubly_coprime_stable(testutil::identity_plant(Eigen::MatrixXd::Constant(1, 1, 1.1)), 8),
      PreconditionError);
}

TEST_CASE("state-feedback factors: closed form, collapse at A = 0, chain plant") {
  auto P = testutil::identity_plant(Eigen::MatrixXd::Constant(1, 1, 0.5));
  auto f = doubly_coprime_state_feedback(P);
  CHECK(fir_distance(f.Mr, fir1({1.0, -0.5})) == 0.0);
  CHECK(fir_distance(f.Nr, fir1({0.0, 1.0})) == 0.0);
  CHECK(fir_distance(f.Vr, fir1({-0.5})) == 0.0);
  CHECK(fir_distance(f.Ur, fir1({1.0})) == 0.0);
  CHECK(fir_distance(f.Ml, f.Mr) == 0.0);
  CHECK(fir_distance(f.Nl, f.Nr) == 0.0);
  CHECK(fir_distance(f.Vl, f.Vr) == 0.0);
  CHECK(fir_distance(f.Ul, f.Ur) == 0.0);

  auto f0 = doubly_coprime_state_feedback(testutil::identity_plant(Eigen::MatrixXd::Zero(1, 1)));
  CHECK(fir_distance(f0.Mr, FirTransferMatrix::identity(1)) == 0.0);
  CHECK(f0.Vr.max_abs() == 0.0);

  auto Pc = testutil::identity_plant(testutil::chain_dynamics(3));
  auto fc = doubly_coprime_state_feedback(Pc);
  auto rep = verify_bezout(fc, Pc, 16);
  CHECK(rep.pass);
  CHECK(rep.max_residual < 1e-12);

  CHECK_THROWS_AS(doubly_coprime_state_feedback(testutil::random_plant(3, {})),
                  PreconditionError);
}

TEST_CASE("state-feedback factors equal the general construction under F=-A, Lc=I") {
  const Eigen::MatrixXd A = testutil::chain_dynamics(3);
  auto P = testutil::identity_plant(A);
  auto fs = doubly_coprime_state_feedback(P);
  StabilizingGains g{-A, -A, Eigen::MatrixXd::Identity(3, 3)};
  auto fg = doubly_coprime_general(P, g, 3);
  CHECK(fir_distance(fs.Ul, fg.Ul) < 1e-12);
  CHECK(fir_distance(fs.Vl, fg.Vl) < 1e-12);
  CHECK(fir_distance(fs.Nl, fg.Nl) < 1e-12);
  CHECK(fir_distance(fs.Ml, fg.Ml) < 1e-12);
  CHECK(fir_distance(fs.Ur, fg.Ur) < 1e-12);
  CHECK(fir_distance(fs.Vr, fg.Vr) < 1e-12);
  CHECK(fir_distance(fs.Nr, fg.Nr) < 1e-12);
  CHECK(fir_distance(fs.Mr, fg.Mr) < 1e-12);
}

TEST_CASE("factors of the Bezout identity stay exact on unstable plants") {
  // The degree-one factors satisfy the identity for any A; only unit-circle
  // plant poles are exempt from the P22 match and must be counted.
  std::mt19937_64 rng(5);
  Eigen::MatrixXd A = testutil::random_dynamics(rng, 3, 1.3);
  auto P = testutil::identity_plant(A);
  auto rep = verify_bezout(doubly_coprime_state_feedback(P), P, 16);
  CHECK(rep.pass);

  auto P1 = testutil::identity_plant(Eigen::MatrixXd::Identity(1, 1));
  auto rep1 = verify_bezout(doubly_coprime_state_feedback(P1), P1, 16);
  CHECK(rep1.pass);
  CHECK(rep1.skipped_points == 1);  // the pole z = 1 is a sample point
}

TEST_CASE("perturbed factors fail verification") {
  auto P = testutil::identity_plant(Eigen::MatrixXd::Constant(1, 1, 0.5));
  auto f = doubly_coprime_state_feedback(P);
  f.Vr = f.Vr + FirTransferMatrix::constant(Eigen::MatrixXd::Constant(1, 1, 0.1));
  auto rep = verify_bezout(f, P, 16);
  CHECK_FALSE(rep.pass);
  CHECK(rep.max_residual > 1e-2);

  CHECK_THROWS_AS(verify_bezout(f, P, 0), PreconditionError);
}

TEST_CASE("deadbeat factors are exact FIR of degree at most n") {
  testutil::PlantSpecs s;
  s.n = 3;
  s.nw = 2;
  s.nu = 2;
  s.nz = 2;
  s.ny = 2;
  s.rho = 1.1;
  for (unsigned seed : {1u, 2u, 3u}) {
    auto P = testutil::random_plant(seed, s);
    auto g = deadbeat_gains(P);
    REQUIRE(is_nilpotent(P.A + P.B2 * g.F));  // the draw must not hit the fallback
    auto f = doubly_coprime_general(P, g, 6);
    for (const FirTransferMatrix* x : {&f.Ul, &f.Vl, &f.Nl, &f.Ml, &f.Ur, &f.Vr, &f.Nr, &f.Mr}) {
      for (int k = 4; k <= x->horizon(); ++k) {
        CHECK(x->coeff(k).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
    for (int npoints : {7, 16, 64}) {
      auto rep = verify_bezout(f, P, npoints);
      CHECK(rep.pass);
      CHECK(rep.max_residual < 1e-10);
    }
  }

  // Spec example family: the full-information chain plant.
  auto Pc = testutil::identity_plant(testutil::chain_dynamics(3));
  auto fc = doubly_coprime_general(Pc, deadbeat_gains(Pc), 3);
  auto repc = verify_bezout(fc, Pc, 16);
  CHECK(repc.pass);
  CHECK(repc.max_residual < 1e-10);
}

TEST_CASE("gain and horizon preconditions are enforced") {
  auto P = testutil::random_plant(2, {});
  auto g = deadbeat_gains(P);
  CHECK_THROWS_AS(doubly_coprime_general(P, g, 1), PreconditionError);

  testutil::PlantSpecs s;
  s.rho = 1.4;
  auto Pu = testutil::random_plant(21, s);
  CHECK_THROWS_AS(doubly_coprime_general(Pu, zero_gains(Pu), 8), PreconditionError);

  StabilizingGains wrong = g;
  wrong.F = Eigen::MatrixXd::Zero(P.nu(), P.nx() + 1);
  CHECK_THROWS_AS(doubly_coprime_general(P, wrong, 8), PreconditionError);
}

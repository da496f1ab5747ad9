#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "parametrix/errors.hpp"
#include "parametrix/plant.hpp"
#include "test_util.hpp"

using namespace parametrix;

namespace {

StateSpacePlant scalar_plant(double a) {
  Eigen::MatrixXd A(1, 1), one(1, 1), zero(1, 1);
  A << a;
  one << 1.0;
  zero << 0.0;
  return StateSpacePlant(A, one, one, one, one, zero, zero, zero);
}

}  // namespace

TEST_CASE("plant constructor rejects hidden unstable modes") {
  Eigen::MatrixXd A(2, 2);
  A << 2.0, 0.0, 0.0, 0.5;  // unstable first mode
  Eigen::MatrixXd B2(2, 1), C2(1, 2);
  B2 << 0.0, 1.0;  // cannot reach the unstable mode
  C2 << 1.0, 0.0;
  Eigen::MatrixXd B1 = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd C1 = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd D11 = Eigen::MatrixXd::Zero(2, 2);
  Eigen::MatrixXd D12 = Eigen::MatrixXd::Zero(2, 1);
  Eigen::MatrixXd D21 = Eigen::MatrixXd::Zero(1, 2);
  CHECK_THROWS_AS(StateSpacePlant(A, B1, B2, C1, C2, D11, D12, D21), PreconditionError);

  B2 << 1.0, 0.0;  // reachable but now undetectable through C2
  C2 << 0.0, 1.0;
  D21 = Eigen::MatrixXd::Zero(1, 2);
  CHECK_THROWS_AS(StateSpacePlant(A, B1, B2, C1, C2, D11, D12, D21), PreconditionError);

  C2 << 1.0, 0.0;  // both tests pass even though A is unstable
  CHECK_NOTHROW(StateSpacePlant(A, B1, B2, C1, C2, D11, D12, D21));
}

TEST_CASE("stability check uses the spectral radius margin") {
  Eigen::MatrixXd A(2, 2);
  A << 0.0, 1.0, -0.25, 0.0;  // eigenvalues +-0.5i
  auto info = is_stable(A);
  CHECK(info.stable);
  CHECK(info.spectral_radius == doctest::Approx(0.5));
  CHECK_FALSE(is_stable(Eigen::MatrixXd::Identity(1, 1)).stable);
  CHECK(is_stable(Eigen::MatrixXd(0, 0)).stable);
}

TEST_CASE("markov expansion of a nilpotent system is exact") {
  // A is nilpotent with index 2, so the impulse response ends after 2 taps;
  // the FIR and rational forms must then agree to machine precision.
  Eigen::MatrixXd A(2, 2), B(2, 1), C(1, 2), D(1, 1);
  A << 0.0, 1.0, 0.0, 0.0;
  B << 0.3, -1.1;
  C << 2.0, 0.7;
  D << 0.25;
  FirTransferMatrix g = markov_expand(A, B, C, D, 6);
  for (const auto& z : unit_circle_points(16)) {
    Eigen::MatrixXcd fir = fir_eval(g, z);
    Eigen::MatrixXcd rat = rational_eval(A, B, C, D, z);
    CHECK((fir - rat).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("markov expansion truncation error decays for stable systems") {
  auto P = testutil::random_plant(5, {.n = 3, .rho = 0.5});
  const int T = expansion_horizon(P.A, 1e-10);
  FirTransferMatrix g = p22_fir(P, T);
  for (const auto& z : unit_circle_points(8)) {
    Eigen::MatrixXcd fir = fir_eval(g, z);
    Eigen::MatrixXcd rat = rational_eval(P.A, P.B2, P.C2, Eigen::MatrixXd::Zero(1, 1), z);
    CHECK((fir - rat).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("static deadbeat feedback closes the scalar loop at zero") {
  StateSpacePlant P = scalar_plant(0.5);
  Controller K{Eigen::MatrixXd(0, 0), Eigen::MatrixXd(0, 1), Eigen::MatrixXd(1, 0),
               -0.5 * Eigen::MatrixXd::Identity(1, 1)};
  ClosedLoop cl = lft_closed_loop(P, K);
  CHECK(cl.A.cwiseAbs().maxCoeff() < 1e-15);
  CHECK(internal_stability(P, K).stable);
  CHECK(internal_stability(P, K).spectral_radius == doctest::Approx(0.0));
}

TEST_CASE("closed-loop realization matches the transfer-function composition") {
  auto P = testutil::random_plant(17, {.n = 3, .nw = 2, .nu = 2, .nz = 2, .ny = 2, .rho = 0.5});
  auto K = testutil::random_controller(18, 2, 2, 2);
  K.Ak *= 0.3;
  K.Dk *= 0.2;
  REQUIRE(internal_stability(P, K).stable);
  ClosedLoop cl = lft_closed_loop(P, K);
  for (const auto& z : unit_circle_points(9)) {
    Eigen::MatrixXcd lhs = rational_eval(cl.A, cl.B, cl.C, cl.D, z);
    // Independent route: f = P11 + P12 K (I - P22 K)^{-1} P21 pointwise.
    Eigen::MatrixXcd p11 = rational_eval(P.A, P.B1, P.C1, P.D11, z);
    Eigen::MatrixXcd p12 = rational_eval(P.A, P.B2, P.C1, P.D12, z);
    Eigen::MatrixXcd p21 = rational_eval(P.A, P.B1, P.C2, P.D21, z);
    Eigen::MatrixXcd p22 = rational_eval(P.A, P.B2, P.C2, Eigen::MatrixXd::Zero(2, 2), z);
    Eigen::MatrixXcd kz = rational_eval(K.Ak, K.Bk, K.Ck, K.Dk, z);
    Eigen::MatrixXcd inner = Eigen::MatrixXcd::Identity(2, 2) - p22 * kz;
    Eigen::MatrixXcd rhs = p11 + p12 * kz * inner.lu().solve(p21);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("FIR controller realization reproduces its impulse response") {
  auto k = testutil::random_fir(23, 2, 3, 4);
  Controller K = realize_fir_controller(k);
  CHECK(K.nk() == 4 * 3);
  FirTransferMatrix back = markov_expand(K.Ak, K.Bk, K.Ck, K.Dk, k.horizon() + 3);
  for (int i = 0; i <= k.horizon(); ++i) CHECK((back.coeff(i) - k.coeff(i)).norm() < 1e-14);
  for (int i = k.horizon() + 1; i <= back.horizon(); ++i) CHECK(back.coeff(i).norm() == 0.0);
}

TEST_CASE("minimal poles drop cancelled modes") {
  Eigen::MatrixXd A(2, 2), B(2, 1), C(1, 2);
  A << 0.5, 0.0, 0.0, 2.0;
  B << 1.0, 0.0;  // unstable mode unreachable
  C << 1.0, 1.0;
  auto poles = transfer_poles(A, B, C);
  REQUIRE(poles.size() == 1);
  CHECK(std::abs(poles[0] - std::complex<double>(0.5, 0.0)) < 1e-12);
}

TEST_CASE("eigenvalue and input-output stability criteria agree") {
  int checked = 0;
  for (unsigned seed = 1; seed <= 30; ++seed) {
    const double rho = (seed % 3 == 0) ? 1.4 : 0.8;
    auto P = testutil::random_plant(seed, {.n = 3, .nw = 1, .nu = 2, .nz = 1, .ny = 2, .rho = rho});
    auto K = testutil::random_controller(seed + 1000, 2, 2, seed % 3);
    K.Ak *= 0.5;
    K.Bk *= 0.5;
    K.Ck *= 0.5;
    K.Dk *= 0.5;
    const bool eig_route = internal_stability(P, K).stable;
    const bool io_route = io_maps_stable(P, K);
    CHECK(eig_route == io_route);
    ++checked;
  }
  CHECK(checked == 30);
}

#include <doctest.h>

#include <cfloat>
#include <cmath>
#include <numbers>
#include <random>

#include "localgd/data.hpp"
#include "localgd/errors.hpp"
#include "localgd/specialfn.hpp"
#include "oracles.hpp"

using namespace localgd;

namespace {

constexpr double e = std::numbers::e;

double Phi(double b, double x) { return std::exp(log_phi(b, x)); }

Matrix two_points(double g1, double g2, double c) {
  Matrix p(2, 2);
  p << g1, 0.0, g2 * c, g2 * std::sqrt(1.0 - c * c);
  return p;
}

// tau, tau0, tau1 evaluated in long double directly from their displays.
struct LdTaus {
  long double L0, H0, tau, tau0, tau1;
};

LdTaus ld_taus(long double g1, long double g2, long double c, long double etaK) {
  const long double l1 = std::log1p(etaK * g1 * g1) / g1, l2 = std::log1p(etaK * g2 * g2) / g2;
  const long double L0 = std::max(l1, l2), H0 = std::min(l1, l2);
  const long double gmin = std::min(g1, g2), gmax = std::max(g1, g2);
  const long double s = (L0 + 1) * (L0 + 1);
  const long double p = 3 * s * (1 - c) * gmax / ((1 + c) * gmin);
  const long double tau = 16 * s / ((1 + c) * gmin) * ((1 / H0 - 1 / L0) * std::pow(L0 / H0, p) + 4 * gmax + 2 / H0);
  const long double A0 = 3 * (1 - c) * s / ((1 + c) * gmin) * std::log(L0 / H0);
  const long double nu0 = (1 + c) * gmin / (4 * s * (1 + std::exp(gmax * A0)));
  const long double tau0 = 2 / nu0 * (1 / H0 - 1 / L0);
  const long double tau1 = tau0 + 32 * s / ((1 + c) * gmin) * (2 * gmax + 1 / H0);
  return {L0, H0, tau, tau0, tau1};
}

}  // namespace

TEST_CASE("lambert_w_exp: fixed values") {
  CHECK(lambert_w_exp(1.0) == 1.0);
  CHECK(lambert_w_exp(e + 1.0) == doctest::Approx(e).epsilon(1e-13));
  CHECK(lambert_w_exp(0.0) == doctest::Approx(0.5671432904097838).epsilon(1e-15));
  CHECK(lambert_w_exp(800.0) == doctest::Approx(static_cast<double>(oracle::w_of_exp(800.0L))).epsilon(1e-13));
  CHECK(lambert_w_exp(-100.0) == doctest::Approx(std::exp(-100.0)).epsilon(1e-13));
  CHECK_THROWS_AS(lambert_w_exp(INFINITY), DomainError);
  CHECK_THROWS_AS(lambert_w_exp(NAN), DomainError);
}

TEST_CASE("lambert_w_exp residual on 1000 random arguments") {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> U(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double u = U(gen);
    const double w = lambert_w_exp(u);
    REQUIRE(w > 0.0);
    REQUIRE(std::abs(w + std::log(w) - u) <= 1e-12 * std::max(1.0, std::abs(u)));
    REQUIRE(w == doctest::Approx(static_cast<double>(oracle::w_of_exp(u))).epsilon(1e-13));
  }
}

TEST_CASE("log_phi: fixed values") {
  for (double x : {-30.0, -1.0, 0.0, 2.5, 40.0}) CHECK(log_phi(0.0, x) == 0.0);
  CHECK(log_phi(1.0, 0.0) == doctest::Approx(0.4428544010023886).epsilon(1e-14));
  CHECK(log_phi(1.0, 1.0) < log_phi(1.0, 0.0));
  CHECK_THROWS_AS(log_phi(1.0, 701.0), DomainError);
  CHECK_THROWS_AS(log_phi(-1.0, 0.0), DomainError);
}

TEST_CASE("log_phi agrees with the Lambert W expression") {
  std::mt19937_64 gen(22);
  std::uniform_real_distribution<double> B(1e-3, 30.0), X(-10.0, 10.0);
  for (int i = 0; i < 300; ++i) {
    const double b = B(gen), x = X(gen);
    const double ref = static_cast<double>(oracle::log_phi(b, x));
    CHECK(log_phi(b, x) == doctest::Approx(ref).epsilon(1e-11));
  }
}

TEST_CASE("log_phi stays accurate when e^x dominates b") {
  // Phi(b, x) - 1 ~ b e^{-x} / 2 for large x; u - w - x would lose every digit here.
  const double b = 1e-3, x = 30.0;
  const double lp = log_phi(b, x);
  CHECK(lp > 0.0);
  CHECK(lp == doctest::Approx(b / (std::exp(x) + 1.0)).epsilon(1e-6));
}

TEST_CASE("surrogate loss and flow advance") {
  CHECK(surrogate_loss(1.0, e, 0.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(surrogate_loss(1.0, 1e-300, 0.0) < 1e-200);
  CHECK(surrogate_loss(0.2, 10.0, 0.0) == doctest::Approx(0.9516981616565743).epsilon(1e-13));
  CHECK(gf_flow_advance(0.7, -2.5, 0.0) == -2.5);
  CHECK(gf_flow_advance(1.0, 0.0, e) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(gf_flow_advance(0.5, -1.0, 8.0) == doctest::Approx(0.9679839957458135).epsilon(1e-13));
  double prev = INFINITY;
  for (double a = -5.0; a <= 5.0; a += 0.25) {
    const double r = surrogate_loss(0.4, 3.0, a);
    CHECK(r < prev);
    prev = r;
  }
}

TEST_CASE("Phi bounds from below by one and decreases in x") {
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> B(1e-4, 20.0), X(-20.0, 20.0);
  for (int i = 0; i < 1000; ++i) {
    const double b = B(gen);
    double x1 = X(gen), x2 = X(gen);
    if (x1 > x2) std::swap(x1, x2);
    REQUIRE(log_phi(b, x1) > 0.0);
    if (x2 - x1 > 1e-9) REQUIRE(log_phi(b, x1) > log_phi(b, x2));
  }
}

TEST_CASE("Phi inverse and asymptotic bounds") {
  std::mt19937_64 gen(24);
  std::uniform_real_distribution<double> B(1e-3, 20.0), X(-10.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    const double b = B(gen), x = X(gen);
    const double phi_bx = Phi(b, x);
    if (phi_bx <= 1.0 + b / (b + 2.0)) REQUIRE(x >= std::log1p(b) - 1e-12);
    if (x >= std::log1p(b)) REQUIRE(phi_bx >= std::sqrt(1.0 + b / std::exp(x)) - 1e-12);
  }
}

TEST_CASE("psi is concave") {
  std::mt19937_64 gen(25);
  std::uniform_real_distribution<double> B(1e-3, 10.0), T(std::log(1e-3), std::log(1e3)), L(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double b = B(gen);
    double x1 = std::exp(T(gen)), x3 = std::exp(T(gen));
    if (x1 > x3) std::swap(x1, x3);
    const double t = L(gen), x2 = t * x1 + (1.0 - t) * x3;
    REQUIRE(t * psi(b, x1) + (1.0 - t) * psi(b, x3) - psi(b, x2) <= 1e-9 * std::max(1.0, psi(b, x2)));
  }
}

TEST_CASE("Phi descent inequality") {
  std::mt19937_64 gen(26);
  std::uniform_real_distribution<double> B(1e-3, 10.0), X(-8.0, 8.0), A(-4.0, 4.0);
  for (int i = 0; i < 1000; ++i) {
    const double b = B(gen), x = X(gen), a = A(gen);
    const double p = Phi(b, x);
    const double lhs = Phi(b, x + a);
    const double rhs = p * (1.0 + std::expm1(-a) * (p - 1.0) / (p + std::exp(-x)));
    REQUIRE(lhs <= rhs + 1e-10 * std::max(1.0, rhs));
    if (a < 0.0) REQUIRE(lhs <= p * std::exp(-a) * (1.0 + 1e-12));
  }
}

TEST_CASE("gf_round examples") {
  Matrix one(1, 2);
  one << 1.0, 0.0;
  const GfState s1 = gf_round(make_gf_state(one, Vector::Zero(1), e), e);
  CHECK(s1.a[0] == doctest::Approx(1.0).epsilon(1e-14));

  const double c = 0.3, g = 0.6, a = -0.4, etaK = 2.0;
  const Matrix p = two_points(g, g, c);
  const GfState s = make_gf_state(p, Vector::Constant(2, a), etaK);
  CHECK(s.c == doctest::Approx(c).epsilon(1e-15));
  CHECK(s.gram(0, 0) == 1.0);
  CHECK(s.gram(0, 1) == s.gram(1, 0));
  const GfState t = gf_round(s, etaK);
  const double expect = a + 0.5 * (1.0 + c) * log_phi(etaK * g * g, g * a) / g;
  CHECK(t.a[0] == doctest::Approx(expect).epsilon(1e-14));
  CHECK(t.a[1] == doctest::Approx(expect).epsilon(1e-14));
  CHECK(t.lyapunov == t.rho.maxCoeff());
  CHECK((t.rho.array() > 0.0).all());
}

TEST_CASE("gf_round antipodal symmetric instance keeps the centre fixed") {
  Matrix p(2, 2);
  p << 0.8, 0.0, -0.8, 0.0;
  GfState s = make_gf_state(p, Vector::Zero(2), 3.0);
  for (int r = 0; r < 50; ++r) s = gf_round(s, 3.0);
  CHECK(s.a.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(theory_constants(s, 3.0), DegenerateGeometryError);
}

TEST_CASE("Lyapunov value is monotone and decreases as stated") {
  std::mt19937_64 gen(27);
  std::uniform_real_distribution<double> G(0.1, 1.0), C(-0.99, 0.99), E(0.5, 8.0);
  for (int inst = 0; inst < 40; ++inst) {
    const double g1 = G(gen), g2 = G(gen), c = C(gen), etaK = E(gen);
    GfState s = make_gf_state(two_points(g1, g2, c), Vector::Zero(2), etaK);
    const TheoryConstants k = theory_constants(s, etaK);
    for (int r = 0; r < 200; ++r) {
      const GfState t = gf_round(s, etaK);
      REQUIRE(t.lyapunov <= s.lyapunov + 1e-12);
      for (int m = 0; m < 2; ++m) {
        const double L = s.lyapunov;
        if (s.rho[m] == L) {
          const double shrink = (1.0 + c) * s.gammas[m] /
                                (4.0 * (k.L0 + 1.0) * (k.L0 + 1.0) * (1.0 + std::exp(-s.gammas[m] * s.a[m])));
          REQUIRE(t.rho[m] <= L - shrink * L * L + 1e-10);
        }
        if (t.rho[m] >= s.rho[m]) REQUIRE(t.rho[m] <= 0.5 * (1.0 - c) * L + 1e-10);
      }
      s = t;
    }
  }
}

TEST_CASE("theory constants") {
  const GfState eq = make_gf_state(two_points(1.0, 1.0, 0.2), Vector::Zero(2), e - 1.0);
  const TheoryConstants k = theory_constants(eq, e - 1.0);
  CHECK(k.L0 == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(k.H0 == doctest::Approx(1.0).epsilon(1e-15));

  std::mt19937_64 gen(28);
  std::uniform_real_distribution<double> G(0.3, 1.0), C(-0.5, 0.9), E(0.5, 4.0);
  for (int i = 0; i < 50; ++i) {
    const double g1 = G(gen), g2 = G(gen), c = C(gen), etaK = E(gen);
    const auto s = make_gf_state(two_points(g1, g2, c), Vector::Zero(2), etaK);
    const auto t = theory_constants(s, etaK);
    const auto ref = ld_taus(g1, g2, s.c, etaK);
    CHECK(t.L0 >= t.H0);
    CHECK(t.L0 == doctest::Approx(static_cast<double>(ref.L0)).epsilon(1e-14));
    CHECK(t.H0 == doctest::Approx(static_cast<double>(ref.H0)).epsilon(1e-14));
    if (ref.tau < 1e300L) CHECK(t.tau == doctest::Approx(static_cast<double>(ref.tau)).epsilon(1e-9));
    if (ref.tau0 < 1e300L) CHECK(t.tau0 == doctest::Approx(static_cast<double>(ref.tau0)).epsilon(1e-9));
    if (ref.tau1 < 1e300L) CHECK(t.tau1 == doctest::Approx(static_cast<double>(ref.tau1)).epsilon(1e-9));
    CHECK(t.tau >= 0.0);
  }

  Matrix three(3, 2);
  three << 1, 0, 0, 1, 1, 1;
  CHECK_THROWS_AS(theory_constants(make_gf_state(three, Vector::Zero(3), 1.0), 1.0), InputError);
}

TEST_CASE("theory constants on the synthetic pair") {
  const FederatedDataset ds = gen_synthetic({});
  Matrix p(2, 2);
  p.row(0) = ds.client(0).col(0).transpose();
  p.row(1) = ds.client(1).col(0).transpose();
  const auto s = make_gf_state(p, Vector::Zero(2), 4.0);
  const auto k = theory_constants(s, 4.0);
  CHECK(k.L0 == doctest::Approx(1.6094379124341004).epsilon(1e-14));
  CHECK(k.H0 == doctest::Approx(0.7421000255913664).epsilon(1e-14));
  // The transition round is about 1.9e3438: representable in long double only.
  const auto ref = ld_taus(1.0L, 0.2L, static_cast<long double>(s.c), 4.0L);
  CHECK(std::log10(ref.tau) == doctest::Approx(3438.28).epsilon(1e-4));
  CHECK(std::isinf(k.tau));
}

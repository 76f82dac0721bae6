#include "localgd/specialfn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "localgd/errors.hpp"

namespace localgd {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxNewton = 50;
constexpr int kMaxBisect = 2200;
constexpr double kMaxExponent = 700.0;

}  // namespace

double lambert_w_exp(double u) {
  if (!std::isfinite(u)) throw DomainError("lambert_w_exp: non-finite argument");
  // Two fixed-point sweeps of w = exp(u - w) are exact to double precision here.
  if (u < -36.0) return std::exp(u - std::exp(u));
  if (u == 1.0) return 1.0;

  // f(w) = w + ln w - u is increasing and concave; [lo, hi] brackets the root.
  double lo, hi;
  if (u < 1.0) {
    lo = std::exp(u - 1.0);
    hi = 1.0;
  } else {
    lo = u - std::log(u);
    hi = u;
  }
  double w = (u > 2.0) ? lo : std::clamp(std::exp(u - 1.0), lo, hi);

  for (int it = 0; it < kMaxNewton; ++it) {
    const double f = w + std::log(w) - u;
    if (f == 0.0) return w;
    if (f < 0.0) lo = std::max(lo, w); else hi = std::min(hi, w);
    double next = w * (1.0 + u - std::log(w)) / (1.0 + w);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - w) <= 2.0 * kEps * next) return next;
    w = next;
  }
  // Newton stalled: bisect the remaining bracket.
  for (int it = 0; it < kMaxBisect && hi - lo > 2.0 * kEps * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid + std::log(mid) - u < 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double log_phi(double b, double x) {
  if (!(b >= 0.0) || !std::isfinite(b)) throw DomainError("log_phi: b must be finite and >= 0");
  if (!std::isfinite(x) || std::abs(x) > kMaxExponent)
    throw DomainError("log_phi: |x| = " + std::to_string(std::abs(x)) + " exceeds 700");
  if (b == 0.0) return 0.0;

  const double ex = std::exp(x);
  // g(delta) = e^x expm1(delta) + delta - b, convex and increasing on [0, b].
  auto g = [&](double delta) {
    const double growth = delta < 1.0 ? ex * std::expm1(delta)
                                      : std::exp(x + delta) * -std::expm1(-delta);
    return growth + delta - b;
  };
  double lo = 0.0, hi = b;
  // The tangent at 0 crosses zero right of the root, so Newton decreases monotonically.
  double delta = std::min(b, b / (1.0 + ex));
  for (int it = 0; it < kMaxNewton; ++it) {
    const double value = g(delta);
    if (value == 0.0) return delta;
    if (value < 0.0) lo = std::max(lo, delta); else hi = std::min(hi, delta);
    const double slope = std::exp(x + delta) + 1.0;
    double next = delta - value / slope;
    if (!std::isfinite(next) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - delta) <= 2.0 * kEps * next) return next;
    delta = next;
  }
  for (int it = 0; it < kMaxBisect && hi - lo > 2.0 * kEps * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) < 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double phi(double b, double x) { return std::exp(log_phi(b, x)); }

double psi(double b, double x) {
  if (!(x > 0.0)) throw DomainError("psi: argument must be positive");
  return phi(b, -std::log(x));
}

double surrogate_loss(double gamma, double etaK, double a) {
  if (!(gamma > 0.0) || !(etaK > 0.0))
    throw DomainError("surrogate_loss: gamma and etaK must be positive");
  return log_phi(etaK * gamma * gamma, gamma * a) / gamma;
}

double gf_flow_advance(double gamma, double a0, double eta_t) {
  if (!(gamma > 0.0)) throw DomainError("gf_flow_advance: gamma must be positive");
  if (!(eta_t >= 0.0)) throw DomainError("gf_flow_advance: eta * t must be >= 0");
  if (eta_t == 0.0) return a0;
  return a0 + log_phi(eta_t * gamma * gamma, gamma * a0) / gamma;
}

GfState make_gf_state(const Matrix& points, const Vector& a, double etaK) {
  const Eigen::Index clients = points.rows();
  if (clients == 0) throw InputError("make_gf_state: no clients");
  if (a.size() != clients) throw InputError("make_gf_state: a has wrong length");
  GfState state;
  state.gammas = points.rowwise().norm();
  if ((state.gammas.array() <= 0.0).any())
    throw InputError("make_gf_state: every client point must be nonzero");
  state.directions = state.gammas.cwiseInverse().asDiagonal() * points;
  state.gram = state.directions * state.directions.transpose();
  state.gram.diagonal().setOnes();
  state.gram = 0.5 * (state.gram + state.gram.transpose()).eval();
  state.c = clients == 2 ? state.gram(0, 1) : 0.0;
  state.a = a;
  refresh_surrogates(state, etaK);
  return state;
}

void refresh_surrogates(GfState& state, double etaK) {
  const Eigen::Index clients = state.gammas.size();
  state.rho.resize(clients);
  for (Eigen::Index m = 0; m < clients; ++m)
    state.rho[m] = surrogate_loss(state.gammas[m], etaK, state.a[m]);
  state.lyapunov = state.rho.maxCoeff();
}

GfState gf_round(const GfState& state, double etaK) {
  GfState next = state;
  const Eigen::Index clients = state.gammas.size();
  Vector step(clients);
  for (Eigen::Index m = 0; m < clients; ++m)
    step[m] = surrogate_loss(state.gammas[m], etaK, state.a[m]);
  next.a = state.a + (state.gram * step) / static_cast<double>(clients);
  refresh_surrogates(next, etaK);
  return next;
}

double TheoryConstants::nu_for(double A) const {
  return (1.0 + c) * gamma_min /
         (4.0 * (L0 + 1.0) * (L0 + 1.0) * (1.0 + std::exp(gamma_max * A)));
}

TheoryConstants theory_constants(const GfState& state, double etaK) {
  if (state.num_clients() != 2)
    throw InputError("theory_constants: requires exactly two clients");
  if (!(etaK > 0.0)) throw DomainError("theory_constants: etaK must be positive");
  TheoryConstants k;
  k.etaK = etaK;
  k.c = state.c;
  if (!(k.c > -1.0)) throw DegenerateGeometryError("theory_constants: c <= -1 (antipodal clients)");
  k.gamma_min = state.gammas.minCoeff();
  k.gamma_max = state.gammas.maxCoeff();

  double lmax = -std::numeric_limits<double>::infinity();
  double lmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index m = 0; m < state.gammas.size(); ++m) {
    const double g = state.gammas[m];
    const double value = std::log1p(etaK * g * g) / g;
    lmax = std::max(lmax, value);
    lmin = std::min(lmin, value);
  }
  k.L0 = lmax;
  k.H0 = lmin;

  const double one_plus_c = 1.0 + k.c;
  const double sq = (k.L0 + 1.0) * (k.L0 + 1.0);
  const double inv_gap = 1.0 / k.H0 - 1.0 / k.L0;
  const double exponent = 3.0 * sq * (1.0 - k.c) * k.gamma_max / (one_plus_c * k.gamma_min);

  k.A0 = 3.0 * (1.0 - k.c) * sq / (one_plus_c * k.gamma_min) * std::log(k.L0 / k.H0);
  k.nu = k.nu_for(k.A0);
  const double amplified = inv_gap > 0.0 ? inv_gap * std::pow(k.L0 / k.H0, exponent) : 0.0;
  k.tau = 16.0 * sq / (one_plus_c * k.gamma_min) * (amplified + 4.0 * k.gamma_max + 2.0 / k.H0);
  k.tau0 = inv_gap > 0.0 ? (2.0 / k.nu) * inv_gap : 0.0;
  k.nu1 = one_plus_c * k.gamma_min / (16.0 * sq);
  k.tau1 = k.tau0 + 32.0 * sq / (one_plus_c * k.gamma_min) * (2.0 * k.gamma_max + 1.0 / k.H0);
  return k;
}

}  // namespace localgd

#pragma once

#include "localgd/types.hpp"

namespace localgd {

/// W(exp(u)) for the principal branch, i.e. the unique w > 0 with w + ln w = u.
/// exp(u) is never formed, so any finite u is accepted (the result underflows to
/// zero only for u below about -745).
double lambert_w_exp(double u);

/// log Phi(b, x) where Phi(b, x) = W(exp(b + e^x + x)) / e^x.
///
/// Returns the root delta in [0, b] of e^x * expm1(delta) + delta = b, which is
/// the same quantity as u - W(e^u) - x for u = b + e^x + x but does not cancel
/// when e^x dominates b. Requires b >= 0 and |x| <= 700 (DomainError otherwise).
double log_phi(double b, double x);

/// Phi(b, x) itself.
double phi(double b, double x);

/// psi(x) = Phi(b, log(1/x)) for x > 0.
double psi(double b, double x);

/// Surrogate client loss rho = (1/gamma) log Phi(etaK gamma^2, gamma a).
double surrogate_loss(double gamma, double etaK, double a);

/// Projection a(t) of a single-sample client's gradient flow after time t, i.e.
/// the solution of exp(gamma a) + gamma a = eta gamma^2 t + exp(gamma a0) + gamma a0.
double gf_flow_advance(double gamma, double a0, double eta_t);

/// State of the exact Local GF round map for one-sample clients.
struct GfState {
  Vector gammas;      ///< gamma_m = ||x_m||
  Matrix directions;  ///< M x d, row m is w*_m = x_m / ||x_m||
  Matrix gram;        ///< G = W W^T
  Vector a;           ///< a_m = <w_bar, w*_m>
  Vector rho;         ///< surrogate losses at the etaK used to build the state
  double lyapunov = 0.0;
  double c = 0.0;  ///< gram(0, 1); only meaningful for M = 2

  int num_clients() const { return static_cast<int>(gammas.size()); }
};

/// Builds the state for data points x_m (rows of `points`) at projections `a`.
GfState make_gf_state(const Matrix& points, const Vector& a, double etaK);

/// Recomputes rho and the Lyapunov value of `state` for etaK.
void refresh_surrogates(GfState& state, double etaK);

/// a' = a + (1/M) G ((1/gamma) .* log Phi(etaK gamma^2, gamma .* a)).
GfState gf_round(const GfState& state, double etaK);

/// Constants of the M = 2 Local GF guarantee.
struct TheoryConstants {
  double etaK = 0.0;
  double c = 0.0;
  double gamma_min = 0.0;
  double gamma_max = 0.0;
  double L0 = 0.0;   ///< max_m (1/gamma_m) log(1 + etaK gamma_m^2)
  double H0 = 0.0;   ///< min_m of the same
  double A0 = 0.0;   ///< lower bound a_r^m >= -A0
  double nu = 0.0;   ///< decrease rate with A = A0
  double tau = 0.0;  ///< transition round of the closed-form envelope
  double tau0 = 0.0; ///< round after which all a_r^m >= 0
  double tau1 = 0.0; ///< applicability threshold of the tau0-shifted envelope
  double nu1 = 0.0;

  /// nu for an arbitrary lower bound a >= -A.
  double nu_for(double A) const;
};

/// Throws DegenerateGeometryError when c <= -1 and InputError unless M = 2.
TheoryConstants theory_constants(const GfState& state, double etaK);

}  // namespace localgd

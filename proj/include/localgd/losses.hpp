#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "localgd/dataset.hpp"
#include "localgd/types.hpp"

namespace localgd {

// Scalar logistic loss l(z) = log(1 + exp(-z)) and its derivatives. Templated so
// the same formulas evaluate in double and long double.

template <typename Scalar>
Scalar ell(Scalar z) {
  using std::abs, std::exp, std::log1p;
  return std::max(-z, Scalar(0)) + log1p(exp(-abs(z)));
}

template <typename Scalar>
Scalar ell_prime(Scalar z) {
  using std::exp;
  if (z >= Scalar(0)) {
    const Scalar e = exp(-z);
    return -e / (Scalar(1) + e);
  }
  return Scalar(-1) / (exp(z) + Scalar(1));
}

template <typename Scalar>
Scalar ell_double_prime(Scalar z) {
  using std::abs, std::exp;
  const Scalar e = exp(-abs(z));
  return e / ((Scalar(1) + e) * (Scalar(1) + e));
}

struct ClientEval {
  double value = 0.0;
  Vector grad;
};

/// F_m(w) only.
double client_value(const FederatedDataset& dataset, int m, const Weights& w);

/// F_m(w) and its gradient, summed in ascending sample order.
ClientEval client_value_and_gradient(const FederatedDataset& dataset, int m, const Weights& w);

struct ObjectiveReport {
  double value = 0.0;
  Vector grad;
  double grad_norm = 0.0;
  std::vector<double> per_client_values;
};

/// Global objective F = mean_m F_m and grad F = mean_m grad F_m, reduced in
/// ascending client order.
ObjectiveReport objective(const FederatedDataset& dataset, const Weights& w);

/// Smallest folded margin min_{m,i} <w, z_mi>.
double min_margin(const FederatedDataset& dataset, const Weights& w);

Vector client_hessian_vector_product(const FederatedDataset& dataset, int m, const Weights& w,
                                     const Vector& v);

Vector hessian_vector_product(const FederatedDataset& dataset, const Weights& w, const Vector& v);

struct PowerIterationOptions {
  double rel_tol = 1e-8;
  int max_iter = 10000;
};

/// Largest eigenvalue of the PSD Hessian of F (or of F_m when a client index is
/// given) by power iteration. Throws NumericConvergenceError at the iteration cap.
double hessian_spectral_norm(const FederatedDataset& dataset, const Weights& w,
                             const PowerIterationOptions& options = {});

double client_hessian_spectral_norm(const FederatedDataset& dataset, int m, const Weights& w,
                                    const PowerIterationOptions& options = {});

}  // namespace localgd

#include "localgd/losses.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "localgd/errors.hpp"

namespace localgd {

namespace {

void require_dimension(const FederatedDataset& dataset, Eigen::Index size, const char* what) {
  if (size != dataset.d)
    throw InputError(std::string(what) + " has dimension " + std::to_string(size) +
                     ", dataset has d = " + std::to_string(dataset.d));
}

void require_client(const FederatedDataset& dataset, int m) {
  if (m < 0 || m >= dataset.num_clients())
    throw InputError("client index " + std::to_string(m) + " out of range");
}

template <typename Apply>
double power_iteration(Apply&& apply, const Vector& start,
                       const PowerIterationOptions& options) {
  Vector v = start.normalized();
  Vector hv = apply(v);
  double lambda = v.dot(hv);
  for (int it = 0; it < options.max_iter; ++it) {
    const double norm = hv.norm();
    if (norm == 0.0) return 0.0;
    v = hv / norm;
    hv = apply(v);
    const double next = v.dot(hv);
    if (std::abs(next - lambda) <= options.rel_tol * std::abs(next)) return next;
    lambda = next;
  }
  throw NumericConvergenceError("power iteration did not converge in " +
                                    std::to_string(options.max_iter) + " iterations",
                                lambda);
}

// Two deterministic starts: all-ones, then a Weyl-sequence vector that is not
// orthogonal to axis-aligned or symmetric eigenvectors in general position.
template <typename Apply>
double spectral_norm_psd(Apply&& apply, Eigen::Index d, const PowerIterationOptions& options) {
  if (d == 0) return 0.0;
  const Vector ones = Vector::Ones(d);
  Vector weyl(d);
  constexpr double kGolden = 0.6180339887498949;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double frac = std::fmod(static_cast<double>(i + 1) * kGolden, 1.0);
    weyl[i] = 0.5 + frac;
  }
  const double a = power_iteration(apply, ones, options);
  const double b = power_iteration(apply, weyl, options);
  return std::max(a, b);
}

}  // namespace

double client_value(const FederatedDataset& dataset, int m, const Weights& w) {
  require_client(dataset, m);
  require_dimension(dataset, w.size(), "weights");
  const Matrix& z = dataset.client(m);
  const Vector margins = z.transpose() * w;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < margins.size(); ++i) sum += ell(margins[i]);
  return sum / static_cast<double>(z.cols());
}

ClientEval client_value_and_gradient(const FederatedDataset& dataset, int m, const Weights& w) {
  require_client(dataset, m);
  require_dimension(dataset, w.size(), "weights");
  const Matrix& z = dataset.client(m);
  const Vector margins = z.transpose() * w;
  ClientEval out;
  out.grad = Vector::Zero(dataset.d);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    sum += ell(margins[i]);
    out.grad.noalias() += ell_prime(margins[i]) * z.col(i);
  }
  const double n = static_cast<double>(z.cols());
  out.value = sum / n;
  out.grad /= n;
  return out;
}

ObjectiveReport objective(const FederatedDataset& dataset, const Weights& w) {
  require_dimension(dataset, w.size(), "weights");
  const int clients = dataset.num_clients();
  ObjectiveReport report;
  report.grad = Vector::Zero(dataset.d);
  report.per_client_values.reserve(static_cast<std::size_t>(clients));
  double sum = 0.0;
  for (int m = 0; m < clients; ++m) {
    ClientEval e = client_value_and_gradient(dataset, m, w);
    report.per_client_values.push_back(e.value);
    sum += e.value;
    report.grad += e.grad;
  }
  report.value = sum / static_cast<double>(clients);
  report.grad /= static_cast<double>(clients);
  report.grad_norm = report.grad.norm();
  return report;
}

double min_margin(const FederatedDataset& dataset, const Weights& w) {
  require_dimension(dataset, w.size(), "weights");
  double best = std::numeric_limits<double>::infinity();
  for (const Matrix& z : dataset.clients) {
    if (z.cols() == 0) continue;
    best = std::min(best, (z.transpose() * w).minCoeff());
  }
  return best;
}

Vector client_hessian_vector_product(const FederatedDataset& dataset, int m, const Weights& w,
                                     const Vector& v) {
  require_client(dataset, m);
  require_dimension(dataset, w.size(), "weights");
  require_dimension(dataset, v.size(), "direction");
  const Matrix& z = dataset.client(m);
  const Vector margins = z.transpose() * w;
  const Vector projections = z.transpose() * v;
  Vector out = Vector::Zero(dataset.d);
  for (Eigen::Index i = 0; i < margins.size(); ++i)
    out.noalias() += (ell_double_prime(margins[i]) * projections[i]) * z.col(i);
  return out / static_cast<double>(z.cols());
}

Vector hessian_vector_product(const FederatedDataset& dataset, const Weights& w, const Vector& v) {
  require_dimension(dataset, w.size(), "weights");
  require_dimension(dataset, v.size(), "direction");
  Vector out = Vector::Zero(dataset.d);
  for (int m = 0; m < dataset.num_clients(); ++m)
    out += client_hessian_vector_product(dataset, m, w, v);
  return out / static_cast<double>(dataset.num_clients());
}

double hessian_spectral_norm(const FederatedDataset& dataset, const Weights& w,
                             const PowerIterationOptions& options) {
  if (dataset.num_clients() == 0 || dataset.total_samples() == 0)
    throw InputError("hessian_spectral_norm on an empty dataset");
  return spectral_norm_psd([&](const Vector& v) { return hessian_vector_product(dataset, w, v); },
                           dataset.d, options);
}

double client_hessian_spectral_norm(const FederatedDataset& dataset, int m, const Weights& w,
                                    const PowerIterationOptions& options) {
  require_client(dataset, m);
  if (dataset.client_size(m) == 0) throw InputError("client " + std::to_string(m) + " is empty");
  return spectral_norm_psd(
      [&](const Vector& v) { return client_hessian_vector_product(dataset, m, w, v); }, dataset.d,
      options);
}

}  // namespace localgd

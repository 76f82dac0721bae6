#include "localgd/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <utility>

#include "localgd/data.hpp"
#include "localgd/errors.hpp"
#include "localgd/losses.hpp"
#include "localgd/specialfn.hpp"

namespace localgd {

std::string to_string(Averaging averaging) {
  return averaging == Averaging::uniform_average ? "uniform_average" : "final_iterate";
}

Averaging parse_averaging(const std::string& name) {
  if (name == "final_iterate" || name == "final") return Averaging::final_iterate;
  if (name == "uniform_average" || name == "uniform") return Averaging::uniform_average;
  throw InputError("unknown averaging '" + name + "' (expected final_iterate or uniform_average)");
}

std::string to_string(GfMode mode) {
  switch (mode) {
    case GfMode::exact: return "exact";
    case GfMode::numeric: return "numeric";
    case GfMode::automatic: break;
  }
  return "auto";
}

GfMode parse_gf_mode(const std::string& name) {
  if (name == "auto") return GfMode::automatic;
  if (name == "exact") return GfMode::exact;
  if (name == "numeric") return GfMode::numeric;
  throw InputError("unknown gf mode '" + name + "' (expected auto, exact or numeric)");
}

namespace {

// Unit directions and norms of one-sample clients, used for the surrogate trace.
struct SingleSampleGeometry {
  std::vector<double> gammas;
  std::vector<Vector> directions;
};

SingleSampleGeometry single_sample_geometry(const FederatedDataset& dataset) {
  SingleSampleGeometry g;
  for (const auto& c : dataset.clients) {
    const double gamma = c.col(0).norm();
    g.gammas.push_back(gamma);
    g.directions.push_back(c.col(0) / gamma);
  }
  return g;
}

RoundTrace make_trace(const FederatedDataset& dataset, const Weights& w, long long r, int stage,
                      double eta) {
  const ObjectiveReport report = objective(dataset, w);
  RoundTrace t;
  t.r = r;
  t.stage = stage;
  t.eta = eta;
  t.global_loss = report.value;
  t.client_losses = report.per_client_values;
  t.grad_norm = report.grad_norm;
  t.iterate_norm = w.norm();
  t.min_margin = min_margin(dataset, w);
  return t;
}

std::optional<LyapunovTrace> lyapunov_trace(const SingleSampleGeometry& geometry, const Weights& w,
                                            double etaK) {
  LyapunovTrace l;
  try {
    for (std::size_t m = 0; m < geometry.gammas.size(); ++m) {
      const double a = w.dot(geometry.directions[m]);
      l.a.push_back(a);
      l.rho.push_back(surrogate_loss(geometry.gammas[m], etaK, a));
    }
  } catch (const DomainError&) {
    return std::nullopt;  // gamma a left the representable range
  }
  l.L = *std::max_element(l.rho.begin(), l.rho.end());
  return l;
}

Weights initial_weights(const FederatedDataset& dataset, const RunConfig& config) {
  if (!config.w0) return Weights::Zero(dataset.d);
  if (config.w0->size() != dataset.d) throw InputError("initial weights have the wrong dimension");
  return *config.w0;
}

void validate(const FederatedDataset& dataset, const RunConfig& config) {
  if (dataset.num_clients() == 0) throw InputError("dataset has no clients");
  for (int m = 0; m < dataset.num_clients(); ++m)
    if (dataset.client_size(m) == 0) throw InputError("client " + std::to_string(m) + " is empty");
  if (config.R < 1) throw InputError("R must be >= 1");
  if (config.K < 1) throw InputError("K must be >= 1");
}

void require_eta(double eta, const char* name) {
  if (!(eta > 0.0) || !std::isfinite(eta))
    throw InputError(std::string(name) + " must be positive and finite");
}

RunResult start_result(const char* algorithm, const FederatedDataset& dataset,
                       const RunConfig& config) {
  RunResult out;
  out.algorithm = algorithm;
  out.config = config;
  out.fingerprint = dataset_fingerprint(dataset);
  out.seed = config.seed;
  return out;
}

[[noreturn]] void diverge(RunResult& out, const Weights& last_finite, long long round) {
  out.final_weights = last_finite;
  out.output = last_finite;
  char msg[96];
  std::snprintf(msg, sizeof msg, "iterate became non-finite in round %lld", round);
  throw DivergenceError(msg, static_cast<int>(round), std::make_shared<const RunResult>(std::move(out)));
}

struct Segment {
  Weights last;
  Vector iterate_sum;
};

Segment run_rounds(const FederatedDataset& dataset, Weights w, long long first_row,
                   long long rounds, int K, double eta, int stage, RunResult& out) {
  Vector sum = Vector::Zero(dataset.d);
  for (long long i = 0; i < rounds; ++i) {
    const long long r = first_row + i;
    out.traces.push_back(make_trace(dataset, w, r, stage, eta));
    LocalRound round = local_gd_round(dataset, w, K, eta);
    round.diagnostics.r = r;
    out.rounds.push_back(std::move(round.diagnostics));
    if (!round.w_next.allFinite()) diverge(out, w, r + 1);
    sum += round.iterate_sum;
    w = std::move(round.w_next);
  }
  return {std::move(w), std::move(sum)};
}

Vector client_gradient(const Matrix& z, const Weights& w) {
  const Vector margins = z.transpose() * w;
  Vector g = Vector::Zero(z.rows());
  for (Eigen::Index i = 0; i < margins.size(); ++i) g.noalias() += ell_prime(margins[i]) * z.col(i);
  return g / static_cast<double>(z.cols());
}

// Classical RK4 for w' = -eta grad F_m(w) over time K in `steps` equal steps.
Weights integrate_client_flow(const Matrix& z, Weights w, double eta, int K, int steps) {
  const double h = static_cast<double>(K) / static_cast<double>(steps);
  for (int s = 0; s < steps; ++s) {
    const Vector k1 = -eta * client_gradient(z, w);
    const Vector k2 = -eta * client_gradient(z, w + 0.5 * h * k1);
    const Vector k3 = -eta * client_gradient(z, w + 0.5 * h * k2);
    const Vector k4 = -eta * client_gradient(z, w + h * k3);
    w += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return w;
}

}  // namespace

LocalRound local_gd_round(const FederatedDataset& dataset, const Weights& w_bar, int K, double eta) {
  if (w_bar.size() != dataset.d) throw InputError("weights have the wrong dimension");
  if (K < 1) throw InputError("K must be >= 1");
  const int clients = dataset.num_clients();
  LocalRound out;
  out.diagnostics.eta = eta;
  out.iterate_sum = Vector::Zero(dataset.d);
  Vector displacement_sum = Vector::Zero(dataset.d);
  Vector local(dataset.d);
  for (int m = 0; m < clients; ++m) {
    Vector s = Vector::Zero(dataset.d);  // running sum of local gradients
    Vector g0;
    double prev = 0.0;
    double drift = 0.0, bias = 0.0, increase = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      local = w_bar - eta * s;
      ClientEval e = client_value_and_gradient(dataset, m, local);
      if (k == 0) {
        g0 = e.grad;
        out.diagnostics.start_losses.push_back(e.value);
      } else {
        increase = std::max(increase, e.value - prev);
        bias = std::max(bias, (e.grad - g0).norm());
        drift = std::max(drift, eta * s.norm());
      }
      prev = e.value;
      out.iterate_sum += local / static_cast<double>(clients);
      s += e.grad;
    }
    Weights last = w_bar - eta * s;
    drift = std::max(drift, eta * s.norm());
    if (last.allFinite()) increase = std::max(increase, client_value(dataset, m, last) - prev);
    out.diagnostics.drift_max.push_back(drift);
    out.diagnostics.bias_max.push_back(bias);
    out.diagnostics.local_increase.push_back(increase);
    out.drift_max = std::max(out.drift_max, drift);
    displacement_sum += s;
    out.client_finals.push_back(std::move(last));
  }
  displacement_sum /= static_cast<double>(clients);
  out.w_next = w_bar - eta * displacement_sum;
  return out;
}

RunResult run_local_gd(const FederatedDataset& dataset, const RunConfig& config) {
  validate(dataset, config);
  const double eta = config.policy.eta;
  require_eta(eta, "eta");
  RunResult out = start_result("local-gd", dataset, config);
  Segment seg = run_rounds(dataset, initial_weights(dataset, config), 0, config.R, config.K, eta, 1, out);
  out.traces.push_back(make_trace(dataset, seg.last, config.R, 1, eta));
  out.final_weights = seg.last;
  if (config.averaging == Averaging::uniform_average) {
    out.averaged_weights = seg.iterate_sum / (static_cast<double>(config.K) * static_cast<double>(config.R));
    out.output = *out.averaged_weights;
  } else {
    out.output = out.final_weights;
  }
  return out;
}

RunResult run_two_stage(const FederatedDataset& dataset, const RunConfig& config) {
  validate(dataset, config);
  const auto& p = config.policy;
  const long long r0 = p.r0;
  if (r0 < 0 || r0 > config.R) throw InputError("r0 must lie in [0, R]");
  if (r0 > 0) require_eta(p.eta1, "eta1");
  if (r0 < config.R) require_eta(p.eta2, "eta2");
  RunResult out = start_result("two-stage", dataset, config);
  out.stage2_start = r0;
  if (p.eta2 > 4.0) out.warnings.push_back("eta2 exceeds 4; the stage-2 guarantee does not apply");

  const Weights w0 = initial_weights(dataset, config);
  Segment first = run_rounds(dataset, w0, 0, r0, config.K, p.eta1, 1, out);
  Weights w_hat1 = w0;
  if (r0 > 0) {
    if (config.stage1_averaging == Averaging::uniform_average) {
      w_hat1 = first.iterate_sum / (static_cast<double>(config.K) * static_cast<double>(r0));
      out.averaged_weights = w_hat1;
    } else {
      w_hat1 = first.last;
    }
  }
  if (!w_hat1.allFinite()) diverge(out, first.last, r0);
  Segment second = run_rounds(dataset, w_hat1, r0, config.R - r0, config.K, p.eta2, 2, out);
  out.traces.push_back(make_trace(dataset, second.last, config.R, 2, p.eta2));
  out.final_weights = second.last;
  out.output = second.last;
  return out;
}

RunResult run_local_gf(const FederatedDataset& dataset, const RunConfig& config) {
  validate(dataset, config);
  const double eta = config.policy.eta;
  require_eta(eta, "eta");
  if (config.gf_substeps < 1) throw InputError("gf_substeps must be >= 1");
  const bool single = dataset.single_sample_clients();
  if (config.gf_mode == GfMode::exact && !single)
    throw InputError("the exact flow map needs exactly one sample per client");
  const bool exact = single && config.gf_mode != GfMode::numeric;
  const double etaK = eta * static_cast<double>(config.K);
  const int clients = dataset.num_clients();

  RunResult out = start_result("local-gf", dataset, config);
  out.gf_exact = exact;
  std::optional<SingleSampleGeometry> geometry;
  if (single) geometry = single_sample_geometry(dataset);

  auto row = [&](const Weights& w, long long r) {
    RoundTrace t = make_trace(dataset, w, r, 1, eta);
    if (geometry) t.lyapunov = lyapunov_trace(*geometry, w, etaK);
    out.traces.push_back(std::move(t));
  };

  Weights w = initial_weights(dataset, config);
  const int coarse = config.gf_substeps / 2;
  for (long long r = 0; r < config.R; ++r) {
    row(w, r);
    Vector sum = Vector::Zero(dataset.d);
    for (int m = 0; m < clients; ++m) {
      if (exact) {
        const Vector& dir = geometry->directions[static_cast<std::size_t>(m)];
        const double gamma = geometry->gammas[static_cast<std::size_t>(m)];
        double rho = 0.0;
        try {
          rho = surrogate_loss(gamma, etaK, w.dot(dir));
        } catch (const DomainError&) {
          diverge(out, w, r + 1);
        }
        sum += w + rho * dir;
      } else {
        const Matrix& z = dataset.client(m);
        const Weights fine = integrate_client_flow(z, w, eta, config.K, config.gf_substeps);
        if (coarse >= 1) {
          const Weights rough = integrate_client_flow(z, w, eta, config.K, coarse);
          out.gf_error_estimate = std::max(out.gf_error_estimate, (fine - rough).norm());
        }
        sum += fine;
      }
    }
    Weights next = sum / static_cast<double>(clients);
    if (!next.allFinite()) diverge(out, w, r + 1);
    w = std::move(next);
  }
  row(w, config.R);
  if (out.gf_error_estimate > 1e-6) {
    char msg[128];
    std::snprintf(msg, sizeof msg,
                  "numeric flow step-halving difference %.3g exceeds 1e-6; increase gf_substeps",
                  out.gf_error_estimate);
    out.warnings.emplace_back(msg);
  }
  out.final_weights = w;
  out.output = w;
  return out;
}

RunResult run_algorithm(const std::string& algorithm, const FederatedDataset& dataset,
                        const RunConfig& config) {
  if (algorithm == "local-gd") return run_local_gd(dataset, config);
  if (algorithm == "two-stage") return run_two_stage(dataset, config);
  if (algorithm == "local-gf") return run_local_gf(dataset, config);
  throw InputError("unknown optimizer '" + algorithm + "' (expected local-gd, two-stage or local-gf)");
}

}  // namespace localgd

#include "localgd/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "localgd/errors.hpp"
#include "localgd/losses.hpp"

namespace localgd {

namespace {

constexpr double kLossTol = 1e-9;
constexpr double kHessianRelTol = 1e-8;
constexpr double kLyapunovTol = 1e-12;
constexpr double kSurrogateTol = 1e-10;
constexpr double kInf = std::numeric_limits<double>::infinity();

CheckReport make_report(const std::string& name, double tolerance, bool relative = false) {
  CheckReport r;
  r.name = name;
  r.tolerance = tolerance;
  r.relative = relative;
  r.min_slack = kInf;
  return r;
}

void finish(CheckReport& report) { report.passed = report.violations.empty(); }

double log_plus(double x) { return x > 1.0 ? std::log(x) : 0.0; }

bool is_local_gd(const RunResult& run) {
  return run.algorithm == "local-gd" || run.algorithm == "two-stage";
}

bool has_lyapunov(const RunResult& run) {
  if (run.algorithm != "local-gf" || run.traces.empty()) return false;
  return std::all_of(run.traces.begin(), run.traces.end(),
                     [](const RoundTrace& t) { return t.lyapunov.has_value(); });
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

CheckReport check_drift(const RunResult& run) {
  CheckReport report = make_report("drift", kLossTol);
  const double K = run.config.K;
  for (const auto& d : run.rounds) {
    if (!(d.eta <= 8.0)) {
      ++report.not_applicable;
      continue;
    }
    for (std::size_t m = 0; m < d.drift_max.size(); ++m)
      report.record(d.r, "drift[" + std::to_string(m) + "]", d.drift_max[m],
                    d.eta * K * d.start_losses[m]);
  }
  finish(report);
  return report;
}

CheckReport check_gradient_bias(const RunResult& run, int clients) {
  CheckReport report = make_report("gradient_bias", kLossTol);
  const double K = run.config.K;
  for (const auto& d : run.rounds) {
    const double F = mean(d.start_losses);
    if (!(d.eta <= 8.0) || !(F <= 1.0 / (d.eta * K * clients))) {
      ++report.not_applicable;
      continue;
    }
    for (std::size_t m = 0; m < d.bias_max.size(); ++m)
      report.record(d.r, "bias[" + std::to_string(m) + "]", d.bias_max[m],
                    7.0 * d.eta * K * d.start_losses[m] * d.start_losses[m]);
  }
  finish(report);
  return report;
}

CheckReport check_local_descent(const RunResult& run) {
  CheckReport report = make_report("local_descent", kLossTol);
  for (const auto& d : run.rounds) {
    if (!(d.eta <= 8.0)) {
      ++report.not_applicable;
      continue;
    }
    for (std::size_t m = 0; m < d.local_increase.size(); ++m)
      if (std::isfinite(d.local_increase[m]))
        report.record(d.r, "increase[" + std::to_string(m) + "]", d.local_increase[m], 0.0);
  }
  finish(report);
  return report;
}

// Rows of the final constant-stepsize phase: all rows for local-gd, stage 2 for two-stage.
std::size_t phase_start(const RunResult& run) {
  return run.algorithm == "two-stage" ? static_cast<std::size_t>(run.stage2_start) : 0;
}

std::vector<CheckReport> check_stage2_rate(const RunResult& run, const FederatedDataset& dataset) {
  CheckReport rate = make_report("stage2_rate", kLossTol);
  CheckReport headline = make_report("stage2_rate_headline", kLossTol);
  headline.informational = true;
  const double gamma = dataset.margin->gamma;
  const double K = run.config.K;
  const double M = dataset.num_clients();
  const std::size_t start = phase_start(run);
  const auto& rows = run.traces;
  if (start >= rows.size()) return {rate, headline};
  const double eta = rows[start].eta;
  const std::size_t count = rows.size() - start;
  if (!(eta <= 4.0) || start + 1 >= rows.size()) {
    rate.not_applicable += static_cast<long long>(count);
    headline.not_applicable += static_cast<long long>(count);
    finish(rate);
    finish(headline);
    return {rate, headline};
  }
  const double threshold = gamma * gamma / (42.0 * eta * K * M);
  const double speed = eta * gamma * gamma * K;

  std::optional<std::size_t> entry;
  for (std::size_t i = start; i < rows.size(); ++i)
    if (rows[i].global_loss <= threshold) {
      entry = i;
      break;
    }
  if (!entry) {
    rate.not_applicable += static_cast<long long>(count);
  } else {
    rate.not_applicable += static_cast<long long>(*entry - start);
    const double inv_entry = 1.0 / rows[*entry].global_loss;
    for (std::size_t i = *entry + 1; i < rows.size(); ++i) {
      const double steps = static_cast<double>(i - *entry);
      rate.record(rows[i].r, "F", rows[i].global_loss, 1.0 / (inv_entry + 0.5 * speed * steps));
      rate.record(rows[i].r, "F_increase", rows[i].global_loss, rows[i - 1].global_loss);
    }
  }
  if (rows[start].global_loss <= threshold) {
    for (std::size_t i = start + 1; i < rows.size(); ++i)
      headline.record(rows[i].r, "F", rows[i].global_loss,
                      2.0 / (speed * static_cast<double>(i - start)));
  } else {
    headline.not_applicable += static_cast<long long>(count);
  }
  finish(rate);
  finish(headline);
  return {rate, headline};
}

GfState state_from_dataset(const FederatedDataset& dataset, const RoundTrace& row, double etaK) {
  Matrix points(dataset.num_clients(), dataset.d);
  for (int m = 0; m < dataset.num_clients(); ++m) points.row(m) = dataset.client(m).col(0).transpose();
  return make_gf_state(points, Eigen::Map<const Vector>(row.lyapunov->a.data(),
                                                        static_cast<Eigen::Index>(row.lyapunov->a.size())),
                       etaK);
}

std::vector<CheckReport> check_lyapunov(const RunResult& run, const FederatedDataset& dataset,
                                        bool want_monotone, bool want_decrease, bool want_rate,
                                        bool want_gf_rate) {
  std::vector<CheckReport> out;
  const auto& rows = run.traces;
  const double etaK = run.config.policy.eta * run.config.K;

  if (want_monotone) {
    CheckReport r = make_report("lyapunov_monotone", kLyapunovTol);
    for (std::size_t i = 0; i + 1 < rows.size(); ++i)
      r.record(rows[i + 1].r, "L", rows[i + 1].lyapunov->L, rows[i].lyapunov->L);
    finish(r);
    out.push_back(std::move(r));
  }
  if (!(want_decrease || want_rate || want_gf_rate)) return out;

  const GfState state = state_from_dataset(dataset, rows.front(), etaK);
  std::optional<TheoryConstants> k;
  try {
    k = theory_constants(state, etaK);
  } catch (const DegenerateGeometryError&) {
  }
  const double c = state.c;

  if (want_decrease) {
    CheckReport r = make_report("lyapunov_decrease", kSurrogateTol);
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
      if (!k) {
        ++r.not_applicable;
        continue;
      }
      const auto& now = *rows[i].lyapunov;
      const auto& next = *rows[i + 1].lyapunov;
      const double L = now.L;
      const auto top = static_cast<std::size_t>(
          std::max_element(now.rho.begin(), now.rho.end()) - now.rho.begin());
      const double g = state.gammas[static_cast<Eigen::Index>(top)];
      const double coeff =
          (1.0 + c) * g / (4.0 * (k->L0 + 1.0) * (k->L0 + 1.0) * (1.0 + std::exp(-g * now.a[top])));
      r.record(rows[i + 1].r, "rho_top", next.rho[top], L - coeff * L * L);
      for (std::size_t m = 0; m < now.rho.size(); ++m)
        if (next.rho[m] >= now.rho[m])
          r.record(rows[i + 1].r, "rho_increase[" + std::to_string(m) + "]", next.rho[m],
                   0.5 * (1.0 - c) * L);
    }
    finish(r);
    out.push_back(std::move(r));
  }

  if (want_rate) {
    CheckReport r = make_report("lyapunov_rate", kLossTol);
    double A = 0.0;
    const double L0 = rows.front().lyapunov->L;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& now = *rows[i].lyapunov;
      const auto top = static_cast<std::size_t>(
          std::max_element(now.rho.begin(), now.rho.end()) - now.rho.begin());
      A = std::max(A, -now.a[top]);
      if (!k) {
        ++r.not_applicable;
        continue;
      }
      if (i == 0) continue;
      const double nu = k->nu_for(A);
      r.record(rows[i].r, "L", now.L, 1.0 / (1.0 / L0 + 0.5 * nu * static_cast<double>(rows[i].r)));
    }
    finish(r);
    out.push_back(std::move(r));
  }

  if (want_gf_rate) {
    CheckReport r = make_report("gf_rate", kLossTol);
    for (const auto& row : rows) {
      if (!k) {
        ++r.not_applicable;
        continue;
      }
      const double t = static_cast<double>(row.r);
      bool any = false;
      if (t > k->tau) {
        r.record(row.r, "F_closed_form", row.global_loss, envelope_gf(*k, etaK, t, GfEnvelope::closed_form));
        any = true;
      }
      if (t >= k->tau1) {
        r.record(row.r, "F_shifted", row.global_loss, envelope_gf(*k, etaK, t, GfEnvelope::shifted));
        any = true;
      }
      if (!any) ++r.not_applicable;
    }
    finish(r);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

void CheckReport::record(long long round, const std::string& quantity, double value, double bound) {
  ++instances_checked;
  const double slack = bound - value;
  min_slack = std::min(min_slack, slack);
  const double allowed = relative ? tolerance * std::abs(bound) : tolerance;
  if (!(value - bound <= allowed)) {
    violations.push_back({round, quantity, value, bound, value - bound});
    passed = false;
  }
}

CheckReport check_gradient_objective_bounds(const FederatedDataset& dataset,
                                            const std::vector<Weights>& samples) {
  CheckReport report = make_report("gradient_objective_bounds", kLossTol);
  CheckReport hessian = make_report("hessian", kHessianRelTol, true);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Weights& w = samples[s];
    const auto round = static_cast<long long>(s);
    for (int m = 0; m < dataset.num_clients(); ++m) {
      const ClientEval e = client_value_and_gradient(dataset, m, w);
      report.record(round, "grad_norm[" + std::to_string(m) + "]", e.grad.norm(), e.value);
      hessian.record(round, "hessian_norm[" + std::to_string(m) + "]",
                     client_hessian_spectral_norm(dataset, m, w), e.value);
    }
    if (dataset.margin && min_margin(dataset, w) >= 0.0) {
      const ObjectiveReport f = objective(dataset, w);
      report.record(round, "half_margin_loss", 0.5 * dataset.margin->gamma * f.value, f.grad_norm);
    } else {
      ++report.not_applicable;
    }
  }
  // Hessian comparisons use the relative tolerance; merge into one report.
  report.instances_checked += hessian.instances_checked;
  report.min_slack = std::min(report.min_slack, hessian.min_slack);
  report.violations.insert(report.violations.end(), hessian.violations.begin(), hessian.violations.end());
  finish(report);
  return report;
}

CheckReport check_local_hessian_growth(const FederatedDataset& dataset, const Weights& w1,
                                       const Weights& w2) {
  CheckReport report = make_report("local_hessian_growth", kHessianRelTol, true);
  const double D = (w2 - w1).norm();
  const double factor = 1.0 + D * (1.0 + std::exp(D * D) * (1.0 + 0.5 * D * D));
  for (int m = 0; m < dataset.num_clients(); ++m)
    report.record(m, "hessian_norm[" + std::to_string(m) + "]",
                  client_hessian_spectral_norm(dataset, m, w2), client_value(dataset, m, w1) * factor);
  finish(report);
  return report;
}

const std::vector<std::string>& run_check_names() {
  static const std::vector<std::string> names = {
      "drift",           "gradient_bias",     "local_descent",     "stage2_rate",
      "lyapunov_monotone", "lyapunov_decrease", "lyapunov_rate",   "gf_rate"};
  return names;
}

std::vector<CheckReport> check_run(const RunResult& run, const FederatedDataset& dataset,
                                   const std::vector<std::string>& requested) {
  const auto& names = run_check_names();
  for (const auto& name : requested)
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      std::string list;
      for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
      throw InputError("unknown check '" + name + "' (available: " + list + ")");
    }
  auto wants = [&](const std::string& name) {
    return requested.empty() || std::find(requested.begin(), requested.end(), name) != requested.end();
  };
  auto explicitly = [&](const std::string& name) {
    return std::find(requested.begin(), requested.end(), name) != requested.end();
  };

  const bool gd = is_local_gd(run) && !run.rounds.empty();
  const bool lyap = has_lyapunov(run) && dataset.num_clients() == 2 && dataset.single_sample_clients();
  for (const std::string name : {"drift", "gradient_bias", "local_descent", "stage2_rate"})
    if (explicitly(name) && !gd)
      throw CapabilityError("check '" + name + "' needs a local-gd or two-stage run");
  if (explicitly("stage2_rate") && !dataset.margin)
    throw CapabilityError("check 'stage2_rate' needs a dataset with a cached margin");
  for (const std::string name : {"lyapunov_monotone", "lyapunov_decrease", "lyapunov_rate", "gf_rate"})
    if (explicitly(name) && !lyap)
      throw CapabilityError("check '" + name +
                            "' needs a local-gf run on two one-sample clients with surrogate traces");

  std::vector<CheckReport> out;
  if (gd) {
    if (wants("drift")) out.push_back(check_drift(run));
    if (wants("gradient_bias")) out.push_back(check_gradient_bias(run, dataset.num_clients()));
    if (wants("local_descent")) out.push_back(check_local_descent(run));
    if (wants("stage2_rate") && dataset.margin) {
      auto reports = check_stage2_rate(run, dataset);
      out.insert(out.end(), reports.begin(), reports.end());
    }
  }
  if (lyap) {
    auto reports = check_lyapunov(run, dataset, wants("lyapunov_monotone"), wants("lyapunov_decrease"),
                                  wants("lyapunov_rate"), wants("gf_rate"));
    out.insert(out.end(), reports.begin(), reports.end());
  }
  return out;
}

double envelope_two_stage(double eta2, double gamma, double K, double R, double r0) {
  if (!(R > r0)) throw DomainError("envelope_two_stage: needs R > r0");
  if (!(eta2 > 0.0) || !(gamma > 0.0) || !(K > 0.0)) throw DomainError("envelope_two_stage: non-positive argument");
  return 2.0 / (eta2 * gamma * gamma * K * (R - r0));
}

double envelope_baseline(BaselineKind kind, double gamma, double K, double R) {
  if (!(gamma > 0.0) || gamma > 1.0) throw DomainError("envelope_baseline: gamma must lie in (0, 1]");
  if (!(K >= 1.0) || !(R >= 1.0)) throw DomainError("envelope_baseline: K and R must be >= 1");
  if (kind == BaselineKind::global) {
    const double t1 = K * R * gamma * gamma;
    const double t2 = std::pow(R, 2.0 / 3.0) * std::pow(gamma, 4.0 / 3.0);
    const double l1 = log_plus(t1);
    return (2.0 + l1 * l1) / t1 + (2.0 + std::pow(log_plus(t2), 4.0 / 3.0)) / t2;
  }
  const double l = log_plus(R);
  return (1.0 + l * l) / (gamma * gamma * R) +
         std::pow(l, 4.0 / 3.0) / (std::pow(gamma, 4.0 / 3.0) * std::pow(R, 4.0 / 3.0));
}

double envelope_gf_threshold(const TheoryConstants& k, GfEnvelope variant) {
  return variant == GfEnvelope::closed_form ? k.tau : k.tau1;
}

double envelope_gf(const TheoryConstants& k, double etaK, double r, GfEnvelope variant) {
  if (!(etaK > 0.0)) throw DomainError("envelope_gf: etaK must be positive");
  if (variant == GfEnvelope::closed_form) {
    if (!(r > k.tau)) throw DomainError("envelope_gf: closed form needs r > tau");
    const double l = 1.0 + std::log1p(etaK);
    return 32.0 * l * l / ((1.0 + k.c) * std::pow(k.gamma_min, 4.0) * etaK * (r - k.tau));
  }
  if (!(r >= k.tau1)) throw DomainError("envelope_gf: shifted form needs r >= tau1");
  return 64.0 * (k.L0 + 1.0) * (k.L0 + 1.0) /
         ((1.0 + k.c) * k.gamma_min * k.gamma_min * etaK * (r - k.tau0));
}

}  // namespace localgd

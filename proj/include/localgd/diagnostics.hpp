#pragma once

#include <string>
#include <vector>

#include "localgd/dataset.hpp"
#include "localgd/optim.hpp"
#include "localgd/specialfn.hpp"
#include "localgd/types.hpp"

namespace localgd {

struct Violation {
  long long round = 0;  ///< trace row, round or sample index depending on the check
  std::string quantity;
  double value = 0.0;
  double bound = 0.0;
  double margin = 0.0;  ///< value - bound (> tolerance)
};

struct CheckReport {
  std::string name;
  long long instances_checked = 0;
  long long not_applicable = 0;
  std::vector<Violation> violations;
  bool passed = true;
  double tolerance = 0.0;
  bool relative = false;  ///< tolerance is relative to the bound
  double min_slack = 0.0; ///< smallest bound - value seen (inf when nothing was checked)
  /// Informational reports never fail a check command.
  bool informational = false;

  void record(long long round, const std::string& quantity, double value, double bound);
};

/// Gradient and Hessian bounded by the loss (per client), and the gradient lower
/// bound (gamma/2) F at samples whose margins are all nonnegative. The lower
/// bound needs a cached margin and is skipped otherwise.
CheckReport check_gradient_objective_bounds(const FederatedDataset& dataset,
                                            const std::vector<Weights>& samples);

/// ||Hess F_m(w2)|| <= F_m(w1) (1 + D (1 + exp(D^2) (1 + D^2 / 2))), D = ||w2 - w1||.
CheckReport check_local_hessian_growth(const FederatedDataset& dataset, const Weights& w1,
                                       const Weights& w2);

/// Names accepted by check_run.
const std::vector<std::string>& run_check_names();

/// Runs lemma checks on a completed run. With an empty `requested` list every
/// check the run can support is executed; explicitly requested checks that need
/// missing trace fields throw CapabilityError, unknown names throw InputError.
std::vector<CheckReport> check_run(const RunResult& run, const FederatedDataset& dataset,
                                   const std::vector<std::string>& requested = {});

/// 2 / (eta2 gamma^2 K (R - r0)).
double envelope_two_stage(double eta2, double gamma, double K, double R, double r0);

enum class BaselineKind { global, local };

/// Two-term explicit bounds for the small-stepsize baselines, [x]_+ = max(0, x).
double envelope_baseline(BaselineKind kind, double gamma, double K, double R);

enum class GfEnvelope {
  closed_form,  ///< 32 (1 + log(1 + etaK))^2 / ((1 + c) gmin^4 etaK (r - tau)), r > tau
  shifted,      ///< 64 (L0 + 1)^2 / ((1 + c) gmin^2 etaK (r - tau0)), r >= tau1
};

double envelope_gf(const TheoryConstants& constants, double etaK, double r,
                   GfEnvelope variant = GfEnvelope::closed_form);

/// First round at which envelope_gf is defined for the variant.
double envelope_gf_threshold(const TheoryConstants& constants, GfEnvelope variant);

}  // namespace localgd

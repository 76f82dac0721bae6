#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace localgd {

enum class PolicyKind { small, large, two_stage, explicit_eta };

/// Concrete stepsizes. Single-stage optimizers read `eta`; the two-stage
/// optimizer reads `eta1`, `eta2` and `r0`.
struct StepsizePolicy {
  PolicyKind kind = PolicyKind::explicit_eta;
  double eta = 0.0;
  double eta1 = 0.0;
  double eta2 = 0.0;
  long long r0 = 0;
  std::optional<double> lambda;
};

/// "small" | "large" | "two-stage" | "explicit"
std::string to_string(PolicyKind kind);
PolicyKind parse_policy_kind(const std::string& name);

/// small: eta = 1/(KH); large: eta = 1/H; two-stage: eta1 = 1/(KH), eta2 = 1/H,
/// r0 = floor(lambda K). Explicit policies are built by filling the struct directly.
StepsizePolicy make_policy(PolicyKind kind, int K, double H,
                           std::optional<double> lambda = std::nullopt);

/// Smallest warmup length admitted by the two-stage guarantee: the ceiling of
/// max{2, 126 e/g^4, 252 e/g^4 log^2(504 e/g^4),
///     76 e^(3/4)/g^(5/2) log(38 e^(3/4)/g^(5/2))} with e = eta2 K M and logs
/// clamped at 0. Saturates at INT64_MAX.
std::int64_t theory_r0(double eta2, int K, int M, double gamma);

/// min{1/(4K), eta2^(1/3) M^(1/3) / (gamma^2 K^(2/3))}.
double theory_eta1(double eta2, int K, int M, double gamma);

/// Constant choices made here rather than pinned by the theory; echoed in run.json
/// and envelope output.
const std::vector<std::string>& artifact_decisions();

}  // namespace localgd

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "localgd/dataset.hpp"
#include "localgd/schedules.hpp"
#include "localgd/types.hpp"

namespace localgd {

enum class Averaging { final_iterate, uniform_average };
enum class GfMode { automatic, exact, numeric };

std::string to_string(Averaging averaging);
Averaging parse_averaging(const std::string& name);
std::string to_string(GfMode mode);
GfMode parse_gf_mode(const std::string& name);

struct RunConfig {
  long long R = 1;
  int K = 1;
  StepsizePolicy policy;
  Averaging averaging = Averaging::final_iterate;
  /// Averaging that produces the stage-1 output of the two-stage method.
  Averaging stage1_averaging = Averaging::uniform_average;
  double H = 0.25;
  int gf_substeps = 1000;
  GfMode gf_mode = GfMode::automatic;
  std::optional<Weights> w0;  ///< defaults to zero
  std::uint64_t seed = 0;     ///< recorded only; the optimizers are deterministic
};

struct LyapunovTrace {
  double L = 0.0;
  std::vector<double> rho;
  std::vector<double> a;
};

/// State at the start of round r (row R is the final state).
struct RoundTrace {
  long long r = 0;
  int stage = 1;
  double eta = 0.0;
  double global_loss = 0.0;
  std::vector<double> client_losses;
  double grad_norm = 0.0;
  double iterate_norm = 0.0;
  double min_margin = 0.0;
  std::optional<LyapunovTrace> lyapunov;
};

/// Per-client measurements taken inside local GD round r, i.e. on the way from
/// row r to row r + 1.
struct RoundDiagnostics {
  long long r = 0;
  double eta = 0.0;
  std::vector<double> start_losses;    ///< F_m at the round's starting point
  std::vector<double> drift_max;       ///< max_{k<=K} ||w_k^m - w_bar||
  std::vector<double> bias_max;        ///< max_{k<K} ||grad F_m(w_k^m) - grad F_m(w_bar)||
  std::vector<double> local_increase;  ///< max_k F_m(w_{k+1}^m) - F_m(w_k^m)
};

struct RunResult {
  std::string algorithm;  ///< "local-gd" | "two-stage" | "local-gf"
  RunConfig config;
  std::vector<RoundTrace> traces;
  std::vector<RoundDiagnostics> rounds;
  Weights final_weights;
  std::optional<Weights> averaged_weights;
  Weights output;
  long long stage2_start = 0;  ///< first row of stage 2 (two-stage only)
  std::string fingerprint;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
  double gf_error_estimate = 0.0;  ///< numeric flow: max step-halving difference
  bool gf_exact = false;
};

struct LocalRound {
  Weights w_next;
  std::vector<Weights> client_finals;
  double drift_max = 0.0;
  RoundDiagnostics diagnostics;
  /// sum over k < K of the client-averaged local iterates
  Vector iterate_sum;
};

/// One communication round: K full-gradient steps per client from w_bar, then the
/// client average (reduced in client order). Local iterates are kept as w_bar
/// minus eta times the running gradient sum, so K = 1 reproduces a plain gradient
/// step bit for bit.
LocalRound local_gd_round(const FederatedDataset& dataset, const Weights& w_bar, int K, double eta);

/// Local GD from w0 (default 0) for R rounds at policy.eta. Returns the averaged
/// iterate when averaging is uniform, else the last one. Throws DivergenceError
/// (with the partial result) when an iterate becomes non-finite.
RunResult run_local_gd(const FederatedDataset& dataset, const RunConfig& config);

/// Stage 1: r0 rounds at eta1, output by stage1_averaging. Stage 2: R - r0 rounds
/// at eta2 from that output, returning its last iterate. Rows 0..r0-1 carry stage
/// 1, rows r0..R carry stage 2.
RunResult run_two_stage(const FederatedDataset& dataset, const RunConfig& config);

/// Local gradient flow for K time units per round. One-sample clients use the
/// closed-form round map (unless gf_mode is numeric); everything else uses
/// classical RK4 with gf_substeps steps per round and a half-step error probe.
RunResult run_local_gf(const FederatedDataset& dataset, const RunConfig& config);

/// Dispatch on "local-gd" | "two-stage" | "local-gf".
RunResult run_algorithm(const std::string& algorithm, const FederatedDataset& dataset,
                        const RunConfig& config);

}  // namespace localgd

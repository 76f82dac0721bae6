#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "localgd/dataset.hpp"
#include "localgd/diagnostics.hpp"
#include "localgd/optim.hpp"

namespace localgd {

using Json = nlohmann::json;

/// "%.17g"; round-trips every finite double.
std::string format_real(double x);

Json dataset_to_json(const FederatedDataset& dataset);
/// Throws FormatError on a malformed document.
FederatedDataset dataset_from_json(const Json& doc);

Json config_to_json(const RunConfig& config);
RunConfig config_from_json(const Json& doc);

/// Complete run record: config echo, traces, per-round diagnostics and weights.
Json run_to_json(const RunResult& run);
RunResult run_from_json(const Json& doc);

Json check_reports_to_json(const std::vector<CheckReport>& reports);

/// Per-round CSV. Leading '#' lines carry version, algorithm, config echo,
/// dataset fingerprint and seed; the header row is
/// r,stage,eta,F,F_1..F_M,grad_norm,w_norm,min_margin,L,rho_1..rho_M,a_1..a_M
/// with L, rho and a left empty when the run has no surrogate trace.
std::string trace_csv(const RunResult& run, int clients);

std::string read_text_file(const std::string& path);
/// Writes to path.tmp and renames, so readers never see a partial file.
void write_text_file(const std::string& path, const std::string& content);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& doc);

FederatedDataset read_dataset(const std::string& path);
void write_dataset(const std::string& path, const FederatedDataset& dataset);

}  // namespace localgd

#include "localgd/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "localgd/errors.hpp"
#include "localgd/schedules.hpp"
#include "localgd/types.hpp"

namespace localgd {

namespace {

constexpr int kFormatVersion = 1;

Json num(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

double get_num(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

Json nums(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

std::vector<double> get_nums(const Json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(get_num(x));
  return v;
}

Json vec(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

Vector get_vec(const Json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = get_num(j[i]);
  return v;
}

template <typename Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

void require_format(const Json& doc, const char* format) {
  if (!doc.is_object() || doc.value("format", "") != format)
    throw FormatError(std::string("expected a '") + format + "' document");
  if (doc.value("version", 0) != kFormatVersion)
    throw FormatError(std::string(format) + ": unsupported version");
}

}  // namespace

std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Json dataset_to_json(const FederatedDataset& dataset) {
  Json doc;
  doc["format"] = "localgd-dataset";
  doc["version"] = kFormatVersion;
  doc["d"] = dataset.d;
  doc["M"] = dataset.num_clients();
  if (auto n = dataset.uniform_client_size()) {
    doc["n"] = *n;
  } else {
    Json sizes = Json::array();
    for (const auto& c : dataset.clients) sizes.push_back(c.cols());
    doc["n"] = sizes;
  }
  Json clients = Json::array();
  for (const auto& c : dataset.clients) {
    Json points = Json::array();
    for (Eigen::Index j = 0; j < c.cols(); ++j) points.push_back(vec(c.col(j)));
    clients.push_back(std::move(points));
  }
  doc["clients"] = std::move(clients);
  if (dataset.margin) {
    doc["margin"] = {{"gamma", dataset.margin->gamma},
                     {"w_star", vec(dataset.margin->w_star)},
                     {"kkt_residual", dataset.margin->kkt_residual},
                     {"min_constraint", dataset.margin->min_constraint}};
  }
  return doc;
}

FederatedDataset dataset_from_json(const Json& doc) {
  require_format(doc, "localgd-dataset");
  return guarded("dataset", [&] {
    FederatedDataset ds;
    ds.d = doc.at("d").get<int>();
    const int M = doc.at("M").get<int>();
    const Json& clients = doc.at("clients");
    if (ds.d <= 0 || M <= 0 || !clients.is_array() || static_cast<int>(clients.size()) != M)
      throw FormatError("dataset: d, M and clients disagree");
    for (int m = 0; m < M; ++m) {
      const Json& points = clients[static_cast<std::size_t>(m)];
      Matrix z(ds.d, static_cast<Eigen::Index>(points.size()));
      for (std::size_t j = 0; j < points.size(); ++j) {
        if (static_cast<int>(points[j].size()) != ds.d)
          throw FormatError("dataset: client " + std::to_string(m) + " point " + std::to_string(j) +
                            " has the wrong dimension");
        for (int i = 0; i < ds.d; ++i) z(i, static_cast<Eigen::Index>(j)) = points[j][static_cast<std::size_t>(i)].get<double>();
      }
      ds.clients.push_back(std::move(z));
    }
    const Json& n = doc.at("n");
    for (int m = 0; m < M; ++m) {
      const auto expected = n.is_array() ? n.at(static_cast<std::size_t>(m)).get<int>() : n.get<int>();
      if (ds.client_size(m) != expected)
        throw FormatError("dataset: client " + std::to_string(m) + " size disagrees with n");
    }
    if (doc.contains("margin") && !doc["margin"].is_null()) {
      const Json& mj = doc["margin"];
      Margin margin;
      margin.gamma = mj.at("gamma").get<double>();
      margin.w_star = get_vec(mj.at("w_star"));
      margin.kkt_residual = mj.value("kkt_residual", 0.0);
      margin.min_constraint = mj.value("min_constraint", 0.0);
      if (margin.w_star.size() != ds.d) throw FormatError("dataset: w_star has the wrong dimension");
      ds.margin = margin;
    }
    return ds;
  });
}

Json config_to_json(const RunConfig& c) {
  Json policy = {{"kind", to_string(c.policy.kind)},
                 {"eta", c.policy.eta},
                 {"eta1", c.policy.eta1},
                 {"eta2", c.policy.eta2},
                 {"r0", c.policy.r0},
                 {"lambda", c.policy.lambda ? Json(*c.policy.lambda) : Json(nullptr)}};
  Json doc = {{"R", c.R},
              {"K", c.K},
              {"policy", policy},
              {"averaging", to_string(c.averaging)},
              {"stage1_averaging", to_string(c.stage1_averaging)},
              {"H", c.H},
              {"gf_substeps", c.gf_substeps},
              {"gf_mode", to_string(c.gf_mode)},
              {"w0", c.w0 ? vec(*c.w0) : Json(nullptr)},
              {"seed", c.seed}};
  return doc;
}

RunConfig config_from_json(const Json& doc) {
  return guarded("config", [&] {
    RunConfig c;
    c.R = doc.at("R").get<long long>();
    c.K = doc.at("K").get<int>();
    const Json& p = doc.at("policy");
    c.policy.kind = parse_policy_kind(p.at("kind").get<std::string>());
    c.policy.eta = p.at("eta").get<double>();
    c.policy.eta1 = p.at("eta1").get<double>();
    c.policy.eta2 = p.at("eta2").get<double>();
    c.policy.r0 = p.at("r0").get<long long>();
    if (p.contains("lambda") && !p["lambda"].is_null()) c.policy.lambda = p["lambda"].get<double>();
    c.averaging = parse_averaging(doc.at("averaging").get<std::string>());
    c.stage1_averaging = parse_averaging(doc.at("stage1_averaging").get<std::string>());
    c.H = doc.at("H").get<double>();
    c.gf_substeps = doc.at("gf_substeps").get<int>();
    c.gf_mode = parse_gf_mode(doc.at("gf_mode").get<std::string>());
    if (doc.contains("w0") && !doc["w0"].is_null()) c.w0 = get_vec(doc["w0"]);
    c.seed = doc.at("seed").get<std::uint64_t>();
    return c;
  });
}

Json run_to_json(const RunResult& run) {
  Json doc;
  doc["format"] = "localgd-run";
  doc["version"] = kFormatVersion;
  doc["artifact_version"] = kVersion;
  doc["artifact_decisions"] = artifact_decisions();
  doc["algorithm"] = run.algorithm;
  doc["config"] = config_to_json(run.config);
  doc["dataset_fingerprint"] = run.fingerprint;
  doc["seed"] = run.seed;
  Json traces = Json::array();
  for (const auto& t : run.traces) {
    Json row = {{"r", t.r},
                {"stage", t.stage},
                {"eta", num(t.eta)},
                {"F", num(t.global_loss)},
                {"F_clients", nums(t.client_losses)},
                {"grad_norm", num(t.grad_norm)},
                {"w_norm", num(t.iterate_norm)},
                {"min_margin", num(t.min_margin)}};
    if (t.lyapunov)
      row["lyapunov"] = {{"L", num(t.lyapunov->L)}, {"rho", nums(t.lyapunov->rho)}, {"a", nums(t.lyapunov->a)}};
    else
      row["lyapunov"] = nullptr;
    traces.push_back(std::move(row));
  }
  doc["traces"] = std::move(traces);
  Json rounds = Json::array();
  for (const auto& d : run.rounds)
    rounds.push_back({{"r", d.r},
                      {"eta", num(d.eta)},
                      {"start_losses", nums(d.start_losses)},
                      {"drift_max", nums(d.drift_max)},
                      {"bias_max", nums(d.bias_max)},
                      {"local_increase", nums(d.local_increase)}});
  doc["rounds"] = std::move(rounds);
  doc["final_weights"] = vec(run.final_weights);
  doc["averaged_weights"] = run.averaged_weights ? vec(*run.averaged_weights) : Json(nullptr);
  doc["output"] = vec(run.output);
  doc["stage2_start"] = run.stage2_start;
  doc["warnings"] = run.warnings;
  doc["gf_error_estimate"] = num(run.gf_error_estimate);
  doc["gf_exact"] = run.gf_exact;
  return doc;
}

RunResult run_from_json(const Json& doc) {
  require_format(doc, "localgd-run");
  return guarded("run", [&] {
    RunResult run;
    run.algorithm = doc.at("algorithm").get<std::string>();
    run.config = config_from_json(doc.at("config"));
    run.fingerprint = doc.at("dataset_fingerprint").get<std::string>();
    run.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& row : doc.at("traces")) {
      RoundTrace t;
      t.r = row.at("r").get<long long>();
      t.stage = row.at("stage").get<int>();
      t.eta = get_num(row.at("eta"));
      t.global_loss = get_num(row.at("F"));
      t.client_losses = get_nums(row.at("F_clients"));
      t.grad_norm = get_num(row.at("grad_norm"));
      t.iterate_norm = get_num(row.at("w_norm"));
      t.min_margin = get_num(row.at("min_margin"));
      if (!row.at("lyapunov").is_null()) {
        const Json& l = row["lyapunov"];
        t.lyapunov = LyapunovTrace{get_num(l.at("L")), get_nums(l.at("rho")), get_nums(l.at("a"))};
      }
      run.traces.push_back(std::move(t));
    }
    for (const auto& d : doc.at("rounds")) {
      RoundDiagnostics r;
      r.r = d.at("r").get<long long>();
      r.eta = get_num(d.at("eta"));
      r.start_losses = get_nums(d.at("start_losses"));
      r.drift_max = get_nums(d.at("drift_max"));
      r.bias_max = get_nums(d.at("bias_max"));
      r.local_increase = get_nums(d.at("local_increase"));
      run.rounds.push_back(std::move(r));
    }
    run.final_weights = get_vec(doc.at("final_weights"));
    if (!doc.at("averaged_weights").is_null()) run.averaged_weights = get_vec(doc["averaged_weights"]);
    run.output = get_vec(doc.at("output"));
    run.stage2_start = doc.at("stage2_start").get<long long>();
    run.warnings = doc.at("warnings").get<std::vector<std::string>>();
    run.gf_error_estimate = get_num(doc.at("gf_error_estimate"));
    run.gf_exact = doc.at("gf_exact").get<bool>();
    return run;
  });
}

Json check_reports_to_json(const std::vector<CheckReport>& reports) {
  Json out = Json::array();
  for (const auto& r : reports) {
    Json violations = Json::array();
    for (const auto& v : r.violations)
      violations.push_back({{"round", v.round},
                            {"quantity", v.quantity},
                            {"value", num(v.value)},
                            {"bound", num(v.bound)},
                            {"margin", num(v.margin)}});
    out.push_back({{"name", r.name},
                   {"passed", r.passed},
                   {"informational", r.informational},
                   {"instances_checked", r.instances_checked},
                   {"not_applicable", r.not_applicable},
                   {"tolerance", r.tolerance},
                   {"relative_tolerance", r.relative},
                   {"min_slack", num(r.min_slack)},
                   {"violations", std::move(violations)}});
  }
  return out;
}

std::string trace_csv(const RunResult& run, int clients) {
  std::ostringstream out;
  out << "# localgd " << kVersion << '\n';
  out << "# algorithm: " << run.algorithm << '\n';
  out << "# config: " << config_to_json(run.config).dump() << '\n';
  out << "# dataset_fingerprint: " << run.fingerprint << '\n';
  out << "# seed: " << run.seed << '\n';
  out << "r,stage,eta,F";
  for (int m = 1; m <= clients; ++m) out << ",F_" << m;
  out << ",grad_norm,w_norm,min_margin,L";
  for (int m = 1; m <= clients; ++m) out << ",rho_" << m;
  for (int m = 1; m <= clients; ++m) out << ",a_" << m;
  out << '\n';
  const auto M = static_cast<std::size_t>(clients);
  for (const auto& t : run.traces) {
    out << t.r << ',' << t.stage << ',' << format_real(t.eta) << ',' << format_real(t.global_loss);
    for (std::size_t m = 0; m < M; ++m)
      out << ',' << (m < t.client_losses.size() ? format_real(t.client_losses[m]) : "");
    out << ',' << format_real(t.grad_norm) << ',' << format_real(t.iterate_norm) << ','
        << format_real(t.min_margin) << ',';
    if (t.lyapunov) out << format_real(t.lyapunov->L);
    for (std::size_t m = 0; m < M; ++m)
      out << ',' << (t.lyapunov && m < t.lyapunov->rho.size() ? format_real(t.lyapunov->rho[m]) : "");
    for (std::size_t m = 0; m < M; ++m)
      out << ',' << (t.lyapunov && m < t.lyapunov->a.size() ? format_real(t.lyapunov->a[m]) : "");
    out << '\n';
  }
  return out.str();
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  std::error_code ec;
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path(), ec);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << content;
    out.flush();
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

Json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

FederatedDataset read_dataset(const std::string& path) {
  const Json doc = read_json_file(path);
  try {
    return dataset_from_json(doc);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_dataset(const std::string& path, const FederatedDataset& dataset) {
  write_json_file(path, dataset_to_json(dataset));
}

}  // namespace localgd

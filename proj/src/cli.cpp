#include "localgd/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "localgd/data.hpp"
#include "localgd/diagnostics.hpp"
#include "localgd/errors.hpp"
#include "localgd/io.hpp"
#include "localgd/losses.hpp"
#include "localgd/optim.hpp"
#include "localgd/schedules.hpp"
#include "localgd/specialfn.hpp"

namespace localgd {

namespace {

// --config reader: a JSON object whose nested objects address subcommands, e.g.
// {"run": {"K": 16, "policy": "two-stage", "lambda": 4}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    Json doc = Json::object();
    dump(app, default_also, doc);
    return doc.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    Json doc;
    try {
      input >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(doc, {}, items);
    return items;
  }

 private:
  static std::string scalar(const Json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_boolean()) return j.get<bool>() ? "true" : "false";
    if (j.is_number_float()) return format_real(j.get<double>());
    return j.dump();
  }

  static void flatten(const Json& obj, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : obj.items()) {
      std::string name = key;
      std::replace(name.begin(), name.end(), '_', '-');
      if (value.is_object()) {
        auto next = parents;
        next.push_back(name);
        // CLI11 opens a subcommand section when it sees "++" items.
        CLI::ConfigItem open;
        open.parents = next;
        open.name = "++";
        items.push_back(open);
        flatten(value, next, items);
        CLI::ConfigItem close;
        close.parents = next;
        close.name = "--";
        items.push_back(close);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = name;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else if (!value.is_null()) {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }

  static void dump(const CLI::App* app, bool default_also, Json& doc) {
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || opt->get_configurable() == false) continue;
      const std::string name = opt->get_lnames().front();
      if (name == "help" || name == "config") continue;
      std::vector<std::string> values = opt->reduced_results();
      if (values.empty() && default_also && !opt->get_default_str().empty())
        values = {opt->get_default_str()};
      if (values.empty()) continue;
      if (values.size() == 1 && opt->get_expected_max() <= 1) doc[name] = values.front();
      else doc[name] = values;
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      Json child = Json::object();
      dump(sub, default_also, child);
      if (!child.empty()) doc[sub->get_name()] = child;
    }
  }
};

struct DatasetOptions {
  std::string kind = "synthetic";  // synthetic | mnist | file
  std::string path;
  double delta = 0.1;
  double g = 5.0;
  std::string images;
  std::string labels;
  int M = 5;
  int n = 200;
  double s = 0.05;
  std::uint64_t seed = 1;
};

struct RunOptions {
  DatasetOptions data;
  std::string optimizer;  // derived from the policy when empty
  std::string policy = "small";
  double eta = 0.0;
  double eta1 = 0.0;
  double eta2 = 0.0;
  long long r0 = -1;
  std::optional<double> lambda;
  long long R = 100;
  int K = 1;
  double H = 0.25;
  std::string averaging = "final_iterate";
  std::string stage1_averaging = "uniform_average";
  int gf_substeps = 1000;
  std::string gf_mode = "auto";
  std::vector<double> w0;  // empty: start at zero
  std::string out = "out";
  std::vector<std::string> checks;
  std::vector<std::string> emit = {"csv", "json"};
};

void add_dataset_options(CLI::App* app, DatasetOptions& d, bool with_file) {
  if (with_file) {
    app->add_option("--dataset", d.kind, "synthetic | mnist | file")
        ->check(CLI::IsMember({"synthetic", "mnist", "file"}))
        ->capture_default_str();
    app->add_option("--data", d.path, "dataset JSON written by gen-data (implies --dataset file)");
  }
  app->add_option("--delta", d.delta, "synthetic: direction tilt")->capture_default_str();
  app->add_option("--g", d.g, "synthetic: norm ratio of the two points")->capture_default_str();
  app->add_option("--images", d.images, "mnist: IDX image file");
  app->add_option("--labels", d.labels, "mnist: IDX label file");
  app->add_option("--M", d.M, "mnist: clients")->capture_default_str();
  app->add_option("--n", d.n, "mnist: samples per client")->capture_default_str();
  app->add_option("--s", d.s, "mnist: uniformly allocated fraction")->capture_default_str();
  app->add_option("--seed", d.seed, "random seed")->capture_default_str();
}

void add_run_options(CLI::App* app, RunOptions& o) {
  add_dataset_options(app, o.data, true);
  app->add_option("--optimizer", o.optimizer, "local-gd | two-stage | local-gf")
      ->check(CLI::IsMember({"local-gd", "two-stage", "local-gf"}));
  app->add_option("--eta", o.eta, "explicit stepsize");
  app->add_option("--eta1", o.eta1, "explicit stage-1 stepsize");
  app->add_option("--eta2", o.eta2, "explicit stage-2 stepsize");
  app->add_option("--r0", o.r0, "explicit stage-1 length");
  app->add_option("--lambda", o.lambda, "two-stage: r0 = floor(lambda K)");
  app->add_option("--R", o.R, "communication rounds")->capture_default_str();
  app->add_option("--H", o.H, "smoothness bound")->capture_default_str();
  app->add_option("--averaging", o.averaging, "final_iterate | uniform_average")->capture_default_str();
  app->add_option("--stage1-averaging", o.stage1_averaging, "output rule of stage 1")->capture_default_str();
  app->add_option("--gf-substeps", o.gf_substeps, "RK4 steps per round (numeric flow)")->capture_default_str();
  app->add_option("--gf-mode", o.gf_mode, "auto | exact | numeric")->capture_default_str();
  app->add_option("--w0", o.w0, "starting weights, comma separated (default: zero)")->delimiter(',');
  app->add_option("--out", o.out, "output directory")->capture_default_str();
  app->add_option("--checks", o.checks, "lemma checks to run (default: all supported)")->delimiter(',');
  app->add_option("--emit", o.emit, "csv,json")->delimiter(',')->capture_default_str();
}

std::string mnist_path(const std::string& given, const char* file) {
  if (!given.empty()) return given;
  if (const char* dir = std::getenv("LOCALGD_MNIST_DIR"))
    return (std::filesystem::path(dir) / file).string();
  throw InputError(std::string("mnist needs --images/--labels or LOCALGD_MNIST_DIR (") + file + ")");
}

FederatedDataset build_dataset(const DatasetOptions& d) {
  std::string kind = d.path.empty() ? d.kind : "file";
  if (kind == "file") {
    if (d.path.empty()) throw InputError("--dataset file needs --data");
    return read_dataset(d.path);
  }
  FederatedDataset ds;
  if (kind == "synthetic") {
    ds = gen_synthetic({d.delta, d.g});
  } else {
    const auto raw = load_mnist_idx(mnist_path(d.images, "train-images-idx3-ubyte"),
                                    mnist_path(d.labels, "train-labels-idx1-ubyte"));
    PartitionSpec spec;
    spec.M = d.M;
    spec.n_per_client = d.n;
    spec.n_total = d.M * d.n;
    spec.similarity_s = d.s;
    spec.seed = d.seed;
    ds = partition_heterogeneous(raw, spec);
  }
  compute_margin(ds);
  return ds;
}

struct ResolvedRun {
  std::string optimizer;
  RunConfig config;
};

ResolvedRun resolve(const RunOptions& o, int K, const std::string& policy_name) {
  ResolvedRun out;
  RunConfig& c = out.config;
  c.R = o.R;
  c.K = K;
  c.H = o.H;
  c.averaging = parse_averaging(o.averaging);
  c.stage1_averaging = parse_averaging(o.stage1_averaging);
  c.gf_substeps = o.gf_substeps;
  c.gf_mode = parse_gf_mode(o.gf_mode);
  c.seed = o.data.seed;
  if (!o.w0.empty()) c.w0 = Eigen::Map<const Vector>(o.w0.data(), static_cast<Eigen::Index>(o.w0.size()));
  const PolicyKind kind = parse_policy_kind(policy_name);
  out.optimizer = o.optimizer.empty() ? (kind == PolicyKind::two_stage ? "two-stage" : "local-gd") : o.optimizer;
  if (kind == PolicyKind::explicit_eta) {
    c.policy.kind = kind;
    c.policy.eta = o.eta;
    c.policy.eta1 = o.eta1;
    c.policy.eta2 = o.eta2;
    c.policy.r0 = o.r0 < 0 ? 0 : o.r0;
    if (out.optimizer == "two-stage" && o.r0 < 0) throw InputError("explicit two-stage runs need --r0");
  } else {
    c.policy = make_policy(kind, K, o.H, o.lambda);
  }
  if (out.optimizer == "two-stage" && kind != PolicyKind::two_stage && kind != PolicyKind::explicit_eta)
    throw InputError("the two-stage optimizer needs --policy two-stage or explicit");
  if (out.optimizer != "two-stage" && kind == PolicyKind::two_stage)
    throw InputError("--policy two-stage only applies to the two-stage optimizer");
  return out;
}

Json envelope_summary(const RunResult& run, const FederatedDataset& ds) {
  Json env = Json::object();
  const auto& c = run.config;
  const double K = c.K;
  const double R = static_cast<double>(c.R);
  if (ds.margin && ds.margin->gamma <= 1.0) {
    const double gamma = ds.margin->gamma;
    env["baseline_global"] = envelope_baseline(BaselineKind::global, gamma, K, R);
    env["baseline_local"] = envelope_baseline(BaselineKind::local, gamma, K, R);
    if (run.algorithm == "two-stage" && c.R > c.policy.r0)
      env["two_stage"] = envelope_two_stage(c.policy.eta2, gamma, K, R, static_cast<double>(c.policy.r0));
  }
  if (run.algorithm == "local-gf" && ds.num_clients() == 2 && ds.single_sample_clients()) {
    Matrix points(2, ds.d);
    for (int m = 0; m < 2; ++m) points.row(m) = ds.client(m).col(0).transpose();
    const double etaK = c.policy.eta * K;
    try {
      const TheoryConstants k = theory_constants(make_gf_state(points, Vector::Zero(2), etaK), etaK);
      env["tau"] = Json(std::isfinite(k.tau) ? Json(k.tau) : Json(nullptr));
      env["tau0"] = k.tau0;
      env["tau1"] = k.tau1;
      env["gf_closed_form"] = R > k.tau ? Json(envelope_gf(k, etaK, R, GfEnvelope::closed_form)) : Json(nullptr);
      env["gf_shifted"] = R >= k.tau1 ? Json(envelope_gf(k, etaK, R, GfEnvelope::shifted)) : Json(nullptr);
    } catch (const DegenerateGeometryError&) {
      env["gf_closed_form"] = nullptr;
    }
  }
  return env;
}

bool any_failed(const std::vector<CheckReport>& reports) {
  return std::any_of(reports.begin(), reports.end(),
                     [](const CheckReport& r) { return !r.passed && !r.informational; });
}

struct CellOutcome {
  int code = kExitOk;
  std::string error;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  bool checks_passed = true;
};

// Runs one configuration and writes <stem>.csv / <stem>.json (or trace.csv / run.json).
CellOutcome execute_run(const FederatedDataset& ds, const ResolvedRun& job, const RunOptions& o,
                        const std::filesystem::path& csv_path, const std::filesystem::path& json_path) {
  CellOutcome outcome;
  RunResult run;
  bool diverged = false;
  std::string divergence;
  try {
    run = run_algorithm(job.optimizer, ds, job.config);
  } catch (const DivergenceError& e) {
    diverged = true;
    divergence = e.what();
    run = *e.partial();
  }
  const bool csv = std::find(o.emit.begin(), o.emit.end(), "csv") != o.emit.end();
  const bool json = std::find(o.emit.begin(), o.emit.end(), "json") != o.emit.end();
  if (csv) write_text_file(csv_path.string(), trace_csv(run, ds.num_clients()));

  std::vector<CheckReport> reports;
  if (!diverged) reports = check_run(run, ds, o.checks);
  if (json) {
    Json doc = run_to_json(run);
    Json summary;
    summary["diverged"] = diverged;
    if (diverged) summary["divergence"] = divergence;
    summary["final_loss"] = run.traces.empty() ? Json(nullptr) : Json(run.traces.back().global_loss);
    double max_loss = 0.0;
    for (const auto& t : run.traces) max_loss = std::max(max_loss, t.global_loss);
    summary["max_loss"] = max_loss;
    if (!diverged) summary["output_loss"] = objective(ds, run.output).value;
    summary["envelopes"] = envelope_summary(run, ds);
    summary["checks"] = check_reports_to_json(reports);
    doc["summary"] = std::move(summary);
    write_json_file(json_path.string(), doc);
  }
  if (!run.traces.empty()) outcome.final_loss = run.traces.back().global_loss;
  outcome.checks_passed = !any_failed(reports);
  if (diverged) {
    outcome.code = kExitDivergence;
    outcome.error = divergence;
  } else if (!outcome.checks_passed) {
    outcome.code = kExitCheckFailed;
    outcome.error = "lemma check violated";
  }
  return outcome;
}

unsigned thread_budget() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LOCALGD_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<unsigned>(v);
  }
  return n;
}

int cmd_gen_synthetic(const DatasetOptions& d, const std::string& out_path, std::ostream& out) {
  FederatedDataset ds = gen_synthetic({d.delta, d.g});
  const Margin m = compute_margin(ds);
  write_dataset(out_path, ds);
  const double c = ds.client(0).col(0).normalized().dot(ds.client(1).col(0).normalized());
  out << "wrote " << out_path << " (M=2, n=1, d=2, c=" << format_real(c)
      << ", gamma=" << format_real(m.gamma) << ", fingerprint " << dataset_fingerprint(ds) << ")\n";
  return kExitOk;
}

int cmd_gen_mnist(const DatasetOptions& d, const std::string& out_path, std::ostream& out) {
  DatasetOptions copy = d;
  copy.kind = "mnist";
  const FederatedDataset ds = build_dataset(copy);
  write_dataset(out_path, ds);
  out << "wrote " << out_path << " (M=" << ds.num_clients() << ", samples=" << ds.total_samples()
      << ", gamma=" << format_real(ds.margin->gamma) << ", fingerprint " << dataset_fingerprint(ds) << ")\n";
  return kExitOk;
}

int cmd_run(const RunOptions& o, std::ostream& out) {
  const FederatedDataset ds = build_dataset(o.data);
  const ResolvedRun job = resolve(o, o.K, o.policy);
  const std::filesystem::path dir(o.out);
  const CellOutcome r = execute_run(ds, job, o, dir / "trace.csv", dir / "run.json");
  out << job.optimizer << " R=" << o.R << " K=" << o.K << " final F=" << format_real(r.final_loss) << "\n";
  if (!r.error.empty()) out << "status: " << r.error << "\n";
  return r.code;
}

int cmd_sweep(const RunOptions& o, const std::vector<int>& Ks, const std::vector<std::string>& policies,
              std::ostream& out) {
  if (Ks.empty() || policies.empty()) throw InputError("sweep grid is empty");
  const FederatedDataset ds = build_dataset(o.data);
  struct Cell {
    int K;
    std::string policy;
    std::string stem;
    std::optional<ResolvedRun> job;
    CellOutcome outcome;
  };
  std::vector<Cell> cells;
  for (const auto& p : policies)
    for (int K : Ks) {
      Cell cell{K, p, "K" + std::to_string(K) + "_" + p, std::nullopt, {}};
      try {
        cell.job = resolve(o, K, p);
      } catch (const Error& e) {
        cell.outcome.code = kExitUsage;
        cell.outcome.error = e.what();
      }
      cells.push_back(std::move(cell));
    }

  const std::filesystem::path dir(o.out);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      Cell& cell = cells[i];
      if (!cell.job) continue;
      try {
        cell.outcome = execute_run(ds, *cell.job, o, dir / (cell.stem + ".csv"), dir / (cell.stem + ".json"));
      } catch (const IoError& e) {
        cell.outcome.code = kExitIo;
        cell.outcome.error = e.what();
      } catch (const std::exception& e) {
        cell.outcome.code = kExitUsage;
        cell.outcome.error = e.what();
      }
    }
  };
  const unsigned threads = std::min<unsigned>(thread_budget(), static_cast<unsigned>(cells.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  Json index;
  index["format"] = "localgd-sweep";
  index["version"] = 1;
  index["artifact_version"] = kVersion;
  index["dataset_fingerprint"] = dataset_fingerprint(ds);
  index["seed"] = o.data.seed;
  Json list = Json::array();
  int code = kExitOk;
  for (const auto& cell : cells) {
    Json entry = {{"K", cell.K}, {"policy", cell.policy}, {"status", cell.outcome.code}};
    if (cell.job) {
      entry["optimizer"] = cell.job->optimizer;
      entry["config"] = config_to_json(cell.job->config);
      entry["csv"] = cell.stem + ".csv";
      entry["json"] = cell.stem + ".json";
    }
    entry["final_loss"] = std::isfinite(cell.outcome.final_loss) ? Json(cell.outcome.final_loss) : Json(nullptr);
    if (!cell.outcome.error.empty()) entry["error"] = cell.outcome.error;
    list.push_back(std::move(entry));
    code = std::max(code, cell.outcome.code);
    out << cell.stem << ": " << (cell.outcome.error.empty() ? "ok" : cell.outcome.error) << "\n";
  }
  index["cells"] = std::move(list);
  write_json_file((dir / "index.json").string(), index);
  return code;
}

int cmd_check(const std::string& run_path, const std::string& data_path,
              const std::vector<std::string>& names, const std::string& out_path, std::ostream& out) {
  std::vector<std::string> run_names;
  bool gradient_bounds = names.empty();
  for (const auto& n : names) {
    if (n == "gradient_objective_bounds") gradient_bounds = true;
    else run_names.push_back(n);
  }
  if (!names.empty() && run_names.empty() && !gradient_bounds) throw InputError("no checks requested");
  const auto& known = run_check_names();
  for (const auto& n : run_names)
    if (std::find(known.begin(), known.end(), n) == known.end()) {
      std::string list = "gradient_objective_bounds";
      for (const auto& k : known) list += ", " + k;
      throw InputError("unknown check '" + n + "' (available: " + list + ")");
    }
  const RunResult run = run_from_json(read_json_file(run_path));
  const FederatedDataset ds = read_dataset(data_path);
  if (dataset_fingerprint(ds) != run.fingerprint)
    throw FormatError(run_path + " was produced on a different dataset (fingerprint mismatch)");
  if (run.final_weights.size() != ds.d) throw FormatError(run_path + ": weight dimension mismatch");

  std::vector<CheckReport> reports;
  if (!names.empty() && run_names.empty()) {
    // only the pointwise bounds were requested
  } else {
    reports = check_run(run, ds, run_names);
  }
  if (gradient_bounds) {
    std::vector<Weights> samples = {Weights::Zero(ds.d), run.final_weights, run.output};
    if (run.averaged_weights) samples.push_back(*run.averaged_weights);
    reports.push_back(check_gradient_objective_bounds(ds, samples));
  }
  Json doc;
  doc["format"] = "localgd-check";
  doc["version"] = 1;
  doc["artifact_version"] = kVersion;
  doc["dataset_fingerprint"] = run.fingerprint;
  doc["seed"] = run.seed;
  doc["config"] = config_to_json(run.config);
  doc["reports"] = check_reports_to_json(reports);
  const bool failed = any_failed(reports);
  doc["passed"] = !failed;
  if (!out_path.empty()) write_json_file(out_path, doc);
  out << doc.dump(2) << "\n";
  return failed ? kExitCheckFailed : kExitOk;
}

struct EnvelopeOptions {
  std::string kind;
  double eta2 = 1.0;
  double gamma = 0.0;
  int K = 1;
  int M = 2;
  long long R = 1;
  long long r0 = 0;
  double etaK = 1.0;
  std::string data;
  std::vector<double> rounds;
};

int cmd_envelope(const EnvelopeOptions& e, std::ostream& out) {
  Json doc;
  doc["kind"] = e.kind;
  doc["artifact_version"] = kVersion;
  doc["artifact_decisions"] = artifact_decisions();
  if (e.kind == "two-stage") {
    doc["value"] = envelope_two_stage(e.eta2, e.gamma, e.K, static_cast<double>(e.R), static_cast<double>(e.r0));
  } else if (e.kind == "baseline-global" || e.kind == "baseline-local") {
    doc["value"] = envelope_baseline(e.kind == "baseline-global" ? BaselineKind::global : BaselineKind::local,
                                     e.gamma, e.K, static_cast<double>(e.R));
  } else if (e.kind == "theory-r0") {
    doc["value"] = theory_r0(e.eta2, e.K, e.M, e.gamma);
  } else if (e.kind == "theory-eta1") {
    doc["value"] = theory_eta1(e.eta2, e.K, e.M, e.gamma);
  } else {
    if (e.data.empty()) throw InputError("gf envelopes need --data (two one-sample clients)");
    const FederatedDataset ds = read_dataset(e.data);
    if (ds.num_clients() != 2 || !ds.single_sample_clients())
      throw InputError("gf envelopes need two clients with one sample each");
    Matrix points(2, ds.d);
    for (int m = 0; m < 2; ++m) points.row(m) = ds.client(m).col(0).transpose();
    const TheoryConstants k = theory_constants(make_gf_state(points, Vector::Zero(2), e.etaK), e.etaK);
    doc["constants"] = {{"L0", k.L0}, {"H0", k.H0}, {"A0", k.A0}, {"nu", k.nu},
                        {"tau", std::isfinite(k.tau) ? Json(k.tau) : Json(nullptr)},
                        {"tau0", k.tau0}, {"tau1", k.tau1}, {"nu1", k.nu1}, {"c", k.c},
                        {"gamma_min", k.gamma_min}, {"gamma_max", k.gamma_max}};
    const GfEnvelope variant = e.kind == "gf-shifted" ? GfEnvelope::shifted : GfEnvelope::closed_form;
    const double threshold = envelope_gf_threshold(k, variant);
    Json values = Json::array();
    for (double r : e.rounds) {
      const bool defined = variant == GfEnvelope::closed_form ? r > threshold : r >= threshold;
      values.push_back({{"r", r}, {"value", defined ? Json(envelope_gf(k, e.etaK, r, variant)) : Json(nullptr)}});
    }
    doc["values"] = std::move(values);
  }
  out << doc.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Local GD / two-stage / local gradient flow laboratory for separable logistic regression",
               "localgd"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file mirroring the command-line flags");
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a dataset JSON with its margin cached");
  gen->require_subcommand(1);
  DatasetOptions gen_opts;
  std::string gen_out = "dataset.json";
  auto* gen_syn = gen->add_subcommand("synthetic", "two one-point clients in the plane");
  auto* gen_mnist = gen->add_subcommand("mnist", "heterogeneous MNIST parity partition");
  for (auto* sub : {gen_syn, gen_mnist}) {
    add_dataset_options(sub, gen_opts, false);
    sub->add_option("--out", gen_out, "output file")->capture_default_str();
  }

  // run
  auto* run = app.add_subcommand("run", "run one optimizer and write trace.csv and run.json");
  RunOptions run_opts;
  add_run_options(run, run_opts);
  run->add_option("--K", run_opts.K, "local steps per round")->capture_default_str();
  run->add_option("--policy", run_opts.policy, "small | large | two-stage | explicit")->capture_default_str();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run a (K, policy) grid and write index.json");
  RunOptions sweep_opts;
  sweep_opts.out = "sweep";
  std::vector<int> sweep_Ks = {1, 4, 16, 64, 256, 1024};
  std::vector<std::string> sweep_policies = {"small"};
  add_run_options(sweep, sweep_opts);
  sweep->add_option("--Ks", sweep_Ks, "local-step grid")->delimiter(',')->capture_default_str();
  sweep->add_option("--policies", sweep_policies, "policy grid")->delimiter(',')->capture_default_str();

  // check
  auto* check = app.add_subcommand("check", "re-run lemma checks on a saved run");
  std::string check_run_path, check_data, check_out;
  std::vector<std::string> check_names;
  check->add_option("--run", check_run_path, "run.json")->required();
  check->add_option("--data", check_data, "dataset JSON the run used")->required();
  check->add_option("--checks", check_names, "names (default: all supported)")->delimiter(',');
  check->add_option("--out", check_out, "also write the report here");

  // envelope
  auto* envelope = app.add_subcommand("envelope", "evaluate closed-form rate envelopes");
  EnvelopeOptions env_opts;
  envelope->add_option("--kind", env_opts.kind)
      ->required()
      ->check(CLI::IsMember({"two-stage", "baseline-global", "baseline-local", "gf", "gf-shifted",
                             "theory-r0", "theory-eta1"}));
  envelope->add_option("--eta2", env_opts.eta2)->capture_default_str();
  envelope->add_option("--gamma", env_opts.gamma);
  envelope->add_option("--K", env_opts.K)->capture_default_str();
  envelope->add_option("--M", env_opts.M)->capture_default_str();
  envelope->add_option("--R", env_opts.R)->capture_default_str();
  envelope->add_option("--r0", env_opts.r0)->capture_default_str();
  envelope->add_option("--etaK", env_opts.etaK)->capture_default_str();
  envelope->add_option("--data", env_opts.data, "dataset JSON for gf kinds");
  envelope->add_option("--rounds", env_opts.rounds, "rounds for gf kinds")->delimiter(',');

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::FileError& e) {
    app.exit(e, out, err);
    return kExitIo;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (gen_syn->parsed()) return cmd_gen_synthetic(gen_opts, gen_out, out);
    if (gen_mnist->parsed()) return cmd_gen_mnist(gen_opts, gen_out, out);
    if (run->parsed()) return cmd_run(run_opts, out);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, sweep_Ks, sweep_policies, out);
    if (check->parsed()) return cmd_check(check_run_path, check_data, check_names, check_out, out);
    if (envelope->parsed()) return cmd_envelope(env_opts, out);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace localgd

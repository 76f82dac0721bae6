#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "localgd/cli.hpp"
#include "localgd/data.hpp"
#include "localgd/errors.hpp"
#include "localgd/io.hpp"
#include "localgd/optim.hpp"
#include "localgd/schedules.hpp"
#include "oracles.hpp"

using namespace localgd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "localgd_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Outcome {
  int code;
  std::string out, err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("format_real round-trips") {
  for (double x : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, 0.0}) CHECK(std::stod(format_real(x)) == x);
  CHECK(format_real(0.5) == "0.5");
}

TEST_CASE("dataset JSON round-trip") {
  std::mt19937_64 gen(61);
  auto ds = oracle::random_separable(gen, 3, 2, 4, 0.1);
  ds.clients[1] = ds.clients[1].leftCols(3).eval();
  compute_margin(ds);
  const Json doc = dataset_to_json(ds);
  CHECK(doc.at("format") == "localgd-dataset");
  CHECK(doc.at("n").is_array());
  const auto back = dataset_from_json(doc);
  CHECK(dataset_fingerprint(back) == dataset_fingerprint(ds));
  REQUIRE(back.margin.has_value());
  CHECK(back.margin->gamma == ds.margin->gamma);

  Json broken = doc;
  broken["clients"][0][0] = "x";
  CHECK_THROWS_AS(dataset_from_json(broken), FormatError);
  broken = doc;
  broken["format"] = "other";
  CHECK_THROWS_AS(dataset_from_json(broken), FormatError);
}

TEST_CASE("config and run JSON round-trip") {
  auto ds = gen_synthetic({});
  RunConfig cfg;
  cfg.R = 12;
  cfg.K = 3;
  cfg.policy = make_policy(PolicyKind::two_stage, 3, 0.25, 2.0);
  cfg.seed = 99;
  cfg.w0 = Vector::Constant(2, 0.25);
  const Json cj = config_to_json(cfg);
  const RunConfig cb = config_from_json(cj);
  CHECK(config_to_json(cb) == cj);

  const auto run = run_two_stage(ds, cfg);
  const Json rj = run_to_json(run);
  const RunResult rb = run_from_json(rj);
  CHECK(run_to_json(rb) == rj);
  CHECK(trace_csv(rb, 2) == trace_csv(run, 2));

  const auto gf = run_local_gf(ds, [] {
    RunConfig c;
    c.R = 5;
    c.K = 2;
    c.policy.eta = 1.0;
    return c;
  }());
  CHECK(run_to_json(run_from_json(run_to_json(gf))) == run_to_json(gf));
}

TEST_CASE("trace CSV layout") {
  auto ds = gen_synthetic({});
  RunConfig c;
  c.R = 2;
  c.K = 1;
  c.policy.eta = 1.0;
  const std::string csv = trace_csv(run_local_gf(ds, c), 2);
  std::istringstream in(csv);
  std::string line;
  int comments = 0;
  while (std::getline(in, line) && line.rfind("#", 0) == 0) ++comments;
  CHECK(comments == 5);
  CHECK(line == "r,stage,eta,F,F_1,F_2,grad_norm,w_norm,min_margin,L,rho_1,rho_2,a_1,a_2");
  std::getline(in, line);
  CHECK(line.rfind("0,1,1,0.69314718055994529,", 0) == 0);
  CHECK(std::count(line.begin(), line.end(), ',') == 13);
  CHECK(csv.find("# dataset_fingerprint: " + dataset_fingerprint(ds)) != std::string::npos);

  const std::string gd = trace_csv(run_local_gd(ds, c), 2);
  CHECK(gd.find(",,,,,\n") != std::string::npos);
}

TEST_CASE("golden trace of a small synthetic run") {
  const fs::path dir = scratch("golden");
  const auto r = cli({"run", "--dataset", "synthetic", "--policy", "small", "--K", "2", "--R", "5",
                      "--out", dir.string()});
  REQUIRE(r.code == kExitOk);
  const std::string got = read_text_file((dir / "trace.csv").string());
  const std::string want = read_text_file(std::string(LOCALGD_TEST_DATA_DIR) + "/golden_small_run.csv");
  CHECK(got == want);
}

TEST_CASE("gen-data, run and check") {
  const fs::path dir = scratch("flow");
  const std::string data = (dir / "syn.json").string();
  auto g = cli({"gen-data", "synthetic", "--delta", "0.1", "--g", "5", "--out", data});
  REQUIRE(g.code == kExitOk);
  CHECK(g.out.find("c=-0.98019801980198") != std::string::npos);
  const std::string first = read_text_file(data);
  REQUIRE(cli({"gen-data", "synthetic", "--out", data}).code == kExitOk);
  CHECK(read_text_file(data) == first);
  const Json dj = read_json_file(data);
  CHECK(dj.at("margin").at("gamma").get<double>() == doctest::Approx(0.0330944446635623).epsilon(1e-9));

  const fs::path out = dir / "gf";
  auto r = cli({"run", "--data", data, "--optimizer", "local-gf", "--policy", "explicit", "--eta", "1",
                "--K", "4", "--R", "60", "--out", out.string()});
  REQUIRE(r.code == kExitOk);
  const Json run = read_json_file((out / "run.json").string());
  CHECK(run.at("summary").at("diverged") == false);
  CHECK(run.at("summary").at("envelopes").at("tau").is_null());
  CHECK(run.at("traces").size() == 61);

  auto ok = cli({"check", "--run", (out / "run.json").string(), "--data", data, "--checks", "lyapunov_monotone"});
  CHECK(ok.code == kExitOk);
  auto unknown = cli({"check", "--run", (out / "run.json").string(), "--data", data, "--checks", "bogus"});
  CHECK(unknown.code == kExitUsage);
  CHECK(unknown.err.find("lyapunov_monotone") != std::string::npos);

  write_text_file((dir / "corrupt.json").string(), "{\"format\": \"localgd-run\", \"traces\": [");
  CHECK(cli({"check", "--run", (dir / "corrupt.json").string(), "--data", data}).code == kExitIo);
  CHECK(cli({"check", "--run", (dir / "missing.json").string(), "--data", data}).code == kExitIo);

  // a run on another dataset must not be checked against this one
  const std::string other = (dir / "other.json").string();
  REQUIRE(cli({"gen-data", "synthetic", "--delta", "0.2", "--out", other}).code == kExitOk);
  CHECK(cli({"check", "--run", (out / "run.json").string(), "--data", other}).code == kExitIo);
}

TEST_CASE("K = 1 run equals explicit gradient descent run") {
  const fs::path dir = scratch("k1");
  REQUIRE(cli({"run", "--policy", "large", "--K", "1", "--R", "30", "--out", (dir / "a").string()}).code == kExitOk);
  REQUIRE(cli({"run", "--policy", "explicit", "--eta", "4", "--K", "1", "--R", "30", "--out",
               (dir / "b").string()}).code == kExitOk);
  auto column = [](const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line, col;
    std::vector<std::string> out;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line[0] == 'r') continue;
      std::istringstream row(line);
      for (int i = 0; i < 4; ++i) std::getline(row, col, ',');
      out.push_back(col);
    }
    return out;
  };
  CHECK(column((dir / "a" / "trace.csv").string()) == column((dir / "b" / "trace.csv").string()));
}

TEST_CASE("two-stage CSV switches stage at r0") {
  const fs::path dir = scratch("ts");
  REQUIRE(cli({"run", "--policy", "two-stage", "--lambda", "2", "--K", "4", "--R", "20", "--out", dir.string()})
              .code == kExitOk);
  std::istringstream in(read_text_file((dir / "trace.csv").string()));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 'r') continue;
    const int r = std::stoi(line.substr(0, line.find(',')));
    const char stage = line[line.find(',') + 1];
    CHECK(stage == (r < 8 ? '1' : '2'));
  }
}

TEST_CASE("large stepsize with many local steps raises the loss") {
  const fs::path dir = scratch("large");
  REQUIRE(cli({"run", "--policy", "large", "--K", "1024", "--R", "20", "--out", dir.string(), "--checks",
               "drift"}).code == kExitOk);
  const Json run = read_json_file((dir / "run.json").string());
  CHECK(run.at("summary").at("max_loss").get<double>() > std::log(2.0));
}

TEST_CASE("sweep writes cells and an index") {
  const fs::path dir = scratch("sweep");
  auto s = cli({"sweep", "--Ks", "1,4", "--policies", "small,two-stage", "--lambda", "4", "--R", "30", "--out",
                dir.string()});
  CHECK(s.code == kExitOk);
  const Json index = read_json_file((dir / "index.json").string());
  REQUIRE(index.at("cells").size() == 4);
  for (const auto& cell : index.at("cells")) {
    CHECK(cell.at("status") == 0);
    CHECK(fs::exists(dir / cell.at("csv").get<std::string>()));
  }
  CHECK(fs::exists(dir / "K4_two-stage.json"));
  CHECK(cli({"sweep", "--Ks", "", "--out", dir.string()}).code == kExitUsage);
}

TEST_CASE("divergence exit status keeps the partial trace") {
  const fs::path dir = scratch("div");
  auto r = cli({"run", "--policy", "explicit", "--eta", "1.7976931348623157e308", "--K", "1", "--R", "10",
                "--w0=-1e308,1.79e308", "--out", dir.string()});
  CHECK(r.code == kExitDivergence);
  const Json run = read_json_file((dir / "run.json").string());
  CHECK(run.at("summary").at("diverged") == true);
  CHECK(!run.at("traces").empty());
}

TEST_CASE("usage errors and config files") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"run", "--policy", "enormous"}).code == kExitUsage);
  CHECK(cli({"run", "--policy", "two-stage", "--K", "4"}).code == kExitUsage);
  CHECK(cli({"--version"}).code == kExitOk);

  const fs::path dir = scratch("config");
  const std::string cfg = (dir / "cfg.json").string();
  write_text_file(cfg, Json{{"run", {{"K", 2}, {"R", 7}, {"policy", "small"}, {"out", (dir / "o").string()},
                                      {"gf_mode", "auto"}}}}.dump());
  REQUIRE(cli({"--config", cfg, "run"}).code == kExitOk);
  const Json run = read_json_file((dir / "o" / "run.json").string());
  CHECK(run.at("config").at("R") == 7);
  CHECK(run.at("config").at("K") == 2);
}

TEST_CASE("envelope subcommand") {
  auto r = cli({"envelope", "--kind", "two-stage", "--eta2", "1", "--gamma", "1", "--K", "1", "--R", "2"});
  REQUIRE(r.code == kExitOk);
  CHECK(Json::parse(r.out).at("value") == 1.0);
  auto t = cli({"envelope", "--kind", "theory-eta1", "--eta2", "1", "--K", "16", "--M", "2", "--gamma", "0.1"});
  CHECK(Json::parse(t.out).at("value") == 0.015625);
  CHECK(cli({"envelope", "--kind", "unknown"}).code == kExitUsage);
}

TEST_CASE("run documents carry the constant choices") {
  auto ds = gen_synthetic({});
  const Json doc = run_to_json(run_local_gd(ds, [] {
    RunConfig c;
    c.policy.eta = 1.0;
    return c;
  }()));
  CHECK(doc.at("artifact_decisions") == Json(artifact_decisions()));
  CHECK(!artifact_decisions().empty());
}

#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <fstream>

#include "restore/experiment.hpp"

using namespace restore;

// End-to-end exercises of the command-line surface, driven through the built
// binary (path injected by CMake).

namespace {

struct RunResult {
  int exit_code;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args) {
  const auto dir = fs::temp_directory_path() / "restore_cli_io";
  fs::create_directories(dir);
  const auto out_f = dir / "stdout.txt";
  const auto err_f = dir / "stderr.txt";
  const std::string cmd = std::string(RESTORE_CLI_PATH) + " " + args + " > " + out_f.string() +
                          " 2> " + err_f.string();
  const int status = std::system(cmd.c_str());
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  return {WEXITSTATUS(status), slurp(out_f), slurp(err_f)};
}

fs::path scratch(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("restore_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_tiny_config(const fs::path& path, const std::string& mode = "proposed") {
  json j;
  j["seed"] = 21;
  j["data"]["dims"] = {4, 16, 16};
  j["data"]["val_fraction"] = 0.5;
  j["data"]["intensity_scale"] = 3000.0;
  j["data"]["subjects_per_domain"] = {2, 2, 2};
  j["data"]["domains"] = json::array({
      json{{"index", 0}, {"name", "a"}, {"count_scale", 0.2}, {"time_fraction", 0.5},
           {"psf_fwhm_mm", 0.5}},
      json{{"index", 1}, {"name", "b"}, {"count_scale", 0.05}, {"time_fraction", 0.25},
           {"psf_fwhm_mm", 2.0}},
      json{{"index", 2}, {"name", "c"}, {"count_scale", 0.03}, {"time_fraction", 0.2},
           {"psf_fwhm_mm", 3.5}},
  });
  j["generator"] = json{{"stages", 2}, {"channels", {4, 6}}, {"mapping_hidden", 8}};
  j["discriminator"] = json{{"channels", {4, 6, 6}}};
  j["train"] = json{{"epochs", 1}, {"batch_size", 4}, {"mode", mode}};
  std::ofstream f(path);
  f << j.dump(2);
}

}  // namespace

TEST_CASE("synth: counts and weights printed, idempotent under --force") {
  auto dir = scratch("synth");
  write_tiny_config(dir / "cfg.json");
  auto r = run_cli("synth --config " + (dir / "cfg.json").string() + " --out " +
                   (dir / "ds").string());
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.out.find("weights sum: 1") != std::string::npos);
  REQUIRE(fs::exists(dir / "ds" / "dataset.json"));

  // refuses to clobber without --force
  auto r2 = run_cli("synth --config " + (dir / "cfg.json").string() + " --out " +
                    (dir / "ds").string());
  REQUIRE(r2.exit_code == 1);
  REQUIRE(r2.err.find("ValidationError") != std::string::npos);

  // same seed twice with --force gives identical manifests
  auto manifest1 = [&] {
    std::ifstream f(dir / "ds" / "dataset.json");
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }();
  auto r3 = run_cli("synth --config " + (dir / "cfg.json").string() + " --out " +
                    (dir / "ds").string() + " --force");
  REQUIRE(r3.exit_code == 0);
  std::ifstream f(dir / "ds" / "dataset.json");
  std::stringstream ss;
  ss << f.rdbuf();
  REQUIRE(ss.str() == manifest1);
  fs::remove_all(dir);
}

TEST_CASE("synth --domains restricts the one-hot length") {
  auto dir = scratch("synth2");
  write_tiny_config(dir / "cfg.json");
  auto r = run_cli("synth --config " + (dir / "cfg.json").string() + " --out " +
                   (dir / "ds2").string() + " --domains 2");
  REQUIRE(r.exit_code == 0);
  std::ifstream f(dir / "ds2" / "dataset.json");
  json m;
  f >> m;
  REQUIRE(m["domains"].size() == 2);
  REQUIRE(m["domains"][0]["one_hot"].get<std::vector<float>>() == std::vector<float>{1, 0});
  fs::remove_all(dir);
}

TEST_CASE("train/evaluate/estimate-label round trip through the CLI") {
  auto dir = scratch("roundtrip");
  write_tiny_config(dir / "cfg.json");
  const std::string cfg = " --config " + (dir / "cfg.json").string();
  REQUIRE(run_cli("synth" + cfg + " --out " + (dir / "ds").string()).exit_code == 0);

  auto rt = run_cli("train" + cfg + " --data " + (dir / "ds").string() + " --out " +
                    (dir / "run").string() + " --mode proposed --epochs 1");
  REQUIRE(rt.exit_code == 0);
  REQUIRE(fs::exists(dir / "run" / "checkpoint" / "manifest.json"));
  REQUIRE(fs::exists(dir / "run" / "loss.csv"));
  {
    std::ifstream f(dir / "run" / "loss.csv");
    std::string header, row;
    std::getline(f, header);
    REQUIRE(header == "epoch,adv_g,adv_d,cyc,wls,total_g,total_d");
    REQUIRE(std::getline(f, row));
  }

  auto re = run_cli("evaluate --checkpoint " + (dir / "run" / "checkpoint").string() +
                    " --data " + (dir / "ds").string() + " --out " + (dir / "mx").string() +
                    " --baseline --split val");
  REQUIRE(re.exit_code == 0);
  REQUIRE(fs::exists(dir / "mx" / "per_volume.csv"));
  {
    std::ifstream f(dir / "mx" / "summary.json");
    json j;
    f >> j;
    REQUIRE(j["mode"] == "proposed");
    REQUIRE(j["domains"].size() == 3);
    REQUIRE(j.contains("config_hash"));
  }

  auto rl = run_cli("estimate-label --checkpoint " + (dir / "run" / "checkpoint").string() +
                    " --calib " + (dir / "ds").string() + " --out " + (dir / "lbl").string() +
                    " --coarse 0.4 --fine 0.2 --max-slices 4 --surface --split val");
  REQUIRE(rl.exit_code == 0);
  {
    std::ifstream f(dir / "lbl" / "label.json");
    json j;
    f >> j;
    REQUIRE(j["c"].size() == 3);
    REQUIRE(j.contains("objective"));
    REQUIRE(j.contains("grid"));
  }
  std::ifstream sf(dir / "lbl" / "surface.csv");
  std::string header;
  std::getline(sf, header);
  REQUIRE(header == "c0,c1,c2,objective");

  auto rr = run_cli("report ablation --inputs " + (dir / "mx" / "summary.json").string() +
                    " --out " + (dir / "rpt").string());
  REQUIRE(rr.exit_code == 0);
  REQUIRE(fs::exists(dir / "rpt" / "ablation.csv"));
  REQUIRE(rr.out.find("input") != std::string::npos);  // baseline row present
  fs::remove_all(dir);
}

TEST_CASE("m1 on a multi-domain dataset refuses with guidance") {
  auto dir = scratch("m1refuse");
  write_tiny_config(dir / "cfg.json");
  const std::string cfg = " --config " + (dir / "cfg.json").string();
  REQUIRE(run_cli("synth" + cfg + " --out " + (dir / "ds").string()).exit_code == 0);
  auto r = run_cli("train" + cfg + " --data " + (dir / "ds").string() + " --out " +
                   (dir / "run").string() + " --mode m1 --epochs 1");
  REQUIRE(r.exit_code == 1);
  REQUIRE(r.err.find("--domain") != std::string::npos);

  // selecting a domain makes it pass
  auto r2 = run_cli("train" + cfg + " --data " + (dir / "ds").string() + " --out " +
                    (dir / "run1").string() + " --mode m1 --epochs 1 --domain 1");
  REQUIRE(r2.exit_code == 0);
  fs::remove_all(dir);
}

TEST_CASE("report agreement computes Bland-Altman and correlation") {
  auto dir = scratch("agreement");
  {
    std::ofstream f(dir / "pairs.csv");
    f << "a,b\n1.0,1.1\n2.0,1.9\n3.0,3.2\n4.0,3.9\n";
  }
  auto r = run_cli("report agreement --pairs " + (dir / "pairs.csv").string() + " --out " +
                   (dir / "rpt").string());
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(dir / "rpt" / "agreement.json"));
  REQUIRE(fs::exists(dir / "rpt" / "ba_plot.csv"));
  REQUIRE(fs::exists(dir / "rpt" / "scatter.csv"));
  std::ifstream f(dir / "rpt" / "agreement.json");
  json j;
  f >> j;
  REQUIRE(j["pairs"] == 4);
  REQUIRE(j["pearson_r"].get<double>() > 0.99);
  REQUIRE(j["lower_limit"].get<double>() <= j["mean_diff"].get<double>());
  fs::remove_all(dir);
}

TEST_CASE("errors surface as machine-readable JSON with exit codes") {
  auto r = run_cli("train --data /nonexistent/path --out /tmp/restore_cli_never");
  REQUIRE(r.exit_code == 1);
  json err = json::parse(r.err);
  REQUIRE(err["error"]["type"] == "IngestionError");
  REQUIRE(err["error"].contains("message"));
}

TEST_CASE("experiment config: hash stability and flag-style overrides") {
  ExperimentConfig a = ExperimentConfig::defaults();
  ExperimentConfig b = ExperimentConfig::defaults();
  REQUIRE(experiment_hash(a) == experiment_hash(b));
  b.seed = 999;
  REQUIRE(experiment_hash(a) != experiment_hash(b));

  json j = experiment_json(a);
  ExperimentConfig back = experiment_from_json(j);
  REQUIRE(experiment_hash(back) == experiment_hash(a));
  REQUIRE(back.domains.size() == a.domains.size());
  REQUIRE(back.generator.channels == a.generator.channels);
}

TEST_CASE("select_domain restricts and reindexes") {
  std::vector<DomainSpec> domains{{0, "a", 0.2, 0.5, 0.5}, {1, "b", 0.05, 0.25, 2.0}};
  Dataset ds = build_dataset(domains, {2, 3}, {2, 16, 16}, 9, 0.5, 100.0);
  Dataset one = select_domain(ds, 1);
  REQUIRE(one.domains.size() == 1);
  REQUIRE(one.domains[0].index == 0);
  REQUIRE(one.domains[0].name == "b");
  REQUIRE(one.subjects.size() == 3);
  for (const auto& s : one.subjects) REQUIRE(s.domain_index == 0);
  REQUIRE_THROWS_AS(select_domain(ds, 7), ValidationError);
}

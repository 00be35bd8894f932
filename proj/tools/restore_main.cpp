// Command-line surface for the multi-domain restoration toolkit:
//   restore synth           build a synthetic multi-domain paired dataset
//   restore train           train the correction networks (modes m1..m4, proposed)
//   restore estimate-label  grid-search the mapping label of an unseen domain
//   restore evaluate        NRMSE/SSIM report of corrected volumes
//   restore report          ablation tables and agreement statistics
//
// Exit codes: 0 success, 1 validation/configuration error, 2 runtime or
// numerical failure. Errors are also emitted as JSON on stderr.

#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "restore/experiment.hpp"
#include "restore/metrics.hpp"
#include "restore/parallel.hpp"
#include "restore/restore.hpp"

using namespace restore;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  bool force = false;
  std::int64_t seed = -1;  // -1: keep config value
};

ExperimentConfig effective_config(const CommonFlags& flags) {
  ExperimentConfig cfg = flags.config_path.empty() ? ExperimentConfig::defaults()
                                                   : load_experiment(flags.config_path);
  if (flags.seed >= 0) {
    cfg.seed = std::uint64_t(flags.seed);
    cfg.train.seed = std::uint64_t(flags.seed);
  } else {
    cfg.train.seed = cfg.seed;
  }
  return cfg;
}

void ensure_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw ValidationError("output directory " + dir.string() +
                          " is not empty (use --force to overwrite)");
  fs::create_directories(dir);
}

std::vector<double> parse_label(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      values.push_back(std::stod(item));
    } catch (...) {
      throw ConfigError("cannot parse label component '" + item + "' in '" + text + "'");
    }
  }
  if (values.empty()) throw ConfigError("empty label '" + text + "'");
  return values;
}

std::string label_to_string(const Tensor<float>& c) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < c.numel(); ++i) os << (i ? ";" : "") << c[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const CommonFlags& flags, int domain_limit) {
  ExperimentConfig cfg = effective_config(flags);
  if (domain_limit > 0) {
    if (std::size_t(domain_limit) > cfg.domains.size())
      throw ConfigError("--domains " + std::to_string(domain_limit) + " exceeds the " +
                        std::to_string(cfg.domains.size()) + " domains in the config");
    cfg.domains.resize(std::size_t(domain_limit));
    cfg.subjects_per_domain.resize(std::size_t(domain_limit));
  }
  const fs::path out = flags.out_dir.empty() ? "dataset" : flags.out_dir;
  ensure_output_dir(out, flags.force);

  Dataset ds = build_dataset(cfg.domains, cfg.subjects_per_domain, cfg.dims, cfg.seed,
                             cfg.val_fraction, cfg.intensity_scale);
  write_dataset(ds, out, true);

  auto counts = domain_train_counts(ds);
  auto weights = domain_weights(counts);
  double sum = 0.0;
  for (std::size_t i = 0; i < ds.domains.size(); ++i) {
    std::cout << "domain " << ds.domains[i].index << " (" << ds.domains[i].name
              << "): train pairs " << counts[i] << ", weight " << weights.w[i] << "\n";
    sum += weights.w[i];
  }
  std::cout << "weights sum: " << sum << "\n";

  json run;
  run["config_hash"] = experiment_hash(cfg);
  run["config"] = experiment_json(cfg);
  std::ofstream rf(out / "run.json");
  rf << run.dump(2) << "\n";
  std::cout << "dataset written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const CommonFlags& flags, const std::string& data_dir, const std::string& mode_str,
              std::int64_t epochs, int domain_select) {
  ExperimentConfig cfg = effective_config(flags);
  if (!mode_str.empty()) cfg.train.mode = train_mode_from_string(mode_str);
  if (epochs >= 0) cfg.train.epochs = std::size_t(epochs);

  Dataset ds = load_dataset(data_dir);
  if (domain_select >= 0) ds = select_domain(ds, domain_select);
  if (mode_single_domain(cfg.train.mode) && ds.domains.size() != 1)
    throw ValidationError("mode " + to_string(cfg.train.mode) +
                          " is single-domain; pick one domain with --domain <index> or use "
                          "m3/m4/proposed");

  const fs::path out = flags.out_dir.empty() ? "run" : flags.out_dir;
  ensure_output_dir(out, flags.force);

  std::cout << "training mode " << to_string(cfg.train.mode) << " on " << ds.domains.size()
            << " domain(s), " << slice_pairs(ds, "train").size() << " candidate pairs\n";
  TrainResult result =
      train(ds, cfg.generator, cfg.discriminator, cfg.train, [](const EpochLoss& e) {
        std::cout << "epoch " << e.epoch << ": total_g " << e.losses.total_g << ", total_d "
                  << e.losses.total_d << ", cyc " << e.losses.cyc << ", wls " << e.losses.wls
                  << std::endl;
      });

  save_checkpoint(result.checkpoint, out / "checkpoint");
  write_loss_csv(result.log, out / "loss.csv");
  json run;
  run["config_hash"] = experiment_hash(cfg);
  run["mode"] = to_string(cfg.train.mode);
  run["epochs"] = cfg.train.epochs;
  run["data"] = data_dir;
  std::ofstream rf(out / "run.json");
  rf << run.dump(2) << "\n";
  std::cout << "checkpoint written to " << (out / "checkpoint").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// estimate-label
// ---------------------------------------------------------------------------

int cmd_estimate_label(const CommonFlags& flags, const std::string& checkpoint_dir,
                       const std::string& calib_dir, double epsilon, double coarse, double fine,
                       bool surface, const std::string& split, std::int64_t max_slices) {
  ExperimentConfig cfg = effective_config(flags);
  if (epsilon > 0) cfg.grid.epsilon = epsilon;
  if (coarse > 0) cfg.grid.coarse = coarse;
  if (fine > 0) cfg.grid.fine = fine;

  Checkpoint<float> ck = load_checkpoint(checkpoint_dir);
  Dataset calib = load_dataset(calib_dir);
  auto pairs = slice_pairs(calib, split);
  std::erase_if(pairs,
                [&](const SlicePair& p) { return p.content_fraction < cfg.train.air_threshold; });
  if (max_slices > 0 && pairs.size() > std::size_t(max_slices))
    pairs.resize(std::size_t(max_slices));

  LabelEstimate est = estimate_label(ck, pairs, cfg.grid);

  const fs::path out = flags.out_dir.empty() ? "label" : flags.out_dir;
  ensure_output_dir(out, flags.force);
  json j;
  j["c"] = est.c;
  j["objective"] = est.objective;
  j["grid"]["epsilon"] = cfg.grid.epsilon;
  j["grid"]["coarse"] = cfg.grid.coarse;
  j["grid"]["fine"] = cfg.grid.fine;
  j["points_evaluated"] = est.evaluated.size();
  j["calibration_slices"] = pairs.size();
  j["config_hash"] = experiment_hash(cfg);
  std::ofstream jf(out / "label.json");
  jf << j.dump(2) << "\n";

  if (surface) write_surface_csv(est.evaluated, out / "surface.csv");

  std::cout << "estimated label: [";
  for (std::size_t i = 0; i < est.c.size(); ++i) std::cout << (i ? ", " : "") << est.c[i];
  std::cout << "], objective " << est.objective << " over " << pairs.size() << " slices\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int cmd_evaluate(const CommonFlags& flags, const std::string& checkpoint_dir,
                 const std::string& data_dir, const std::string& label_str,
                 const std::string& split, bool baseline) {
  ExperimentConfig cfg = effective_config(flags);
  Checkpoint<float> ck = load_checkpoint(checkpoint_dir);
  Dataset ds = load_dataset(data_dir);

  const bool conditioned = ck.g.label_conditioned();
  Tensor<float> fixed_label;
  const bool auto_label = label_str.empty() || label_str == "auto";
  if (!auto_label) {
    auto v = parse_label(label_str);
    fixed_label = Tensor<float>({v.size()});
    for (std::size_t i = 0; i < v.size(); ++i) fixed_label[i] = float(v[i]);
  }

  MetricReport rep;
  for (const auto& subj : ds.subjects) {
    if (split != "all" && subj.split != split) continue;
    Tensor<float> label;
    if (conditioned)
      label = auto_label
                  ? one_hot_label<float>(std::size_t(subj.domain_index), ck.gen_config.domain_count)
                  : fixed_label;
    Volume corrected = infer(ck, subj.short_vol, label);
    VolumeMetrics vm;
    vm.subject_id = subj.subject_id;
    vm.domain_index = subj.domain_index;
    vm.label_used = conditioned ? label_to_string(label) : "(unconditioned)";
    vm.nrmse_pct = nrmse(corrected.voxels, subj.standard_vol.voxels);
    vm.ssim_value = ssim(corrected.voxels, subj.standard_vol.voxels);
    if (baseline) {
      vm.baseline_nrmse_pct = nrmse(subj.short_vol.voxels, subj.standard_vol.voxels);
      vm.baseline_ssim = ssim(subj.short_vol.voxels, subj.standard_vol.voxels);
    }
    rep.volumes.push_back(std::move(vm));
  }
  if (rep.volumes.empty()) throw ValidationError("no volumes in split '" + split + "'");

  const fs::path out = flags.out_dir.empty() ? "metrics" : flags.out_dir;
  ensure_output_dir(out, flags.force);
  write_metric_csv(rep, out / "per_volume.csv");
  json summary = metric_summary_json(rep, ds.domains);
  summary["mode"] = to_string(ck.train_config.mode);
  summary["checkpoint"] = checkpoint_dir;
  summary["split"] = split;
  summary["label"] = auto_label ? "auto" : label_str;
  summary["config_hash"] = experiment_hash(cfg);
  std::ofstream sf(out / "summary.json");
  sf << summary.dump(2) << "\n";

  for (const auto& d : ds.domains) {
    auto [n, s] = rep.domain_means(d.index);
    std::cout << "domain " << d.name << ": NRMSE " << n << "%, SSIM " << s;
    if (baseline) {
      auto [bn, bs] = rep.domain_baseline_means(d.index);
      std::cout << "  (input: NRMSE " << bn << "%, SSIM " << bs << ")";
    }
    std::cout << "\n";
  }
  std::cout << "overall: NRMSE " << rep.mean_nrmse() << "%, SSIM " << rep.mean_ssim() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report_ablation(const CommonFlags& flags, const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw ValidationError("report ablation needs at least one summary.json");
  const fs::path out = flags.out_dir.empty() ? "report" : flags.out_dir;
  ensure_output_dir(out, flags.force);

  struct Row {
    std::string mode;
    std::string label;
    json domains;
  };
  std::vector<Row> rows;
  json first_domains;
  bool baseline_written = false;
  std::ostringstream table;
  std::ofstream csv(out / "ablation.csv");

  for (const auto& path : inputs) {
    std::ifstream f(path);
    if (!f) throw IngestionError("cannot open summary " + path);
    json j;
    f >> j;
    rows.push_back({j.value("mode", "?"), j.value("label", "?"), j.at("domains")});
    if (first_domains.is_null()) first_domains = j.at("domains");
  }

  csv << "method";
  table << "method";
  for (const auto& d : first_domains) {
    csv << ',' << d.value("name", "?") << "_nrmse," << d.value("name", "?") << "_ssim";
    table << "\t" << d.value("name", "?") << " NRMSE\tSSIM";
  }
  csv << "\n";
  table << "\n";

  // uncorrected-input row, when any summary carries baselines
  for (const auto& row : rows) {
    bool has_baseline = false;
    for (const auto& d : row.domains) has_baseline |= d.contains("baseline_mean_nrmse_pct");
    if (has_baseline && !baseline_written) {
      csv << "input";
      table << "input";
      for (const auto& d : row.domains) {
        csv << ',' << d.value("baseline_mean_nrmse_pct", 0.0) << ','
            << d.value("baseline_mean_ssim", 0.0);
        table << "\t" << d.value("baseline_mean_nrmse_pct", 0.0) << "\t"
              << d.value("baseline_mean_ssim", 0.0);
      }
      csv << "\n";
      table << "\n";
      baseline_written = true;
    }
  }
  for (const auto& row : rows) {
    csv << row.mode;
    table << row.mode;
    for (const auto& d : row.domains) {
      csv << ',' << d.value("mean_nrmse_pct", 0.0) << ',' << d.value("mean_ssim", 0.0);
      table << "\t" << d.value("mean_nrmse_pct", 0.0) << "\t" << d.value("mean_ssim", 0.0);
    }
    csv << "\n";
    table << "\n";
  }
  std::cout << table.str();
  std::cout << "ablation table written to " << (out / "ablation.csv").string() << "\n";
  return 0;
}

int cmd_report_agreement(const CommonFlags& flags, const std::string& pairs_csv) {
  std::ifstream f(pairs_csv);
  if (!f) throw IngestionError("cannot open pair series " + pairs_csv);
  std::vector<double> a, b;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string sa, sb;
    if (!std::getline(ss, sa, ',') || !std::getline(ss, sb, ','))
      throw IngestionError("pair series must have two comma-separated columns: " + line);
    if (first) {
      first = false;
      try {
        std::stod(sa);
      } catch (...) {
        continue;  // header row
      }
    }
    a.push_back(std::stod(sa));
    b.push_back(std::stod(sb));
  }

  const BlandAltman ba = bland_altman(a, b);
  const double r = pearson_r(a, b);

  const fs::path out = flags.out_dir.empty() ? "report" : flags.out_dir;
  ensure_output_dir(out, flags.force);
  write_bland_altman_csv(a, b, ba, out / "ba_plot.csv");
  {
    std::ofstream sc(out / "scatter.csv");
    sc << "a,b\n";
    for (std::size_t i = 0; i < a.size(); ++i) sc << a[i] << ',' << b[i] << '\n';
  }
  json j;
  j["pairs"] = a.size();
  j["pearson_r"] = r;
  j["mean_diff"] = ba.mean_diff;
  j["lower_limit"] = ba.lower;
  j["upper_limit"] = ba.upper;
  j["sd"] = ba.sd;
  std::ofstream jf(out / "agreement.json");
  jf << j.dump(2) << "\n";

  std::cout << "pairs " << a.size() << ": r " << r << ", mean diff " << ba.mean_diff
            << ", limits [" << ba.lower << ", " << ba.upper << "]\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_workers();

  CLI::App app{"multi-domain short-scan image restoration toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  int domain_limit = -1;
  std::string data_dir, checkpoint_dir, calib_dir, mode_str, label_str = "auto";
  std::string split = "val";
  std::int64_t epochs = -1, max_slices = -1;
  int domain_select = -1;
  double epsilon = -1, coarse = -1, fine = -1;
  bool surface = false, baseline = false;
  std::vector<std::string> report_inputs;
  std::string pairs_csv;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config_path, "experiment config JSON");
    sub->add_option("--out", flags.out_dir, "output directory");
    sub->add_option("--seed", flags.seed, "override the config seed");
    sub->add_flag("--force", flags.force, "overwrite a non-empty output directory");
  };

  CLI::App* synth = app.add_subcommand("synth", "build a synthetic multi-domain dataset");
  add_common(synth);
  synth->add_option("--domains", domain_limit, "use only the first N configured domains");

  CLI::App* train_cmd = app.add_subcommand("train", "train the correction networks");
  add_common(train_cmd);
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();
  train_cmd->add_option("--mode", mode_str, "m1|m2|m3|m4|proposed");
  train_cmd->add_option("--epochs", epochs, "override epoch count");
  train_cmd->add_option("--domain", domain_select, "restrict to one domain (for m1/m2)");

  CLI::App* est = app.add_subcommand("estimate-label", "estimate the mapping label of a domain");
  add_common(est);
  est->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  est->add_option("--calib", calib_dir, "calibration dataset directory")->required();
  est->add_option("--epsilon", epsilon, "domain margin epsilon");
  est->add_option("--coarse", coarse, "coarse grid spacing");
  est->add_option("--fine", fine, "fine grid spacing");
  est->add_option("--split", split, "dataset split to draw calibration slices from");
  est->add_option("--max-slices", max_slices, "cap the number of calibration slices");
  est->add_flag("--surface", surface, "export the objective surface CSV");

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "compute NRMSE/SSIM reports");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
  eval_cmd->add_option("--label", label_str, "'auto' (per-domain one-hot) or c0,c1,...");
  eval_cmd->add_option("--split", split, "dataset split to evaluate");
  eval_cmd->add_flag("--baseline", baseline, "also report uncorrected-input metrics");

  CLI::App* report = app.add_subcommand("report", "tables and agreement statistics");
  CLI::App* ablation = report->add_subcommand("ablation", "summary table across modes");
  add_common(ablation);
  ablation->add_option("--inputs", report_inputs, "summary.json files")->required();
  CLI::App* agreement = report->add_subcommand("agreement", "Bland-Altman and correlation");
  add_common(agreement);
  agreement->add_option("--pairs", pairs_csv, "CSV with two value columns")->required();
  report->require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  auto fail = [](const char* type, const std::string& msg, int code) {
    json err;
    err["error"]["type"] = type;
    err["error"]["message"] = msg;
    std::cerr << err.dump() << "\n";
    return code;
  };

  try {
    if (synth->parsed()) return cmd_synth(flags, domain_limit);
    if (train_cmd->parsed())
      return cmd_train(flags, data_dir, mode_str, epochs, domain_select);
    if (est->parsed())
      return cmd_estimate_label(flags, checkpoint_dir, calib_dir, epsilon, coarse, fine, surface,
                                split, max_slices);
    if (eval_cmd->parsed())
      return cmd_evaluate(flags, checkpoint_dir, data_dir, label_str, split, baseline);
    if (report->parsed()) {
      if (ablation->parsed()) return cmd_report_ablation(flags, report_inputs);
      if (agreement->parsed()) return cmd_report_agreement(flags, pairs_csv);
    }
  } catch (const ValidationError& e) {
    return fail("ValidationError", e.what(), 1);
  } catch (const ConfigError& e) {
    return fail("ConfigError", e.what(), 1);
  } catch (const DimensionError& e) {
    return fail("DimensionError", e.what(), 1);
  } catch (const IngestionError& e) {
    return fail("IngestionError", e.what(), 1);
  } catch (const UndefinedMetricError& e) {
    return fail("UndefinedMetricError", e.what(), 1);
  } catch (const NumericError& e) {
    return fail("NumericError", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("RuntimeError", e.what(), 2);
  }
  return 0;
}

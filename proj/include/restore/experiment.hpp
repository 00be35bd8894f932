#pragma once

#include <string>

#include "restore/label_estimation.hpp"
#include "restore/training.hpp"

namespace restore {

// One experiment = dataset recipe + model + training + grid search, in a single
// JSON file so runs are diffable. Command-line flags override individual
// fields; the hash of the effective config is recorded in every output
// manifest.
struct ExperimentConfig {
  std::uint64_t seed = 1234;

  std::vector<DomainSpec> domains;
  std::vector<std::size_t> subjects_per_domain;
  Shape dims{16, 32, 32};
  double val_fraction = 0.25;
  double intensity_scale = 3000.0;  // phantom units -> PET-like intensity range

  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  TrainConfig train;
  GridSearchConfig grid;

  // Desk-scale defaults: three clearly distinct synthetic domains (count
  // density s is counts per intensity unit, so t*s*v gives detected counts)
  // and a generator small enough to train in minutes on a CPU.
  static ExperimentConfig defaults() {
    ExperimentConfig c;
    c.domains = {{0, "alpha", 0.04, 0.5, 0.5},
                 {1, "beta", 0.028, 0.25, 2.5},
                 {2, "gamma", 0.0216, 0.125, 4.5}};
    c.subjects_per_domain = {18, 12, 8};
    c.generator.stages = 3;
    c.generator.channels = {16, 32, 48};
    c.discriminator.channels = {32, 64, 128};
    // desk-scale schedule: ~450 training pairs instead of the paper-scale
    // corpus, so smaller batches and a faster rate do the learning
    c.train.epochs = 40;
    c.train.batch_size = 8;
    c.train.learning_rate = 1e-3;
    return c;
  }
};

inline json experiment_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["data"]["dims"] = c.dims;
  j["data"]["val_fraction"] = c.val_fraction;
  j["data"]["intensity_scale"] = c.intensity_scale;
  j["data"]["subjects_per_domain"] = c.subjects_per_domain;
  j["data"]["domains"] = json::array();
  for (const auto& d : c.domains) {
    json jd;
    jd["index"] = d.index;
    jd["name"] = d.name;
    jd["count_scale"] = d.count_scale;
    jd["time_fraction"] = d.time_fraction;
    jd["psf_fwhm_mm"] = d.psf_fwhm_mm;
    j["data"]["domains"].push_back(jd);
  }
  j["generator"] = generator_config_json(c.generator);
  j["discriminator"] = discriminator_config_json(c.discriminator);
  j["train"] = train_config_json(c.train);
  j["grid"]["epsilon"] = c.grid.epsilon;
  j["grid"]["coarse"] = c.grid.coarse;
  j["grid"]["fine"] = c.grid.fine;
  j["grid"]["refinement_radius_cells"] = c.grid.refinement_radius_cells;
  return j;
}

inline ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig c = ExperimentConfig::defaults();
  c.seed = j.value("seed", c.seed);
  if (j.contains("data")) {
    const json& d = j["data"];
    if (d.contains("dims")) c.dims = d["dims"].get<Shape>();
    c.val_fraction = d.value("val_fraction", c.val_fraction);
    c.intensity_scale = d.value("intensity_scale", c.intensity_scale);
    if (d.contains("subjects_per_domain"))
      c.subjects_per_domain = d["subjects_per_domain"].get<std::vector<std::size_t>>();
    if (d.contains("domains")) {
      c.domains.clear();
      for (const auto& jd : d["domains"]) {
        DomainSpec spec;
        spec.index = jd.value("index", int(c.domains.size()));
        spec.name = jd.value("name", "d" + std::to_string(spec.index));
        spec.count_scale = jd.value("count_scale", 1.0);
        spec.time_fraction = jd.value("time_fraction", 1.0);
        spec.psf_fwhm_mm = jd.value("psf_fwhm_mm", 0.0);
        c.domains.push_back(spec);
      }
    }
  }
  if (j.contains("generator")) c.generator = generator_config_from_json(j["generator"]);
  if (j.contains("discriminator"))
    c.discriminator = discriminator_config_from_json(j["discriminator"]);
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  if (j.contains("grid")) {
    const json& g = j["grid"];
    c.grid.epsilon = g.value("epsilon", c.grid.epsilon);
    c.grid.coarse = g.value("coarse", c.grid.coarse);
    c.grid.fine = g.value("fine", c.grid.fine);
    c.grid.refinement_radius_cells =
        g.value("refinement_radius_cells", c.grid.refinement_radius_cells);
  }
  return c;
}

inline ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IngestionError("cannot open config file " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw IngestionError("malformed config " + path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

// FNV-1a over the canonical dump; identifies the effective configuration in
// output manifests.
inline std::string experiment_hash(const ExperimentConfig& c) {
  const std::string s = experiment_json(c).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

// Restriction of a dataset to one domain, reindexed to 0; the single-domain
// ablations (M1/M2) consume this.
inline Dataset select_domain(const Dataset& ds, int domain_index) {
  Dataset out;
  out.dims = ds.dims;
  out.seed = ds.seed;
  bool found = false;
  for (const auto& d : ds.domains)
    if (d.index == domain_index) {
      DomainSpec copy = d;
      copy.index = 0;
      out.domains.push_back(copy);
      found = true;
    }
  if (!found)
    throw ValidationError("dataset has no domain with index " + std::to_string(domain_index));
  for (const auto& s : ds.subjects)
    if (s.domain_index == domain_index) {
      DatasetSubject copy = s;
      copy.domain_index = 0;
      out.subjects.push_back(std::move(copy));
    }
  return out;
}

}  // namespace restore

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "restore/data.hpp"
#include "restore/tensor.hpp"

namespace restore {

// ---------------------------------------------------------------------------
// Image quality metrics (global statistics, as used for the PET evaluations)
// ---------------------------------------------------------------------------

// Normalized root mean-square error in percent: 100 * ||z - x|| / ||x||.
template <typename T>
double nrmse(const Tensor<T>& z, const Tensor<T>& x) {
  require_same_shape(z, x, "nrmse");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < z.numel(); ++i) {
    const double d = double(z[i]) - double(x[i]);
    num += d * d;
    den += double(x[i]) * double(x[i]);
  }
  if (den == 0.0) throw UndefinedMetricError("nrmse: reference norm is zero");
  return 100.0 * std::sqrt(num / den);
}

// Stabilization constants follow a 16-bit intensity convention.
inline constexpr double kSsimAlpha1 = (0.0002 * 65535.0) * (0.0002 * 65535.0);
inline constexpr double kSsimAlpha2 = (0.0007 * 65535.0) * (0.0007 * 65535.0);

// Single-window SSIM over the whole array (population statistics):
//   (2 mu_z mu_x + a1)(2 cov + a2) / ((mu_z^2 + mu_x^2 + a1)(var_z + var_x + a2))
template <typename T>
double ssim(const Tensor<T>& z, const Tensor<T>& x, double alpha1 = kSsimAlpha1,
            double alpha2 = kSsimAlpha2) {
  require_same_shape(z, x, "ssim");
  const std::size_t n = z.numel();
  if (n == 0) throw DimensionError("ssim of empty arrays");
  double mz = 0.0, mx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mz += double(z[i]);
    mx += double(x[i]);
  }
  mz /= double(n);
  mx /= double(n);
  double vz = 0.0, vx = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dz = double(z[i]) - mz;
    const double dx = double(x[i]) - mx;
    vz += dz * dz;
    vx += dx * dx;
    cov += dz * dx;
  }
  vz /= double(n);
  vx /= double(n);
  cov /= double(n);
  return ((2.0 * mz * mx + alpha1) * (2.0 * cov + alpha2)) /
         ((mz * mz + mx * mx + alpha1) * (vz + vx + alpha2));
}

// ---------------------------------------------------------------------------
// Agreement statistics
// ---------------------------------------------------------------------------

struct BlandAltman {
  double mean_diff = 0.0;
  double sd = 0.0;     // sample standard deviation of the differences
  double lower = 0.0;  // mean - 1.96 sd
  double upper = 0.0;  // mean + 1.96 sd
};

inline BlandAltman bland_altman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ValidationError("bland_altman: series lengths differ (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
  const std::size_t n = a.size();
  if (n < 2) throw ValidationError("bland_altman needs at least 2 pairs");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= double(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (a[i] - b[i]) - mean;
    ss += d * d;
  }
  BlandAltman out;
  out.mean_diff = mean;
  out.sd = std::sqrt(ss / double(n - 1));
  out.lower = mean - 1.96 * out.sd;
  out.upper = mean + 1.96 * out.sd;
  return out;
}

inline double pearson_r(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw ValidationError("pearson_r needs two equal-length series of >= 2 values");
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(n);
  mb /= double(n);
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0.0 || sbb == 0.0)
    throw UndefinedMetricError("pearson_r: a series has zero variance");
  return sab / std::sqrt(saa * sbb);
}

// Cohen's kappa on binary ratings; for two categories the linear- and
// quadratic-weighted variants coincide with the unweighted statistic.
inline double weighted_kappa(const std::vector<int>& ra, const std::vector<int>& rb) {
  if (ra.size() != rb.size() || ra.empty())
    throw ValidationError("weighted_kappa needs two equal-length non-empty series");
  double table[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < ra.size(); ++i) {
    if ((ra[i] != 0 && ra[i] != 1) || (rb[i] != 0 && rb[i] != 1))
      throw ValidationError("weighted_kappa: ratings must be binary (0/1)");
    table[ra[i]][rb[i]] += 1.0;
  }
  const double n = double(ra.size());
  const double po = (table[0][0] + table[1][1]) / n;
  const double pa0 = (table[0][0] + table[0][1]) / n;
  const double pb0 = (table[0][0] + table[1][0]) / n;
  const double pe = pa0 * pb0 + (1.0 - pa0) * (1.0 - pb0);
  if (pe == 1.0) {
    if (po == 1.0) return 1.0;
    throw UndefinedMetricError("weighted_kappa: chance agreement is 1 without perfect agreement");
  }
  return (po - pe) / (1.0 - pe);
}

// Mean intensity ratio between two regions; the SUVR stand-in with
// user-supplied masks.
inline double region_ratio(const Volume& vol, const Tensor<std::uint8_t>& target_mask,
                           const Tensor<std::uint8_t>& reference_mask) {
  if (target_mask.shape != vol.voxels.shape || reference_mask.shape != vol.voxels.shape)
    throw ValidationError("region_ratio: mask dims must match the volume");
  double tsum = 0.0, rsum = 0.0;
  std::size_t tn = 0, rn = 0;
  for (std::size_t i = 0; i < vol.voxels.numel(); ++i) {
    if (target_mask[i]) {
      tsum += double(vol.voxels[i]);
      ++tn;
    }
    if (reference_mask[i]) {
      rsum += double(vol.voxels[i]);
      ++rn;
    }
  }
  if (tn == 0 || rn == 0) throw ValidationError("region_ratio: empty mask");
  const double rmean = rsum / double(rn);
  if (!(rmean > 0.0)) throw ValidationError("region_ratio: reference mean is not positive");
  return (tsum / double(tn)) / rmean;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct VolumeMetrics {
  std::string subject_id;
  int domain_index = 0;
  std::string label_used;  // textual form of the mapping label
  double nrmse_pct = 0.0;
  double ssim_value = 0.0;
  double baseline_nrmse_pct = -1.0;  // uncorrected input, when requested
  double baseline_ssim = -1.0;
};

struct MetricReport {
  std::vector<VolumeMetrics> volumes;

  double mean_nrmse() const {
    double s = 0;
    for (const auto& v : volumes) s += v.nrmse_pct;
    return volumes.empty() ? 0.0 : s / double(volumes.size());
  }
  double mean_ssim() const {
    double s = 0;
    for (const auto& v : volumes) s += v.ssim_value;
    return volumes.empty() ? 0.0 : s / double(volumes.size());
  }
  // Aggregates restricted to one domain.
  std::pair<double, double> domain_means(int domain) const {
    double sn = 0, ss = 0;
    std::size_t n = 0;
    for (const auto& v : volumes)
      if (v.domain_index == domain) {
        sn += v.nrmse_pct;
        ss += v.ssim_value;
        ++n;
      }
    return n ? std::pair<double, double>{sn / double(n), ss / double(n)}
             : std::pair<double, double>{0.0, 0.0};
  }
  std::pair<double, double> domain_baseline_means(int domain) const {
    double sn = 0, ss = 0;
    std::size_t n = 0;
    for (const auto& v : volumes)
      if (v.domain_index == domain && v.baseline_nrmse_pct >= 0.0) {
        sn += v.baseline_nrmse_pct;
        ss += v.baseline_ssim;
        ++n;
      }
    return n ? std::pair<double, double>{sn / double(n), ss / double(n)}
             : std::pair<double, double>{0.0, 0.0};
  }
};

inline void write_metric_csv(const MetricReport& rep, const fs::path& path) {
  std::ofstream f(path);
  f << "subject_id,domain,label,nrmse_pct,ssim,baseline_nrmse_pct,baseline_ssim\n";
  for (const auto& v : rep.volumes) {
    f << v.subject_id << ',' << v.domain_index << ',' << v.label_used << ',' << v.nrmse_pct << ','
      << v.ssim_value << ',';
    if (v.baseline_nrmse_pct >= 0.0)
      f << v.baseline_nrmse_pct << ',' << v.baseline_ssim;
    else
      f << ',';
    f << '\n';
  }
  if (!f) throw IngestionError("cannot write metric CSV to " + path.string());
}

inline json metric_summary_json(const MetricReport& rep, const std::vector<DomainSpec>& domains) {
  json j;
  j["volumes"] = rep.volumes.size();
  j["mean_nrmse_pct"] = rep.mean_nrmse();
  j["mean_ssim"] = rep.mean_ssim();
  j["domains"] = json::array();
  for (const auto& d : domains) {
    auto [n, s] = rep.domain_means(d.index);
    json jd;
    jd["index"] = d.index;
    jd["name"] = d.name;
    jd["mean_nrmse_pct"] = n;
    jd["mean_ssim"] = s;
    auto [bn, bs] = rep.domain_baseline_means(d.index);
    if (bn > 0.0 || bs > 0.0) {
      jd["baseline_mean_nrmse_pct"] = bn;
      jd["baseline_mean_ssim"] = bs;
    }
    j["domains"].push_back(jd);
  }
  return j;
}

// Plot-ready Bland-Altman export: one row per pair plus the mean/limit lines.
inline void write_bland_altman_csv(const std::vector<double>& a, const std::vector<double>& b,
                                   const BlandAltman& ba, const fs::path& path) {
  std::ofstream f(path);
  f << "pair_mean,difference,mean_diff,lower_limit,upper_limit\n";
  for (std::size_t i = 0; i < a.size(); ++i)
    f << 0.5 * (a[i] + b[i]) << ',' << (a[i] - b[i]) << ',' << ba.mean_diff << ',' << ba.lower
      << ',' << ba.upper << '\n';
  if (!f) throw IngestionError("cannot write Bland-Altman CSV to " + path.string());
}

}  // namespace restore

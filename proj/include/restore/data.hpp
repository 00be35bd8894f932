#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "restore/conditioning.hpp"
#include "restore/random.hpp"
#include "restore/tensor.hpp"

namespace restore {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Volume
// ---------------------------------------------------------------------------

struct Volume {
  Tensor<float> voxels;  // {slices, rows, cols}
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  std::string intensity_units = "arb";
  std::optional<double> scan_duration_min;

  std::size_t slices() const { return voxels.dim(0); }
  std::size_t rows() const { return voxels.dim(1); }
  std::size_t cols() const { return voxels.dim(2); }
};

inline void validate_volume(const Volume& v) {
  if (v.voxels.ndim() != 3 || v.voxels.numel() == 0)
    throw ValidationError("volume must be a non-empty 3-D array, got " +
                          shape_str(v.voxels.shape));
  if (!all_finite(v.voxels)) throw ValidationError("volume contains NaN or Inf voxels");
}

// ---------------------------------------------------------------------------
// Portable container: directory with manifest.json + voxels.raw
// (little-endian float32, C row-major). Bit-exact round trip.
// ---------------------------------------------------------------------------

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559,
              "container format requires 32-bit IEEE-754 floats");

inline void save_volume(const Volume& v, const fs::path& dir) {
  validate_volume(v);
  fs::create_directories(dir);
  json m;
  m["schema_version"] = 1;
  m["kind"] = "volume";
  m["dims"] = {v.slices(), v.rows(), v.cols()};
  m["spacing_mm"] = {v.spacing_mm[0], v.spacing_mm[1], v.spacing_mm[2]};
  m["dtype"] = "float32";
  m["order"] = "C";
  m["intensity_units"] = v.intensity_units;
  if (v.scan_duration_min) m["scan_duration_min"] = *v.scan_duration_min;
  std::ofstream mf(dir / "manifest.json");
  mf << m.dump(2) << "\n";
  if (!mf) throw IngestionError("cannot write manifest to " + dir.string());

  std::ofstream rf(dir / "voxels.raw", std::ios::binary);
  rf.write(reinterpret_cast<const char*>(v.voxels.ptr()),
           std::streamsize(v.voxels.numel() * sizeof(float)));
  if (!rf) throw IngestionError("cannot write voxel payload to " + dir.string());
}

inline Volume load_container(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IngestionError("missing manifest.json in " + dir.string());
  json m;
  try {
    mf >> m;
  } catch (const json::exception& e) {
    throw IngestionError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  if (m.value("kind", "") != "volume")
    throw IngestionError("manifest in " + dir.string() + " is not a volume container");
  if (m.value("dtype", "") != "float32")
    throw IngestionError("unsupported container dtype '" + m.value("dtype", "") + "'");
  const auto dims = m.at("dims").get<std::vector<std::size_t>>();
  if (dims.size() != 3) throw IngestionError("container dims must have 3 entries");

  Volume v;
  v.voxels = Tensor<float>({dims[0], dims[1], dims[2]});
  if (m.contains("spacing_mm")) {
    auto sp = m["spacing_mm"].get<std::vector<double>>();
    if (sp.size() != 3) throw IngestionError("spacing_mm must have 3 entries");
    v.spacing_mm = {sp[0], sp[1], sp[2]};
  }
  v.intensity_units = m.value("intensity_units", "arb");
  if (m.contains("scan_duration_min")) v.scan_duration_min = m["scan_duration_min"].get<double>();

  std::ifstream rf(dir / "voxels.raw", std::ios::binary | std::ios::ate);
  if (!rf) throw IngestionError("missing voxels.raw in " + dir.string());
  const std::size_t expected = v.voxels.numel() * sizeof(float);
  const std::size_t actual = std::size_t(rf.tellg());
  if (actual != expected)
    throw IngestionError("payload size mismatch in " + dir.string() + ": expected " +
                         std::to_string(expected) + " bytes, found " + std::to_string(actual));
  rf.seekg(0);
  rf.read(reinterpret_cast<char*>(v.voxels.ptr()), std::streamsize(expected));
  if (!rf) throw IngestionError("truncated voxel payload in " + dir.string());
  return v;
}

// ---------------------------------------------------------------------------
// NIfTI-1 import (uncompressed single-file .nii, little-endian,
// datatypes int16/uint16/float32/float64)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
T read_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));  // host is little-endian (asserted below)
  return v;
}

}  // namespace detail

inline Volume load_nifti(const fs::path& path) {
  static_assert(std::endian::native == std::endian::little,
                "NIfTI reader assumes a little-endian host");
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IngestionError("cannot open NIfTI file " + path.string());
  const std::size_t file_size = std::size_t(f.tellg());
  if (file_size < 352) throw IngestionError("file too small to be NIfTI-1: " + path.string());
  f.seekg(0);
  std::array<unsigned char, 348> hdr{};
  f.read(reinterpret_cast<char*>(hdr.data()), 348);

  const std::int32_t sizeof_hdr = detail::read_le<std::int32_t>(hdr.data());
  if (sizeof_hdr != 348) {
    if (sizeof_hdr == 1543569408)  // 348 byte-swapped
      throw IngestionError("big-endian NIfTI files are not supported: " + path.string());
    throw IngestionError("not a NIfTI-1 file (sizeof_hdr=" + std::to_string(sizeof_hdr) + "): " +
                         path.string());
  }
  if (!(hdr[344] == 'n' && (hdr[345] == '+' || hdr[345] == 'i') && hdr[346] == '1'))
    throw IngestionError("bad NIfTI magic in " + path.string());
  if (hdr[345] == 'i')
    throw IngestionError("two-file NIfTI (.hdr/.img) is not supported: " + path.string());

  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[i] = detail::read_le<std::int16_t>(hdr.data() + 40 + 2 * i);
  if (dim[0] < 3)
    throw IngestionError("NIfTI volume must have at least 3 dims, got " + std::to_string(dim[0]));
  for (int i = 4; i <= dim[0]; ++i)
    if (dim[i] > 1)
      throw IngestionError("NIfTI file has a non-singleton dimension " + std::to_string(i) +
                           "; only 3-D volumes are supported");
  const std::size_t nx = std::size_t(dim[1]), ny = std::size_t(dim[2]), nz = std::size_t(dim[3]);
  if (nx == 0 || ny == 0 || nz == 0) throw IngestionError("NIfTI volume has a zero dimension");

  const std::int16_t datatype = detail::read_le<std::int16_t>(hdr.data() + 70);
  const std::int16_t bitpix = detail::read_le<std::int16_t>(hdr.data() + 72);
  const float vox_offset = detail::read_le<float>(hdr.data() + 108);
  const float scl_slope = detail::read_le<float>(hdr.data() + 112);
  const float scl_inter = detail::read_le<float>(hdr.data() + 116);
  float pixdim[4];
  for (int i = 0; i < 4; ++i) pixdim[i] = detail::read_le<float>(hdr.data() + 76 + 4 * i);

  std::size_t elem_size = 0;
  switch (datatype) {
    case 4: elem_size = 2; break;    // int16
    case 512: elem_size = 2; break;  // uint16
    case 16: elem_size = 4; break;   // float32
    case 64: elem_size = 8; break;   // float64
    default:
      throw IngestionError("unsupported NIfTI datatype " + std::to_string(datatype) +
                           " (supported: int16, uint16, float32, float64)");
  }
  if (bitpix != std::int16_t(8 * elem_size))
    throw IngestionError("NIfTI bitpix " + std::to_string(bitpix) + " inconsistent with datatype");

  const std::size_t n = nx * ny * nz;
  const std::size_t offset = std::size_t(vox_offset);
  if (offset < 348 || offset + n * elem_size > file_size)
    throw IngestionError("NIfTI payload out of bounds: expected " +
                         std::to_string(n * elem_size) + " bytes at offset " +
                         std::to_string(offset) + ", file has " + std::to_string(file_size));

  std::vector<unsigned char> raw(n * elem_size);
  f.seekg(std::streamoff(offset));
  f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (!f) throw IngestionError("truncated NIfTI payload in " + path.string());

  Volume v;
  v.voxels = Tensor<float>({nz, ny, nx});  // x fastest in the file = row-major {z,y,x}
  float* out = v.voxels.ptr();
  const bool scale = scl_slope != 0.0f && !(scl_slope == 1.0f && scl_inter == 0.0f);
  auto emit = [&](std::size_t i, double raw_value) {
    out[i] = scale ? float(double(scl_slope) * raw_value + double(scl_inter)) : float(raw_value);
  };
  switch (datatype) {
    case 4:
      for (std::size_t i = 0; i < n; ++i)
        emit(i, detail::read_le<std::int16_t>(raw.data() + 2 * i));
      break;
    case 512:
      for (std::size_t i = 0; i < n; ++i)
        emit(i, detail::read_le<std::uint16_t>(raw.data() + 2 * i));
      break;
    case 16:
      if (!scale) {
        std::memcpy(out, raw.data(), n * sizeof(float));  // bit-exact path
      } else {
        for (std::size_t i = 0; i < n; ++i) emit(i, detail::read_le<float>(raw.data() + 4 * i));
      }
      break;
    case 64:
      for (std::size_t i = 0; i < n; ++i) emit(i, detail::read_le<double>(raw.data() + 8 * i));
      break;
  }
  v.spacing_mm = {double(pixdim[3]), double(pixdim[2]), double(pixdim[1])};
  for (auto& s : v.spacing_mm)
    if (!(s > 0.0)) s = 1.0;
  v.intensity_units = "nifti";
  return v;
}

// Dispatch on path kind: directory container or .nii file.
inline Volume load_volume(const fs::path& path) {
  if (fs::is_directory(path)) return load_container(path);
  if (fs::is_regular_file(path)) return load_nifti(path);
  throw IngestionError("no volume at " + path.string());
}

// ---------------------------------------------------------------------------
// Gaussian smoothing (separable, truncated at 4 sigma, kernels renormalized at
// the boundary so constants are preserved exactly)
// ---------------------------------------------------------------------------

inline constexpr double kFwhmToSigma = 2.3548;  // 2*sqrt(2*ln 2)

namespace detail {

inline void smooth_axis(Tensor<float>& t, std::size_t axis, double sigma_vox) {
  if (sigma_vox <= 0.0) return;
  const int radius = int(std::ceil(4.0 * sigma_vox));
  std::vector<double> kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k)
    kernel[std::size_t(k + radius)] = std::exp(-0.5 * double(k) * double(k) / (sigma_vox * sigma_vox));

  const std::size_t len = t.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= t.dim(i);
  for (std::size_t i = axis + 1; i < t.ndim(); ++i) inner *= t.dim(i);

  std::vector<float> line(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      float* base = t.ptr() + (o * len) * inner + in;
      for (std::size_t i = 0; i < len; ++i) line[i] = base[i * inner];
      for (std::size_t i = 0; i < len; ++i) {
        double acc = 0.0, wsum = 0.0;
        const int lo = std::max(-radius, -int(i));
        const int hi = std::min(radius, int(len - 1 - i));
        for (int k = lo; k <= hi; ++k) {
          const double w = kernel[std::size_t(k + radius)];
          acc += w * double(line[i + std::size_t(k)]);
          wsum += w;
        }
        base[i * inner] = float(acc / wsum);
      }
    }
  }
}

}  // namespace detail

inline Volume gaussian_smooth(const Volume& v, double fwhm_mm) {
  validate_volume(v);
  if (fwhm_mm < 0.0) throw ValidationError("gaussian_smooth: negative FWHM");
  for (double s : v.spacing_mm)
    if (!(s > 0.0)) throw ValidationError("gaussian_smooth: volume spacing is unknown");
  Volume out = v;
  if (fwhm_mm == 0.0) return out;
  for (std::size_t axis = 0; axis < 3; ++axis)
    detail::smooth_axis(out.voxels, axis, fwhm_mm / (kFwhmToSigma * v.spacing_mm[axis]));
  return out;
}

// ---------------------------------------------------------------------------
// Domains and the synthetic degradation model
// ---------------------------------------------------------------------------

struct DomainSpec {
  int index = 0;
  std::string name;
  double count_scale = 1.0;    // s: detected-count scale of the standard scan
  double time_fraction = 1.0;  // t: short-scan fraction of the acquisition
  double psf_fwhm_mm = 0.0;    // blur of the standard (target) image

  template <typename T>
  Tensor<T> one_hot(std::size_t domain_count) const {
    return one_hot_label<T>(std::size_t(index), domain_count);
  }
};

// Count-thinning model: the standard image is the blurred clean volume; the
// short scan is Poisson(t*s*standard)/(t*s), which is unbiased with variance
// standard/(t*s) per voxel, so smaller time fractions are noisier.
inline std::pair<Volume, Volume> synthesize_domain(const Volume& clean, const DomainSpec& spec,
                                                   std::uint64_t seed) {
  validate_volume(clean);
  for (float v : clean.voxels.data)
    if (v < 0.0f) throw ValidationError("synthesize_domain: clean volume has negative voxels");
  if (!(spec.count_scale > 0.0)) throw ValidationError("synthesize_domain: count_scale must be > 0");
  if (!(spec.time_fraction > 0.0) || spec.time_fraction > 1.0)
    throw ValidationError("synthesize_domain: time_fraction must be in (0, 1]");

  Volume standard = gaussian_smooth(clean, spec.psf_fwhm_mm);
  const double ts = spec.count_scale * spec.time_fraction;
  Volume short_scan = standard;
  Rng rng(seed);
  for (std::size_t i = 0; i < standard.voxels.numel(); ++i) {
    const double lam = ts * double(standard.voxels[i]);
    short_scan.voxels[i] = float(double(rng.poisson(lam)) / ts);
  }
  if (standard.scan_duration_min)
    short_scan.scan_duration_min = *standard.scan_duration_min * spec.time_fraction;
  return {std::move(short_scan), std::move(standard)};
}

// ---------------------------------------------------------------------------
// Phantoms
// ---------------------------------------------------------------------------

enum class PhantomKind { Ellipsoids, Checker, Blobs };

inline PhantomKind phantom_kind_from_string(const std::string& s) {
  if (s == "ellipsoids") return PhantomKind::Ellipsoids;
  if (s == "checker") return PhantomKind::Checker;
  if (s == "blobs") return PhantomKind::Blobs;
  throw ConfigError("unknown phantom kind '" + s + "' (ellipsoids|checker|blobs)");
}

struct Phantom {
  Volume volume;
  // named region masks, same dims as the volume (1 = inside)
  std::vector<std::pair<std::string, Tensor<std::uint8_t>>> masks;
};

namespace detail {

struct EllipsoidDef {
  double cz, cy, cx;  // center, fractional
  double rz, ry, rx;  // radii, fractional
  float value;
};

inline bool inside(const EllipsoidDef& e, double z, double y, double x) {
  const double dz = (z - e.cz) / e.rz, dy = (y - e.cy) / e.ry, dx = (x - e.cx) / e.rx;
  return dz * dz + dy * dy + dx * dx <= 1.0;
}

}  // namespace detail

inline Phantom make_phantom(PhantomKind kind, const Shape& dims, std::uint64_t seed) {
  if (dims.size() != 3 || dims[0] == 0 || dims[1] == 0 || dims[2] == 0)
    throw ValidationError("make_phantom: dims must be {slices, rows, cols} and positive");
  Phantom p;
  p.volume.voxels = Tensor<float>({dims[0], dims[1], dims[2]});
  p.volume.intensity_units = "arb";
  Rng rng(seed);
  const std::size_t S = dims[0], H = dims[1], W = dims[2];

  switch (kind) {
    case PhantomKind::Ellipsoids: {
      auto jitter = [&](double v, double amount) { return v + rng.uniform(-amount, amount); };
      detail::EllipsoidDef body{0.5, 0.5, 0.5, 0.45, jitter(0.42, 0.02), jitter(0.42, 0.02), 0.5f};
      detail::EllipsoidDef target{jitter(0.5, 0.04), jitter(0.45, 0.03), jitter(0.3, 0.03),
                                  0.28, 0.2, 0.14, 2.0f};
      detail::EllipsoidDef reference{jitter(0.5, 0.04), jitter(0.55, 0.03), jitter(0.72, 0.03),
                                     0.28, 0.2, 0.14, 1.0f};
      Tensor<std::uint8_t> tmask({S, H, W}), rmask({S, H, W});
      for (std::size_t z = 0; z < S; ++z)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) {
            const double fz = (double(z) + 0.5) / double(S);
            const double fy = (double(y) + 0.5) / double(H);
            const double fx = (double(x) + 0.5) / double(W);
            float val = 0.0f;
            if (detail::inside(body, fz, fy, fx)) val = body.value;
            if (detail::inside(target, fz, fy, fx)) {
              val = target.value;
              tmask.at(z, y, x) = 1;
            } else if (detail::inside(reference, fz, fy, fx)) {
              val = reference.value;
              rmask.at(z, y, x) = 1;
            }
            p.volume.voxels.at(z, y, x) = val;
          }
      p.masks.emplace_back("target", std::move(tmask));
      p.masks.emplace_back("reference", std::move(rmask));
      break;
    }
    case PhantomKind::Checker: {
      const std::size_t cell = 4;
      Tensor<std::uint8_t> high({S, H, W}), low({S, H, W});
      for (std::size_t z = 0; z < S; ++z)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) {
            const bool odd = ((z / cell) + (y / cell) + (x / cell)) % 2 == 1;
            p.volume.voxels.at(z, y, x) = odd ? 1.2f : 0.2f;
            (odd ? high : low).at(z, y, x) = 1;
          }
      p.masks.emplace_back("high", std::move(high));
      p.masks.emplace_back("low", std::move(low));
      break;
    }
    case PhantomKind::Blobs: {
      const float max_amplitude = 2.0f;
      const int blobs = 8 + int(rng.uniform_index(8));
      struct Blob {
        double cz, cy, cx, sz, sy, sx, amp;
      };
      std::vector<Blob> defs;
      for (int i = 0; i < blobs; ++i)
        defs.push_back({rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85),
                        rng.uniform(0.06, 0.18), rng.uniform(0.06, 0.18), rng.uniform(0.06, 0.18),
                        rng.uniform(0.3, 1.0)});
      for (std::size_t z = 0; z < S; ++z)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) {
            const double fz = (double(z) + 0.5) / double(S);
            const double fy = (double(y) + 0.5) / double(H);
            const double fx = (double(x) + 0.5) / double(W);
            double acc = 0.02;
            for (const Blob& b : defs) {
              const double dz = (fz - b.cz) / b.sz;
              const double dy = (fy - b.cy) / b.sy;
              const double dx = (fx - b.cx) / b.sx;
              acc += b.amp * std::exp(-0.5 * (dz * dz + dy * dy + dx * dx));
            }
            p.volume.voxels.at(z, y, x) = std::min(float(acc), max_amplitude);
          }
      break;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Paired datasets
// ---------------------------------------------------------------------------

struct SlicePair {
  Tensor<float> z;  // short scan slice {H,W}
  Tensor<float> x;  // standard scan slice {H,W}
  int domain_index = 0;
  std::string subject_id;
  double content_fraction = 1.0;  // mean(x slice) / max(x volume)
};

struct DatasetSubject {
  int domain_index = 0;
  std::string subject_id;
  std::string split;  // "train" or "val"
  Volume short_vol;
  Volume standard_vol;
};

struct Dataset {
  std::vector<DomainSpec> domains;
  std::vector<DatasetSubject> subjects;
  Shape dims;  // {slices, rows, cols}
  std::uint64_t seed = 0;

  std::size_t domain_count() const { return domains.size(); }
};

inline void validate_domains(const std::vector<DomainSpec>& domains) {
  if (domains.empty()) throw ValidationError("dataset needs at least one domain");
  for (std::size_t i = 0; i < domains.size(); ++i) {
    for (std::size_t j = i + 1; j < domains.size(); ++j)
      if (domains[i].index == domains[j].index)
        throw ValidationError("duplicate domain index " + std::to_string(domains[i].index));
    if (domains[i].index < 0 || std::size_t(domains[i].index) >= domains.size())
      throw ValidationError("domain index " + std::to_string(domains[i].index) +
                            " outside [0, N)");
  }
}

// Deterministic synthetic dataset: one blobs phantom per subject, degraded per
// its domain spec, split into train/val subjects per domain. intensity_scale
// maps the O(1) phantom values onto a PET-like intensity range so the default
// SSIM constants keep their meaning.
inline Dataset build_dataset(const std::vector<DomainSpec>& domains,
                             const std::vector<std::size_t>& subjects_per_domain,
                             const Shape& dims, std::uint64_t seed, double val_fraction = 0.25,
                             double intensity_scale = 1.0) {
  validate_domains(domains);
  if (subjects_per_domain.size() != domains.size())
    throw ValidationError("need a subject count per domain");
  if (!(val_fraction >= 0.0) || val_fraction >= 1.0)
    throw ValidationError("val_fraction must be in [0, 1)");
  if (!(intensity_scale > 0.0)) throw ValidationError("intensity_scale must be positive");

  Dataset ds;
  ds.domains = domains;
  ds.dims = dims;
  ds.seed = seed;
  for (std::size_t d = 0; d < domains.size(); ++d) {
    const std::size_t count = subjects_per_domain[d];
    if (count == 0) throw ValidationError("domain " + domains[d].name + " has no subjects");
    std::size_t val_count = std::size_t(std::lround(val_fraction * double(count)));
    if (val_fraction > 0.0 && val_count == 0) val_count = 1;
    if (val_count >= count) val_count = count - 1;

    for (std::size_t s = 0; s < count; ++s) {
      // stable per-subject stream derived from (seed, domain, subject)
      const std::uint64_t child =
          seed ^ (0x9e3779b97f4a7c15ULL * (std::uint64_t(domains[d].index) * 100003ULL +
                                           std::uint64_t(s) + 1ULL));
      Phantom ph = make_phantom(PhantomKind::Blobs, dims, child);
      if (intensity_scale != 1.0)
        for (auto& v : ph.volume.voxels.data) v *= float(intensity_scale);
      auto [short_vol, standard_vol] = synthesize_domain(ph.volume, domains[d], child + 1);
      DatasetSubject subj;
      subj.domain_index = domains[d].index;
      char sid[64];
      std::snprintf(sid, sizeof(sid), "%s_s%02zu", domains[d].name.c_str(), s);
      subj.subject_id = sid;
      subj.split = (s >= count - val_count) ? "val" : "train";
      subj.short_vol = std::move(short_vol);
      subj.standard_vol = std::move(standard_vol);
      ds.subjects.push_back(std::move(subj));
    }
  }
  return ds;
}

// Slice pairs of the requested split ("train", "val", or "all").
inline std::vector<SlicePair> slice_pairs(const Dataset& ds, const std::string& split) {
  std::vector<SlicePair> out;
  for (const auto& subj : ds.subjects) {
    if (split != "all" && subj.split != split) continue;
    const std::size_t S = subj.standard_vol.slices();
    const std::size_t H = subj.standard_vol.rows(), W = subj.standard_vol.cols();
    float vol_max = 0.0f;
    for (float v : subj.standard_vol.voxels.data) vol_max = std::max(vol_max, v);
    for (std::size_t s = 0; s < S; ++s) {
      SlicePair p;
      p.z = Tensor<float>({H, W});
      p.x = Tensor<float>({H, W});
      std::copy_n(subj.short_vol.voxels.ptr() + s * H * W, H * W, p.z.ptr());
      std::copy_n(subj.standard_vol.voxels.ptr() + s * H * W, H * W, p.x.ptr());
      p.domain_index = subj.domain_index;
      p.subject_id = subj.subject_id;
      double mean = 0.0;
      for (float v : p.x.data) mean += double(v);
      mean /= double(H * W);
      p.content_fraction = vol_max > 0.0f ? mean / double(vol_max) : 0.0;
      out.push_back(std::move(p));
    }
  }
  return out;
}

// Per-domain pair counts of the training split, ordered by domain index;
// the sizes |S_i| feeding the imbalance weights.
inline std::vector<std::int64_t> domain_train_counts(const Dataset& ds) {
  std::vector<std::int64_t> counts(ds.domains.size(), 0);
  for (const auto& subj : ds.subjects)
    if (subj.split == "train")
      counts[std::size_t(subj.domain_index)] += std::int64_t(subj.standard_vol.slices());
  return counts;
}

// ---------------------------------------------------------------------------
// Dataset persistence
// ---------------------------------------------------------------------------

inline json dataset_manifest(const Dataset& ds) {
  json m;
  m["schema_version"] = 1;
  m["kind"] = "dataset";
  m["seed"] = ds.seed;
  m["dims"] = ds.dims;
  m["domains"] = json::array();
  for (const auto& d : ds.domains) {
    json jd;
    jd["index"] = d.index;
    jd["name"] = d.name;
    jd["count_scale"] = d.count_scale;
    jd["time_fraction"] = d.time_fraction;
    jd["psf_fwhm_mm"] = d.psf_fwhm_mm;
    jd["one_hot"] = d.one_hot<float>(ds.domains.size()).data;
    m["domains"].push_back(jd);
  }
  m["subjects"] = json::array();
  for (const auto& s : ds.subjects) {
    json js;
    js["domain"] = s.domain_index;
    js["subject_id"] = s.subject_id;
    js["split"] = s.split;
    js["short"] = "volumes/" + s.subject_id + "_short";
    js["standard"] = "volumes/" + s.subject_id + "_standard";
    m["subjects"].push_back(js);
  }
  return m;
}

inline void write_dataset(const Dataset& ds, const fs::path& dir, bool force = false) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw ValidationError("output directory " + dir.string() +
                          " is not empty (pass force to overwrite)");
  fs::create_directories(dir / "volumes");
  for (const auto& s : ds.subjects) {
    save_volume(s.short_vol, dir / "volumes" / (s.subject_id + "_short"));
    save_volume(s.standard_vol, dir / "volumes" / (s.subject_id + "_standard"));
  }
  std::ofstream mf(dir / "dataset.json");
  mf << dataset_manifest(ds).dump(2) << "\n";
  if (!mf) throw IngestionError("cannot write dataset manifest to " + dir.string());
}

inline Dataset load_dataset(const fs::path& dir) {
  std::ifstream mf(dir / "dataset.json");
  if (!mf) throw IngestionError("missing dataset.json in " + dir.string());
  json m;
  try {
    mf >> m;
  } catch (const json::exception& e) {
    throw IngestionError("malformed dataset manifest: " + std::string(e.what()));
  }
  if (m.value("kind", "") != "dataset")
    throw IngestionError(dir.string() + " does not hold a dataset manifest");
  Dataset ds;
  ds.seed = m.value("seed", 0ULL);
  ds.dims = m.at("dims").get<Shape>();
  for (const auto& jd : m.at("domains")) {
    DomainSpec d;
    d.index = jd.at("index").get<int>();
    d.name = jd.at("name").get<std::string>();
    d.count_scale = jd.value("count_scale", 1.0);
    d.time_fraction = jd.value("time_fraction", 1.0);
    d.psf_fwhm_mm = jd.value("psf_fwhm_mm", 0.0);
    ds.domains.push_back(d);
  }
  validate_domains(ds.domains);
  for (const auto& js : m.at("subjects")) {
    DatasetSubject s;
    s.domain_index = js.at("domain").get<int>();
    s.subject_id = js.at("subject_id").get<std::string>();
    s.split = js.at("split").get<std::string>();
    s.short_vol = load_container(dir / js.at("short").get<std::string>());
    s.standard_vol = load_container(dir / js.at("standard").get<std::string>());
    ds.subjects.push_back(std::move(s));
  }
  return ds;
}

}  // namespace restore

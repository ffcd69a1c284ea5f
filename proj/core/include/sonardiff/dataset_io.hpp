#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <string>
#include <vector>

#include "sonardiff/scene.hpp"

namespace sonardiff {

// 8-bit binary graymap (P5). Intensities map to round(255 * clamp(v)).
void write_pgm(const std::filesystem::path& path, const Plane& img);
void write_mask_pgm(const std::filesystem::path& path, const Mask& mask);  // 0 / 255
Plane read_pgm(const std::filesystem::path& path);
Mask read_mask_pgm(const std::filesystem::path& path);

// Headerless little-endian float32, row-major. Lossless for LabeledImage
// pixels, which are float-representable by construction.
void write_f32(const std::filesystem::path& path, const Plane& img);
Plane read_f32(const std::filesystem::path& path, int height, int width);

struct ManifestEntry {
  std::string image_path;  // relative to the manifest's directory
  std::string raw_path;
  std::string mask_path;
  MineClass mine_class = MineClass::None;
  Provenance provenance = Provenance::Original;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  int width = 32;
  int height = 32;
  std::uint64_t global_seed = 0;
  std::vector<ManifestEntry> entries;
};

// Writes every image (pgm + f32 sidecar) and mask under `dir`, then
// `dir/manifest.json`. Returns the manifest that was written.
DatasetManifest save_dataset(const Dataset& ds, const std::filesystem::path& dir,
                             const std::string& stem = "img");

DatasetManifest read_manifest(const std::filesystem::path& manifest_json);

// Loads and checks: every referenced file exists and the recorded counts
// agree with the entry list.
Dataset load_dataset(const std::filesystem::path& manifest_json);

// Plain text writer that throws on failure; used by every report.
void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace sonardiff

namespace sonardiff {

// Model parameter file: one line of JSON header, then the parameters as a
// flat little-endian float32 vector. The header must carry "param_count".
void write_param_file(const std::filesystem::path& path, const std::string& header_json,
                      std::span<const double> values);
std::pair<std::string, std::vector<double>> read_param_file(const std::filesystem::path& path);

}  // namespace sonardiff

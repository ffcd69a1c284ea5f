#include "sonardiff/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sonardiff {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

void write_p5(const fs::path& path, int h, int w, const std::vector<std::uint8_t>& bytes) {
  auto out = open_out(path);
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_p5(const fs::path& path, int& h, int& w) {
  auto in = open_in(path);
  std::string magic;
  in >> magic;
  auto skip_comments = [&in] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string line;
      std::getline(in, line);
      in >> std::ws;
    }
  };
  if (magic != "P5") throw IoError("'" + path.string() + "' is not a binary PGM");
  int maxval = 0;
  skip_comments(); in >> w;
  skip_comments(); in >> h;
  skip_comments(); in >> maxval;
  in.get();
  if (!in || w <= 0 || h <= 0 || maxval != 255) throw IoError("bad PGM header in '" + path.string() + "'");
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError("truncated PGM '" + path.string() + "'");
  return bytes;
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace

void write_pgm(const fs::path& path, const Plane& img) {
  std::vector<std::uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0));
  }
  write_p5(path, img.height(), img.width(), bytes);
}

void write_mask_pgm(const fs::path& path, const Mask& mask) {
  std::vector<std::uint8_t> bytes(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 255 : 0;
  write_p5(path, mask.height(), mask.width(), bytes);
}

Plane read_pgm(const fs::path& path) {
  int h = 0, w = 0;
  auto bytes = read_p5(path, h, w);
  Plane p(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) p[i] = bytes[i] / 255.0;
  return p;
}

Mask read_mask_pgm(const fs::path& path) {
  int h = 0, w = 0;
  auto bytes = read_p5(path, h, w);
  Mask m(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) m[i] = bytes[i] >= 128 ? 1 : 0;
  return m;
}

void write_f32(const fs::path& path, const Plane& img) {
  auto out = open_out(path);
  for (double v : img.values()) {
    const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Plane read_f32(const fs::path& path, int height, int width) {
  auto in = open_in(path);
  Plane p(height, width);
  for (auto& v : p.values()) {
    std::uint32_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), sizeof bits);
    v = static_cast<double>(std::bit_cast<float>(to_le(bits)));
  }
  if (!in) throw IoError("truncated float raw file '" + path.string() + "'");
  return p;
}

namespace {

json counts_json(const std::vector<ManifestEntry>& entries) {
  json by_class = json::object(), by_prov = json::object();
  for (const auto& e : entries) {
    auto c = std::string(to_string(e.mine_class));
    auto p = std::string(to_string(e.provenance));
    by_class[c] = by_class.value(c, 0) + 1;
    by_prov[p] = by_prov.value(p, 0) + 1;
  }
  return {{"by_class", by_class}, {"by_provenance", by_prov}, {"total", entries.size()}};
}

}  // namespace

DatasetManifest save_dataset(const Dataset& ds, const fs::path& dir, const std::string& stem) {
  fs::create_directories(dir);
  DatasetManifest m;
  m.global_seed = ds.base_seed;
  if (!ds.items.empty()) {
    m.height = ds.items.front().pixels.height();
    m.width = ds.items.front().pixels.width();
  }
  json entries = json::array();
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const auto& item = ds.items[i];
    std::ostringstream name;
    name << stem << "_" << std::setw(5) << std::setfill('0') << i;
    ManifestEntry e{name.str() + ".pgm", name.str() + ".f32", name.str() + "_mask.pgm",
                    item.mine_class, item.provenance, item.seed};
    write_pgm(dir / e.image_path, item.pixels);
    write_f32(dir / e.raw_path, item.pixels);
    write_mask_pgm(dir / e.mask_path, item.mask);
    entries.push_back({{"image", e.image_path}, {"raw", e.raw_path}, {"mask", e.mask_path},
                       {"class", to_string(e.mine_class)}, {"provenance", to_string(e.provenance)},
                       {"seed", e.seed}});
    m.entries.push_back(std::move(e));
  }
  json doc = {{"width", m.width}, {"height", m.height}, {"global_seed", m.global_seed},
              {"entries", entries}, {"counts", counts_json(m.entries)}};
  write_text_file(dir / "manifest.json", doc.dump(2) + "\n");
  return m;
}

DatasetManifest read_manifest(const fs::path& manifest_json) {
  json doc;
  try {
    doc = json::parse(read_text_file(manifest_json));
  } catch (const json::exception& e) {
    throw IoError("malformed manifest '" + manifest_json.string() + "': " + e.what());
  }
  DatasetManifest m;
  m.width = doc.at("width").get<int>();
  m.height = doc.at("height").get<int>();
  m.global_seed = doc.at("global_seed").get<std::uint64_t>();
  for (const auto& e : doc.at("entries")) {
    m.entries.push_back({e.at("image").get<std::string>(), e.at("raw").get<std::string>(),
                         e.at("mask").get<std::string>(),
                         parse_mine_class(e.at("class").get<std::string>()),
                         parse_provenance(e.at("provenance").get<std::string>()),
                         e.at("seed").get<std::uint64_t>()});
  }
  if (doc.contains("counts") && doc.at("counts") != counts_json(m.entries)) {
    throw IoError("manifest counts do not match its entry list: " + manifest_json.string());
  }
  return m;
}

Dataset load_dataset(const fs::path& manifest_json) {
  const auto m = read_manifest(manifest_json);
  const fs::path dir = manifest_json.parent_path();
  Dataset ds;
  ds.base_seed = m.global_seed;
  for (const auto& e : m.entries) {
    for (const auto* p : {&e.image_path, &e.raw_path, &e.mask_path}) {
      if (!fs::exists(dir / *p)) throw IoError("manifest references missing file '" + (dir / *p).string() + "'");
    }
    LabeledImage img;
    img.pixels = read_f32(dir / e.raw_path, m.height, m.width);
    img.mask = read_mask_pgm(dir / e.mask_path);
    img.mine_class = e.mine_class;
    img.provenance = e.provenance;
    img.seed = e.seed;
    ds.items.push_back(std::move(img));
  }
  return ds;
}

void write_text_file(const fs::path& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text_file(const fs::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace sonardiff

namespace sonardiff {

void write_param_file(const fs::path& path, const std::string& header_json,
                      std::span<const double> values) {
  json header = json::parse(header_json);
  if (header.value("param_count", std::size_t{0}) != values.size()) {
    throw InvalidArgument("write_param_file: header param_count disagrees with data");
  }
  auto out = open_out(path);
  out << header.dump() << '\n';
  for (double v : values) {
    const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::pair<std::string, std::vector<double>> read_param_file(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty parameter file '" + path.string() + "'");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw IoError("bad parameter header in '" + path.string() + "': " + e.what());
  }
  const auto n = header.at("param_count").get<std::size_t>();
  std::vector<double> values(n);
  for (auto& v : values) {
    std::uint32_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), sizeof bits);
    v = static_cast<double>(std::bit_cast<float>(to_le(bits)));
  }
  if (!in) throw IoError("truncated parameter file '" + path.string() + "'");
  return {line, std::move(values)};
}

}  // namespace sonardiff

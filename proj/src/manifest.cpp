#include <fstream>
#include <set>
#include <sstream>

#include "lucenet/error.hpp"
#include "lucenet/synth.hpp"

namespace lucenet {

namespace {

constexpr std::string_view kManifestHeader = "path,label,id";

FormatError manifest_error(const std::filesystem::path& path, std::size_t line,
                           const std::string& what) {
  return FormatError(FormatError::Kind::malformed,
                     path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

void write_manifest(const std::vector<ManifestRecord>& records, const std::filesystem::path& path) {
  std::set<std::string> seen;
  std::ostringstream os;
  os << kManifestHeader << "\n";
  for (const auto& r : records) {
    if (r.path.find_first_of(",\n\r") != std::string::npos ||
        r.id.find_first_of(",\n\r") != std::string::npos || r.path.empty() || r.id.empty()) {
      throw ConfigError("manifest fields must be non-empty and free of commas/newlines: " + r.path);
    }
    if (!seen.insert(r.path).second) throw ConfigError("duplicate manifest path " + r.path);
    os << r.path << "," << label_name(r.label) << "," << r.id << "\n";
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path.string() + " for writing");
  f << os.str();
  if (!f) throw FormatError(FormatError::Kind::io, "write to " + path.string() + " failed");
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInputError(path.string() + " does not exist");
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  if (!std::getline(f, line)) throw manifest_error(path, 1, "empty manifest");
  ++number;
  if (line != kManifestHeader) {
    throw manifest_error(path, number, "header must be exactly '" + std::string(kManifestHeader) + "'");
  }
  std::vector<ManifestRecord> records;
  std::set<std::string> paths, ids;
  while (std::getline(f, line)) {
    ++number;
    if (line.empty()) throw manifest_error(path, number, "empty line");
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.emplace_back();
    if (fields.size() != 3) {
      throw manifest_error(path, number, "expected 3 fields, found " + std::to_string(fields.size()));
    }
    ManifestRecord r;
    r.path = fields[0];
    r.id = fields[2];
    if (r.path.empty() || r.id.empty()) throw manifest_error(path, number, "empty path or id");
    try {
      r.label = parse_label(fields[1]);
    } catch (const FormatError& e) {
      throw manifest_error(path, number, e.what());
    }
    if (!paths.insert(r.path).second) throw manifest_error(path, number, "duplicate path " + r.path);
    if (!ids.insert(r.id).second) throw manifest_error(path, number, "duplicate id " + r.id);
    records.push_back(std::move(r));
  }
  return records;
}

std::filesystem::path save_dataset(const std::vector<SampleImage>& samples,
                                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::vector<ManifestRecord> records;
  records.reserve(samples.size());
  for (const auto& s : samples) {
    const std::string rel = "images/" + s.id + ".pgm";
    save_pgm(s.pixels, dir / rel);
    if (s.lucency_mask) {
      std::filesystem::create_directories(dir / "masks");
      save_mask(*s.lucency_mask, dir / "masks" / (s.id + "_mask.pgm"));
    }
    records.push_back({rel, s.label, s.id});
  }
  const auto manifest = dir / "manifest.csv";
  write_manifest(records, manifest);
  return manifest;
}

std::vector<SampleImage> load_dataset(const std::filesystem::path& manifest) {
  const auto base = manifest.parent_path();
  std::vector<SampleImage> out;
  for (auto& r : read_manifest(manifest)) {
    SampleImage s;
    s.pixels = load_pgm(base / r.path);
    s.label = r.label;
    s.id = r.id;
    const auto mask = base / "masks" / (r.id + "_mask.pgm");
    if (std::filesystem::exists(mask)) {
      s.lucency_mask = load_mask(mask);
      if (s.lucency_mask->height != s.pixels.height || s.lucency_mask->width != s.pixels.width) {
        throw FormatError(FormatError::Kind::shape_mismatch, mask.string() + ": mask shape differs from image");
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace lucenet

#include "lucenet/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace lucenet {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      parts.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return parts;
}

std::uint64_t parse_u64(std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty() || !std::isfinite(out)) {
    throw ConfigError("expected a finite number, got '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

Range parse_range(std::string_view v) {
  const auto parts = split(v, ',');
  if (parts.size() != 2) throw ConfigError("expected lo,hi, got '" + std::string(v) + "'");
  return {parse_double(parts[0]), parse_double(parts[1])};
}

std::vector<std::size_t> parse_sizes(std::string_view v) {
  std::vector<std::size_t> out;
  if (v.empty()) return out;
  for (auto p : split(v, ',')) out.push_back(parse_u64(p));
  return out;
}

std::string fmt_double(double v) { return fmt::format("{}", v); }
std::string fmt_range(const Range& r) { return fmt_double(r.lo) + "," + fmt_double(r.hi); }
std::string fmt_sizes(const std::vector<std::size_t>& v) { return fmt::format("{}", fmt::join(v, ",")); }
std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Entry {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Entry size_entry(Member member) {
  return {[=](RunConfig& c, std::string_view v) { std::invoke(member, c) = parse_u64(v); },
          [=](const RunConfig& c) { return std::to_string(std::invoke(member, c)); }};
}

template <typename Member>
Entry double_entry(Member member) {
  return {[=](RunConfig& c, std::string_view v) { std::invoke(member, c) = parse_double(v); },
          [=](const RunConfig& c) { return fmt_double(std::invoke(member, c)); }};
}

template <typename Member>
Entry bool_entry(Member member) {
  return {[=](RunConfig& c, std::string_view v) { std::invoke(member, c) = parse_bool(v); },
          [=](const RunConfig& c) { return fmt_bool(std::invoke(member, c)); }};
}

template <typename Member>
Entry range_entry(Member member) {
  return {[=](RunConfig& c, std::string_view v) { std::invoke(member, c) = parse_range(v); },
          [=](const RunConfig& c) { return fmt_range(std::invoke(member, c)); }};
}

template <typename Member>
Entry path_entry(Member member) {
  return {[=](RunConfig& c, std::string_view v) { std::invoke(member, c) = std::filesystem::path(v); },
          [=](const RunConfig& c) { return std::invoke(member, c).string(); }};
}

template <typename Member>
Entry sizes_entry(Member member) {
  return {[=](RunConfig& c, std::string_view v) { std::invoke(member, c) = parse_sizes(v); },
          [=](const RunConfig& c) { return fmt_sizes(std::invoke(member, c)); }};
}

// Accessors for nested members, so the table can use plain callables.
#define LUCENET_FIELD(path) [](auto& c) -> auto& { return c.path; }

const std::map<std::string, Entry, std::less<>>& table() {
  static const std::map<std::string, Entry, std::less<>> entries = [] {
    std::map<std::string, Entry, std::less<>> t;
    t["seed"] = {[](RunConfig& c, std::string_view v) { c.seed = parse_u64(v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }};
    t["jobs"] = size_entry(LUCENET_FIELD(jobs));
    t["out"] = path_entry(LUCENET_FIELD(out));
    t["data.manifest"] = path_entry(LUCENET_FIELD(manifest));

    t["synth.image_size"] = size_entry(LUCENET_FIELD(synth.image_size));
    t["synth.loose_count"] = size_entry(LUCENET_FIELD(synth.loose_count));
    t["synth.well_fixed_count"] = size_entry(LUCENET_FIELD(synth.well_fixed_count));
    t["synth.stem_length"] = range_entry(LUCENET_FIELD(synth.stem_length));
    t["synth.stem_width"] = range_entry(LUCENET_FIELD(synth.stem_width));
    t["synth.stem_taper"] = range_entry(LUCENET_FIELD(synth.stem_taper));
    t["synth.stem_angle_deg"] = range_entry(LUCENET_FIELD(synth.stem_angle_deg));
    t["synth.cup_radius"] = range_entry(LUCENET_FIELD(synth.cup_radius));
    t["synth.texture_scale"] = double_entry(LUCENET_FIELD(synth.texture_scale));
    t["synth.pixel_noise"] = double_entry(LUCENET_FIELD(synth.pixel_noise));
    t["synth.lucency_width"] = range_entry(LUCENET_FIELD(synth.lucency_width));
    t["synth.lucency_contrast"] = range_entry(LUCENET_FIELD(synth.lucency_contrast));

    t["augment.enabled"] = bool_entry(LUCENET_FIELD(train.augment_enabled));
    t["augment.rotation_deg"] = double_entry(LUCENET_FIELD(train.augment.rotation_deg));
    t["augment.scale_delta"] = double_entry(LUCENET_FIELD(train.augment.scale_delta));
    t["augment.translate_frac"] = double_entry(LUCENET_FIELD(train.augment.translate_frac));
    t["augment.intensity_jitter"] = double_entry(LUCENET_FIELD(train.augment.intensity_jitter));

    t["pretext.image_size"] = size_entry(LUCENET_FIELD(pretext.data.image_size));
    t["pretext.count"] = size_entry(LUCENET_FIELD(pretext.data.count));
    t["pretext.texture_scale"] = double_entry(LUCENET_FIELD(pretext.data.texture_scale));
    t["pretext.pixel_noise"] = double_entry(LUCENET_FIELD(pretext.data.pixel_noise));
    t["pretext.band_width"] = range_entry(LUCENET_FIELD(pretext.data.band_width));
    t["pretext.band_contrast"] = range_entry(LUCENET_FIELD(pretext.data.band_contrast));
    t["pretext.holdout_fraction"] = double_entry(LUCENET_FIELD(pretext.holdout_fraction));
    t["pretext.epochs"] = size_entry(LUCENET_FIELD(pretext.epochs));
    t["pretext.batch_size"] = size_entry(LUCENET_FIELD(pretext.batch_size));
    t["pretext.lr"] = double_entry(LUCENET_FIELD(pretext.lr));
    t["pretext.fan_in_init"] = bool_entry(LUCENET_FIELD(pretext.fan_in_init));
    t["pretext.init_stddev"] = double_entry(LUCENET_FIELD(pretext.init_stddev));
    t["pretext.warn_accuracy"] = double_entry(LUCENET_FIELD(pretext.warn_accuracy));

    t["model.input_size"] = size_entry(LUCENET_FIELD(model.input_size));
    t["model.stem_filters"] = size_entry(LUCENET_FIELD(model.stem_filters));
    t["model.growth_rate"] = size_entry(LUCENET_FIELD(model.growth_rate));
    t["model.block_layout"] = sizes_entry(LUCENET_FIELD(model.block_layout));
    t["model.compression"] = double_entry(LUCENET_FIELD(model.compression));
    t["model.kernel_size"] = size_entry(LUCENET_FIELD(model.kernel_size));
    t["model.head_dims"] = sizes_entry(LUCENET_FIELD(model.head_dims));
    t["model.head_dropout"] = double_entry(LUCENET_FIELD(model.head_dropout));
    t["model.head_override"] = bool_entry(LUCENET_FIELD(model.head_override));
    t["model.init_stddev"] = double_entry(LUCENET_FIELD(init_stddev));

    t["train.epochs"] = size_entry(LUCENET_FIELD(train.epochs));
    t["train.batch_size"] = size_entry(LUCENET_FIELD(train.batch_size));
    t["train.lr"] = double_entry(LUCENET_FIELD(train.lr));
    t["train.regime"] = {[](RunConfig& c, std::string_view v) {
                           if (v != "both") parse_regime(v);
                           c.regime = std::string(v);
                         },
                         [](const RunConfig& c) { return c.regime; }};

    t["cv.k"] = size_entry(LUCENET_FIELD(k));
    t["cv.stratified"] = bool_entry(LUCENET_FIELD(stratified));
    t["cv.backbone"] = path_entry(LUCENET_FIELD(backbone));
    t["cv.probe_epochs"] = sizes_entry(LUCENET_FIELD(probe_epochs));
    t["cv.reader_name"] = {[](RunConfig& c, std::string_view v) { c.reader_name = std::string(v); },
                           [](const RunConfig& c) { return c.reader_name; }};
    t["cv.reader_counts"] = {[](RunConfig& c, std::string_view v) {
                               const auto n = parse_sizes(v);
                               if (n.empty()) {
                                 c.reader.reset();
                                 return;
                               }
                               if (n.size() != 4) throw ConfigError("expected tp,fp,tn,fn");
                               c.reader = ConfusionCounts{n[0], n[1], n[2], n[3]};
                             },
                             [](const RunConfig& c) {
                               if (!c.reader) return std::string();
                               const auto& r = *c.reader;
                               return fmt::format("{},{},{},{}", r.tp, r.fp, r.tn, r.fn);
                             }};

    t["saliency.checkpoint"] = path_entry(LUCENET_FIELD(saliency_checkpoint));
    t["saliency.image"] = path_entry(LUCENET_FIELD(saliency_image));

    t["filters.checkpoint"] = path_entry(LUCENET_FIELD(filters_checkpoint));
    t["filters.layer"] = {[](RunConfig& c, std::string_view v) { c.filters_layer = std::string(v); },
                          [](const RunConfig& c) { return c.filters_layer; }};
    t["filters.steps"] = size_entry(LUCENET_FIELD(ascent.steps));
    t["filters.step_size"] = double_entry(LUCENET_FIELD(ascent.step_size));
    t["filters.max_halvings"] = size_entry(LUCENET_FIELD(ascent.max_halvings));
    t["filters.weight_decay"] = double_entry(LUCENET_FIELD(ascent.weight_decay));
    t["filters.direction"] = double_entry(LUCENET_FIELD(ascent.direction));
    return t;
  }();
  return entries;
}

#undef LUCENET_FIELD

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto it = table().find(key);
  if (it == table().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  try {
    it->second.set(*this, value);
  } catch (const ConfigError& e) {
    throw ConfigError("bad value for '" + std::string(key) + "': " + e.what());
  }
}

std::string RunConfig::get(std::string_view key) const {
  const auto it = table().find(key);
  if (it == table().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second.get(*this);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, _] : table()) n.push_back(k);
    return n;
  }();
  return names;
}

std::string RunConfig::resolved() const {
  std::string out;
  for (const auto& [key, entry] : table()) out += key + "=" + entry.get(*this) + "\n";
  return out;
}

std::filesystem::path RunConfig::backbone_path() const {
  return backbone.empty() ? out / "backbone.ckpt" : backbone;
}

RunConfig RunConfig::parse(std::string_view text, std::string_view origin) {
  RunConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t number = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++number;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto where = fmt::format("{}:{}: ", origin, number);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key=value");
    const auto key = trim(line.substr(0, eq));
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError(where + "config key '" + std::string(key) + "' given twice");
    }
    try {
      config.set(key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInputError("config file " + path.string() + " does not exist");
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  std::ostringstream text;
  text << f.rdbuf();
  return parse(text.str(), path.string());
}

}  // namespace lucenet

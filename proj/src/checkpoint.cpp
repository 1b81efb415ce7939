#include "lucenet/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace lucenet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

using Kind = FormatError::Kind;

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string join(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

std::string scope_name(CheckpointScope s) { return s == CheckpointScope::full ? "full" : "backbone"; }

void put_u32(std::vector<char>& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

void put_string(std::vector<char>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

  const char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(Kind::truncated_payload, std::string("truncated payload while reading ") +
                                                     what + " at byte " + std::to_string(pos_));
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    std::memcpy(&v, take(4, what), 4);
    return v;
  }
  std::string string(const char* what) {
    auto n = u32(what);
    const char* p = take(n, what);
    return std::string(p, n);
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t position() const { return pos_; }

 private:
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) {
    throw FormatError(Kind::malformed, "checkpoint metadata " + key + ": bad integer '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) {
    throw FormatError(Kind::malformed, "checkpoint metadata " + key + ": bad number '" + v + "'");
  }
  return out;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, item));
  return out;
}

}  // namespace

std::vector<char> encode_checkpoint(const Model& model, CheckpointScope scope) {
  const auto& c = model.config();
  const auto& p = model.provenance();
  std::size_t count = 0;
  for (const auto& param : model.parameters()) {
    count += scope == CheckpointScope::full || param.group == ParamGroup::backbone;
  }

  std::ostringstream meta;
  meta << "format_version=" << kCheckpointVersion << "\n"
       << "scope=" << scope_name(scope) << "\n"
       << "config.input_size=" << c.input_size << "\n"
       << "config.stem_filters=" << c.stem_filters << "\n"
       << "config.growth_rate=" << c.growth_rate << "\n"
       << "config.block_layout=" << join(c.block_layout) << "\n"
       << "config.compression=" << format_double(c.compression) << "\n"
       << "config.kernel_size=" << c.kernel_size << "\n"
       << "config.head_dims=" << join(c.head_dims) << "\n"
       << "config.head_dropout=" << format_double(c.head_dropout) << "\n"
       << "config.head_override=" << (c.head_override ? 1 : 0) << "\n"
       << "provenance.seed=" << p.seed << "\n"
       << "provenance.init=" << p.init << "\n"
       << "provenance.init_std=" << format_double(p.init_std) << "\n"
       << "provenance.regime=" << p.regime << "\n"
       << "provenance.epochs_completed=" << p.epochs_completed << "\n"
       << "parameters=" << count << "\n";

  std::vector<char> out(kCheckpointMagic, kCheckpointMagic + 8);
  put_string(out, meta.str());
  for (const auto& param : model.parameters()) {
    if (scope == CheckpointScope::backbone && param.group != ParamGroup::backbone) continue;
    put_string(out, param.name);
    put_u32(out, static_cast<std::uint32_t>(param.value.rank()));
    for (auto d : param.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    const auto data = param.value.data();
    const char* raw = reinterpret_cast<const char*>(data.data());
    out.insert(out.end(), raw, raw + data.size() * sizeof(float));
  }
  return out;
}

CheckpointContents decode_checkpoint(const std::vector<char>& bytes) {
  if (bytes.size() < 8) {
    throw FormatError(Kind::truncated_payload, "truncated payload: file shorter than the magic");
  }
  if (std::memcmp(bytes.data(), kCheckpointMagic, 7) != 0) {
    throw FormatError(Kind::bad_magic, "not a checkpoint: bad magic");
  }
  if (bytes[7] != kCheckpointMagic[7]) {
    throw FormatError(Kind::version_mismatch, std::string("version mismatch: file version '") +
                                                  bytes[7] + "', reader supports '" +
                                                  kCheckpointMagic[7] + "'");
  }
  Reader in(bytes);
  in.take(8, "magic");
  std::map<std::string, std::string> meta;
  {
    std::stringstream ss(in.string("metadata"));
    std::string line;
    while (std::getline(ss, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw FormatError(Kind::malformed, "checkpoint metadata line without '=': " + line);
      }
      meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw FormatError(Kind::malformed, "checkpoint metadata lacks " + key);
    return it->second;
  };
  if (get("format_version") != std::to_string(kCheckpointVersion)) {
    throw FormatError(Kind::version_mismatch,
                      "version mismatch: metadata format_version=" + get("format_version"));
  }

  CheckpointContents out;
  const auto& scope = get("scope");
  if (scope == "full") {
    out.scope = CheckpointScope::full;
  } else if (scope == "backbone") {
    out.scope = CheckpointScope::backbone;
  } else {
    throw FormatError(Kind::malformed, "unknown checkpoint scope '" + scope + "'");
  }
  auto& c = out.config;
  c.input_size = parse_size("config.input_size", get("config.input_size"));
  c.stem_filters = parse_size("config.stem_filters", get("config.stem_filters"));
  c.growth_rate = parse_size("config.growth_rate", get("config.growth_rate"));
  c.block_layout = parse_list("config.block_layout", get("config.block_layout"));
  c.compression = parse_double("config.compression", get("config.compression"));
  c.kernel_size = parse_size("config.kernel_size", get("config.kernel_size"));
  c.head_dims = parse_list("config.head_dims", get("config.head_dims"));
  c.head_dropout = parse_double("config.head_dropout", get("config.head_dropout"));
  c.head_override = parse_size("config.head_override", get("config.head_override")) != 0;
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(Kind::malformed, std::string("checkpoint carries an invalid config: ") + e.what());
  }
  auto& p = out.provenance;
  p.seed = parse_size("provenance.seed", get("provenance.seed"));
  p.init = get("provenance.init");
  p.init_std = parse_double("provenance.init_std", get("provenance.init_std"));
  p.regime = get("provenance.regime");
  p.epochs_completed = parse_size("provenance.epochs_completed", get("provenance.epochs_completed"));

  std::map<std::string, Shape> expected;
  for (const auto& spec : parameter_specs(c)) {
    if (out.scope == CheckpointScope::full || spec.group == ParamGroup::backbone) {
      expected.emplace(spec.name, spec.shape);
    }
  }
  const auto count = parse_size("parameters", get("parameters"));
  if (count != expected.size()) {
    throw FormatError(Kind::shape_mismatch, "checkpoint lists " + std::to_string(count) +
                                                " parameters, config implies " +
                                                std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    auto name = in.string("parameter name");
    auto it = expected.find(name);
    if (it == expected.end()) {
      throw FormatError(Kind::malformed, "checkpoint contains unknown parameter '" + name + "'");
    }
    Shape shape(in.u32("rank"));
    for (auto& d : shape) d = in.u32("dims");
    if (shape != it->second) {
      throw FormatError(Kind::shape_mismatch, "parameter " + name + " stored with shape " +
                                                  shape_string(shape) + ", config implies " +
                                                  shape_string(it->second));
    }
    std::vector<float> values(shape_numel(shape));
    std::memcpy(values.data(), in.take(values.size() * sizeof(float), "parameter payload"),
                values.size() * sizeof(float));
    out.parameters.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!in.done()) {
    throw FormatError(Kind::malformed, "checkpoint has " +
                                           std::to_string(bytes.size() - in.position()) +
                                           " trailing bytes");
  }
  return out;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, CheckpointScope scope) {
  const auto bytes = encode_checkpoint(model, scope);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(Kind::io, "cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError(Kind::io, "write to " + path.string() + " failed");
}

CheckpointContents read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingInputError("checkpoint " + path.string() + " does not exist");
  }
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(Kind::io, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

Model load_checkpoint(const std::filesystem::path& path) {
  auto contents = read_checkpoint(path);
  if (contents.scope != CheckpointScope::full) {
    throw FormatError(Kind::config_mismatch,
                      path.string() + " holds only backbone weights; build a model from it with a "
                                      "checkpoint initializer");
  }
  Model model(contents.config);
  for (auto& [name, value] : contents.parameters) {
    auto src = value.data();
    std::copy(src.begin(), src.end(), model.parameter(name).mutable_data().begin());
  }
  model.provenance() = contents.provenance;
  return model;
}

}  // namespace lucenet

#include "lucenet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "lucenet/error.hpp"

namespace lucenet {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

using Kind = FormatError::Kind;

unsigned char quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

std::vector<char> encode(char kind, std::size_t h, std::size_t w, const std::vector<float>& values) {
  if (h == 0 || w == 0) throw ShapeError("cannot encode an empty image");
  const std::string header = std::string("P") + kind + "\n" + std::to_string(w) + " " +
                             std::to_string(h) + "\n255\n";
  std::vector<char> out(header.begin(), header.end());
  out.reserve(out.size() + values.size());
  for (float v : values) out.push_back(static_cast<char>(quantize(v)));
  return out;
}

struct Header {
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 0;
  std::size_t payload_offset = 0;
};

// Header tokens are separated by whitespace; '#' starts a comment running to
// end of line. Exactly one whitespace byte follows maxval.
Header parse_header(const std::vector<char>& bytes, char kind) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != kind) {
    throw FormatError(Kind::bad_magic, std::string("bad magic: expected P") + kind);
  }
  std::size_t pos = 2;
  auto next_number = [&](const char* what) -> std::size_t {
    for (;;) {
      if (pos >= bytes.size()) {
        throw FormatError(Kind::truncated_payload, std::string("truncated header before ") + what);
      }
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (value > (1u << 24)) throw FormatError(Kind::malformed, std::string(what) + " too large");
      ++pos;
      ++digits;
    }
    if (digits == 0) throw FormatError(Kind::malformed, std::string("bad ") + what + " in header");
    return value;
  };
  Header h;
  h.width = next_number("width");
  h.height = next_number("height");
  const auto maxval = next_number("maxval");
  if (h.width == 0 || h.height == 0) throw FormatError(Kind::malformed, "zero image dimension");
  if (maxval == 0 || maxval > 255) {
    throw FormatError(Kind::malformed, "maxval " + std::to_string(maxval) + " is not 8-bit");
  }
  h.maxval = static_cast<unsigned>(maxval);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError(Kind::malformed, "missing whitespace after maxval");
  }
  h.payload_offset = pos + 1;
  return h;
}

std::vector<float> decode_payload(const std::vector<char>& bytes, const Header& h,
                                  std::size_t channels) {
  const std::size_t expected = h.width * h.height * channels;
  const std::size_t available = bytes.size() - h.payload_offset;
  if (available < expected) {
    throw FormatError(Kind::truncated_payload, "truncated payload: " + std::to_string(available) +
                                                   " of " + std::to_string(expected) + " bytes");
  }
  if (available > expected) {
    throw FormatError(Kind::malformed,
                      std::to_string(available - expected) + " bytes after the pixel payload");
  }
  std::vector<float> values(expected);
  const float scale = static_cast<float>(h.maxval);
  for (std::size_t i = 0; i < expected; ++i) {
    const auto b = static_cast<unsigned char>(bytes[h.payload_offset + i]);
    if (b > h.maxval) throw FormatError(Kind::malformed, "sample exceeds maxval");
    values[i] = static_cast<float>(b) / scale;
  }
  return values;
}

std::vector<char> read_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInputError(path.string() + " does not exist");
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(Kind::io, "cannot open " + path.string());
  return std::vector<char>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_file(const std::vector<char>& bytes, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(Kind::io, "cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError(Kind::io, "write to " + path.string() + " failed");
}

template <typename F>
auto with_path(const std::filesystem::path& path, F&& f) {
  try {
    return f();
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<char> encode_pgm(const GrayImage& image) {
  if (image.pixels.size() != image.height * image.width) {
    throw ShapeError("gray image pixel count does not match its dimensions");
  }
  return encode('5', image.height, image.width, image.pixels);
}

GrayImage decode_pgm(const std::vector<char>& bytes) {
  const auto h = parse_header(bytes, '5');
  GrayImage image;
  image.height = h.height;
  image.width = h.width;
  image.pixels = decode_payload(bytes, h, 1);
  return image;
}

std::vector<char> encode_ppm(const RgbImage& image) {
  if (image.pixels.size() != 3 * image.height * image.width) {
    throw ShapeError("color image sample count does not match its dimensions");
  }
  return encode('6', image.height, image.width, image.pixels);
}

RgbImage decode_ppm(const std::vector<char>& bytes) {
  const auto h = parse_header(bytes, '6');
  RgbImage image;
  image.height = h.height;
  image.width = h.width;
  image.pixels = decode_payload(bytes, h, 3);
  return image;
}

void save_pgm(const GrayImage& image, const std::filesystem::path& path) {
  write_file(encode_pgm(image), path);
}

GrayImage load_pgm(const std::filesystem::path& path) {
  return with_path(path, [&] { return decode_pgm(read_file(path)); });
}

void save_ppm(const RgbImage& image, const std::filesystem::path& path) {
  write_file(encode_ppm(image), path);
}

RgbImage load_ppm(const std::filesystem::path& path) {
  return with_path(path, [&] { return decode_ppm(read_file(path)); });
}

void save_mask(const Mask& mask, const std::filesystem::path& path) {
  GrayImage g(mask.height, mask.width);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) g.pixels[i] = mask.bits[i] ? 1.0f : 0.0f;
  save_pgm(g, path);
}

Mask load_mask(const std::filesystem::path& path) {
  const GrayImage g = load_pgm(path);
  Mask m(g.height, g.width);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    if (g.pixels[i] != 0.0f && g.pixels[i] != 1.0f) {
      throw FormatError(Kind::malformed, path.string() + ": mask values must be 0 or 255");
    }
    m.bits[i] = g.pixels[i] == 1.0f;
  }
  return m;
}

}  // namespace lucenet

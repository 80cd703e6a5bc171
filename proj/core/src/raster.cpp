#include "gkmvlp/raster.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include "gkmvlp/errors.hpp"

namespace gkmvlp {
namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(const std::vector<char>& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    tok += bytes[pos++];
  }
  return tok;
}

int parse_dim(const std::string& tok, const std::filesystem::path& path) {
  try {
    const int v = std::stoi(tok);
    if (v <= 0) throw std::invalid_argument("non-positive");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("bad PGM header in " + path.string());
  }
}

Image decode_pgm(const std::vector<char>& bytes, const std::filesystem::path& path) {
  std::size_t pos = 0;
  const std::string magic = pnm_token(bytes, pos);
  const int width = parse_dim(pnm_token(bytes, pos), path);
  const int height = parse_dim(pnm_token(bytes, pos), path);
  const int maxval = parse_dim(pnm_token(bytes, pos), path);
  if (maxval > 255) throw ValidationError("only 8-bit PGM is supported: " + path.string());
  Image image(height, width);
  if (magic == "P5") {
    ++pos;  // single whitespace after maxval
    const std::size_t need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bytes.size() < pos + need) throw ValidationError("truncated PGM: " + path.string());
    for (std::size_t i = 0; i < need; ++i) {
      image.data()[i] = static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) / maxval;
    }
  } else if (magic == "P2") {
    for (Eigen::Index i = 0; i < image.size(); ++i) {
      const std::string tok = pnm_token(bytes, pos);
      if (tok.empty()) throw ValidationError("truncated PGM: " + path.string());
      image.data()[i] = static_cast<double>(std::stoi(tok)) / maxval;
    }
  } else {
    throw ValidationError("not a PGM file: " + path.string());
  }
  return image;
}

Image decode_png(const std::vector<char>& bytes, const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()) == 0) {
    throw ValidationError("cannot read PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr) == 0) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw ValidationError("cannot decode PNG " + path.string() + ": " + msg);
  }
  Image image(static_cast<Eigen::Index>(png.height), static_cast<Eigen::Index>(png.width));
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    image.data()[i] = static_cast<double>(buffer[static_cast<std::size_t>(i)]) / 255.0;
  }
  return image;
}

}  // namespace

Image quantize_8bit(const Image& image) {
  Image out(image.rows(), image.cols());
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    out.data()[i] = static_cast<double>(to_byte(image.data()[i])) / 255.0;
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
  std::vector<char> row(static_cast<std::size_t>(image.size()));
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    row[static_cast<std::size_t>(i)] = static_cast<char>(to_byte(image.data()[i]));
  }
  os.write(row.data(), static_cast<std::streamsize>(row.size()));
  if (!os) throw ValidationError("failed writing " + path.string());
}

Image read_image(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open image " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  static constexpr unsigned char kPngMagic[] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::equal(std::begin(kPngMagic), std::end(kPngMagic), bytes.begin(),
                                      [](unsigned char a, char b) { return a == static_cast<unsigned char>(b); })) {
    return decode_png(bytes, path);
  }
  return decode_pgm(bytes, path);
}

}  // namespace gkmvlp

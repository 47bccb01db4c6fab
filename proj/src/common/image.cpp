#include "ponnet/common/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ponnet {
namespace {

std::string describe(const std::filesystem::path& path, const std::string& what) {
  return path.string() + ": " + what;
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string token;
  while (in) {
    const int c = in.get();
    if (c == EOF) break;
    if (c == '#') {
      std::string discard;
      std::getline(in, discard);
      if (!token.empty()) break;
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  return token;
}

struct PnmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
};

PnmHeader read_header(std::istream& in, const std::filesystem::path& path) {
  PnmHeader h;
  h.magic = header_token(in);
  try {
    h.width = std::stoi(header_token(in));
    h.height = std::stoi(header_token(in));
    h.maxval = std::stoi(header_token(in));
  } catch (const std::exception&) {
    throw ImageIoError(describe(path, "malformed PNM header"));
  }
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535) {
    throw ImageIoError(describe(path, "invalid PNM dimensions or maxval"));
  }
  return h;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError(describe(path, "cannot open for writing"));
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError(describe(path, "cannot open for reading"));
  return in;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  if (image.channels != 3) throw ImageIoError(describe(path, "PPM needs 3 channels"));
  auto out = open_out(path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data.data()),
            static_cast<std::streamsize>(image.data.size()));
  if (!out) throw ImageIoError(describe(path, "write failed"));
}

RgbImage read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto h = read_header(in, path);
  if (h.magic != "P6" || h.maxval != 255) {
    throw ImageIoError(describe(path, "expected binary P6 with maxval 255"));
  }
  RgbImage image(h.width, h.height, 3);
  in.read(reinterpret_cast<char*>(image.data.data()),
          static_cast<std::streamsize>(image.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.data.size())) {
    throw ImageIoError(describe(path, "truncated pixel data"));
  }
  return image;
}

void write_depth_pgm(const std::filesystem::path& path, const DepthImage& depth) {
  if (depth.channels != 1) throw ImageIoError(describe(path, "depth must be 1 channel"));
  auto out = open_out(path);
  out << "P5\n" << depth.width << ' ' << depth.height << "\n65535\n";
  std::vector<char> bytes(depth.data.size() * 2);
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    const float meters = depth.data[i];
    long mm = 0;
    if (std::isfinite(meters) && meters > 0.0f) {
      mm = std::lround(static_cast<double>(meters) * 1000.0);
      mm = std::min(mm, 65535L);
    }
    bytes[2 * i] = static_cast<char>((mm >> 8) & 0xff);
    bytes[2 * i + 1] = static_cast<char>(mm & 0xff);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageIoError(describe(path, "write failed"));
}

DepthImage read_depth_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto h = read_header(in, path);
  if (h.magic != "P5" || h.maxval != 65535) {
    throw ImageIoError(describe(path, "expected binary P5 with maxval 65535"));
  }
  DepthImage depth(h.width, h.height, 1);
  std::vector<unsigned char> bytes(depth.data.size() * 2);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw ImageIoError(describe(path, "truncated pixel data"));
  }
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    const unsigned mm = (static_cast<unsigned>(bytes[2 * i]) << 8) | bytes[2 * i + 1];
    depth.data[i] = static_cast<float>(mm) / 1000.0f;
  }
  return depth;
}

}  // namespace ponnet

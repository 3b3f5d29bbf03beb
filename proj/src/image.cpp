#include "sickfuse/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "sickfuse/errors.hpp"

namespace sickfuse {

Plane<float> to_gray(const RgbImage& image) {
  Plane<float> out(image.width, image.height);
  for (std::size_t i = 0; i < image.width * image.height; ++i) {
    const std::uint8_t* p = image.pixels.data() + i * 3;
    out.data[i] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Plane<double>& intensity) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << intensity.width << " " << intensity.height << "\n255\n";
  for (double v : intensity.data) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(c * 255.0))));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Plane<std::uint8_t> read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingStreamError("cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255 || w == 0 || h == 0) throw ParseError("not an 8-bit P5 image: " + path.string());
  in.get();
  Plane<std::uint8_t> out(w, h);
  if (!in.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(w * h))) {
    throw ParseError("truncated PGM: " + path.string());
  }
  return out;
}

}  // namespace sickfuse

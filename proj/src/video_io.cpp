#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>

#include "v2eg/conditioning.hpp"
#include "v2eg/errors.hpp"

namespace v2eg {

namespace fs = std::filesystem;

namespace {

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

// Next header token of a PPM, skipping whitespace and comments.
std::string ppm_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

std::vector<std::uint8_t> read_ppm(const std::string& path, std::size_t& height, std::size_t& width) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot open " + path);
  if (ppm_token(is) != "P6") throw IngestionError(path + ": not a binary PPM (P6)");
  try {
    width = std::stoul(ppm_token(is));
    height = std::stoul(ppm_token(is));
    if (std::stoul(ppm_token(is)) != 255) throw IngestionError(path + ": only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw IngestionError(path + ": malformed PPM header");
  }
  std::vector<std::uint8_t> px(height * width * 3);
  is.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (is.gcount() != static_cast<std::streamsize>(px.size())) throw IngestionError(path + ": truncated PPM payload");
  return px;
}

void write_ppm(const std::string& path, const std::uint8_t* rgb, std::size_t height, std::size_t width) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << "P6\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(rgb), static_cast<std::streamsize>(height * width * 3));
  if (!os) throw IoError("write failed: " + path);
}

std::vector<std::uint8_t> read_png(const std::string& path, std::size_t& height, std::size_t& width) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IngestionError(path + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  height = img.height;
  width = img.width;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IngestionError(path + ": " + msg);
  }
  return px;
}

VideoClip load_frame_directory(const std::string& dir, double frame_rate_hz) {
  if (!fs::is_directory(dir)) throw IngestionError(dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && (ext == ".ppm" || ext == ".png")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IngestionError(dir + " holds no .ppm or .png frames");
  VideoClip clip;
  clip.frame_rate_hz = frame_rate_hz;
  clip.source_id = fs::path(dir).filename().string();
  for (const auto& f : files) {
    std::size_t h = 0, w = 0;
    const auto px = f.extension() == ".ppm" || f.extension() == ".PPM" ? read_ppm(f.string(), h, w)
                                                                        : read_png(f.string(), h, w);
    if (clip.frames == 0) {
      clip.height = h;
      clip.width = w;
    } else if (h != clip.height || w != clip.width) {
      throw IngestionError(f.string() + " is " + std::to_string(w) + "x" + std::to_string(h) + ", earlier frames are " +
                           std::to_string(clip.width) + "x" + std::to_string(clip.height));
    }
    clip.pixels.insert(clip.pixels.end(), px.begin(), px.end());
    ++clip.frames;
  }
  clip.validate();
  return clip;
}

VideoClip load_planar_rgb(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot open " + path);
  unsigned char hdr[20];
  is.read(reinterpret_cast<char*>(hdr), 20);
  if (is.gcount() != 20) throw IngestionError(path + ": truncated planar header");
  VideoClip clip;
  clip.frames = get_u32(hdr);
  clip.height = get_u32(hdr + 4);
  clip.width = get_u32(hdr + 8);
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | hdr[12 + i];
  std::memcpy(&clip.frame_rate_hz, &bits, 8);
  clip.source_id = fs::path(path).stem().string();
  const std::size_t plane = clip.height * clip.width;
  clip.pixels.resize(clip.frames * plane * 3);
  std::vector<std::uint8_t> buf(plane * 3);
  for (std::size_t f = 0; f < clip.frames; ++f) {
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (is.gcount() != static_cast<std::streamsize>(buf.size())) throw IngestionError(path + ": truncated planar payload");
    std::uint8_t* dst = clip.frame(f);
    for (std::size_t i = 0; i < plane; ++i)
      for (std::size_t ch = 0; ch < 3; ++ch) dst[i * 3 + ch] = buf[ch * plane + i];
  }
  try {
    clip.validate();
  } catch (const ValidationError& e) {
    throw IngestionError(path + ": " + e.what());
  }
  return clip;
}

void save_planar_rgb(const VideoClip& clip, const std::string& path) {
  clip.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  put_u32(os, static_cast<std::uint32_t>(clip.frames));
  put_u32(os, static_cast<std::uint32_t>(clip.height));
  put_u32(os, static_cast<std::uint32_t>(clip.width));
  std::uint64_t bits;
  std::memcpy(&bits, &clip.frame_rate_hz, 8);
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((bits >> (8 * i)) & 0xff));
  const std::size_t plane = clip.height * clip.width;
  std::vector<std::uint8_t> buf(plane * 3);
  for (std::size_t f = 0; f < clip.frames; ++f) {
    const std::uint8_t* src = clip.frame(f);
    for (std::size_t i = 0; i < plane; ++i)
      for (std::size_t ch = 0; ch < 3; ++ch) buf[ch * plane + i] = src[i * 3 + ch];
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace v2eg

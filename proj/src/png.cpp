#include "nanoct/png.hpp"

#include <zlib.h>

#include "nanoct/stack_io.hpp"

namespace nanoct {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

void put_chunk(std::string& out, const char* type, const std::string& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.append(type, 4);
  out.append(data);
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(out.data() + start),
                         static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

std::string encode(int width, int height, int channels, const std::uint8_t* pixels) {
  if (width <= 0 || height <= 0) throw Error("cannot encode an empty PNG");
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  std::string raw;
  raw.reserve((stride + 1) * height);
  for (int y = 0; y < height; ++y) {
    raw.push_back('\0');  // filter: none
    raw.append(reinterpret_cast<const char*>(pixels + y * stride), stride);
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &len,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw Error("zlib compression failed");
  packed.resize(len);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);                               // bit depth
  ihdr.push_back(channels == 1 ? 0 : 2);           // gray / truecolor
  ihdr.append(std::string("\0\0\0", 3));           // compression, filter, interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", {});
  return out;
}

}  // namespace

RgbImage to_rgb(const Image& image, bool normalize) {
  const auto q = quantize(image, 8, normalize);
  RgbImage rgb{static_cast<int>(image.cols()), static_cast<int>(image.rows()), {}};
  rgb.pixels.resize(3 * static_cast<std::size_t>(q.size()));
  for (Eigen::Index i = 0; i < q.size(); ++i)
    rgb.pixels[3 * i] = rgb.pixels[3 * i + 1] = rgb.pixels[3 * i + 2] = static_cast<std::uint8_t>(q.data()[i]);
  return rgb;
}

std::string encode_png(const ImageT<std::uint8_t>& gray) {
  return encode(static_cast<int>(gray.cols()), static_cast<int>(gray.rows()), 1, gray.data());
}

std::string encode_png(const RgbImage& rgb) {
  return encode(rgb.width, rgb.height, 3, rgb.pixels.data());
}

}  // namespace nanoct

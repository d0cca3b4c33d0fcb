#include "nanoct/stack_io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace nanoct {

using nlohmann::json;

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

void skip_pgm_space(std::istream& in) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

int read_pgm_int(std::istream& in, const fs::path& path) {
  skip_pgm_space(in);
  int v = -1;
  if (!(in >> v) || v < 0) throw Error("malformed PGM header: " + path.string());
  return v;
}

std::ofstream open_for_write(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<double> uniform_angles(double start, double stop, int n) {
  if (n < 2) throw Error("at least two angles are required");
  std::vector<double> angles(n);
  const double step = (stop - start) / (n - 1);
  for (int k = 0; k < n; ++k) angles[k] = start + k * step;
  angles.back() = stop;
  return angles;
}

void validate(const DatasetManifest& m) {
  if (m.frame_paths.size() < 2) throw Error("manifest needs at least 2 frames");
  if (m.width < 1 || m.height < 1) throw Error("manifest width/height must be positive");
  if (m.bit_depth != 8 && m.bit_depth != 16) throw Error("bit_depth must be 8 or 16");
  if (!(m.angle_stop > m.angle_start)) throw Error("angle_stop must exceed angle_start");
  if (m.angle_stop - m.angle_start > 360.0) throw Error("angle range exceeds 360 degrees");
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing manifest: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("manifest does not parse: " + std::string(e.what()));
  }
  DatasetManifest m;
  try {
    const fs::path base = path.parent_path();
    for (const auto& p : doc.at("frame_paths")) {
      fs::path fp = p.get<std::string>();
      m.frame_paths.push_back(fp.is_absolute() ? fp : base / fp);
    }
    m.width = doc.at("width").get<int>();
    m.height = doc.at("height").get<int>();
    m.bit_depth = doc.at("bit_depth").get<int>();
    m.angle_start = doc.at("angle_start").get<double>();
    m.angle_stop = doc.at("angle_stop").get<double>();
  } catch (const json::exception& e) {
    throw Error("manifest field error: " + std::string(e.what()));
  }
  validate(m);
  return m;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  validate(m);
  json doc;
  const fs::path base = path.parent_path();
  json frames = json::array();
  for (const auto& p : m.frame_paths) {
    fs::path rel = p.lexically_relative(base.empty() ? fs::path(".") : base);
    frames.push_back((rel.empty() || *rel.begin() == "..") ? p.string() : rel.generic_string());
  }
  doc["frame_paths"] = frames;
  doc["width"] = m.width;
  doc["height"] = m.height;
  doc["bit_depth"] = m.bit_depth;
  doc["angle_start"] = m.angle_start;
  doc["angle_stop"] = m.angle_stop;
  auto out = open_for_write(path);
  out << doc.dump(2) << '\n';
}

ProjectionStack make_stack(std::vector<Image> frames, double angle_start, double angle_stop,
                           int bit_depth, std::string provenance) {
  if (frames.size() < 2) throw Error("a stack needs at least 2 frames");
  if (!(angle_stop > angle_start)) throw Error("angle_stop must exceed angle_start");
  const auto rows = frames.front().rows();
  const auto cols = frames.front().cols();
  for (const auto& f : frames)
    if (f.rows() != rows || f.cols() != cols) throw Error("frames differ in size");
  ProjectionStack s;
  s.angles = uniform_angles(angle_start, angle_stop, static_cast<int>(frames.size()));
  s.frames = std::move(frames);
  s.bit_depth = bit_depth;
  s.provenance = std::move(provenance);
  return s;
}

ProjectionStack load_stack(const fs::path& manifest_path, int workers) {
  const DatasetManifest m = read_manifest(manifest_path);
  const int n = static_cast<int>(m.frame_paths.size());
  std::vector<Image> frames(n);
  parallel_for(n, workers, [&](int k) {
    const fs::path& p = m.frame_paths[k];
    if (!fs::exists(p)) throw Error("missing frame file: " + p.string());
    PgmImage img = read_pgm(p);
    if (img.pixels.cols() != m.width || img.pixels.rows() != m.height)
      throw Error("dimension mismatch in " + p.string() + ": manifest " +
                  std::to_string(m.width) + "x" + std::to_string(m.height) + ", file " +
                  std::to_string(img.pixels.cols()) + "x" + std::to_string(img.pixels.rows()));
    if (img.bit_depth != m.bit_depth)
      throw Error("bit depth mismatch in " + p.string());
    frames[k] = std::move(img.pixels);
  });
  return make_stack(std::move(frames), m.angle_start, m.angle_stop, m.bit_depth,
                    manifest_path.string());
}

fs::path save_stack(const ProjectionStack& stack, const fs::path& dir) {
  fs::create_directories(dir / "frames");
  DatasetManifest m;
  m.width = stack.width();
  m.height = stack.height();
  m.bit_depth = stack.bit_depth;
  m.angle_start = stack.angle_start();
  m.angle_stop = stack.angle_stop();
  for (int k = 0; k < stack.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.pgm", k);
    const fs::path p = dir / "frames" / name;
    write_pgm(stack.frames[k], p, stack.bit_depth);
    m.frame_paths.push_back(p);
  }
  const fs::path manifest = dir / "manifest.json";
  write_manifest(m, manifest);
  return manifest;
}

PgmImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') throw Error("not a binary PGM: " + path.string());
  const int w = read_pgm_int(in, path);
  const int h = read_pgm_int(in, path);
  const int maxval = read_pgm_int(in, path);
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) throw Error("bad PGM header: " + path.string());
  in.get();  // single whitespace before raster

  PgmImage img;
  img.bit_depth = maxval > 255 ? 16 : 8;
  img.pixels.resize(h, w);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (img.bit_depth == 8) {
    std::vector<std::uint8_t> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (!in) throw Error("truncated PGM raster: " + path.string());
    for (std::size_t i = 0; i < n; ++i) img.pixels.data()[i] = buf[i];
  } else {
    std::vector<std::uint8_t> buf(2 * n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(2 * n));
    if (!in) throw Error("truncated PGM raster: " + path.string());
    for (std::size_t i = 0; i < n; ++i)
      img.pixels.data()[i] = static_cast<float>((buf[2 * i] << 8) | buf[2 * i + 1]);
  }
  return img;
}

ImageT<std::uint16_t> quantize(const Image& image, int bit_depth, bool normalize) {
  if (image.size() == 0) throw Error("cannot export an empty image");
  const double full = (1 << bit_depth) - 1;
  ImageT<std::uint16_t> out(image.rows(), image.cols());
  double lo = 0.0, scale = 1.0;
  if (normalize) {
    lo = image.minCoeff();
    const double span = static_cast<double>(image.maxCoeff()) - lo;
    scale = span > 0.0 ? full / span : 0.0;
  }
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    double v = (static_cast<double>(image.data()[i]) - lo) * scale;
    if (!std::isfinite(v)) v = 0.0;
    out.data()[i] = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, full)));
  }
  return out;
}

void write_pgm(const Image& image, const fs::path& path, int bit_depth) {
  save_gray_image(image, path, bit_depth, false);
}

void save_gray_image(const Image& image, const fs::path& path, int bit_depth, bool normalize) {
  if (bit_depth != 8 && bit_depth != 16) throw Error("depth must be 8 or 16");
  const auto q = quantize(image, bit_depth, normalize);
  auto out = open_for_write(path);
  out << "P5\n" << q.cols() << ' ' << q.rows() << '\n' << ((1 << bit_depth) - 1) << '\n';
  if (bit_depth == 8) {
    std::vector<std::uint8_t> buf(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) buf[i] = static_cast<std::uint8_t>(q.data()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  } else {
    std::vector<std::uint8_t> buf(2 * q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      buf[2 * i] = static_cast<std::uint8_t>(q.data()[i] >> 8);
      buf[2 * i + 1] = static_cast<std::uint8_t>(q.data()[i] & 0xff);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw Error("write failed: " + path.string());
}

void save_volume(const Volume& volume, const fs::path& base) {
  if (volume.empty()) throw Error("cannot save an empty volume");
  fs::path raw = base;
  raw += ".f32";
  fs::path side = base;
  side += ".json";
  {
    auto out = open_for_write(raw);
    if constexpr (std::endian::native == std::endian::little) {
      out.write(reinterpret_cast<const char*>(volume.data.data()),
                static_cast<std::streamsize>(volume.data.size() * sizeof(float)));
    } else {
      std::vector<std::uint32_t> buf(volume.data.size());
      std::memcpy(buf.data(), volume.data.data(), buf.size() * 4);
      for (auto& v : buf) v = byteswap32(v);
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * 4));
    }
    if (!out) throw Error("write failed: " + raw.string());
  }
  json doc{{"nx", volume.nx}, {"ny", volume.ny}, {"nz", volume.nz},
           {"order", kVolumeOrder}, {"dtype", "float32-le"}};
  auto out = open_for_write(side);
  out << doc.dump(2) << '\n';
}

Volume load_volume(const fs::path& base) {
  fs::path raw = base;
  raw += ".f32";
  fs::path side = base;
  side += ".json";
  std::ifstream sin(side);
  if (!sin) throw Error("missing volume sidecar: " + side.string());
  json doc = json::parse(sin);
  Volume v(doc.at("nx").get<int>(), doc.at("ny").get<int>(), doc.at("nz").get<int>());
  if (doc.value("order", std::string(kVolumeOrder)) != kVolumeOrder)
    throw Error("unsupported voxel order in " + side.string());
  std::ifstream in(raw, std::ios::binary | std::ios::ate);
  if (!in) throw Error("missing volume payload: " + raw.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != v.data.size() * sizeof(float))
    throw Error("volume payload length " + std::to_string(bytes) + " does not match sidecar " +
                std::to_string(v.data.size() * sizeof(float)) + " (corrupt)");
  in.seekg(0);
  in.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(bytes));
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& f : v.data) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      u = byteswap32(u);
      std::memcpy(&f, &u, 4);
    }
  }
  return v;
}

}  // namespace nanoct

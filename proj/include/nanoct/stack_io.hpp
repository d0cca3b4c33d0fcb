#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nanoct/image.hpp"

namespace nanoct {

namespace fs = std::filesystem;

/// On-disk description of a projection series. Frame paths are stored
/// relative to the manifest's directory when possible.
struct DatasetManifest {
  std::vector<fs::path> frame_paths;
  int width = 0;
  int height = 0;
  int bit_depth = 8;
  double angle_start = 0.0;
  double angle_stop = 180.0;
};

/// N equal-sized frames with one angle (degrees) per frame. Pixel values are
/// kept as float after ingest, without rescaling.
struct ProjectionStack {
  std::vector<Image> frames;
  std::vector<double> angles;
  int bit_depth = 8;
  std::string provenance;

  int size() const { return static_cast<int>(frames.size()); }
  int width() const { return frames.empty() ? 0 : static_cast<int>(frames.front().cols()); }
  int height() const { return frames.empty() ? 0 : static_cast<int>(frames.front().rows()); }
  FrameDims dims() const { return {width(), height()}; }
  float depth_max() const { return static_cast<float>((1 << bit_depth) - 1); }
  double angle_start() const { return angles.front(); }
  double angle_stop() const { return angles.back(); }
};

/// Reconstructed field, x fastest then y then z (z = detector row).
struct Volume {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  std::vector<float> data;

  Volume() = default;
  Volume(int nx_, int ny_, int nz_, float value = 0.0f)
      : nx(nx_), ny(ny_), nz(nz_), data(static_cast<std::size_t>(nx_) * ny_ * nz_, value) {}

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }
  float& at(int x, int y, int z) { return data[index(x, y, z)]; }
  float at(int x, int y, int z) const { return data[index(x, y, z)]; }

  /// The z-th slice viewed as an ny x nx image.
  Eigen::Map<Image> slice(int z) {
    return {data.data() + static_cast<std::size_t>(z) * nx * ny, ny, nx};
  }
  Eigen::Map<const Image> slice(int z) const {
    return {data.data() + static_cast<std::size_t>(z) * nx * ny, ny, nx};
  }
  bool empty() const { return data.empty(); }
};

inline constexpr const char* kVolumeOrder = "x-fastest,y,z";

/// Inclusive, uniformly spaced angles from start to stop.
std::vector<double> uniform_angles(double start, double stop, int n);

void validate(const DatasetManifest& manifest);
DatasetManifest read_manifest(const fs::path& path);
void write_manifest(const DatasetManifest& manifest, const fs::path& path);

/// Builds a stack from in-memory frames, checking shape and angle invariants.
ProjectionStack make_stack(std::vector<Image> frames, double angle_start, double angle_stop,
                           int bit_depth, std::string provenance = {});
ProjectionStack load_stack(const fs::path& manifest_path, int workers = 0);

/// Writes frames as PGM under `dir` plus `dir/manifest.json`; returns the manifest path.
fs::path save_stack(const ProjectionStack& stack, const fs::path& dir);

struct PgmImage {
  Image pixels;
  int bit_depth = 8;
};

PgmImage read_pgm(const fs::path& path);
/// Rounds to nearest and clamps to the depth range before writing.
void write_pgm(const Image& image, const fs::path& path, int bit_depth);

/// Grayscale export. With `normalize` the range [min, max] is mapped linearly
/// to full scale (a zero span maps to 0); otherwise values are clamped.
void save_gray_image(const Image& image, const fs::path& path, int bit_depth, bool normalize);

/// Converts to the depth range using the same rules as save_gray_image.
ImageT<std::uint16_t> quantize(const Image& image, int bit_depth, bool normalize);

/// Writes `<base>.f32` (little-endian float32) and `<base>.json` sidecar.
void save_volume(const Volume& volume, const fs::path& base);
Volume load_volume(const fs::path& base);

}  // namespace nanoct

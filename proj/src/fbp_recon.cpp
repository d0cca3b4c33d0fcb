#include "nanoct/fbp_recon.hpp"

#include <atomic>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <numeric>

#include <unsupported/Eigen/FFT>

namespace nanoct {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

double window(Filter filter, double f_over_nyquist) {
  const double u = f_over_nyquist;
  switch (filter) {
    case Filter::RamLak: return 1.0;
    case Filter::SheppLogan: {
      const double a = kPi * u / 2.0;  // sinc(f / 2 f_N)
      return a == 0.0 ? 1.0 : std::sin(a) / a;
    }
    case Filter::Cosine: return std::cos(kPi * u / 2.0);
    case Filter::Hamming: return 0.54 + 0.46 * std::cos(kPi * u);
    case Filter::Hann: return 0.5 * (1.0 + std::cos(kPi * u));
    case Filter::None: return 1.0;
  }
  return 1.0;
}

double half_kernel(int n) {
  if (n == 0) return 0.25;
  if (n % 2 == 0) return 0.0;
  const double d = kPi * n;
  return -1.0 / (d * d);
}

}  // namespace

std::string to_string(Filter f) {
  switch (f) {
    case Filter::RamLak: return "ram-lak";
    case Filter::SheppLogan: return "shepp-logan";
    case Filter::Cosine: return "cosine";
    case Filter::Hamming: return "hamming";
    case Filter::Hann: return "hann";
    case Filter::None: return "none";
  }
  return "?";
}

std::string to_string(Interpolation i) { return i == Interpolation::Nearest ? "nearest" : "linear"; }

Filter filter_from_string(const std::string& s) {
  for (Filter f : {Filter::RamLak, Filter::SheppLogan, Filter::Cosine, Filter::Hamming, Filter::Hann,
                   Filter::None})
    if (to_string(f) == s) return f;
  if (s == "RAM_LAK") return Filter::RamLak;
  if (s == "SHEPP_LOGAN") return Filter::SheppLogan;
  if (s == "COSINE") return Filter::Cosine;
  if (s == "HAMMING") return Filter::Hamming;
  if (s == "HANN") return Filter::Hann;
  if (s == "NONE") return Filter::None;
  throw Error("unknown filter '" + s + "'");
}

Interpolation interpolation_from_string(const std::string& s) {
  if (s == "nearest" || s == "NEAREST") return Interpolation::Nearest;
  if (s == "linear" || s == "LINEAR") return Interpolation::Linear;
  throw Error("unknown interpolation '" + s + "' (expected nearest|linear)");
}

int default_output_size(int detector_width) {
  if (detector_width < 3) throw Error("detector width must be at least 3");
  return 2 * static_cast<int>(std::floor(detector_width / (2.0 * std::numbers::sqrt2)));
}

int padded_length(int detector_width) {
  int p = 1;
  while (p < 2 * detector_width) p <<= 1;
  return p;
}

double ramp_kernel(int n) { return 2.0 * half_kernel(std::abs(n)); }

template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> filter_response(int padded_len, Filter filter) {
  if (!is_power_of_two(padded_len) || padded_len < 2)
    throw Error("padded length " + std::to_string(padded_len) + " is not a power of two");
  const int p = padded_len;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> out(p);
  if (filter == Filter::None) {
    out.setOnes();
    return out;
  }
  std::vector<double> h(p, 0.0);
  h[0] = half_kernel(0);
  for (int n = 1; n < p / 2; ++n) {
    h[n] = half_kernel(n);
    h[p - n] = half_kernel(n);
  }
  // Lag P/2 never couples two of the W kept samples (P >= 2W). It takes the
  // truncated tail so the taps sum to zero and the DC weight vanishes exactly.
  if (p >= 2) h[p / 2] = -std::accumulate(h.begin(), h.end(), 0.0);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, h);
  for (int k = 0; k < p; ++k) {
    const int kk = std::min(k, p - k);
    const double u = 2.0 * kk / p;
    out[k] = static_cast<Scalar>(2.0 * spec[k].real() * window(filter, u));
  }
  out[0] = Scalar(0);
  return out;
}

template Eigen::Array<double, Eigen::Dynamic, 1> filter_response<double>(int, Filter);
template Eigen::Array<float, Eigen::Dynamic, 1> filter_response<float>(int, Filter);

namespace {

// Zero-pads `in` to the response length, filters, and leaves all P samples in `out`.
void filter_padded(const double* in, int w, const Eigen::ArrayXd& response, Eigen::FFT<double>& fft,
                   std::vector<double>& out) {
  const int p = static_cast<int>(response.size());
  std::vector<double> buf(p, 0.0);
  std::copy(in, in + w, buf.begin());
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, buf);
  for (int k = 0; k < p; ++k) spec[k] *= response[k];
  fft.inv(out, spec);
}

}  // namespace

Eigen::ArrayXd filter_projection(const Eigen::ArrayXd& projection, Filter filter) {
  const int w = static_cast<int>(projection.size());
  if (w < 1) throw Error("empty projection");
  const Eigen::ArrayXd response = filter_response<double>(padded_length(w), filter);
  Eigen::FFT<double> fft;
  std::vector<double> out;
  filter_padded(projection.data(), w, response, fft, out);
  return Eigen::Map<const Eigen::ArrayXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

Sinogram filter_sinogram(const Sinogram& sino, Filter filter) {
  const int w = sino.width();
  const Eigen::ArrayXd response = filter_response<double>(padded_length(w), filter);
  Sinogram out = sino;
  Eigen::FFT<double> fft;
  Eigen::ArrayXd column(w);
  std::vector<double> res;
  for (int a = 0; a < sino.count(); ++a) {
    column = sino.data.col(a).cast<double>();
    filter_padded(column.data(), w, response, fft, res);
    for (int u = 0; u < w; ++u) out.data(u, a) = static_cast<float>(res[u]);
  }
  return out;
}

Image backproject(const Sinogram& filtered, Interpolation interp, int output_size) {
  if (output_size < 2) throw Error("output size must be at least 2");
  const int o = output_size;
  const int w = filtered.width();
  const double c = 0.5 * (o - 1);
  const double axis = filtered.axis();
  Image slice = Image::Zero(o, o);
  // A span that is a multiple of 180 deg measures its first line twice, once at
  // each end; the two endpoints then share one weight.
  const int n = filtered.count();
  const double span = n > 2 ? filtered.angles.back() - filtered.angles.front() : 0.0;
  const bool closed = span > 0 && std::abs(span / 180.0 - std::round(span / 180.0)) < 1e-9;
  for (int a = 0; a < n; ++a) {
    const float weight = closed && (a == 0 || a == n - 1) ? 0.5f : 1.0f;
    const double th = filtered.angles[a] * kPi / 180.0;
    const double ct = std::cos(th), st = std::sin(th);
    const float* proj = filtered.data.col(a).data();
    for (int row = 0; row < o; ++row) {
      const double y = c - row;
      const double base = y * st + axis - c * ct;
      float* out = slice.row(row).data();
      if (interp == Interpolation::Linear) {
        for (int col = 0; col < o; ++col) {
          const double t = base + col * ct;
          if (t < 0.0 || t > w - 1) continue;
          const int i0 = std::min(static_cast<int>(t), w - 2);
          const float f = static_cast<float>(t - i0);
          out[col] += weight * (proj[i0] + f * (proj[i0 + 1] - proj[i0]));
        }
      } else {
        for (int col = 0; col < o; ++col) {
          const double t = base + col * ct;
          const long i = std::lround(t);
          if (i < 0 || i > w - 1) continue;
          out[col] += weight * proj[i];
        }
      }
    }
  }
  slice *= static_cast<float>(kPi / (2.0 * (closed ? n - 1 : n)));
  return slice;
}

int detector_width_for(int image_size) {
  int w = static_cast<int>(std::ceil(image_size * std::numbers::sqrt2));
  while (default_output_size(w) < image_size) ++w;
  return w;
}

Sinogram forward_project(const Image& image, const std::vector<double>& angles_deg,
                         std::optional<int> detector_width) {
  if (image.rows() != image.cols()) throw Error("forward_project needs a square image");
  const int n = static_cast<int>(image.rows());
  const int w = detector_width ? *detector_width : detector_width_for(n);
  const double c = 0.5 * (n - 1);
  const double axis = 0.5 * (w - 1);
  constexpr double kStep = 0.5;
  const int half_steps = static_cast<int>(std::ceil((0.5 * n * std::numbers::sqrt2 + 1.0) / kStep));

  const auto sample = [&](double col, double row) -> double {
    if (col <= -1.0 || row <= -1.0 || col >= n || row >= n) return 0.0;
    const int x0 = static_cast<int>(std::floor(col));
    const int y0 = static_cast<int>(std::floor(row));
    const double fx = col - x0, fy = row - y0;
    const auto px = [&](int x, int y) -> double {
      return (x < 0 || y < 0 || x >= n || y >= n) ? 0.0 : image(y, x);
    };
    return (1 - fy) * ((1 - fx) * px(x0, y0) + fx * px(x0 + 1, y0)) +
           fy * ((1 - fx) * px(x0, y0 + 1) + fx * px(x0 + 1, y0 + 1));
  };

  Sinogram sino;
  sino.angles = angles_deg;
  sino.data = Eigen::ArrayXXf::Zero(w, static_cast<Eigen::Index>(angles_deg.size()));
  for (std::size_t a = 0; a < angles_deg.size(); ++a) {
    const double th = angles_deg[a] * kPi / 180.0;
    const double ct = std::cos(th), st = std::sin(th);
    for (int u = 0; u < w; ++u) {
      const double t = u - axis;
      double acc = 0.0;
      for (int j = -half_steps; j <= half_steps; ++j) {
        const double s = j * kStep;
        const double x = t * ct - s * st;
        const double y = t * st + s * ct;
        acc += sample(x + c, c - y);
      }
      sino.data(u, static_cast<Eigen::Index>(a)) = static_cast<float>(acc * kStep);
    }
  }
  return sino;
}

Sinogram row_sinogram(const ProjectionStack& stack, int row, const std::vector<double>& angles,
                      bool attenuation) {
  if (row < 0 || row >= stack.height()) throw Error("row " + std::to_string(row) + " out of range");
  if (angles.size() != static_cast<std::size_t>(stack.size()))
    throw Error("angle count does not match frame count");
  Sinogram sino;
  sino.angles = angles;
  sino.data.resize(stack.width(), stack.size());
  const double full = stack.depth_max();
  for (int k = 0; k < stack.size(); ++k) {
    for (int u = 0; u < stack.width(); ++u) {
      const double v = stack.frames[k](row, u);
      sino.data(u, k) =
          attenuation ? static_cast<float>(-std::log(std::max(v, 0.5) / full)) : static_cast<float>(v);
    }
  }
  return sino;
}

Volume reconstruct_rows(const ProjectionStack& stack, const ReconParams& params,
                        const ProgressFn& progress) {
  if (stack.size() < 2) throw Error("reconstruction needs at least 2 projections");
  const double a0 = params.angle_start.value_or(stack.angle_start());
  const double a1 = params.angle_stop.value_or(stack.angle_stop());
  if (!(a1 > a0)) throw Error("angle_stop must exceed angle_start");
  const std::vector<double> angles = (params.angle_start || params.angle_stop)
                                         ? uniform_angles(a0, a1, stack.size())
                                         : stack.angles;
  const int o = params.output_size.value_or(default_output_size(stack.width()));
  if (o < 2) throw Error("output size must be at least 2");
  int r0 = 0, r1 = stack.height() - 1;
  if (params.row_range) std::tie(r0, r1) = *params.row_range;
  if (r0 < 0 || r1 >= stack.height() || r1 < r0)
    throw Error("invalid row range " + std::to_string(r0) + ":" + std::to_string(r1));

  const int nz = r1 - r0 + 1;
  Volume vol(o, o, nz);
  std::atomic<bool> cancelled{false};
  std::atomic<int> done{0};
  std::mutex progress_mutex;
  parallel_for(nz, params.workers, [&](int z) {
    if (cancelled.load()) return;
    const Sinogram sino = row_sinogram(stack, r0 + z, angles, params.attenuation);
    vol.slice(z) = backproject(filter_sinogram(sino, params.filter), params.interpolation, o);
    const int finished = ++done;
    if (progress) {
      std::lock_guard lock(progress_mutex);
      if (!progress(static_cast<double>(finished) / nz)) cancelled = true;
    }
  });
  if (cancelled) throw Cancelled();
  return vol;
}

OrthoViews ortho_slices(const Volume& v, int ix, int iy, int iz) {
  if (ix < 0 || ix >= v.nx || iy < 0 || iy >= v.ny || iz < 0 || iz >= v.nz)
    throw Error("slice index out of range");
  OrthoViews views;
  views.axial = v.slice(iz);
  views.coronal.resize(v.nz, v.nx);
  views.sagittal.resize(v.nz, v.ny);
  for (int z = 0; z < v.nz; ++z) {
    for (int x = 0; x < v.nx; ++x) views.coronal(z, x) = v.at(x, iy, z);
    for (int y = 0; y < v.ny; ++y) views.sagittal(z, y) = v.at(ix, y, z);
  }
  return views;
}

}  // namespace nanoct

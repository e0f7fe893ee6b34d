#pragma once

// Camera geometry, PGM frame I/O and free-surface extraction from thresholded
// grayscale frames with an aligned depth frame.

#include "gsnn/surface.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsnn {

struct CameraModel {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static CameraModel pinhole(double fx, double fy, double cx, double cy) {
    CameraModel c;
    c.K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return c;
  }

  void validate(double tol = 1e-9) const {
    if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0)) throw std::invalid_argument("camera: fx and fy must be > 0");
    if ((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol)
      throw std::invalid_argument("camera: R is not orthonormal");
    if (std::fabs(R.determinant() - 1.0) > tol) throw std::invalid_argument("camera: det(R) must be +1");
  }
};

inline Eigen::Vector2d project(const Eigen::Vector3d& p_w, const CameraModel& cam) {
  const Eigen::Vector3d pc = cam.R * p_w + cam.t;
  if (!(pc.z() > 0.0)) throw std::invalid_argument("project: point is not in front of the camera");
  const Eigen::Vector3d x = cam.K * pc;
  return {x.x() / x.z(), x.y() / x.z()};
}

inline Eigen::Vector3d unproject(double u, double v, double depth, const CameraModel& cam) {
  if (!(depth > 0.0)) throw std::invalid_argument("unproject: depth must be > 0 (invalid depth pixel)");
  const Eigen::Vector3d ray = cam.K.triangularView<Eigen::Upper>().solve(Eigen::Vector3d(u, v, 1.0));
  return cam.R.transpose() * (depth * ray - cam.t);
}

inline CameraModel camera_from_json(const nlohmann::json& j) {
  CameraModel c = CameraModel::pinhole(j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                                       j.at("cy").get<double>());
  if (j.contains("R")) {
    const auto r = j["R"].get<std::vector<double>>();
    if (r.size() != 9) throw std::invalid_argument("camera: R needs 9 row-major values");
    for (int i = 0; i < 9; ++i) c.R(i / 3, i % 3) = r[i];
  }
  if (j.contains("t")) {
    const auto t = j["t"].get<std::vector<double>>();
    if (t.size() != 3) throw std::invalid_argument("camera: t needs 3 values");
    c.t = Eigen::Vector3d(t[0], t[1], t[2]);
  }
  c.validate();
  return c;
}

inline nlohmann::json camera_to_json(const CameraModel& c) {
  std::vector<double> r(9);
  for (int i = 0; i < 9; ++i) r[i] = c.R(i / 3, i % 3);
  return {{"fx", c.K(0, 0)}, {"fy", c.K(1, 1)}, {"cx", c.K(0, 2)}, {"cy", c.K(1, 2)},
          {"R", r},          {"t", {c.t.x(), c.t.y(), c.t.z()}}};
}

// ------------------------------------------------------------------ frames

struct GrayFrame {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  ///< row-major, row 0 at the top
  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

struct DepthFrame {
  std::size_t width = 0, height = 0;
  std::vector<double> meters;  ///< row-major; 0 marks an invalid pixel
  double at(std::size_t row, std::size_t col) const { return meters[row * width + col]; }
};

namespace detail {

struct PgmImage {
  std::size_t width = 0, height = 0;
  unsigned maxval = 0;
  std::vector<unsigned> samples;
};

inline PgmImage parse_pgm(const std::vector<unsigned char>& b, const std::string& what) {
  std::size_t at = 0;
  auto fail = [&](const std::string& m) { throw std::runtime_error(what + ": " + m); };
  auto skip_space = [&] {
    while (at < b.size()) {
      if (b[at] == '#') {
        while (at < b.size() && b[at] != '\n') ++at;
      } else if (std::isspace(b[at])) {
        ++at;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_space();
    if (at >= b.size() || !std::isdigit(b[at])) fail("malformed header");
    unsigned long v = 0;
    while (at < b.size() && std::isdigit(b[at])) {
      v = v * 10 + (b[at++] - '0');
      if (v > 1u << 30) fail("header value too large");
    }
    return v;
  };
  if (b.size() < 2 || b[0] != 'P' || b[1] != '5') fail("not a binary PGM (P5)");
  at = 2;
  PgmImage img;
  img.width = number();
  img.height = number();
  img.maxval = static_cast<unsigned>(number());
  if (img.width == 0 || img.height == 0) fail("zero image size");
  if (img.maxval == 0 || img.maxval > 65535) fail("maxval must be in 1..65535");
  if (at >= b.size() || !std::isspace(b[at])) fail("malformed header");
  ++at;
  const std::size_t bytes = img.maxval > 255 ? 2 : 1;
  const std::size_t n = img.width * img.height;
  if (b.size() - at != n * bytes)
    fail("expected " + std::to_string(n * bytes) + " payload bytes, found " + std::to_string(b.size() - at));
  img.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    img.samples[i] = bytes == 1 ? b[at + i] : (static_cast<unsigned>(b[at + 2 * i]) << 8) | b[at + 2 * i + 1];
  return img;
}

inline std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_pgm(const std::string& path, std::size_t w, std::size_t h, unsigned maxval,
                      const std::vector<unsigned>& samples) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << "P5\n" << w << " " << h << "\n" << maxval << "\n";
  for (unsigned s : samples) {
    if (maxval > 255) f.put(static_cast<char>(s >> 8));
    f.put(static_cast<char>(s & 0xff));
  }
  if (!f.flush()) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace detail

inline GrayFrame read_gray_pgm(const std::string& path) {
  const auto img = detail::parse_pgm(detail::read_bytes(path), path);
  if (img.maxval > 255) throw std::runtime_error(path + ": expected an 8-bit grayscale frame");
  GrayFrame g{img.width, img.height, {}};
  for (unsigned s : img.samples) g.pixels.push_back(static_cast<std::uint8_t>(s));
  return g;
}

/// 16-bit samples are millimetres; values are returned in metres.
inline DepthFrame read_depth_pgm(const std::string& path) {
  const auto img = detail::parse_pgm(detail::read_bytes(path), path);
  if (img.maxval <= 255) throw std::runtime_error(path + ": expected a 16-bit depth frame");
  DepthFrame d{img.width, img.height, {}};
  for (unsigned s : img.samples) d.meters.push_back(static_cast<double>(s) * 1e-3);
  return d;
}

inline void write_gray_pgm(const std::string& path, const GrayFrame& g) {
  detail::write_pgm(path, g.width, g.height, 255, {g.pixels.begin(), g.pixels.end()});
}

/// Depths are rounded to whole millimetres.
inline void write_depth_pgm(const std::string& path, const DepthFrame& d) {
  std::vector<unsigned> s;
  for (double m : d.meters) {
    const double mm = std::round(m * 1e3);
    if (!(mm >= 0.0) || mm > 65535.0) throw std::invalid_argument("depth out of 16-bit millimetre range");
    s.push_back(static_cast<unsigned>(mm));
  }
  detail::write_pgm(path, d.width, d.height, 65535, s);
}

// -------------------------------------------------------------- extraction

struct SurfacePixel {
  std::size_t col = 0;
  std::size_t row = 0;  ///< first dark (liquid) row below the bright background
};

/// Per column, the topmost row r whose pixel is below `threshold` while the
/// pixel above it is not. Columns without such a transition are skipped.
inline std::vector<SurfacePixel> extract_surface(const GrayFrame& f, int threshold) {
  if (threshold <= 0 || threshold >= 255) throw std::invalid_argument("extract_surface: threshold must be in (0, 255)");
  if (f.pixels.size() != f.width * f.height) throw std::invalid_argument("extract_surface: frame size mismatch");
  std::vector<SurfacePixel> out;
  for (std::size_t c = 0; c < f.width; ++c)
    for (std::size_t r = 1; r < f.height; ++r)
      if (f.at(r, c) < threshold && f.at(r - 1, c) >= threshold) {
        out.push_back({c, r});
        break;
      }
  if (out.size() < 2)
    throw std::runtime_error("extract_surface: surface not found (" + std::to_string(out.size()) + " columns)");
  return out;
}

/// World (x, y) of each surface pixel using the aligned depth frame; pixels
/// with invalid depth are dropped.
inline std::vector<SurfacePoint> surface_points(const std::vector<SurfacePixel>& px, const DepthFrame& depth,
                                                const CameraModel& cam) {
  std::vector<SurfacePoint> pts;
  for (const auto& p : px) {
    if (p.col >= depth.width || p.row >= depth.height) throw std::invalid_argument("surface_points: pixel outside depth frame");
    const double z = depth.at(p.row, p.col);
    if (!(z > 0.0)) continue;
    const Eigen::Vector3d w = unproject(static_cast<double>(p.col), static_cast<double>(p.row), z, cam);
    pts.push_back({w.x(), w.y()});
  }
  return pts;
}

/// Frame pair -> P equally spaced surface samples in world coordinates.
inline SurfaceObservation observe_surface(const GrayFrame& gray, const DepthFrame& depth, const CameraModel& cam,
                                          int threshold, std::size_t stations) {
  if (gray.width != depth.width || gray.height != depth.height)
    throw std::invalid_argument("observe_surface: grayscale and depth frames differ in size");
  return resample_surface(surface_points(extract_surface(gray, threshold), depth, cam), stations);
}

}  // namespace gsnn

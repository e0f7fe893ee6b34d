#pragma once

#include "gsnn/binary_io.hpp"
#include "gsnn/datagen.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

namespace gsnn {

// Dataset file: "GSLOSH01", u32 version, f64 dt, u32 group count,
// per group (u16 name length, name, u32 dim), u32 snapshot count,
// then per group a contiguous f64 block [snapshots x dim]. All little-endian.
inline constexpr std::string_view kDatasetMagic = "GSLOSH01";
inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::vector<unsigned char> encode_dataset(const SloshDataset& ds) {
  ds.validate();
  io::Writer w;
  w.text(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.f64(ds.dt);
  w.u32(static_cast<std::uint32_t>(ds.groups.size()));
  for (const auto& g : ds.groups) {
    if (g.name.size() > 0xffff) throw std::invalid_argument("group name too long: " + g.name);
    w.u16(static_cast<std::uint16_t>(g.name.size()));
    w.text(g.name);
    w.u32(static_cast<std::uint32_t>(g.dim));
  }
  w.u32(static_cast<std::uint32_t>(ds.snapshots()));
  for (const auto& g : ds.groups) w.f64s(g.data.data(), g.data.size());
  return w.buffer();
}

/// Decodes the binary payload only; metadata comes from the sidecar.
inline SloshDataset decode_dataset(std::vector<unsigned char> bytes) {
  io::Reader r(std::move(bytes));
  if (r.text(kDatasetMagic.size(), "magic") != kDatasetMagic) throw io::FormatError("bad dataset magic", 0);
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kDatasetVersion)
    throw io::FormatError("unsupported dataset version " + std::to_string(version), version_at);
  SloshDataset ds;
  ds.dt = r.f64("dt");
  const std::uint32_t ngroups = r.u32("group count");
  std::size_t row = 0;
  for (std::uint32_t i = 0; i < ngroups; ++i) {
    NamedBlock b;
    b.name = r.text(r.u16("group name length"), "group name");
    const std::size_t dim_at = r.offset();
    b.dim = r.u32("group dim");
    if (b.dim == 0) throw io::FormatError("group '" + b.name + "' has zero dimension", dim_at);
    row += b.dim;
    ds.groups.push_back(std::move(b));
  }
  const std::size_t count_at = r.offset();
  const std::uint32_t snaps = r.u32("snapshot count");
  if (row != 0 && snaps > r.remaining() / 8 / row)
    throw io::FormatError("header claims " + std::to_string(snaps) + " snapshots but payload holds " +
                              std::to_string(r.remaining() / 8 / row),
                          count_at);
  for (auto& g : ds.groups) {
    g.data.resize(static_cast<std::size_t>(snaps) * g.dim);
    r.f64s(g.data.data(), g.data.size(), "group payload");
  }
  if (r.remaining() != 0)
    throw io::FormatError("payload longer than header counts (" + std::to_string(r.remaining()) + " extra bytes)",
                          r.offset());
  return ds;
}

inline std::string sidecar_path(const std::string& path) { return path + ".json"; }

inline nlohmann::json fluid_to_json(const FluidParams& f) {
  return {{"name", f.name},
          {"k", f.rheology.k},
          {"n", f.rheology.n},
          {"tau0", f.rheology.tau0},
          {"density", f.density},
          {"shear_rate", f.shear_rate},
          {"viscosity_scale", f.viscosity_scale},
          {"kinematic_viscosity", f.kinematic_viscosity()}};
}

inline FluidParams fluid_from_json(const nlohmann::json& j) {
  FluidParams f;
  f.name = j.value("name", f.name);
  f.rheology.k = j.value("k", f.rheology.k);
  f.rheology.n = j.value("n", f.rheology.n);
  f.rheology.tau0 = j.value("tau0", f.rheology.tau0);
  f.density = j.value("density", f.density);
  f.shear_rate = j.value("shear_rate", f.shear_rate);
  f.viscosity_scale = j.value("viscosity_scale", f.viscosity_scale);
  return f;
}

inline nlohmann::json dataset_sidecar(const SloshDataset& ds, const nlohmann::json& provenance = {}) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : ds.groups) groups.push_back({{"name", g.name}, {"dim", g.dim}});
  nlohmann::json j = {{"format", std::string(kDatasetMagic)},
                      {"version", kDatasetVersion},
                      {"dt", ds.dt},
                      {"snapshots", ds.snapshots()},
                      {"groups", groups},
                      {"fluid", fluid_to_json(ds.fluid)},
                      {"impulse", ds.impulse},
                      {"seed", ds.seed},
                      {"tank_length", ds.tank_length},
                      {"depth", ds.depth}};
  if (!provenance.is_null()) j["provenance"] = provenance;
  return j;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("'" + path + "': " + e.what());
  }
}

/// Writes the binary dataset and its JSON sidecar (`path` + ".json").
inline void write_dataset(const std::string& path, const SloshDataset& ds, const nlohmann::json& provenance = {}) {
  io::write_file(path, encode_dataset(ds));
  write_text(sidecar_path(path), dataset_sidecar(ds, provenance).dump(2) + "\n");
}

inline SloshDataset read_dataset(const std::string& path) {
  SloshDataset ds = decode_dataset(io::read_file(path));
  const std::string side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    const auto j = read_json(side);
    if (j.contains("fluid")) ds.fluid = fluid_from_json(j["fluid"]);
    ds.impulse = j.value("impulse", 0.0);
    ds.seed = j.value("seed", std::uint64_t{0});
    ds.tank_length = j.value("tank_length", 0.0);
    ds.depth = j.value("depth", 0.0);
  }
  return ds;
}

}  // namespace gsnn

#include "nlos/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>

namespace nlos {

FormatError::FormatError(std::size_t off, const std::string& message)
    : Error(message + " (at byte " + std::to_string(off) + ")"), offset(off) {}

namespace {

// ---------------------------------------------------------------------------
// Text and binary primitives

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
void put_le(std::string& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(const std::string& buf, std::size_t pos) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, buf.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

std::string slurp(std::istream& is) {
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

struct Token {
  std::string_view text;
  std::size_t offset;
};

struct Cursor {
  const std::string& buf;
  std::size_t pos = 0;

  std::vector<Token> line(std::size_t expected, const char* what) {
    const std::size_t start = pos;
    const std::size_t end = buf.find('\n', pos);
    if (end == std::string::npos)
      throw FormatError(buf.size(), std::string("unterminated or missing ") + what + " line");
    std::vector<Token> toks;
    std::size_t i = start;
    while (i < end) {
      while (i < end && buf[i] == ' ') ++i;
      const std::size_t j = std::min(end, buf.find(' ', i));
      if (j > i) toks.push_back({std::string_view(buf).substr(i, j - i), i});
      i = j;
    }
    if (expected > 0 && toks.size() != expected)
      throw FormatError(start, std::string(what) + " line needs " + std::to_string(expected) +
                                   " fields, found " + std::to_string(toks.size()));
    pos = end + 1;
    return toks;
  }

  void magic(const char* m) {
    const auto t = line(1, "magic");
    if (t[0].text != m)
      throw FormatError(0, std::string("bad magic, expected ") + m);
  }

  std::size_t remaining() const { return buf.size() - pos; }
};

template <class T>
T parse_num(const Token& t, const char* what) {
  T v{};
  const char* b = t.text.data();
  const char* e = b + t.text.size();
  auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e)
    throw FormatError(t.offset, std::string("cannot parse ") + what + " '" +
                                    std::string(t.text) + "'");
  return v;
}

void check_payload(const Cursor& c, std::size_t need, const char* what) {
  if (c.remaining() < need)
    throw FormatError(c.buf.size(), std::string("truncated ") + what + " payload: expected " +
                                        std::to_string(need) + " bytes, found " +
                                        std::to_string(c.remaining()));
  if (c.remaining() > need)
    throw FormatError(c.pos + need, std::string("trailing bytes after ") + what + " payload");
}

void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  body(os);
  if (!os) throw Error("write to '" + path + "' failed");
}

std::ifstream open_read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  return is;
}

}  // namespace

// ---------------------------------------------------------------------------
// Volume

void write_volume(std::ostream& os, const AlbedoVolume& u) {
  const auto& g = u.grid;
  std::string out = "NLOSVOL1\n";
  out += std::to_string(g.nx()) + " " + std::to_string(g.ny()) + " " + std::to_string(g.nz()) + "\n";
  out += fmt(g.voxel_size.x()) + " " + fmt(g.voxel_size.y()) + " " + fmt(g.voxel_size.z()) + "\n";
  out += fmt(g.origin.x()) + " " + fmt(g.origin.y()) + " " + fmt(g.origin.z()) + "\n";
  out.reserve(out.size() + 8 * u.values.size());
  for (Eigen::Index i = 0; i < u.values.size(); ++i) put_le<double>(out, u.values[i]);
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
}

AlbedoVolume read_volume(std::istream& is) {
  const std::string buf = slurp(is);
  Cursor c{buf};
  c.magic("NLOSVOL1");
  const auto d = c.line(3, "dimension");
  const auto s = c.line(3, "voxel size");
  const auto o = c.line(3, "origin");
  std::array<int, 3> dims{};
  Vec3 size, origin;
  for (int a = 0; a < 3; ++a) {
    dims[a] = parse_num<int>(d[a], "dimension");
    if (dims[a] < 1) throw FormatError(d[a].offset, "dimensions must be >= 1");
    size[a] = parse_num<double>(s[a], "voxel size");
    origin[a] = parse_num<double>(o[a], "origin");
  }
  const VoxelGrid grid = VoxelGrid::make(dims, origin, size);
  check_payload(c, 8 * grid.count(), "volume");
  AlbedoVolume u(grid);
  for (std::size_t i = 0; i < grid.count(); ++i)
    u.values[static_cast<Eigen::Index>(i)] = get_le<double>(buf, c.pos + 8 * i);
  return u;
}

void write_volume_file(const std::string& path, const AlbedoVolume& u) {
  write_file(path, [&](std::ostream& os) { write_volume(os, u); });
}

AlbedoVolume read_volume_file(const std::string& path) {
  auto is = open_read(path);
  return read_volume(is);
}

// ---------------------------------------------------------------------------
// Histogram

void write_histogram(std::ostream& os, const PhotonHistogram& h) {
  const auto& g = h.geometry;
  if (h.rng_id.find_first_of(" \n") != std::string::npos || h.rng_id.empty())
    throw ConfigError("rng_id must be a single non-empty token");
  std::string out = "NLOSHIST1\n";
  out += std::to_string(g.num_pairs()) + " " + std::to_string(g.num_bins) + " " +
         std::to_string(h.pulses) + "\n";
  out += fmt(g.bin_width) + " " + fmt(g.time_origin) + "\n";
  out += h.rng_id + " " + std::to_string(h.seed) + "\n";
  for (const auto& p : g.pairs)
    out += fmt(p.illum.x()) + " " + fmt(p.illum.y()) + " " + fmt(p.illum.z()) + " " +
           fmt(p.detect.x()) + " " + fmt(p.detect.y()) + " " + fmt(p.detect.z()) + "\n";
  for (auto v : h.counts) put_le<std::uint32_t>(out, v);
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
}

PhotonHistogram read_histogram(std::istream& is) {
  const std::string buf = slurp(is);
  Cursor c{buf};
  c.magic("NLOSHIST1");
  const auto sizes = c.line(3, "size");
  const int P = parse_num<int>(sizes[0], "pair count");
  const int Q = parse_num<int>(sizes[1], "bin count");
  const auto N = parse_num<std::uint32_t>(sizes[2], "pulse count");
  if (P < 1) throw FormatError(sizes[0].offset, "pair count must be >= 1");
  if (Q < 1) throw FormatError(sizes[1].offset, "bin count must be >= 1");
  if (N < 1) throw FormatError(sizes[2].offset, "pulse count must be >= 1");
  const auto timing = c.line(2, "timing");
  const auto rng = c.line(2, "rng");
  PhotonHistogram h;
  h.pulses = N;
  h.rng_id = std::string(rng[0].text);
  h.seed = parse_num<std::uint64_t>(rng[1], "seed");
  auto& g = h.geometry;
  g.num_bins = Q;
  g.bin_width = parse_num<double>(timing[0], "bin width");
  g.time_origin = parse_num<double>(timing[1], "time origin");
  g.pairs.resize(static_cast<std::size_t>(P));
  for (int p = 0; p < P; ++p) {
    const auto t = c.line(6, "pair");
    for (int a = 0; a < 3; ++a) {
      g.pairs[p].illum[a] = parse_num<double>(t[a], "pair coordinate");
      g.pairs[p].detect[a] = parse_num<double>(t[3 + a], "pair coordinate");
    }
  }
  g.scan_shape = infer_scan_shape(g.pairs);
  const std::size_t n = static_cast<std::size_t>(P) * static_cast<std::size_t>(Q);
  check_payload(c, 4 * n, "histogram");
  h.counts.resize(n);
  for (std::size_t i = 0; i < n; ++i) h.counts[i] = get_le<std::uint32_t>(buf, c.pos + 4 * i);
  g.validate();
  h.validate();
  return h;
}

void write_histogram_file(const std::string& path, const PhotonHistogram& h) {
  write_file(path, [&](std::ostream& os) { write_histogram(os, h); });
}

PhotonHistogram read_histogram_file(const std::string& path) {
  auto is = open_read(path);
  return read_histogram(is);
}

// ---------------------------------------------------------------------------
// Surface

void write_surface(std::ostream& os, const SurfaceG& g) {
  g.validate();
  std::string out = "NLOSSURF1\n";
  out += std::to_string(g.grid.nx()) + " " + std::to_string(g.grid.ny()) + "\n";
  for (std::size_t p = 0; p < g.e.size(); ++p) {
    if (g.e[p])
      out += "1 " + std::to_string(*g.depth[p]) + " " + fmt(*g.albedo[p]) + "\n";
    else
      out += "0 - -\n";
  }
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
}

SurfaceG read_surface(std::istream& is, const VoxelGrid* grid) {
  const std::string buf = slurp(is);
  Cursor c{buf};
  c.magic("NLOSSURF1");
  const auto d = c.line(2, "dimension");
  const int I = parse_num<int>(d[0], "dimension");
  const int J = parse_num<int>(d[1], "dimension");
  if (I < 1 || J < 1) throw FormatError(d[0].offset, "dimensions must be >= 1");
  if (grid && (grid->nx() != I || grid->ny() != J))
    throw DimensionMismatch("surface lattice differs from the voxel grid");
  const std::size_t n = static_cast<std::size_t>(I) * static_cast<std::size_t>(J);
  std::vector<std::uint8_t> e(n);
  std::vector<std::optional<int>> depth(n);
  std::vector<std::optional<double>> albedo(n);
  int deepest = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const auto t = c.line(3, "pixel");
    const std::string where =
        " at pixel (" + std::to_string(p / J) + "," + std::to_string(p % J) + ")";
    if (t[0].text == "0") {
      if (t[1].text != "-" || t[2].text != "-")
        throw InvariantError("background pixel carries depth or albedo" + where);
    } else if (t[0].text == "1") {
      if (t[1].text == "-" || t[2].text == "-")
        throw InvariantError("foreground pixel lacks depth or albedo" + where);
      e[p] = 1;
      depth[p] = parse_num<int>(t[1], "depth");
      albedo[p] = parse_num<double>(t[2], "albedo");
      deepest = std::max(deepest, *depth[p]);
    } else {
      throw FormatError(t[0].offset, "indicator must be 0 or 1");
    }
  }
  if (c.remaining() > 0) throw FormatError(c.pos, "trailing bytes after surface records");
  VoxelGrid g = grid ? *grid : VoxelGrid::make({I, J, deepest + 1}, Vec3::Zero(), Vec3::Ones());
  SurfaceG s(g);
  s.e = std::move(e);
  s.depth = std::move(depth);
  s.albedo = std::move(albedo);
  s.validate();
  return s;
}

void write_surface_file(const std::string& path, const SurfaceG& g) {
  write_file(path, [&](std::ostream& os) { write_surface(os, g); });
}

SurfaceG read_surface_file(const std::string& path, const VoxelGrid* grid) {
  auto is = open_read(path);
  return read_surface(is, grid);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

class Fields {
 public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const Json& raw(const char* key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError(name(key) + ": missing");
    return j_.at(key);
  }

  double number(const char* key, std::optional<double> fallback = std::nullopt) {
    if (!has(key)) {
      if (fallback) return *fallback;
      throw ConfigError(name(key) + ": missing");
    }
    const Json& v = raw(key);
    if (!v.is_number()) throw ConfigError(name(key) + ": expected a number");
    return v.get<double>();
  }

  long integer(const char* key, std::optional<long> fallback = std::nullopt) {
    if (!has(key)) {
      if (fallback) return *fallback;
      throw ConfigError(name(key) + ": missing");
    }
    const Json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(name(key) + ": expected an integer");
    return v.get<long>();
  }

  bool boolean(const char* key, bool fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(name(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const char* key) {
    const Json& v = raw(key);
    if (!v.is_string()) throw ConfigError(name(key) + ": expected a string");
    return v.get<std::string>();
  }

  template <std::size_t N>
  std::array<double, N> numbers(const char* key) {
    const Json& v = raw(key);
    if (!v.is_array() || v.size() != N)
      throw ConfigError(name(key) + ": expected an array of " + std::to_string(N) + " numbers");
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
      if (!v[i].is_number()) throw ConfigError(name(key) + ": expected numbers");
      out[i] = v[i].get<double>();
    }
    return out;
  }

  template <std::size_t N>
  std::array<int, N> integers(const char* key) {
    const Json& v = raw(key);
    if (!v.is_array() || v.size() != N)
      throw ConfigError(name(key) + ": expected an array of " + std::to_string(N) + " integers");
    std::array<int, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
      if (!v[i].is_number_integer()) throw ConfigError(name(key) + ": expected integers");
      out[i] = v[i].get<int>();
    }
    return out;
  }

  std::string name(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(name(it.key()) + ": unknown field");
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> used_;
};

Vec3 vec(const std::array<double, 3>& a) { return Vec3(a[0], a[1], a[2]); }
Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

template <class F>
auto with_field(const std::string& name, F&& body) {
  try {
    return body();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(name + ": " + e.what());
  }
}

}  // namespace

Json load_json_file(const std::string& path) {
  auto is = open_read(path);
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(e.byte, "invalid JSON in '" + path + "': " + e.what());
  }
}

VoxelGrid parse_grid(const Json& j, const std::string& where) {
  Fields f(j, where);
  const auto dims = f.integers<3>("dims");
  const auto origin = f.numbers<3>("origin");
  const auto size = f.numbers<3>("voxel_size");
  f.finish();
  return with_field(where, [&] { return VoxelGrid::make(dims, vec(origin), vec(size)); });
}

Json grid_to_json(const VoxelGrid& g) {
  Json j;
  j["dims"] = Json::array({g.dims[0], g.dims[1], g.dims[2]});
  j["origin"] = vec_json(g.origin);
  j["voxel_size"] = vec_json(g.voxel_size);
  return j;
}

MeasurementGeometry parse_geometry(const Json& j) {
  Fields f(j, "geometry");
  const std::string type = f.string("type");
  const double bw = f.number("bin_width", 32e-12);
  const long q = f.integer("num_bins");
  const double t0 = f.number("time_origin", 0.0);
  const double c = f.number("c", kSpeedOfLight);
  MeasurementGeometry g;
  if (type == "confocal") {
    const auto scan = f.integers<2>("scan");
    const auto hw = f.numbers<2>("half_width");
    const double wall_z = f.number("wall_z", 0.0);
    g = with_field("geometry", [&] {
      return make_confocal_scan(scan[0], scan[1], hw[0], hw[1], bw, static_cast<int>(q), wall_z);
    });
  } else if (type == "pairs") {
    const Json& pairs = f.raw("pairs");
    if (!pairs.is_array() || pairs.empty())
      throw ConfigError("geometry.pairs: expected a non-empty array");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Json& p = pairs[i];
      const std::string name = "geometry.pairs[" + std::to_string(i) + "]";
      if (!p.is_array() || p.size() != 6) throw ConfigError(name + ": expected 6 numbers");
      MeasurementPair mp;
      for (int a = 0; a < 3; ++a) {
        if (!p[a].is_number() || !p[3 + a].is_number())
          throw ConfigError(name + ": expected 6 numbers");
        mp.illum[a] = p[a].get<double>();
        mp.detect[a] = p[3 + a].get<double>();
      }
      g.pairs.push_back(mp);
    }
    g.bin_width = bw;
    g.num_bins = static_cast<int>(q);
    g.scan_shape = f.has("scan") ? f.integers<2>("scan") : infer_scan_shape(g.pairs);
  } else {
    throw ConfigError("geometry.type: unknown type '" + type + "' (valid: confocal, pairs)");
  }
  g.time_origin = t0;
  g.c = c;
  f.finish();
  with_field("geometry", [&] {
    g.validate();
    return 0;
  });
  return g;
}

Json geometry_to_json(const MeasurementGeometry& g) {
  Json j;
  j["type"] = "pairs";
  j["bin_width"] = g.bin_width;
  j["num_bins"] = g.num_bins;
  j["time_origin"] = g.time_origin;
  j["c"] = g.c;
  j["scan"] = Json::array({g.scan_shape[0], g.scan_shape[1]});
  Json pairs = Json::array();
  for (const auto& p : g.pairs)
    pairs.push_back(Json::array(
        {p.illum.x(), p.illum.y(), p.illum.z(), p.detect.x(), p.detect.y(), p.detect.z()}));
  j["pairs"] = pairs;
  return j;
}

Scene parse_scene(const Json& j) {
  Fields f(j, "scene");
  Scene s;
  s.grid = parse_grid(f.raw("grid"), "scene.grid");
  Fields o(f.raw("object"), "scene.object");
  const std::string type = o.string("type");
  if (type == "pyramid") {
    const double base = o.number("base"), height = o.number("height"),
                 standoff = o.number("standoff");
    s.surface = with_field("scene.object",
                           [&] { return make_pyramid_scene(s.grid, base, height, standoff); });
    s.volume = surface_to_volume(s.surface);
  } else if (type == "plane") {
    const auto x = o.numbers<2>("x");
    const auto y = o.numbers<2>("y");
    const double depth = o.number("depth"), albedo = o.number("albedo", 1.0);
    s.surface = with_field("scene.object", [&] {
      return make_plane_scene(s.grid, Rect{x[0], x[1], y[0], y[1]}, depth, albedo);
    });
    s.volume = surface_to_volume(s.surface);
  } else if (type == "volume") {
    const std::string path = o.string("path");
    s.volume = with_field("scene.object.path", [&] { return read_volume_file(path); });
    if (!(s.volume.grid == s.grid))
      throw ConfigError("scene.object.path: volume grid differs from scene.grid");
    s.surface = is_surface(s.volume) ? volume_to_surface(s.volume) : SurfaceG(s.grid);
  } else {
    throw ConfigError("scene.object.type: unknown type '" + type +
                      "' (valid: pyramid, plane, volume)");
  }
  o.finish();
  if (f.has("noise")) {
    Fields n(f.raw("noise"), "scene.noise");
    s.noise.eta = n.number("eta", 1.0);
    s.noise.dark_rate = n.number("dark_rate", 0.0);
    s.peak_count = n.number("peak_count", 0.0);
    n.finish();
    if (s.peak_count < 0) throw ConfigError("scene.noise.peak_count: must be >= 0");
    with_field("scene.noise", [&] {
      s.noise.validate();
      return 0;
    });
  }
  s.cosine_factor = f.boolean("cosine_factor", false);
  f.finish();
  return s;
}

SscrConfig parse_sscr_config(const Json& j) {
  Fields f(j, "sscr");
  SscrConfig c;
  c.outer_iters = static_cast<int>(f.integer("outer_iters", c.outer_iters));
  c.k_sparse = f.number("k_sparse", c.k_sparse);
  c.bregman.outer_iters = static_cast<int>(f.integer("bregman_iters", c.bregman.outer_iters));
  c.bregman.cg_max_iter = static_cast<int>(f.integer("cg_max_iter", c.bregman.cg_max_iter));
  c.bregman.cg_rel_tol = f.number("cg_rel_tol", c.bregman.cg_rel_tol);
  c.keep_fraction_s = f.number("keep_fraction_s", c.keep_fraction_s);
  c.keep_fraction_c = f.number("keep_fraction_c", c.keep_fraction_c);
  c.triplet_sweeps = static_cast<int>(f.integer("triplet_sweeps", c.triplet_sweeps));
  c.cosine_factor = f.boolean("cosine_factor", c.cosine_factor);
  if (f.has("patch")) {
    Fields p(f.raw("patch"), "sscr.patch");
    PatchConfig pc;
    pc.shape = p.integers<3>("shape");
    pc.stride = p.has("stride") ? p.integers<3>("stride") : pc.shape;
    p.finish();
    c.patch = pc;
  }
  if (f.has("block")) {
    Fields b(f.raw("block"), "sscr.block");
    c.block.block = static_cast<int>(b.integer("block", c.block.block));
    c.block.neighbors = static_cast<int>(b.integer("neighbors", c.block.neighbors));
    c.block.window = static_cast<int>(b.integer("window", c.block.window));
    c.block.stride = static_cast<int>(b.integer("stride", c.block.stride));
    b.finish();
  }
  if (f.has("balance")) {
    Fields b(f.raw("balance"), "sscr.balance");
    c.balance.ut = b.number("ut", c.balance.ut);
    c.balance.u = b.number("u", c.balance.u);
    c.balance.g = b.number("g", c.balance.g);
    b.finish();
  }
  f.finish();
  with_field("sscr", [&] {
    c.validate();
    return 0;
  });
  return c;
}

Json sscr_config_to_json(const SscrConfig& c) {
  Json j;
  j["outer_iters"] = c.outer_iters;
  j["k_sparse"] = c.k_sparse;
  j["bregman_iters"] = c.bregman.outer_iters;
  j["cg_max_iter"] = c.bregman.cg_max_iter;
  j["cg_rel_tol"] = c.bregman.cg_rel_tol;
  j["keep_fraction_s"] = c.keep_fraction_s;
  j["keep_fraction_c"] = c.keep_fraction_c;
  j["triplet_sweeps"] = c.triplet_sweeps;
  j["cosine_factor"] = c.cosine_factor;
  if (c.patch) {
    j["patch"]["shape"] = c.patch->shape;
    j["patch"]["stride"] = c.patch->stride;
  }
  j["block"] = {{"block", c.block.block},
                {"neighbors", c.block.neighbors},
                {"window", c.block.window},
                {"stride", c.block.stride}};
  j["balance"] = {{"ut", c.balance.ut}, {"u", c.balance.u}, {"g", c.balance.g}};
  return j;
}

RunConfig parse_run_config(const Json& j) {
  Fields f(j, "config");
  RunConfig c;
  c.grid = parse_grid(f.raw("grid"), "config.grid");
  if (f.has("sscr")) c.sscr = parse_sscr_config(f.raw("sscr"));
  c.logbp_sigma = f.number("logbp_sigma", c.logbp_sigma);
  c.ls_iters = static_cast<int>(f.integer("ls_iters", c.ls_iters));
  c.baseline_threshold = f.number("baseline_threshold", c.baseline_threshold);
  c.threads = static_cast<int>(f.integer("threads", c.threads));
  f.finish();
  if (!(c.logbp_sigma > 0)) throw ConfigError("config.logbp_sigma: must be positive");
  if (c.ls_iters < 1) throw ConfigError("config.ls_iters: must be >= 1");
  if (!(c.baseline_threshold >= 0 && c.baseline_threshold <= 1))
    throw ConfigError("config.baseline_threshold: must lie in [0, 1]");
  if (c.threads < 1) throw ConfigError("config.threads: must be >= 1");
  return c;
}

Json run_config_to_json(const RunConfig& c) {
  Json j;
  j["grid"] = grid_to_json(c.grid);
  j["sscr"] = sscr_config_to_json(c.sscr);
  j["logbp_sigma"] = c.logbp_sigma;
  j["ls_iters"] = c.ls_iters;
  j["baseline_threshold"] = c.baseline_threshold;
  j["threads"] = c.threads;
  return j;
}

// ---------------------------------------------------------------------------
// CSV and manifest pieces

void write_trace_csv(std::ostream& os, const std::vector<IterationRecord>& trace) {
  os << "iteration,objective,nll,patch_tau,patch_au,s_count,data,l1,surface,blocks,c_count,"
        "lambda,lambda_ut,lambda_u,lambda_g,s_u,lambda_pt,lambda_pu,rel_misfit,rel_misfit_d,"
        "s_threshold,s_kept,c_threshold,triplet_residual,foreground\n";
  for (const auto& r : trace) {
    const auto& t = r.terms;
    const auto& w = r.weights;
    os << r.iteration;
    for (double v : {r.objective, t.nll, t.patch_tau, t.patch_au, t.s_count, t.data, t.l1,
                     t.surface, t.blocks, t.c_count, w.lambda, w.lambda_ut, w.lambda_u,
                     w.lambda_g, w.s_u, w.lambda_pt, w.lambda_pu, r.rel_misfit, r.rel_misfit_d,
                     r.s_threshold})
      os << ',' << fmt(v);
    os << ',' << r.s_kept << ',' << fmt(r.c_threshold) << ',' << fmt(r.triplet_residual) << ','
       << r.foreground << '\n';
  }
}

void write_curves_csv(std::ostream& os, const std::vector<double>& normal,
                      const std::vector<double>& misfit) {
  os << "iteration,log_normal_residual,log_misfit\n";
  for (std::size_t i = 0; i < normal.size(); ++i)
    os << i << ',' << fmt(normal[i]) << ',' << fmt(i < misfit.size() ? misfit[i] : 0.0) << '\n';
}

Json sscr_params_to_json(const SscrState& s) {
  const auto& p = s.params;
  Json j;
  j["s_imp"] = p.s_imp;
  j["mu_s"] = p.mu_s;
  j["lambda"] = {{"value", p.lambda.value},
                 {"numerator", p.lambda.numerator},
                 {"denominator", p.lambda.denominator},
                 {"degenerate", p.lambda.degenerate}};
  j["patch"] = {{"shape", p.patch.shape}, {"stride", p.patch.stride}};
  j["block"] = {{"block", p.block.block},
                {"neighbors", p.block.neighbors},
                {"window", p.block.window},
                {"stride", p.block.stride}};
  j["saturated_bins"] = p.saturated_bins;
  Json iters = Json::array();
  for (const auto& r : s.trace) {
    const auto& w = r.weights;
    iters.push_back({{"iteration", r.iteration},
                     {"lambda_t", w.lambda_t},
                     {"lambda", w.lambda},
                     {"lambda_ut", w.lambda_ut},
                     {"lambda_u", w.lambda_u},
                     {"lambda_g", w.lambda_g},
                     {"s_u", w.s_u},
                     {"lambda_pt", w.lambda_pt},
                     {"lambda_pu", w.lambda_pu},
                     {"s_threshold", r.s_threshold},
                     {"s_kept", r.s_kept},
                     {"c_threshold", r.c_threshold}});
  }
  j["iterations"] = iters;
  j["warnings"] = p.warnings;
  j["stages"] = s.stage_log;
  return j;
}

// ---------------------------------------------------------------------------
// PGM

void write_pgm(std::ostream& os, const Image16& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n65535\n";
  for (auto v : img.pixels) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Image16 read_pgm(std::istream& is) {
  const std::string buf = slurp(is);
  Cursor c{buf};
  c.magic("P5");
  const auto wh = c.line(2, "size");
  const auto mv = c.line(1, "maxval");
  Image16 img;
  img.width = parse_num<int>(wh[0], "width");
  img.height = parse_num<int>(wh[1], "height");
  if (parse_num<int>(mv[0], "maxval") != 65535) throw FormatError(mv[0].offset, "maxval must be 65535");
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  check_payload(c, 2 * n, "image");
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    img.pixels[i] = static_cast<std::uint16_t>(
        (static_cast<unsigned char>(buf[c.pos + 2 * i]) << 8) |
        static_cast<unsigned char>(buf[c.pos + 2 * i + 1]));
  return img;
}

View parse_view(const std::string& s) {
  if (s == "front") return View::Front;
  if (s == "top") return View::Top;
  if (s == "side") return View::Side;
  throw ConfigError("--view: unknown view '" + s + "' (valid: front, top, side)");
}

namespace {

Image16 scale_image(int w, int h, const std::vector<double>& v) {
  Image16 img{w, h, std::vector<std::uint16_t>(v.size(), 0)};
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  if (v.empty() || *mx == *mn) return img;
  for (std::size_t i = 0; i < v.size(); ++i)
    img.pixels[i] = static_cast<std::uint16_t>(std::lround((v[i] - *mn) / (*mx - *mn) * 65535.0));
  return img;
}

}  // namespace

Image16 render_volume(const AlbedoVolume& u, View view) {
  const int I = u.grid.nx(), J = u.grid.ny(), K = u.grid.nz();
  const double lo = -std::numeric_limits<double>::infinity();
  int w = 0, h = 0;
  switch (view) {
    case View::Front: w = I; h = J; break;
    case View::Top: w = I; h = K; break;
    case View::Side: w = K; h = J; break;
  }
  std::vector<double> img(static_cast<std::size_t>(w) * h, lo);
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j)
      for (int k = 0; k < K; ++k) {
        int col = 0, row = 0;
        switch (view) {
          case View::Front: col = i; row = J - 1 - j; break;
          case View::Top: col = i; row = k; break;
          case View::Side: col = k; row = J - 1 - j; break;
        }
        double& px = img[static_cast<std::size_t>(row) * w + col];
        px = std::max(px, u(i, j, k));
      }
  return scale_image(w, h, img);
}

Image16 render_surface(const SurfaceG& g, SurfaceMap map) {
  const int I = g.grid.nx(), J = g.grid.ny();
  Image16 img{I, J, std::vector<std::uint16_t>(static_cast<std::size_t>(I) * J, 0)};
  double mn = std::numeric_limits<double>::infinity(), mx = -mn;
  auto value = [&](std::size_t p) {
    return map == SurfaceMap::Depth ? static_cast<double>(*g.depth[p]) : *g.albedo[p];
  };
  for (std::size_t p = 0; p < g.e.size(); ++p)
    if (g.e[p]) {
      mn = std::min(mn, value(p));
      mx = std::max(mx, value(p));
    }
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j) {
      const std::size_t p = g.grid.pixel_index(i, j);
      if (!g.e[p]) continue;
      const double t = mx > mn ? (value(p) - mn) / (mx - mn) : 1.0;
      img.pixels[static_cast<std::size_t>(J - 1 - j) * I + i] =
          static_cast<std::uint16_t>(1 + std::lround(t * 65534.0));
    }
  return img;
}

}  // namespace nlos

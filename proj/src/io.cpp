#include "octcal/io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "octcal/error.hpp"

namespace octcal {

static_assert(std::endian::native == std::endian::little, "volume and PLY I/O assume a little-endian host");

double round9(double v) {
  if (!std::isfinite(v)) return v;
  return std::stod(fmt9(v));
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Json transform_to_json(const RigidTransform& t) {
  Json j = Json::array();
  for (double v : t.row_major()) j.push_back(round9(v));
  return j;
}

RigidTransform transform_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 16) throw Error(ErrorCode::InvalidInput, "transform must be 16 numbers");
  std::array<double, 16> v{};
  for (std::size_t i = 0; i < 16; ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::InvalidInput, "transform entries must be numbers");
    v[i] = j[i].get<double>();
  }
  const Mat4 m = Eigen::Map<const Eigen::Matrix<double, 4, 4, Eigen::RowMajor>>(v.data());
  if (std::abs(m(3, 0)) + std::abs(m(3, 1)) + std::abs(m(3, 2)) + std::abs(m(3, 3) - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidInput, "transform bottom row must be 0 0 0 1");
  }
  const RigidTransform t(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
  if (t.orthonormality_error() > 1e-6 || std::abs(t.rotation().determinant() - 1.0) > 1e-6) {
    throw Error(ErrorCode::InvalidInput, "transform rotation is not orthonormal");
  }
  return t.orthonormalized();
}

Json vec3_to_json(const Vec3& v) { return Json::array({round9(v.x()), round9(v.y()), round9(v.z())}); }

Vec3 vec3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::InvalidInput, "expected 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

namespace {

/// Copies j[key] into out when present, with type checking.
template <typename T>
void take(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::InvalidInput, std::string("scenario key '") + key + "' has the wrong type");
  }
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidInput, where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw Error(ErrorCode::InvalidInput, "unknown scenario key '" + where + "." + k + "'");
  }
}

}  // namespace

Json scenario_to_json(const ScenarioConfig& cfg) {
  Json j;
  j["name"] = cfg.name;
  j["rng_seed"] = cfg.rng_seed;
  j["true_h_cg"] = transform_to_json(cfg.true_h_cg);
  j["true_h_og"] = transform_to_json(cfg.true_h_og);
  j["board_pose_rw"] = transform_to_json(cfg.board_pose_rw);
  const auto& k = cfg.intrinsics;
  Json dist = Json::array();
  for (double d : k.distortion) dist.push_back(round9(d));
  j["intrinsics"] = {{"fx", round9(k.fx)}, {"fy", round9(k.fy)},     {"cx", round9(k.cx)},  {"cy", round9(k.cy)},
                     {"distortion", dist}, {"width", k.width},       {"height", k.height}};
  j["volume"] = {{"dims_zxy", {cfg.dims.z, cfg.dims.x, cfg.dims.y}},
                 {"spacing_zxy_mm", {round9(cfg.spacing.dz), round9(cfg.spacing.dx), round9(cfg.spacing.dy)}},
                 {"axial_sigma_voxels", round9(cfg.axial_sigma_voxels)},
                 {"min_intensity", round9(cfg.min_intensity)}};
  const auto& n = cfg.noise;
  j["noise"] = {{"corner_px_sigma", round9(n.corner_px_sigma)},     {"oct_speckle_sigma", round9(n.oct_speckle_sigma)},
                {"background_max", round9(n.background_max)},       {"robot_trans_sigma", round9(n.robot_trans_sigma)},
                {"robot_rot_sigma", round9(n.robot_rot_sigma)},     {"camera_image_sigma", round9(n.camera_image_sigma)}};
  j["dropout"] = {{"cos_exponent", round9(cfg.dropout.cos_exponent)}, {"cutoff_deg", round9(cfg.dropout.cutoff_deg)}};
  j["surface"] = {{"kind", cfg.surface.kind == SurfaceKind::Sphere ? "sphere" : "plane"},
                  {"center_rw", vec3_to_json(cfg.surface.center_rw)},
                  {"radius", round9(cfg.surface.radius)}};
  const auto& s = cfg.sampling;
  j["sampling"] = {{"camera_distance_min", round9(s.camera_distance_min)},
                   {"camera_distance_max", round9(s.camera_distance_max)},
                   {"camera_tilt_max_deg", round9(s.camera_tilt_max_deg)},
                   {"camera_roll_max_deg", round9(s.camera_roll_max_deg)},
                   {"camera_target_jitter", round9(s.camera_target_jitter)},
                   {"image_margin_px", round9(s.image_margin_px)},
                   {"oct_lateral_jitter", round9(s.oct_lateral_jitter)},
                   {"oct_depth_jitter", round9(s.oct_depth_jitter)},
                   {"oct_tilt_max_deg", round9(s.oct_tilt_max_deg)},
                   {"oct_depth_check_margin", round9(s.oct_depth_check_margin)},
                   {"oct_yaw_max_deg", round9(s.oct_yaw_max_deg)},
                   {"oct_corner_margin_px", round9(s.oct_corner_margin_px)},
                   {"max_attempts", s.max_attempts}};
  const auto& sc = cfg.scan;
  j["scan"] = {{"standoff", round9(sc.standoff)},          {"alpha_min_deg", round9(sc.alpha_min_deg)},
               {"alpha_max_deg", round9(sc.alpha_max_deg)}, {"alpha_steps", sc.alpha_steps},
               {"beta_min_deg", round9(sc.beta_min_deg)},   {"beta_max_deg", round9(sc.beta_max_deg)},
               {"beta_steps", sc.beta_steps},               {"xy_step", round9(sc.xy_step)},
               {"coverage_bin_mm", round9(sc.coverage_bin_mm)}};
  j["board"] = {{"cols", cfg.board.cols},
                {"rows", cfg.board.rows},
                {"square_edge", round9(cfg.board.square_edge)},
                {"marker_edge", round9(cfg.board.marker_edge)}};
  j["render_rgb"] = cfg.render_rgb;
  j["center_marker"] = cfg.center_marker;
  return j;
}

ScenarioConfig scenario_from_json(const Json& j) {
  ScenarioConfig cfg = ScenarioConfig::defaults();
  check_keys(j,
             {"name", "rng_seed", "true_h_cg", "true_h_og", "board_pose_rw", "intrinsics", "volume", "noise",
              "dropout", "surface", "sampling", "scan", "board", "render_rgb", "center_marker"},
             "scenario");
  take(j, "name", cfg.name);
  take(j, "rng_seed", cfg.rng_seed);
  if (j.contains("true_h_cg")) cfg.true_h_cg = transform_from_json(j["true_h_cg"]);
  if (j.contains("true_h_og")) cfg.true_h_og = transform_from_json(j["true_h_og"]);
  if (j.contains("board_pose_rw")) cfg.board_pose_rw = transform_from_json(j["board_pose_rw"]);
  if (j.contains("intrinsics")) {
    const Json& k = j["intrinsics"];
    check_keys(k, {"fx", "fy", "cx", "cy", "distortion", "width", "height"}, "intrinsics");
    auto& in = cfg.intrinsics;
    take(k, "fx", in.fx);
    take(k, "fy", in.fy);
    take(k, "cx", in.cx);
    take(k, "cy", in.cy);
    take(k, "width", in.width);
    take(k, "height", in.height);
    if (k.contains("distortion")) {
      const Json& d = k["distortion"];
      if (!d.is_array() || d.size() != 5) throw Error(ErrorCode::InvalidInput, "distortion must be 5 numbers");
      for (std::size_t i = 0; i < 5; ++i) in.distortion[i] = d[i].get<double>();
    }
  }
  if (j.contains("volume")) {
    const Json& v = j["volume"];
    check_keys(v, {"dims_zxy", "spacing_zxy_mm", "axial_sigma_voxels", "min_intensity"}, "volume");
    if (v.contains("dims_zxy")) {
      const Json& d = v["dims_zxy"];
      if (!d.is_array() || d.size() != 3) throw Error(ErrorCode::InvalidInput, "dims_zxy must be 3 integers");
      cfg.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    }
    if (v.contains("spacing_zxy_mm")) {
      const Json& d = v["spacing_zxy_mm"];
      if (!d.is_array() || d.size() != 3) throw Error(ErrorCode::InvalidInput, "spacing_zxy_mm must be 3 numbers");
      cfg.spacing = {d[0].get<double>(), d[1].get<double>(), d[2].get<double>()};
    }
    take(v, "axial_sigma_voxels", cfg.axial_sigma_voxels);
    take(v, "min_intensity", cfg.min_intensity);
  }
  if (j.contains("noise")) {
    const Json& n = j["noise"];
    check_keys(n,
               {"corner_px_sigma", "oct_speckle_sigma", "background_max", "robot_trans_sigma", "robot_rot_sigma",
                "camera_image_sigma"},
               "noise");
    take(n, "corner_px_sigma", cfg.noise.corner_px_sigma);
    take(n, "oct_speckle_sigma", cfg.noise.oct_speckle_sigma);
    take(n, "background_max", cfg.noise.background_max);
    take(n, "robot_trans_sigma", cfg.noise.robot_trans_sigma);
    take(n, "robot_rot_sigma", cfg.noise.robot_rot_sigma);
    take(n, "camera_image_sigma", cfg.noise.camera_image_sigma);
  }
  if (j.contains("dropout")) {
    const Json& d = j["dropout"];
    check_keys(d, {"cos_exponent", "cutoff_deg"}, "dropout");
    take(d, "cos_exponent", cfg.dropout.cos_exponent);
    take(d, "cutoff_deg", cfg.dropout.cutoff_deg);
  }
  if (j.contains("surface")) {
    const Json& s = j["surface"];
    check_keys(s, {"kind", "center_rw", "radius"}, "surface");
    if (s.contains("kind")) {
      const std::string kind = s["kind"].get<std::string>();
      if (kind == "sphere") {
        cfg.surface.kind = SurfaceKind::Sphere;
      } else if (kind == "plane") {
        cfg.surface.kind = SurfaceKind::Plane;
      } else {
        throw Error(ErrorCode::InvalidInput, "surface kind must be plane or sphere");
      }
    }
    if (s.contains("center_rw")) cfg.surface.center_rw = vec3_from_json(s["center_rw"]);
    take(s, "radius", cfg.surface.radius);
  }
  if (j.contains("sampling")) {
    const Json& s = j["sampling"];
    auto& p = cfg.sampling;
    check_keys(s,
               {"camera_distance_min", "camera_distance_max", "camera_tilt_max_deg", "camera_roll_max_deg",
                "camera_target_jitter", "image_margin_px", "oct_lateral_jitter", "oct_depth_jitter",
                "oct_tilt_max_deg", "oct_depth_check_margin", "oct_yaw_max_deg", "oct_corner_margin_px",
                "max_attempts"},
               "sampling");
    take(s, "camera_distance_min", p.camera_distance_min);
    take(s, "camera_distance_max", p.camera_distance_max);
    take(s, "camera_tilt_max_deg", p.camera_tilt_max_deg);
    take(s, "camera_roll_max_deg", p.camera_roll_max_deg);
    take(s, "camera_target_jitter", p.camera_target_jitter);
    take(s, "image_margin_px", p.image_margin_px);
    take(s, "oct_lateral_jitter", p.oct_lateral_jitter);
    take(s, "oct_depth_jitter", p.oct_depth_jitter);
    take(s, "oct_tilt_max_deg", p.oct_tilt_max_deg);
    take(s, "oct_depth_check_margin", p.oct_depth_check_margin);
    take(s, "oct_yaw_max_deg", p.oct_yaw_max_deg);
    take(s, "oct_corner_margin_px", p.oct_corner_margin_px);
    take(s, "max_attempts", p.max_attempts);
  }
  if (j.contains("scan")) {
    const Json& s = j["scan"];
    auto& p = cfg.scan;
    check_keys(s,
               {"standoff", "alpha_min_deg", "alpha_max_deg", "alpha_steps", "beta_min_deg", "beta_max_deg",
                "beta_steps", "xy_step", "coverage_bin_mm"},
               "scan");
    take(s, "standoff", p.standoff);
    take(s, "alpha_min_deg", p.alpha_min_deg);
    take(s, "alpha_max_deg", p.alpha_max_deg);
    take(s, "alpha_steps", p.alpha_steps);
    take(s, "beta_min_deg", p.beta_min_deg);
    take(s, "beta_max_deg", p.beta_max_deg);
    take(s, "beta_steps", p.beta_steps);
    take(s, "xy_step", p.xy_step);
    take(s, "coverage_bin_mm", p.coverage_bin_mm);
  }
  if (j.contains("board")) {
    const Json& b = j["board"];
    check_keys(b, {"cols", "rows", "square_edge", "marker_edge"}, "board");
    BoardSpec spec;
    take(b, "cols", spec.cols);
    take(b, "rows", spec.rows);
    take(b, "square_edge", spec.square_edge);
    take(b, "marker_edge", spec.marker_edge);
    if (spec.cols < 2 || spec.rows < 2) throw Error(ErrorCode::InvalidInput, "board needs at least 2x2 squares");
    spec.dictionary = generate_dictionary(spec.marker_count());
    cfg.board = std::move(spec);
  }
  take(j, "render_rgb", cfg.render_rgb);
  take(j, "center_marker", cfg.center_marker);
  cfg.validate();
  return cfg;
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

ScenarioConfig load_scenario(const fs::path& path) { return scenario_from_json(read_json(path)); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

namespace {

constexpr char kVolumeMagic[8] = {'O', 'C', 'T', 'V', '0', '0', '0', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error(ErrorCode::Io, "truncated file " + path.string());
  return v;
}

}  // namespace

void write_volume(const fs::path& path, const OctVolume& v) {
  const auto& d = v.dims();
  const auto& s = v.spacing();
  Json h;
  h["dims_zxy"] = {d.z, d.x, d.y};
  h["spacing_zxy_mm"] = {round9(s.dz), round9(s.dx), round9(s.dy)};
  h["sample"] = "float32le";
  h["order"] = "zxy";
  h["acquisition_pose"] = transform_to_json(v.acquisition_pose());
  const std::string header = h.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(kVolumeMagic, sizeof kVolumeMagic);
  put<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(v.data().data()),
            static_cast<std::streamsize>(v.data().size() * sizeof(float)));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

OctVolume read_volume(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kVolumeMagic, sizeof magic) != 0) {
    throw Error(ErrorCode::Io, path.string() + " is not an OCTV0001 volume");
  }
  const auto len = get<std::uint64_t>(in, path);
  if (len > (1u << 20)) throw Error(ErrorCode::Io, "implausible header length in " + path.string());
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(ErrorCode::Io, "truncated header in " + path.string());
  Json h;
  VolumeDims dims;
  VoxelSpacing spacing;
  RigidTransform pose;
  try {
    h = Json::parse(header);
    if (h.at("sample") != "float32le" || h.at("order") != "zxy") throw Error(ErrorCode::Io, "unsupported layout");
    const Json& d = h.at("dims_zxy");
    dims = {d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
    const Json& s = h.at("spacing_zxy_mm");
    spacing = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
    pose = transform_from_json(h.at("acquisition_pose"));
    validate_geometry(dims, spacing);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, "malformed volume header in " + path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::Io, "malformed volume header in " + path.string() + ": " + e.what());
  }
  OctVolume v(dims, spacing);
  auto& data = v.data();
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!in) throw Error(ErrorCode::Io, "truncated samples in " + path.string());
  v.set_acquisition_pose(pose);
  return v;
}

void write_ply(const fs::path& path, const PointCloud& cloud, bool binary) {
  std::ostringstream head;
  head << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
       << "element vertex " << cloud.size() << "\n"
       << "property double x\nproperty double y\nproperty double z\nproperty float intensity\nend_header\n";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << head.str();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points_rw[i];
    const float inten = i < cloud.intensity.size() ? cloud.intensity[i] : 0.0f;
    if (binary) {
      put(out, p.x());
      put(out, p.y());
      put(out, p.z());
      put(out, inten);
    } else {
      out << fmt9(p.x()) << ' ' << fmt9(p.y()) << ' ' << fmt9(p.z()) << ' ' << fmt9(inten) << '\n';
    }
  }
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

Image read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  // Header tokens may be separated by whitespace and '#' comments.
  auto token = [&]() {
    std::string t;
    while (in) {
      const int c = in.get();
      if (c == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      if (std::isspace(c) || c == EOF) {
        if (!t.empty()) break;
        if (c == EOF) break;
        continue;
      }
      t += static_cast<char>(c);
    }
    return t;
  };
  if (token() != "P5") throw Error(ErrorCode::Io, path.string() + " is not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::Io, "malformed PGM header in " + path.string());
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw Error(ErrorCode::Io, "bad PGM size in " + path.string());
  const int bytes = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw Error(ErrorCode::Io, "truncated PGM " + path.string());
  Image img(w, h);
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    const int v = bytes == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];  // 16-bit PGM is big-endian
    img.data()[i] = static_cast<float>(v) / static_cast<float>(maxval);
  }
  return img;
}

PointCloud read_ply(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw Error(ErrorCode::Io, path.string() + " is not a PLY file");
  bool binary = false;
  std::size_t count = 0;
  struct Prop {
    std::string name;
    std::string type;
  };
  std::vector<Prop> props;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") {
        binary = true;
      } else if (fmt != "ascii") {
        throw Error(ErrorCode::Io, "unsupported PLY format " + fmt);
      }
    } else if (word == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> count;
    } else if (word == "property" && in_vertex) {
      Prop p;
      ls >> p.type >> p.name;
      if (p.type != "float" && p.type != "double") throw Error(ErrorCode::Io, "unsupported PLY property type");
      props.push_back(p);
    } else if (word == "end_header") {
      break;
    }
  }
  int ix = -1, iy = -1, iz = -1, ii = -1;
  for (int k = 0; k < static_cast<int>(props.size()); ++k) {
    if (props[k].name == "x") ix = k;
    if (props[k].name == "y") iy = k;
    if (props[k].name == "z") iz = k;
    if (props[k].name == "intensity") ii = k;
  }
  if (ix < 0 || iy < 0 || iz < 0) throw Error(ErrorCode::Io, "PLY vertices need x, y and z");
  PointCloud cloud;
  std::vector<double> row(props.size());
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < props.size(); ++k) {
      if (binary) {
        row[k] = props[k].type == "double" ? get<double>(in, path) : get<float>(in, path);
      } else if (!(in >> row[k])) {
        throw Error(ErrorCode::Io, "truncated PLY body in " + path.string());
      }
    }
    cloud.points_rw.emplace_back(row[ix], row[iy], row[iz]);
    cloud.intensity.push_back(ii >= 0 ? static_cast<float>(row[ii]) : 0.0f);
    cloud.source_volume.push_back(0);
  }
  return cloud;
}

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      EVP_MD_CTX_free(ctx_);
      throw Error(ErrorCode::Io, "SHA-256 unavailable");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += digits[md[i] >> 4];
      out += digits[md[i] & 15];
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

StagedDir::StagedDir(fs::path final_path) : final_(std::move(final_path)) {
  if (final_.empty()) throw Error(ErrorCode::InvalidInput, "output directory must not be empty");
  fs::path clean = final_.lexically_normal();
  if (clean.filename().empty()) clean = clean.parent_path();
  final_ = clean;
  staging_ = final_.parent_path() / (final_.filename().string() + ".staging");
  std::error_code ec;
  fs::remove_all(staging_, ec);
  fs::create_directories(staging_, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + staging_.string() + ": " + ec.message());
}

StagedDir::~StagedDir() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

void StagedDir::commit() {
  std::error_code ec;
  if (fs::exists(final_)) fs::remove_all(final_, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot replace " + final_.string() + ": " + ec.message());
  fs::rename(staging_, final_, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot move output into " + final_.string() + ": " + ec.message());
  committed_ = true;
}

}  // namespace octcal

#include "octcal/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "octcal/eval.hpp"
#include "octcal/io.hpp"
#include "octcal/parallel.hpp"

namespace octcal {

namespace {

constexpr const char* kDefaultScenario = "<built-in defaults>";

int resolved_threads(const GlobalOptions& g) { return g.threads; }

/// Identity of a scenario independent of its seed, so runs that differ only
/// in noise draws group together. Computed from the scenario as given on the
/// command line; datasets carry it forward because a JSON round trip may move
/// the last rounded digit.
// Floats are hashed at 6 significant digits: a scenario read back from its
// own scenario.json (rounded, rotations re-orthonormalized) keeps its id.
void canonicalize(Json& j) {
  if (j.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", j.get<double>());
    j = std::strtod(buf, nullptr) + 0.0;  // + 0.0 folds -0 into 0
  } else if (j.is_structured()) {
    for (auto& v : j) canonicalize(v);
  }
}

std::string scenario_id(const ScenarioConfig& cfg) {
  Json j = scenario_to_json(cfg);
  j.erase("rng_seed");
  canonicalize(j);
  return sha256_hex(j.dump()).substr(0, 16);
}

Json scenario_header(const ScenarioConfig& cfg, const std::string& id) {
  return {{"scenario", cfg.name}, {"scenario_id", id}, {"rng_seed", cfg.rng_seed}};
}

std::string observation_mode_name(ObservationMode m) { return m == ObservationMode::Analytic ? "analytic" : "rendered"; }

ObservationMode parse_observation_mode(const std::string& s) {
  if (s == "analytic") return ObservationMode::Analytic;
  if (s == "rendered") return ObservationMode::Rendered;
  throw Error(ErrorCode::MalformedRun, "unknown observation mode '" + s + "'");
}

Json rpy_json(const Mat3& r) {
  EulerRPY e = rpy_from_rotation(r);
  const EulerRPY alt = alternate_rpy(e);
  if (std::abs(alt.roll) + std::abs(alt.yaw) < std::abs(e.roll) + std::abs(e.yaw)) e = alt;
  return Json::array({round9(e.roll), round9(e.pitch), round9(e.yaw)});
}

Json transform_block(const RigidTransform& t) {
  return {{"matrix", transform_to_json(t)},
          {"translation_mm", vec3_to_json(t.translation())},
          {"rpy_deg", rpy_json(t.rotation())}};
}

Json vec2_json(const Vec2& v) { return Json::array({round9(v.x()), round9(v.y())}); }

Vec2 vec2_from(const Json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::MalformedRun, "expected 2 numbers");
  return {j[0].get<double>(), j[1].get<double>()};
}

/// Checksums of every file in the stage, then manifest.json itself.
struct ScenarioRef {
  const ScenarioConfig* cfg = nullptr;
  std::string id;
  std::string path;
};

ScenarioRef scenario_ref(const GlobalOptions& g, const ScenarioConfig& cfg) {
  return {&cfg, scenario_id(cfg), g.scenario ? g.scenario->string() : kDefaultScenario};
}

void write_manifest(const StagedDir& stage, const std::string& command, const ScenarioRef& scenario,
                    const Json& inputs = Json::object()) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(stage.path())) {
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  Json artifacts = Json::object();
  for (const auto& n : names) artifacts[n] = sha256_file(stage.path() / n);
  Json m;
  m["command"] = command;
  if (scenario.cfg != nullptr) {
    m["scenario_path"] = scenario.path;
    m["scenario_id"] = scenario.id;
    m["rng_seed"] = scenario.cfg->rng_seed;
  }
  m["inputs"] = inputs;
  m["output_directory"] = stage.final_path().string();
  m["artifacts"] = artifacts;
  write_json(stage.path() / "manifest.json", m);
}

std::string csv_line(std::initializer_list<std::string> cells) {
  std::string out;
  bool first = true;
  for (const auto& c : cells) {
    if (!first) out += ',';
    out += c;
    first = false;
  }
  return out + "\n";
}

// ---------------------------------------------------------------------------
// Datasets

struct Dataset {
  fs::path dir;
  ScenarioConfig cfg;
  std::string scenario_id;
  ObservationMode mode = ObservationMode::Rendered;
  std::vector<CameraFrame> camera;
  std::vector<OctFrame> oct;
  std::vector<fs::path> volume_files;  // rendered mode, one per OCT frame
};

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.dir = dir;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingData, "dataset directory " + dir.string() + " not found");
  for (const char* f : {"scenario.json", "poses.json"}) {
    if (!fs::exists(dir / f)) throw Error(ErrorCode::MissingData, "dataset is missing " + std::string(f));
  }
  d.cfg = load_scenario(dir / "scenario.json");
  const Json poses = read_json(dir / "poses.json");
  try {
    d.mode = parse_observation_mode(poses.at("mode").get<std::string>());
    d.scenario_id = poses.at("scenario_id").get<std::string>();
    for (const Json& c : poses.at("camera")) {
      CameraFrame f;
      f.robot_true = transform_from_json(c.at("robot_true"));
      f.robot_reported = transform_from_json(c.at("robot_reported"));
      d.camera.push_back(f);
    }
    for (const Json& o : poses.at("oct")) {
      OctFrame f;
      f.target_marker = o.at("target_marker").get<int>();
      f.robot_true = transform_from_json(o.at("robot_true"));
      f.robot_reported = transform_from_json(o.at("robot_reported"));
      d.oct.push_back(f);
      if (d.mode == ObservationMode::Rendered) d.volume_files.push_back(dir / o.at("volume").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRun, "malformed poses.json: " + std::string(e.what()));
  }

  if (!d.camera.empty()) {
    if (!fs::exists(dir / "camera_obs.json")) throw Error(ErrorCode::MissingData, "dataset is missing camera_obs.json");
    const Json obs = read_json(dir / "camera_obs.json");
    try {
      const Json& frames = obs.at("frames");
      if (frames.size() != d.camera.size()) throw Error(ErrorCode::MalformedRun, "camera_obs.json frame count");
      for (std::size_t i = 0; i < frames.size(); ++i) {
        auto& o = d.camera[i].observation;
        o.corner_ids = frames[i].at("corner_ids").get<std::vector<int>>();
        for (const Json& p : frames[i].at("px")) o.px.push_back(vec2_from(p));
        if (o.px.size() != o.corner_ids.size()) throw Error(ErrorCode::MalformedRun, "camera corner count mismatch");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRun, "malformed camera_obs.json: " + std::string(e.what()));
    }
  }

  if (d.mode == ObservationMode::Analytic) {
    if (!fs::exists(dir / "oct_obs.json")) throw Error(ErrorCode::MissingData, "dataset is missing oct_obs.json");
    const Json obs = read_json(dir / "oct_obs.json");
    try {
      const Json& frames = obs.at("frames");
      if (frames.size() != d.oct.size()) throw Error(ErrorCode::MalformedRun, "oct_obs.json frame count");
      for (std::size_t i = 0; i < frames.size(); ++i) {
        for (const Json& m : frames[i].at("markers")) {
          OctMarkerObservation o;
          o.marker_id = m.at("id").get<int>();
          for (int k = 0; k < 4; ++k) {
            o.corners_px[k] = vec2_from(m.at("corners_px").at(k));
            o.corners_o[k] = vec3_from_json(m.at("corners_o").at(k));
          }
          d.oct[i].markers.push_back(o);
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRun, "malformed oct_obs.json: " + std::string(e.what()));
    }
  } else {
    for (const auto& f : d.volume_files) {
      if (!fs::exists(f)) throw Error(ErrorCode::MissingData, "volume " + f.filename().string() + " is missing");
    }
  }
  return d;
}

ScenarioRef dataset_ref(const Dataset& d) {
  return {&d.cfg, d.scenario_id, (d.dir / "scenario.json").string()};
}

/// Runs the OCT branch on every volume file of a rendered dataset.
void process_dataset_volumes(Dataset& d, int threads) {
  if (d.mode != ObservationMode::Rendered) return;
  const int inner = resolve_threads(threads) > 1 ? 1 : threads;
  parallel_for(d.oct.size(), threads, [&](std::size_t i) {
    const OctVolume v = read_volume(d.volume_files[i]);
    OctProcessingParams params;
    params.threads = inner;
    d.oct[i].markers = process_oct_volume(v, d.cfg.board, params);
  });
}

struct Calibration {
  RigidTransform h_cg;
  RigidTransform h_og;
  std::string scenario_id;
};

Calibration load_calibration(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingData, "calibration " + path.string() + " not found");
  const Json j = read_json(path);
  try {
    return {transform_from_json(j.at("h_cg").at("matrix")), transform_from_json(j.at("h_og").at("matrix")),
            j.at("scenario_id").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRun, "malformed calibration file: " + std::string(e.what()));
  }
}

Json summary_json(const ErrorSummary& s) {
  return {{"count", s.count}, {"mean", round9(s.mean)}, {"std", round9(s.std)}, {"max", round9(s.max)}};
}

Json hand_eye_json(const HandEyeResult& h, const PoseSeries& s, const ResidualReport& r, const char* residual_name) {
  double res = 0.0;
  for (double v : s.residual) res += v;
  if (!s.residual.empty()) res /= s.residual.size();
  double rot = 0.0, trans = 0.0;
  for (const auto& m : r.motions) {
    rot += m.rotation_deg * m.rotation_deg;
    trans += m.translation_mm * m.translation_mm;
  }
  if (!r.motions.empty()) {
    rot = std::sqrt(rot / r.motions.size());
    trans = std::sqrt(trans / r.motions.size());
  }
  return {{"poses_used", s.pairs.size()},
          {"motions", h.motion_count},
          {"translation_condition", round9(h.translation_condition)},
          {"warnings", h.warnings},
          {residual_name, round9(res)},
          {"ax_xb_rotation_rms_deg", round9(rot)},
          {"ax_xb_translation_rms_mm", round9(trans)}};
}

void write_curve_csv(const fs::path& path, const char* x_name, const std::vector<CurvePoint>& curve) {
  std::string text = csv_line({x_name, "mean_mm", "std_mm", "count"});
  for (const auto& p : curve) {
    text += csv_line({fmt9(p.x), fmt9(p.error.mean), fmt9(p.error.std), std::to_string(p.error.count)});
  }
  write_text(path, text);
}

Json curve_json(const std::vector<CurvePoint>& curve) {
  Json a = Json::array();
  for (const auto& p : curve) {
    a.push_back({{"x", round9(p.x)}, {"mean", round9(p.error.mean)}, {"std", round9(p.error.std)},
                 {"count", p.error.count}});
  }
  return a;
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnreachableTarget: return 2;
    case ErrorCode::InsufficientMotion:
    case ErrorCode::MissingData: return 3;
    case ErrorCode::EmptyCloud:
    case ErrorCode::DegenerateCloud: return 4;
    case ErrorCode::MalformedRun: return 5;
    default: return 1;
  }
}

ScenarioConfig resolve_scenario(const GlobalOptions& g) {
  ScenarioConfig cfg = g.scenario ? load_scenario(*g.scenario) : ScenarioConfig::defaults();
  if (g.seed) cfg.rng_seed = *g.seed;
  cfg.validate();
  return cfg;
}

void cmd_simulate(const GlobalOptions& g, const SimulateOptions& o) {
  const ScenarioConfig cfg = resolve_scenario(g);
  if (o.n_cam < 0 || o.n_oct < 0) throw Error(ErrorCode::InvalidInput, "pose counts must be >= 0");
  if (o.n_cam == 0) std::cerr << "warning: n_cam = 0, no camera observations will be written\n";
  const int threads = resolved_threads(g);
  const auto camera = acquire_camera_frames(cfg, o.n_cam, "calib", threads);

  const ScenarioRef ref = scenario_ref(g, cfg);
  StagedDir stage(g.out);
  write_json(stage.path() / "scenario.json", scenario_to_json(cfg));

  std::vector<std::string> volume_names;
  for (int i = 0; i < o.n_oct; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "vol_%03d.octv", i);
    volume_names.push_back(name);
  }
  const VolumeSink sink = [&](int i, const OctVolume& v) {
    write_volume(stage.path() / volume_names[static_cast<std::size_t>(i)], v);
  };
  const auto oct = acquire_oct_frames(cfg, o.n_oct, cfg.center_marker, "calib", o.mode, threads,
                                      o.mode == ObservationMode::Rendered ? sink : VolumeSink{}, false);

  Json poses;
  poses["scenario_id"] = ref.id;
  poses["mode"] = observation_mode_name(o.mode);
  poses["center_marker"] = cfg.center_marker;
  poses["camera"] = Json::array();
  for (std::size_t i = 0; i < camera.size(); ++i) {
    poses["camera"].push_back({{"index", i},
                               {"robot_true", transform_to_json(camera[i].robot_true)},
                               {"robot_reported", transform_to_json(camera[i].robot_reported)}});
  }
  poses["oct"] = Json::array();
  for (std::size_t i = 0; i < oct.size(); ++i) {
    Json e = {{"index", i},
              {"target_marker", oct[i].target_marker},
              {"robot_true", transform_to_json(oct[i].robot_true)},
              {"robot_reported", transform_to_json(oct[i].robot_reported)}};
    if (o.mode == ObservationMode::Rendered) e["volume"] = volume_names[i];
    poses["oct"].push_back(e);
  }
  write_json(stage.path() / "poses.json", poses);

  if (!camera.empty()) {
    Json frames = Json::array();
    for (std::size_t i = 0; i < camera.size(); ++i) {
      Json px = Json::array();
      for (const auto& p : camera[i].observation.px) px.push_back(vec2_json(p));
      frames.push_back({{"index", i}, {"corner_ids", camera[i].observation.corner_ids}, {"px", px}});
    }
    write_json(stage.path() / "camera_obs.json", {{"frames", frames}});
  }
  if (o.mode == ObservationMode::Analytic) {
    Json frames = Json::array();
    for (std::size_t i = 0; i < oct.size(); ++i) {
      Json markers = Json::array();
      for (const auto& m : oct[i].markers) {
        Json px = Json::array(), po = Json::array();
        for (int k = 0; k < 4; ++k) {
          px.push_back(vec2_json(m.corners_px[k]));
          po.push_back(vec3_to_json(m.corners_o[k]));
        }
        markers.push_back({{"id", m.marker_id}, {"corners_px", px}, {"corners_o", po}});
      }
      frames.push_back({{"index", i}, {"markers", markers}});
    }
    write_json(stage.path() / "oct_obs.json", {{"frames", frames}});
  }
  write_manifest(stage, "simulate", ref,
                 {{"n_cam", o.n_cam}, {"n_oct", o.n_oct}, {"mode", observation_mode_name(o.mode)}});
  stage.commit();
}

void cmd_calibrate(const GlobalOptions& g, const fs::path& dataset) {
  Dataset d = load_dataset(dataset);
  if (d.camera.empty()) throw Error(ErrorCode::MissingData, "dataset has no camera observations");
  if (d.oct.empty()) throw Error(ErrorCode::MissingData, "dataset has no OCT observations");
  process_dataset_volumes(d, resolved_threads(g));
  const CalibrationResult cal = calibrate(d.camera, d.oct, d.cfg.board, d.cfg.intrinsics);

  StagedDir stage(g.out);
  Json j = scenario_header(d.cfg, d.scenario_id);
  j["h_cg"] = transform_block(cal.h_cg);
  j["h_og"] = transform_block(cal.h_og);
  j["camera"] = hand_eye_json(cal.camera, cal.camera_series, cal.camera_residuals, "mean_pnp_residual_px");
  j["oct"] = hand_eye_json(cal.oct, cal.oct_series, cal.oct_residuals, "mean_registration_rms_mm");
  j["error_vs_truth"] = {
      {"h_cg",
       {{"translation_mm", round9(translation_error(cal.h_cg, d.cfg.true_h_cg))},
        {"rotation_deg", round9(rad2deg(rotation_error(cal.h_cg, d.cfg.true_h_cg)))}}},
      {"h_og",
       {{"translation_mm", round9(translation_error(cal.h_og, d.cfg.true_h_og))},
        {"rotation_deg", round9(rad2deg(rotation_error(cal.h_og, d.cfg.true_h_og)))}}}};
  write_json(stage.path() / "calibration.json", j);

  std::string csv = csv_line({"sensor", "pose_i", "pose_k", "rotation_deg", "translation_mm"});
  auto add = [&](const char* sensor, const ResidualReport& r, const PoseSeries& s) {
    for (const auto& m : r.motions) {
      csv += csv_line({sensor, std::to_string(s.frame_index[m.i]), std::to_string(s.frame_index[m.k]),
                       fmt9(m.rotation_deg), fmt9(m.translation_mm)});
    }
  };
  add("camera", cal.camera_residuals, cal.camera_series);
  add("oct", cal.oct_residuals, cal.oct_series);
  write_text(stage.path() / "residuals.csv", csv);
  write_manifest(stage, "calibrate", dataset_ref(d), {{"dataset", dataset.string()}});
  stage.commit();
}

void cmd_eval_reproj(const GlobalOptions& g, const fs::path& dataset, const fs::path& calibration) {
  Dataset d = load_dataset(dataset);
  const Calibration cal = load_calibration(calibration);
  if (cal.scenario_id != d.scenario_id) {
    throw Error(ErrorCode::MalformedRun, "calibration and dataset come from different scenarios");
  }
  process_dataset_volumes(d, resolved_threads(g));
  const PoseSeries cam = camera_pose_series(d.camera, d.cfg.board, d.cfg.intrinsics);
  const PoseSeries oct = probe_pose_series(d.oct, d.cfg.board);
  const auto records = reprojection_error(cal.h_cg, cal.h_og, camera_views(cam, d.cfg.board, d.cfg.intrinsics),
                                          oct_views(oct, d.oct), d.cfg.board);

  StagedDir stage(g.out);
  std::string csv = csv_line({"marker_id", "pose_i", "pose_k", "rmse_mm"});
  for (const auto& r : records) {
    csv += csv_line({std::to_string(r.marker_id), std::to_string(r.pose_i), std::to_string(r.pose_k), fmt9(r.rmse)});
  }
  write_text(stage.path() / "reprojection.csv", csv);
  Json j = scenario_header(d.cfg, d.scenario_id);
  j["records"] = summary_json(summarize_records(records));
  Json per = Json::object();
  for (const auto& [id, v] : per_marker_rms(records)) per[std::to_string(id)] = round9(v);
  j["per_marker_rms_mm"] = per;
  write_json(stage.path() / "reprojection.json", j);
  write_manifest(stage, "eval reproj", dataset_ref(d),
                 {{"dataset", dataset.string()}, {"calibration", calibration.string()}});
  stage.commit();
}

void cmd_eval_plateau(const GlobalOptions& g, const StudyOptions& o) {
  const ScenarioConfig cfg = resolve_scenario(g);
  if (o.n_values.empty()) throw Error(ErrorCode::InvalidInput, "no n values given");
  const int n_max = *std::max_element(o.n_values.begin(), o.n_values.end());
  const EvalDataset data =
      build_eval_dataset(cfg, o.n_cam, n_max, o.n_eval, false, o.mode, "plateau", resolved_threads(g));
  const auto curve = plateau_study(data, cfg.board, o.n_values);

  StagedDir stage(g.out);
  write_curve_csv(stage.path() / "plateau.csv", "n_volumes", curve);
  Json j = scenario_header(cfg, scenario_id(cfg));
  j["study"] = "plateau";
  j["mode"] = observation_mode_name(o.mode);
  j["points"] = curve_json(curve);
  write_json(stage.path() / "plateau.json", j);
  write_manifest(stage, "eval plateau", scenario_ref(g, cfg),
                 {{"n_cam", o.n_cam}, {"n_eval", o.n_eval}, {"n_values", o.n_values},
                  {"mode", observation_mode_name(o.mode)}});
  stage.commit();
}

void cmd_eval_distance(const GlobalOptions& g, const StudyOptions& o) {
  const ScenarioConfig cfg = resolve_scenario(g);
  const EvalDataset data = build_eval_dataset(cfg, o.n_cam, o.n_oct, 0, true, o.mode, "distance", resolved_threads(g));
  const auto curve = distance_study(data, cfg.board, cfg.center_marker, o.bin_mm);

  StagedDir stage(g.out);
  write_curve_csv(stage.path() / "distance.csv", "distance_mm", curve);
  Json j = scenario_header(cfg, scenario_id(cfg));
  j["study"] = "distance";
  j["mode"] = observation_mode_name(o.mode);
  j["points"] = curve_json(curve);
  write_json(stage.path() / "distance.json", j);
  write_manifest(stage, "eval distance", scenario_ref(g, cfg),
                 {{"n_cam", o.n_cam}, {"n_oct", o.n_oct}, {"bin_mm", round9(o.bin_mm)},
                  {"mode", observation_mode_name(o.mode)}});
  stage.commit();
}

namespace {

void add_stats_rows(std::string& csv, const char* name, const TransformStats& s, bool with_std) {
  const char* comps[6] = {"tx_mm", "ty_mm", "tz_mm", "roll_deg", "pitch_deg", "yaw_deg"};
  const double means[6] = {s.translation_mean[0], s.translation_mean[1], s.translation_mean[2],
                           s.rpy_mean.roll,       s.rpy_mean.pitch,      s.rpy_mean.yaw};
  const double stds[6] = {s.translation_std[0], s.translation_std[1], s.translation_std[2],
                          s.rpy_std[0],         s.rpy_std[1],         s.rpy_std[2]};
  for (int c = 0; c < 6; ++c) {
    if (with_std) {
      csv += csv_line({name, comps[c], fmt9(means[c]), fmt9(stds[c])});
    } else {
      csv += csv_line({name, comps[c], fmt9(means[c])});
    }
  }
}

Json stats_json(const TransformStats& s) {
  return {{"translation_mean_mm", {round9(s.translation_mean[0]), round9(s.translation_mean[1]),
                                   round9(s.translation_mean[2])}},
          {"translation_std_mm", {round9(s.translation_std[0]), round9(s.translation_std[1]),
                                  round9(s.translation_std[2])}},
          {"rpy_mean_deg", {round9(s.rpy_mean.roll), round9(s.rpy_mean.pitch), round9(s.rpy_mean.yaw)}},
          {"rpy_std_deg", {round9(s.rpy_std[0]), round9(s.rpy_std[1]), round9(s.rpy_std[2])}},
          {"rotation_std_deg", {round9(s.rotation_std[0]), round9(s.rotation_std[1]), round9(s.rotation_std[2])}}};
}

}  // namespace

void cmd_eval_repeatability(const GlobalOptions& g, const StudyOptions& o) {
  const ScenarioConfig cfg = resolve_scenario(g);
  const RepeatabilityResult r = repeatability(cfg, o.runs, o.n_cam, o.n_oct, o.mode, resolved_threads(g));

  StagedDir stage(g.out);
  std::string csv = csv_line({"transform", "component", "mean", "std"});
  add_stats_rows(csv, "h_cg", r.cg, true);
  add_stats_rows(csv, "h_og", r.og, true);
  write_text(stage.path() / "repeatability.csv", csv);
  Json j = scenario_header(cfg, scenario_id(cfg));
  j["runs"] = r.runs;
  j["h_cg"] = stats_json(r.cg);
  j["h_og"] = stats_json(r.og);
  Json per_run = Json::array();
  for (int i = 0; i < r.runs; ++i) {
    per_run.push_back({{"h_cg", transform_to_json(r.h_cg[i])}, {"h_og", transform_to_json(r.h_og[i])}});
  }
  j["per_run"] = per_run;
  write_json(stage.path() / "repeatability.json", j);
  write_manifest(stage, "eval repeatability", scenario_ref(g, cfg),
                 {{"runs", o.runs}, {"n_cam", o.n_cam}, {"n_oct", o.n_oct}, {"mode", observation_mode_name(o.mode)}});
  stage.commit();
}

namespace {

Json fit_json(const SphereFit& fit, std::size_t points, std::optional<double> expected_radius) {
  Json j = {{"points", points},
            {"center_mm", vec3_to_json(fit.center)},
            {"radius_mm", round9(fit.radius)},
            {"mean_abs_residual_mm", round9(fit.mean_abs_residual())},
            {"residual_rms_mm", round9(fit.rms())},
            {"algebraic_rms_mm", round9(fit.algebraic_rms)},
            {"iterations", fit.iterations}};
  if (expected_radius) j["radius_error_mm"] = round9(fit.radius - *expected_radius);
  return j;
}

}  // namespace

void cmd_scan(const GlobalOptions& g, const fs::path& calibration, ScanMode mode, bool binary_ply) {
  const ScenarioConfig cfg = resolve_scenario(g);
  const Calibration cal = load_calibration(calibration);
  if (cal.scenario_id != scenario_id(cfg)) {
    throw Error(ErrorCode::MalformedRun, "calibration was produced for a different scenario");
  }
  const ScanResult r = run_scan(cfg, cal.h_og, mode, "scan", resolved_threads(g));
  if (r.cloud.empty()) throw Error(ErrorCode::EmptyCloud, "no surface point was found in any volume");
  const SphereFit fit = fit_sphere(r.cloud.points_rw);
  const SphereCap cap = cap_for_plan(cfg.surface.center_rw, cfg.surface.radius, cfg.scan, cfg.dims, cfg.spacing);
  const CoverageReport cov = coverage_report(r.cloud, cap, cfg.scan.coverage_bin_mm, r.true_probe_poses, cfg.dims,
                                             cfg.spacing, cfg.dropout.cutoff_deg);

  StagedDir stage(g.out);
  write_ply(stage.path() / "cloud.ply", r.cloud, binary_ply);
  Json f = scenario_header(cfg, scenario_id(cfg));
  f["mode"] = to_string(mode);
  f["fit"] = fit_json(fit, r.cloud.size(), cfg.surface.radius);
  write_json(stage.path() / "sphere_fit.json", f);

  Json c = scenario_header(cfg, scenario_id(cfg));
  c["mode"] = to_string(mode);
  c["volumes"] = r.plan.robot_poses.size();
  c["cells"] = cov.bins;
  c["covered"] = cov.covered;
  c["coverage"] = round9(cov.coverage);
  c["dropout_cells"] = cov.dropout_bins;
  c["dropout_above_cutoff"] = cov.dropout_above_cutoff;
  c["dropout_depth_clipped"] = cov.dropout_depth_clipped;
  c["dropout_above_cutoff_fraction"] = round9(cov.dropout_above_cutoff_fraction);
  c["max_incidence_covered_deg"] = round9(cov.max_incidence_covered_deg);
  write_json(stage.path() / "coverage.json", c);

  // Great-circle section through the fitted center, in the RW x-z plane.
  std::string csv = csv_line({"u_mm", "v_mm"});
  try {
    for (const auto& p : cross_section(r.cloud, fit.center, Vec3::UnitY(), 0.5, Vec3::UnitX())) {
      csv += csv_line({fmt9(p.u), fmt9(p.v)});
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptySection) throw;
  }
  write_text(stage.path() / "cross_section.csv", csv);

  Json poses = Json::array();
  for (std::size_t i = 0; i < r.plan.robot_poses.size(); ++i) {
    poses.push_back({{"index", i},
                     {"robot_commanded", transform_to_json(r.plan.robot_poses[i])},
                     {"robot_reported", transform_to_json(r.reported_poses[i])}});
  }
  write_json(stage.path() / "scan_poses.json", {{"mode", to_string(mode)}, {"poses", poses}});
  write_manifest(stage, "scan", scenario_ref(g, cfg), {{"calibration", calibration.string()}, {"mode", to_string(mode)}});
  stage.commit();
}

void cmd_fit_sphere(const GlobalOptions& g, const fs::path& cloud_path) {
  const PointCloud cloud = read_ply(cloud_path);
  if (cloud.empty()) throw Error(ErrorCode::EmptyCloud, "cloud has no points");
  const SphereFit fit = fit_sphere(cloud.points_rw);
  StagedDir stage(g.out);
  write_json(stage.path() / "sphere_fit.json", {{"fit", fit_json(fit, cloud.size(), std::nullopt)}});
  write_manifest(stage, "fit-sphere", {}, {{"cloud", cloud_path.string()}});
  stage.commit();
}

void cmd_export_ply(const GlobalOptions& g, const fs::path& dataset, const fs::path& calibration, bool binary_ply) {
  const Dataset d = load_dataset(dataset);
  if (d.mode != ObservationMode::Rendered) throw Error(ErrorCode::MissingData, "dataset has no volumes to export");
  const Calibration cal = load_calibration(calibration);
  std::vector<PointCloud> parts(d.volume_files.size());
  parallel_for(d.volume_files.size(), resolved_threads(g), [&](std::size_t i) {
    append_surface(parts[i], read_volume(d.volume_files[i]), static_cast<int>(i), cal.h_og, d.cfg.min_intensity);
  });
  PointCloud cloud;
  for (auto& p : parts) {
    cloud.points_rw.insert(cloud.points_rw.end(), p.points_rw.begin(), p.points_rw.end());
    cloud.intensity.insert(cloud.intensity.end(), p.intensity.begin(), p.intensity.end());
    cloud.source_volume.insert(cloud.source_volume.end(), p.source_volume.begin(), p.source_volume.end());
  }
  if (cloud.empty()) throw Error(ErrorCode::EmptyCloud, "no surface point was found in any volume");
  StagedDir stage(g.out);
  write_ply(stage.path() / "cloud.ply", cloud, binary_ply);
  write_manifest(stage, "export-ply", dataset_ref(d),
                 {{"dataset", dataset.string()}, {"calibration", calibration.string()}});
  stage.commit();
}

void cmd_board_dump(const GlobalOptions& g) {
  const ScenarioConfig cfg = resolve_scenario(g);
  const BoardSpec& b = cfg.board;
  StagedDir stage(g.out);
  Json checker = Json::array();
  for (const auto& p : checker_corners_cw(b)) checker.push_back(vec3_to_json(p));
  Json markers = Json::array();
  for (int id = 0; id < b.marker_count(); ++id) {
    Json corners = Json::array();
    for (const auto& p : marker_corners_cw(b, id)) corners.push_back(vec3_to_json(p));
    Json bits = Json::array();
    for (const auto& row : marker_cells(b, id)) {
      std::string s;
      for (bool cell : row) s += cell ? '1' : '0';
      bits.push_back(s);
    }
    const auto sq = marker_square(b, id);
    markers.push_back({{"id", id}, {"square_col_row", {sq[0], sq[1]}}, {"corners_cw", corners}, {"cells", bits}});
  }
  write_json(stage.path() / "board.json", {{"cols", b.cols},
                                           {"rows", b.rows},
                                           {"square_edge_mm", round9(b.square_edge)},
                                           {"marker_edge_mm", round9(b.marker_edge)},
                                           {"checker_corners_cw", checker},
                                           {"markers", markers}});
  std::string csv = csv_line({"kind", "marker_id", "corner_index", "x_mm", "y_mm", "z_mm"});
  for (const auto& f : board_features(b)) {
    csv += csv_line({f.kind == FeatureKind::CheckerCorner ? "checker_corner" : "marker_corner",
                     f.marker_id ? std::to_string(*f.marker_id) : "", std::to_string(f.corner_index),
                     fmt9(f.position_cw.x()), fmt9(f.position_cw.y()), fmt9(f.position_cw.z())});
  }
  write_text(stage.path() / "board_features.csv", csv);
  write_manifest(stage, "board dump", scenario_ref(g, cfg));
  stage.commit();
}

void cmd_report(const GlobalOptions& g, const std::vector<fs::path>& runs) {
  if (runs.empty()) throw Error(ErrorCode::MalformedRun, "report needs at least one run directory");
  std::set<std::string> ids;
  std::vector<std::pair<std::string, RigidTransform>> cg, og;
  std::string curves = csv_line({"study", "run", "x", "mean_mm", "std_mm", "count"});
  std::string scans = csv_line({"run", "mode", "radius_mm", "radius_error_mm", "mean_abs_residual_mm", "coverage"});
  int n_curves = 0, n_scans = 0;
  auto read = [](const fs::path& p) {
    try {
      return read_json(p);
    } catch (const Error& e) {
      throw Error(ErrorCode::MalformedRun, e.what());
    }
  };
  for (const auto& dir : runs) {
    if (!fs::exists(dir / "manifest.json")) throw Error(ErrorCode::MalformedRun, dir.string() + " has no manifest.json");
    const std::string run = dir.filename().string();
    bool used = false;
    try {
      if (fs::exists(dir / "calibration.json")) {
        const Json j = read(dir / "calibration.json");
        ids.insert(j.at("scenario_id").get<std::string>());
        cg.emplace_back(run, transform_from_json(j.at("h_cg").at("matrix")));
        og.emplace_back(run, transform_from_json(j.at("h_og").at("matrix")));
        used = true;
      }
      for (const char* study : {"plateau", "distance"}) {
        const fs::path p = dir / (std::string(study) + ".json");
        if (!fs::exists(p)) continue;
        const Json j = read(p);
        ids.insert(j.at("scenario_id").get<std::string>());
        for (const Json& pt : j.at("points")) {
          curves += csv_line({study, run, fmt9(pt.at("x").get<double>()), fmt9(pt.at("mean").get<double>()),
                              fmt9(pt.at("std").get<double>()), std::to_string(pt.at("count").get<int>())});
        }
        ++n_curves;
        used = true;
      }
      if (fs::exists(dir / "sphere_fit.json") && fs::exists(dir / "coverage.json")) {
        const Json f = read(dir / "sphere_fit.json");
        const Json c = read(dir / "coverage.json");
        ids.insert(f.at("scenario_id").get<std::string>());
        ids.insert(c.at("scenario_id").get<std::string>());
        const Json& fit = f.at("fit");
        scans += csv_line({run, f.at("mode").get<std::string>(), fmt9(fit.at("radius_mm").get<double>()),
                           fmt9(fit.at("radius_error_mm").get<double>()),
                           fmt9(fit.at("mean_abs_residual_mm").get<double>()), fmt9(c.at("coverage").get<double>())});
        ++n_scans;
        used = true;
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRun, "malformed run " + dir.string() + ": " + e.what());
    }
    if (!used) throw Error(ErrorCode::MalformedRun, dir.string() + " holds no calibration, study or scan results");
  }
  if (ids.size() > 1) throw Error(ErrorCode::MalformedRun, "runs come from different scenarios");

  StagedDir stage(g.out);
  Json summary;
  summary["scenario_id"] = *ids.begin();
  summary["runs"] = runs.size();
  Json notes = Json::array();
  if (!cg.empty()) {
    std::vector<RigidTransform> a, b;
    for (const auto& [_, t] : cg) a.push_back(t);
    for (const auto& [_, t] : og) b.push_back(t);
    const bool spread = cg.size() > 1;
    std::string csv = spread ? csv_line({"transform", "component", "mean", "std"})
                             : csv_line({"transform", "component", "mean"});
    const TransformStats sa = transform_stats(a);
    const TransformStats sb = transform_stats(b);
    add_stats_rows(csv, "h_cg", sa, spread);
    add_stats_rows(csv, "h_og", sb, spread);
    write_text(stage.path() / "repeatability.csv", csv);
    summary["calibration_runs"] = cg.size();
    if (spread) {
      summary["h_cg"] = stats_json(sa);
      summary["h_og"] = stats_json(sb);
    } else {
      notes.push_back("single calibration run: no standard deviation column");
    }
  }
  if (n_curves > 0) write_text(stage.path() / "curves.csv", curves);
  if (n_scans > 0) write_text(stage.path() / "scan_comparison.csv", scans);
  summary["notes"] = notes;
  write_json(stage.path() / "report.json", summary);
  Json inputs = Json::array();
  for (const auto& r : runs) inputs.push_back(r.string());
  write_manifest(stage, "report", {}, {{"runs", inputs}});
  stage.commit();
}

void cmd_detect(const GlobalOptions& g, const fs::path& input) {
  const ScenarioConfig cfg = resolve_scenario(g);
  std::string lines;
  if (input.extension() == ".pgm") {
    const Image img = read_pgm(input);
    for (const auto& d : detect_markers(img, cfg.board.dictionary)) {
      Json px = Json::array();
      for (const auto& c : d.corners_px) px.push_back(vec2_json(c));
      lines += Json{{"id", d.marker_id}, {"corners", px}, {"confidence", round9(d.decode_confidence)}}.dump() + "\n";
    }
  } else {
    const OctVolume v = read_volume(input);
    OctProcessingParams params;
    params.threads = resolved_threads(g);
    for (const auto& m : process_oct_volume(v, cfg.board, params)) {
      Json px = Json::array(), po = Json::array();
      for (int k = 0; k < 4; ++k) {
        px.push_back(vec2_json(m.corners_px[k]));
        po.push_back(vec3_to_json(m.corners_o[k]));
      }
      lines += Json{{"id", m.marker_id}, {"corners", px}, {"corners_o", po}, {"confidence", round9(m.confidence)}}
                   .dump() +
               "\n";
    }
  }
  StagedDir stage(g.out);
  write_text(stage.path() / "detections.jsonl", lines);
  write_manifest(stage, "detect", scenario_ref(g, cfg), {{"input", input.string()}});
  stage.commit();
}

void cmd_solve_handeye(const GlobalOptions& g, const fs::path& pairs_path) {
  const Json in = read_json(pairs_path);
  std::vector<PosePair> pairs;
  try {
    if (!in.is_array()) throw Error(ErrorCode::InvalidInput, "expected a JSON array of pose pairs");
    for (const Json& p : in) {
      pairs.push_back({transform_from_json(p.at("robot_pose")), transform_from_json(p.at("sensor_pose"))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidInput, "malformed pose pairs: " + std::string(e.what()));
  }
  const HandEyeResult x = hand_eye_tsai_lenz(pairs);
  const ResidualReport r = residual_diagnostics(pairs, x.sensor_to_gripper);
  Json motions = Json::array();
  for (const auto& m : r.motions) {
    motions.push_back({{"i", m.i}, {"k", m.k}, {"rotation_deg", round9(m.rotation_deg)},
                       {"translation_mm", round9(m.translation_mm)}});
  }
  Json per_pose = Json::array();
  for (const auto& p : r.pairs) {
    per_pose.push_back({{"index", p.index}, {"rotation_deg", round9(p.rotation_deg)},
                        {"translation_mm", round9(p.translation_mm)}});
  }
  StagedDir stage(g.out);
  write_json(stage.path() / "handeye.json", {{"x", transform_block(x.sensor_to_gripper)},
                                             {"motions_used", x.motion_count},
                                             {"translation_condition", round9(x.translation_condition)},
                                             {"warnings", x.warnings},
                                             {"residuals", {{"motions", motions}, {"poses", per_pose}}}});
  write_manifest(stage, "solve-handeye", {}, {{"pairs", pairs_path.string()}});
  stage.commit();
}

}  // namespace octcal

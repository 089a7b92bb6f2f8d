#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "octcal/error.hpp"
#include "octcal/pipeline.hpp"
#include "octcal/scan.hpp"

namespace octcal {

/// Flags shared by every subcommand.
struct GlobalOptions {
  std::optional<std::filesystem::path> scenario;  // built-in defaults when absent
  std::optional<std::uint64_t> seed;              // overrides the scenario seed
  std::filesystem::path out = "out";
  int threads = 0;
};

/// Process exit status for a library error: 2 unreachable target, 3 missing
/// calibration data, 4 empty cloud, 5 malformed run, 1 anything else.
int exit_code_for(ErrorCode code);

ScenarioConfig resolve_scenario(const GlobalOptions& g);

struct SimulateOptions {
  int n_cam = 20;
  int n_oct = 35;
  ObservationMode mode = ObservationMode::Rendered;
};

/// Dataset directory: scenario.json, poses.json, camera_obs.json (when
/// n_cam > 0), vol_NNN.octv or oct_obs.json, manifest.json.
void cmd_simulate(const GlobalOptions& g, const SimulateOptions& o);

/// calibration.json and residuals.csv from a dataset directory.
void cmd_calibrate(const GlobalOptions& g, const std::filesystem::path& dataset);

/// reprojection.csv and reprojection.json for a dataset and a calibration.
void cmd_eval_reproj(const GlobalOptions& g, const std::filesystem::path& dataset,
                     const std::filesystem::path& calibration);

struct StudyOptions {
  int n_cam = 20;
  int n_oct = 35;
  int n_eval = 10;
  std::vector<int> n_values{3, 5, 10, 15, 20, 25, 30, 35};
  int runs = 3;
  double bin_mm = 10.0;
  ObservationMode mode = ObservationMode::Rendered;
};

void cmd_eval_plateau(const GlobalOptions& g, const StudyOptions& o);
void cmd_eval_distance(const GlobalOptions& g, const StudyOptions& o);
void cmd_eval_repeatability(const GlobalOptions& g, const StudyOptions& o);

/// cloud.ply, sphere_fit.json, coverage.json, cross_section.csv, scan_poses.json.
/// Throws EmptyCloud when no surface point was found.
void cmd_scan(const GlobalOptions& g, const std::filesystem::path& calibration, ScanMode mode, bool binary_ply = false);

void cmd_fit_sphere(const GlobalOptions& g, const std::filesystem::path& cloud);

/// Stitched surface of every volume in a dataset.
void cmd_export_ply(const GlobalOptions& g, const std::filesystem::path& dataset,
                    const std::filesystem::path& calibration, bool binary_ply = false);

void cmd_board_dump(const GlobalOptions& g);

/// repeatability.csv over calibrate runs, curves.csv over eval runs and
/// scan_comparison.csv over scan runs. Throws MalformedRun for unreadable
/// runs or runs of different scenarios.
void cmd_report(const GlobalOptions& g, const std::vector<std::filesystem::path>& runs);

/// detections.jsonl, one {id, corners, confidence} object per line, from a
/// .octv volume (en-face projection, corners also lifted to the probe frame)
/// or a binary PGM grayscale image.
void cmd_detect(const GlobalOptions& g, const std::filesystem::path& input);

/// handeye.json from a JSON array of {robot_pose, sensor_pose} 4x4 pairs.
/// InsufficientMotion maps to exit 3.
void cmd_solve_handeye(const GlobalOptions& g, const std::filesystem::path& pairs);

}  // namespace octcal

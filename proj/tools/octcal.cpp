#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "octcal/commands.hpp"
#include "octcal/parallel.hpp"

namespace {

octcal::ObservationMode parse_mode(const std::string& s) {
  return s == "analytic" ? octcal::ObservationMode::Analytic : octcal::ObservationMode::Rendered;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw octcal::Error(octcal::ErrorCode::InvalidInput, "bad integer list '" + s + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace octcal;
  CLI::App app{"Hand-eye calibration and scanning toolkit for an OCT probe and an RGB-D camera"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::string scenario;
  std::uint64_t seed = 0;
  std::string out = "out";
  app.add_option("--scenario", scenario, "Scenario JSON (built-in defaults when omitted)");
  auto* seed_opt = app.add_option("--seed", seed, "Override the scenario RNG seed");
  app.add_option("--out", out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads (falls back to OCT_HANDEYE_THREADS)")->check(CLI::NonNegativeNumber);

  const std::vector<std::string> modes{"analytic", "rendered"};

  SimulateOptions sim;
  std::string sim_mode = "rendered";
  auto* simulate = app.add_subcommand("simulate", "Simulate a calibration dataset");
  simulate->add_option("--n-cam", sim.n_cam, "Camera poses")->check(CLI::NonNegativeNumber);
  simulate->add_option("--n-oct", sim.n_oct, "OCT volumes")->check(CLI::NonNegativeNumber);
  simulate->add_option("--mode", sim_mode, "OCT observations")->check(CLI::IsMember(modes));

  std::string dataset, calibration;
  auto* calibrate = app.add_subcommand("calibrate", "Estimate H_cg and H_og from a dataset");
  calibrate->add_option("dataset", dataset, "Dataset directory")->required();

  StudyOptions study;
  std::string study_mode = "rendered";
  std::string n_values;
  auto* eval = app.add_subcommand("eval", "Evaluation studies");
  eval->require_subcommand(1);
  auto* reproj = eval->add_subcommand("reproj", "Corner reprojection error between the two sensor chains");
  reproj->add_option("dataset", dataset, "Dataset directory")->required();
  reproj->add_option("calibration", calibration, "calibration.json")->required();
  auto add_study = [&](CLI::App* c) {
    c->add_option("--n-cam", study.n_cam, "Camera poses")->check(CLI::PositiveNumber);
    c->add_option("--mode", study_mode, "OCT observations")->check(CLI::IsMember(modes));
  };
  auto* plateau = eval->add_subcommand("plateau", "Reprojection error against the number of OCT volumes");
  add_study(plateau);
  plateau->add_option("--n-eval", study.n_eval, "Evaluation volumes")->check(CLI::PositiveNumber);
  plateau->add_option("--n-values", n_values, "Comma-separated volume counts");
  auto* distance = eval->add_subcommand("distance", "Held-out marker error against distance from the center marker");
  add_study(distance);
  distance->add_option("--n-oct", study.n_oct, "OCT volumes")->check(CLI::PositiveNumber);
  distance->add_option("--bin", study.bin_mm, "Distance bin, mm")->check(CLI::PositiveNumber);
  auto* repeat = eval->add_subcommand("repeatability", "Spread of H_cg and H_og over independent runs");
  add_study(repeat);
  repeat->add_option("--n-oct", study.n_oct, "OCT volumes")->check(CLI::PositiveNumber);
  repeat->add_option("--runs", study.runs, "Calibration runs")->check(CLI::Range(2, 1000));

  std::string scan_mode = "full6d";
  bool binary = false;
  auto* scan = app.add_subcommand("scan", "Scan the sphere phantom and fit it");
  scan->add_option("calibration", calibration, "calibration.json")->required();
  scan->add_option("--mode", scan_mode, "Scan mode")->check(CLI::IsMember({"full6d", "translation3d"}));
  scan->add_flag("--binary", binary, "Binary PLY");

  std::string cloud;
  auto* fit = app.add_subcommand("fit-sphere", "Fit a sphere to a PLY cloud");
  fit->add_option("cloud", cloud, "PLY file")->required();

  auto* export_ply = app.add_subcommand("export-ply", "Stitch every dataset volume into one cloud");
  export_ply->add_option("dataset", dataset, "Dataset directory")->required();
  export_ply->add_option("calibration", calibration, "calibration.json")->required();
  export_ply->add_flag("--binary", binary, "Binary PLY");

  auto* board = app.add_subcommand("board", "Calibration board utilities");
  board->require_subcommand(1);
  auto* dump = board->add_subcommand("dump", "Write the board geometry and corner table");

  std::vector<std::string> runs;
  auto* report = app.add_subcommand("report", "Summary tables over run directories");
  report->add_option("runs", runs, "Run directories")->required();

  std::string input;
  auto* detect = app.add_subcommand("detect", "Detect markers in a volume or grayscale image");
  detect->add_option("input", input, ".octv volume or binary .pgm image")->required()->check(CLI::ExistingFile);

  std::string pairs;
  auto* solve = app.add_subcommand("solve-handeye", "Solve AX = XB for a list of pose pairs");
  solve->add_option("pairs", pairs, "JSON array of {robot_pose, sensor_pose}")->required();

  CLI11_PARSE(app, argc, argv);

  if (!scenario.empty()) g.scenario = scenario;
  if (seed_opt->count() > 0) g.seed = seed;
  g.out = out;
  set_default_threads(g.threads);

  try {
    if (*simulate) {
      sim.mode = parse_mode(sim_mode);
      cmd_simulate(g, sim);
    } else if (*calibrate) {
      cmd_calibrate(g, dataset);
    } else if (*reproj) {
      cmd_eval_reproj(g, dataset, calibration);
    } else if (*plateau || *distance || *repeat) {
      study.mode = parse_mode(study_mode);
      if (!n_values.empty()) study.n_values = parse_int_list(n_values);
      if (*plateau) cmd_eval_plateau(g, study);
      if (*distance) cmd_eval_distance(g, study);
      if (*repeat) cmd_eval_repeatability(g, study);
    } else if (*scan) {
      cmd_scan(g, calibration, parse_scan_mode(scan_mode), binary);
    } else if (*fit) {
      cmd_fit_sphere(g, cloud);
    } else if (*export_ply) {
      cmd_export_ply(g, dataset, calibration, binary);
    } else if (*dump) {
      cmd_board_dump(g);
    } else if (*report) {
      std::vector<std::filesystem::path> dirs(runs.begin(), runs.end());
      cmd_report(g, dirs);
    } else if (*detect) {
      cmd_detect(g, input);
    } else if (*solve) {
      cmd_solve_handeye(g, pairs);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "octcal/scan.hpp"
#include "octcal/sim.hpp"
#include "octcal/image.hpp"
#include "octcal/volume.hpp"

namespace octcal {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

/// Rounds to 9 significant digits so serialized output is stable.
double round9(double v);
/// "%.9g" text form.
std::string fmt9(double v);

/// 16 row-major numbers of the homogeneous matrix.
Json transform_to_json(const RigidTransform& t);
/// Accepts 16 numbers; a rotation off by less than 1e-6 (rounding) is
/// re-orthonormalized, anything worse throws InvalidInput.
RigidTransform transform_from_json(const Json& j);
Json vec3_to_json(const Vec3& v);
Vec3 vec3_from_json(const Json& j);

Json scenario_to_json(const ScenarioConfig& cfg);
/// Missing keys keep their defaults; unknown keys throw InvalidInput. The
/// result is validated.
ScenarioConfig scenario_from_json(const Json& j);
ScenarioConfig load_scenario(const fs::path& path);

Json read_json(const fs::path& path);
/// Two-space indented, trailing newline.
void write_json(const fs::path& path, const Json& j);
void write_text(const fs::path& path, const std::string& text);

/// Volume file: "OCTV0001", uint64 LE header length, JSON header, then
/// float32 LE samples in (z, x, y) order with y fastest.
void write_volume(const fs::path& path, const OctVolume& v);
/// Throws Io on missing or malformed files.
OctVolume read_volume(const fs::path& path);

/// Binary PGM (P5), 8 or 16 bit, scaled to [0, 1].
Image read_pgm(const fs::path& path);

/// PLY with x y z intensity vertices.
void write_ply(const fs::path& path, const PointCloud& cloud, bool binary = false);
/// Reads ASCII or binary little-endian PLY with x, y, z and optional intensity.
PointCloud read_ply(const fs::path& path);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);
std::string sha256_hex(std::string_view bytes);

/// Output directory written under a sibling staging path and moved into place
/// by commit(). An uncommitted stage is removed on destruction, so a failed
/// command leaves nothing behind.
class StagedDir {
 public:
  explicit StagedDir(fs::path final_path);
  ~StagedDir();
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;

  const fs::path& path() const { return staging_; }
  const fs::path& final_path() const { return final_; }
  /// Replaces any existing directory at the final path.
  void commit();

 private:
  fs::path final_;
  fs::path staging_;
  bool committed_ = false;
};

}  // namespace octcal

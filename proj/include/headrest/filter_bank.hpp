#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "headrest/control.hpp"
#include "headrest/fxlms.hpp"
#include "headrest/head_scene.hpp"

namespace headrest {

/// Converged control filters indexed by the head-centre grid node they were
/// trained at. Entries are stored in row-major node order.
struct FilterBank {
  GridSpec grid;
  double sample_rate = 8000.0;
  std::vector<ControlFilter> entries;
  std::string metadata;  // JSON: training configuration, scene digest, per-node residuals

  bool empty() const { return entries.empty(); }
  const ControlFilter& at(const GridIndex& idx) const;
  void validate() const;
};

/// Node closest to `point`; ties go to the smaller row-major index and
/// points outside the lattice clamp to its boundary.
GridIndex nearest_grid(const Vec3& point, const GridSpec& grid);

/// Trains one filter per node with the head (yaw 0) centred on it. Taps are
/// stored at single precision, matching the bank file.
FilterBank train_bank(const AcousticScene& scene, const GridSpec& grid, const HeadGeometry& geom,
                      const FxlmsConfig& cfg, std::uint64_t noise_seed, unsigned threads = 0);

/// Head-centre estimate used for filter selection: midpoint of the ears.
Vec3 head_center_estimate(const EarEstimate& ears);

const ControlFilter& select_and_switch(const FilterBank& bank, const EarEstimate& ears);

/// Tracks the selected node and reports only actual changes.
class FilterSwitcher {
 public:
  explicit FilterSwitcher(const FilterBank& bank);

  /// New node when the selection changed, std::nullopt otherwise.
  std::optional<GridIndex> update(const EarEstimate& ears);
  /// Filter of the selected node; before the first update, the node nearest
  /// the grid origin.
  const ControlFilter& current() const;
  std::size_t switch_count() const { return switches_; }

 private:
  const FilterBank& bank_;
  std::optional<GridIndex> node_;
  std::size_t switches_ = 0;
};

/// Filters trained at several yaw angles for a fixed head centre.
struct AngleBank {
  Vec3 center = Vec3::Zero();
  std::vector<double> angles;  // radians, ascending
  std::vector<ControlFilter> filters;
};

AngleBank train_angle_bank(const AcousticScene& scene, const Vec3& center, std::vector<double> angles,
                           const HeadGeometry& geom, const FxlmsConfig& cfg, std::uint64_t noise_seed,
                           unsigned threads = 0);

/// Yaw implied by the ear pair (right -> left ear direction in the stage
/// horizontal plane).
double yaw_from_ears(const EarEstimate& ears);
std::size_t nearest_angle(double yaw, const std::vector<double>& angles);

/// Binary bank file, little-endian, CRC32-terminated.
void save_bank(const FilterBank& bank, std::ostream& out);
FilterBank load_bank(std::istream& in);
void save_bank(const FilterBank& bank, const std::string& path);
FilterBank load_bank(const std::string& path);

std::vector<std::uint8_t> serialize_bank(const FilterBank& bank);
FilterBank deserialize_bank(std::span<const std::uint8_t> bytes);

}  // namespace headrest

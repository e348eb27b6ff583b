#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "headrest/fxlms.hpp"

namespace headrest {

inline constexpr std::size_t kDefaultBlockSize = 64;

/// Latest-wins holder of the filter the audio loop should use. One updater
/// installs, one audio loop reads; neither waits on the other beyond a
/// pointer swap.
class FilterSlot {
 public:
  void install(std::shared_ptr<const ControlFilter> filter);
  std::shared_ptr<const ControlFilter> current() const;

 private:
  std::shared_ptr<const ControlFilter> filter_;
};

/// Fixed-filter feedforward control simulated block by block through a
/// (true) plant. The filter is sampled from the slot once per block, so a
/// block is never processed with a mixture of two filters.
class ControlLoop {
 public:
  explicit ControlLoop(PlantSet truth, std::size_t block_size = kDefaultBlockSize,
                       std::size_t max_filter_taps = 256);

  FilterSlot& slot() { return slot_; }
  std::size_t block_size() const { return block_size_; }

  /// Processes one block of reference samples and uncontrolled sensor
  /// signals; writes controlled sensor signals into `controlled[sensor]`.
  /// Returns the filter used (nullptr = no control).
  const ControlFilter* process_block(std::span<const double> reference,
                                     const std::vector<std::span<const double>>& uncontrolled,
                                     const std::vector<std::span<double>>& controlled);

  /// Speaker drive signals of the most recent block.
  const std::vector<Eigen::VectorXd>& last_drive() const { return drive_; }

 private:
  PlantSet truth_;
  std::size_t block_size_;
  Eigen::Index taps_;
  Eigen::Index path_len_;
  FilterSlot slot_;
  Eigen::VectorXd x_ring_;                          // doubled ring of reference history
  Eigen::Index x_pos_ = 0;
  std::vector<Eigen::VectorXd> y_ring_;             // doubled rings of speaker history
  Eigen::Index y_pos_ = 0;
  std::vector<std::vector<Eigen::VectorXd>> s_rev_;
  std::vector<Eigen::VectorXd> drive_;
  std::shared_ptr<const ControlFilter> prepared_source_;
  std::vector<Eigen::VectorXd> prepared_rev_;
};

struct ControlResult {
  std::vector<Signal> before;  // [sensor] uncontrolled
  std::vector<Signal> after;   // [sensor] controlled
};

inline constexpr double kControlWarmupSeconds = 0.25;

/// Runs band noise (80-2000 Hz) through `truth` with `filter` held fixed.
/// The first 0.25 s are simulated but not returned.
ControlResult control_stage(const PlantSet& truth, const ControlFilter& filter, std::uint64_t noise_seed,
                            double duration);

/// Same, with an explicit primary-source signal (no warm-up trimming).
ControlResult control_stage(const PlantSet& truth, const ControlFilter& filter, const Signal& source_noise);

/// Noise reduction per sensor, A-weighted over 80-2000 Hz.
std::vector<double> noise_reduction_per_sensor(const ControlResult& result);

}  // namespace headrest

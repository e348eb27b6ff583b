#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "headrest/config.hpp"
#include "headrest/filter_bank.hpp"

namespace headrest {

struct MdeRow {
  char axis = 'X';
  double offset_mm = 0.0;
  double mde_left_mm = 0.0;   // signed mean of (estimate - truth) along the axis
  double mde_right_mm = 0.0;
};

/// Signed per-axis mean deviation over the 7x7x3 grid: one row per offset
/// along X (7), Y (7) and Z (3), averaged over every node in that slice.
std::vector<MdeRow> run_translation_accuracy(const ExperimentConfig& cfg, unsigned threads = 0);

struct RotationErrorRow {
  double theta_deg = 0.0;
  double e_left_mm = 0.0;  // mean 3-D distance to the true ear
  double e_right_mm = 0.0;
  double max_left_mm = 0.0;
  double max_right_mm = 0.0;
};

struct RotationAccuracy {
  std::vector<RotationErrorRow> rows;
  double spearman_left = 0.0;  // rank correlation of angle and per-repetition error
  double spearman_right = 0.0;
  double spearman_mean = 0.0;  // same, on the binaural mean error
};

RotationAccuracy run_rotation_accuracy(const ExperimentConfig& cfg, unsigned threads = 0);

enum class Condition { Ideal, EpOff, EpOn };
std::string_view to_string(Condition c);

struct NrCell {
  GridIndex node;
  Vec3 position = Vec3::Zero();
  double theta_deg = 0.0;
  Condition condition = Condition::Ideal;
  double nr_left = 0.0;  // dBA, mean over control seeds
  double nr_right = 0.0;
  int misselected = 0;   // EP-on seeds whose selection differs from the ideal filter
};

/// Bank over the 5x5x2 headrest grid, trained with the configured FxLMS.
FilterBank train_headrest_bank(const ExperimentConfig& cfg, unsigned threads = 0);
/// Filters for every configured ANC angle at the rotation centre.
AngleBank train_rotation_bank(const ExperimentConfig& cfg, unsigned threads = 0);

/// Ears as the controller receives them: synthetic keypoint frames, symmetry
/// recovery, stage frame, wire encoding and a subscriber. One estimate per
/// delivered message, oldest first.
std::vector<EarEstimate> ep_ear_stream(const ExperimentConfig& cfg, const HeadPose& pose, std::uint64_t stream);

/// Three cells per node (Ideal, EpOff, EpOn), nodes in row-major order.
std::vector<NrCell> run_anc_translation(const ExperimentConfig& cfg, const FilterBank& bank, unsigned threads = 0);
/// Three cells per configured angle.
std::vector<NrCell> run_anc_rotation(const ExperimentConfig& cfg, const AngleBank& bank, unsigned threads = 0);

struct SpectrumRow {
  int ear = 0;  // 0 left, 1 right
  double frequency = 0.0;
  double before = 0.0;  // dB
  double ideal = 0.0;
  double ep_off = 0.0;
  double ep_on = 0.0;
};

/// Spectra at `cfg.spectrum_node` over 80-2000 Hz. Throws NodeOutsideGrid
/// when the node is not on the bank's grid.
std::vector<SpectrumRow> run_spectra(const ExperimentConfig& cfg, const FilterBank& bank);

struct QuietZoneRow {
  int seed = 0;
  double frequency = 0.0;
  double nr_ear_left = 0.0;  // dB at the training points
  double nr_ear_right = 0.0;
  double nr_probe_left = 0.0;  // dB at points offset forward from the ears
  double nr_probe_right = 0.0;
};

/// Narrowband (+-10 %) training at the ears, then NR at probes
/// `quiet_zone_offset` in front of each ear, for each configured frequency.
std::vector<QuietZoneRow> run_quiet_zone(const ExperimentConfig& cfg, unsigned threads = 0);

/// "# " lines carrying the resolved configuration and the seeds in use.
void write_provenance(std::ostream& out, const ExperimentConfig& cfg, std::string_view command);

void write_csv(std::ostream& out, const std::vector<MdeRow>& rows);
void write_csv(std::ostream& out, const RotationAccuracy& result);
void write_csv(std::ostream& out, const std::vector<NrCell>& cells);
void write_csv(std::ostream& out, const std::vector<SpectrumRow>& rows);
void write_csv(std::ostream& out, const std::vector<QuietZoneRow>& rows);

}  // namespace headrest

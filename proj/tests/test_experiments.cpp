#include <doctest.h>

#include <cmath>
#include <sstream>

#include "headrest/experiments.hpp"
#include "oracles.hpp"

using namespace headrest;

namespace {

ExperimentConfig quick(bool noise) {
  ExperimentConfig cfg;
  cfg.noise = noise;
  cfg.accuracy_reps = 4;
  cfg.nr_seeds = 2;
  cfg.control_duration = 0.5;
  cfg.quiet_zone_seeds = 2;
  cfg.fxlms.filter_taps = 64;
  cfg.fxlms.step_size = 0.02;
  cfg.fxlms.max_iterations = 40000;
  return cfg;
}

const FilterBank& quick_bank() {
  static const FilterBank bank = train_headrest_bank(quick(false), 1);
  return bank;
}

template <typename Rows>
std::string csv_of(const Rows& rows) {
  std::ostringstream out;
  write_csv(out, rows);
  return out.str();
}

}  // namespace

TEST_CASE("noiseless translation accuracy is exact") {
  const auto rows = run_translation_accuracy(quick(false), 1);
  REQUIRE(rows.size() == 17);
  CHECK(rows.front().axis == 'X');
  CHECK(rows.front().offset_mm == -75.0);
  CHECK(rows[14].axis == 'Z');
  CHECK(rows[14].offset_mm == -25.0);
  for (const auto& r : rows) {
    CHECK(std::abs(r.mde_left_mm) < 1e-9);
    CHECK(std::abs(r.mde_right_mm) < 1e-9);
  }
}

TEST_CASE("experiment output does not depend on thread count") {
  const ExperimentConfig cfg = quick(true);
  CHECK(csv_of(run_translation_accuracy(cfg, 1)) == csv_of(run_translation_accuracy(cfg, 3)));
  CHECK(csv_of(run_rotation_accuracy(cfg, 1)) == csv_of(run_rotation_accuracy(cfg, 4)));
}

TEST_CASE("rotation accuracy") {
  const auto exact = run_rotation_accuracy(quick(false), 1);
  REQUIRE(exact.rows.size() == 4);
  for (const auto& r : exact.rows) {
    CHECK(r.e_left_mm < 1e-6);
    CHECK(r.e_right_mm < 1e-6);
  }
  const auto noisy = run_rotation_accuracy(quick(true), 1);
  for (const auto& r : noisy.rows) {
    CHECK(r.e_left_mm > 0.0);
    CHECK(r.max_right_mm >= r.e_right_mm);
  }
}

TEST_CASE("EP stream delivers the true ears without noise") {
  const ExperimentConfig cfg = quick(false);
  for (double yaw : {0.0, 0.5, 1.0}) {
    const HeadPose pose{Vec3(0.025, -0.05, 0.025), yaw};
    const auto stream = ep_ear_stream(cfg, pose, 3);
    REQUIRE(stream.size() == static_cast<std::size_t>(cfg.ep_frames));
    const Vec3 left = oracle::head_to_stage(cfg.head.left_ear, pose.center, yaw);
    const Vec3 right = oracle::head_to_stage(cfg.head.right_ear, pose.center, yaw);
    for (const auto& e : stream) {
      CHECK((e.left - left).norm() < 1e-9);
      CHECK((e.right - right).norm() < 1e-9);
    }
  }
}

TEST_CASE("ANC translation conditions") {
  const auto cells = run_anc_translation(quick(false), quick_bank(), 1);
  REQUIRE(cells.size() == 150);
  const std::size_t origin = quick_bank().grid.linear_index({2, 2, 0});
  CHECK(cells[origin * 3].node == GridIndex{2, 2, 0});
  CHECK(cells[origin * 3 + 1].nr_left == cells[origin * 3].nr_left);
  for (std::size_t n = 0; n < 50; ++n) {
    CHECK(cells[n * 3].condition == Condition::Ideal);
    CHECK(cells[n * 3 + 2].nr_left == cells[n * 3].nr_left);
    CHECK(cells[n * 3 + 2].nr_right == cells[n * 3].nr_right);
    CHECK(cells[n * 3 + 2].misselected == 0);
  }
  const std::size_t corner = quick_bank().grid.linear_index({0, 0, 1});
  CHECK(cells[corner * 3].nr_left > cells[corner * 3 + 1].nr_left + 10.0);
}

TEST_CASE("ANC rotation conditions") {
  ExperimentConfig cfg = quick(false);
  cfg.anc_angles_deg = {0.0, 30.0, 60.0};
  const AngleBank bank = train_rotation_bank(cfg, 1);
  const auto cells = run_anc_rotation(cfg, bank, 1);
  REQUIRE(cells.size() == 9);
  CHECK(cells[0].nr_left == cells[1].nr_left);
  CHECK(cells[8].nr_left == cells[6].nr_left);
  CHECK(cells[6].nr_left + cells[6].nr_right > cells[7].nr_left + cells[7].nr_right + 20.0);
  CHECK(cells[7].theta_deg == 60.0);
}

TEST_CASE("spectra at the displaced node") {
  const ExperimentConfig cfg = quick(false);
  const auto rows = run_spectra(cfg, quick_bank());
  REQUIRE_FALSE(rows.empty());
  std::size_t above = 0;
  std::size_t high = 0;
  for (const auto& r : rows) {
    CHECK(r.frequency >= 80.0);
    CHECK(r.frequency <= 2000.0);
    CHECK(r.ep_on == r.ideal);
    if (r.frequency > 1000.0) {
      ++high;
      if (r.ep_off > r.ep_on) ++above;
    }
  }
  CHECK(above > 0.7 * static_cast<double>(high));

  ExperimentConfig off_grid = cfg;
  off_grid.spectrum_node = Vec3(0.01, 0.0, 0.0);
  CHECK_THROWS_AS(run_spectra(off_grid, quick_bank()), Error);
}

TEST_CASE("quiet zone narrows with frequency") {
  const auto rows = run_quiet_zone(quick(false), 1);
  REQUIRE(rows.size() == 4);
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(rows[2 * s].frequency == 200.0);
    CHECK(rows[2 * s].nr_ear_left > 20.0);
    CHECK(rows[2 * s + 1].nr_probe_left < rows[2 * s].nr_probe_left);
  }
}

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "headrest/byte_io.hpp"
#include "headrest/filter_bank.hpp"
#include "oracles.hpp"

using namespace headrest;

namespace {

FxlmsConfig quick_config() {
  FxlmsConfig cfg;
  cfg.filter_taps = 32;
  cfg.step_size = 0.05;
  cfg.max_iterations = 16000;
  return cfg;
}

const FilterBank& small_bank() {
  static const FilterBank bank = train_bank(AcousticScene::default_headrest(), GridSpec{Vec3::Zero(), 0.025, 3, 2, 2},
                                            HeadGeometry{}, quick_config(), 4, 2);
  return bank;
}

// Independent scan: node positions rebuilt from the spacing formula.
GridIndex oracle_nearest(const Vec3& p, const GridSpec& g) {
  GridIndex best;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < g.nx; ++i) {
    for (int j = 0; j < g.ny; ++j) {
      for (int k = 0; k < g.nz; ++k) {
        const Vec3 node = g.origin + g.spacing * Vec3(i - (g.nx - 1) / 2.0, j - (g.ny - 1) / 2.0, k - (g.nz - 1) / 2.0);
        const double d = (node - p).norm();
        if (d < best_d) {
          best_d = d;
          best = {i, j, k};
        }
      }
    }
  }
  return best;
}

EarEstimate ears_of(const HeadPose& pose) {
  const auto kp = true_keypoints(HeadGeometry{}, pose);
  EarEstimate e;
  e.left = kp[Keypoint::LeftEar];
  e.right = kp[Keypoint::RightEar];
  return e;
}

ErrorCode load_error(std::vector<std::uint8_t> bytes) {
  try {
    deserialize_bank(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

void reseal(std::vector<std::uint8_t>& bytes) {
  const std::uint32_t crc = crc32(std::span<const std::uint8_t>(bytes).first(bytes.size() - 4));
  for (int b = 0; b < 4; ++b) bytes[bytes.size() - 4 + b] = static_cast<std::uint8_t>(crc >> (8 * b));
}

}  // namespace

TEST_CASE("nearest grid node") {
  const GridSpec g = GridSpec::headrest_grid();
  CHECK(nearest_grid(g.node({2, 3, 1}), g) == GridIndex{2, 3, 1});
  const GridIndex n = nearest_grid(Vec3(-0.026, -0.024, 0.026), g);
  CHECK(g.node(n).isApprox(Vec3(-0.025, -0.025, 0.025)));
  CHECK(n == oracle_nearest(Vec3(-0.026, -0.024, 0.026), g));

  const Vec3 mid = 0.5 * (g.node({1, 1, 0}) + g.node({2, 1, 0}));
  CHECK(nearest_grid(mid, g) == GridIndex{1, 1, 0});
  CHECK(nearest_grid(Vec3(1.0, -1.0, 1.0), g) == GridIndex{4, 0, 1});

  std::mt19937_64 rng(31);
  for (int t = 0; t < 2000; ++t) {
    const Vec3 p = oracle::random_vec(rng, 0.1);
    CHECK(nearest_grid(p, g) == oracle_nearest(p, g));
  }
}

TEST_CASE("bank training shape and determinism") {
  const FilterBank one = train_bank(AcousticScene::default_headrest(), GridSpec{}, HeadGeometry{}, quick_config(), 1);
  CHECK(one.entries.size() == 1);
  CHECK(one.entries[0].channels() == 2);
  CHECK(one.entries[0].length() == 32);

  const FilterBank& a = small_bank();
  CHECK(a.entries.size() == 12);
  CHECK_NOTHROW(a.validate());
  const FilterBank b = train_bank(AcousticScene::default_headrest(), a.grid, HeadGeometry{}, quick_config(), 4, 1);
  CHECK(serialize_bank(a) == serialize_bank(b));
  for (std::size_t i = 0; i < a.entries.size(); ++i) CHECK(a.entries[i].trained_at == a.grid.index_at(i));
}

TEST_CASE("bank file round trip") {
  const FilterBank& bank = small_bank();
  std::stringstream buf;
  save_bank(bank, buf);
  const FilterBank back = load_bank(buf);
  CHECK(back.metadata == bank.metadata);
  CHECK(back.grid.origin == bank.grid.origin);
  CHECK(back.grid.nx == bank.grid.nx);
  REQUIRE(back.entries.size() == bank.entries.size());
  for (std::size_t i = 0; i < bank.entries.size(); ++i) {
    CHECK(back.entries[i].taps == bank.entries[i].taps);
    CHECK(back.entries[i].residual_power_db == bank.entries[i].residual_power_db);
    CHECK(back.entries[i].converged == bank.entries[i].converged);
  }
  CHECK(serialize_bank(back) == serialize_bank(bank));
}

TEST_CASE("bank file header layout") {
  const auto bytes = serialize_bank(small_bank());
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "ANCB");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  ByteReader r(std::span<const std::uint8_t>(bytes).subspan(6), ErrorCode::TruncatedFrame);
  for (int i = 0; i < 3; ++i) CHECK(r.le<double>() == 0.0);
  CHECK(r.le<double>() == 0.025);
  CHECK(r.le<std::uint16_t>() == 3);
  CHECK(r.le<std::uint16_t>() == 2);
  CHECK(r.le<std::uint16_t>() == 2);
  CHECK(r.le<std::uint32_t>() == 8000);
  CHECK(r.le<std::uint32_t>() == 32);
  CHECK(r.le<std::uint8_t>() == 2);
  CHECK(r.le<float>() == static_cast<float>(small_bank().entries[0].taps[0][0]));
}

TEST_CASE("bank file corruption is detected") {
  const auto bytes = serialize_bank(small_bank());
  for (std::size_t i = 0; i < bytes.size(); i += 7) {
    auto bad = bytes;
    bad[i] ^= 0x5a;
    CHECK(load_error(bad) == ErrorCode::BadCrc);
  }
  CHECK(load_error(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 9)) == ErrorCode::BadCrc);

  auto magic = bytes;
  magic[0] = 'X';
  reseal(magic);
  CHECK(load_error(magic) == ErrorCode::BadMagic);
  auto version = bytes;
  version[4] = 2;
  reseal(version);
  CHECK(load_error(version) == ErrorCode::BadVersion);
  auto cut = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 60);
  cut.resize(64);
  reseal(cut);
  CHECK(load_error(cut) == ErrorCode::TruncatedFrame);
}

TEST_CASE("a vanished residual survives the file") {
  FilterBank bank = small_bank();
  bank.entries[3].residual_power_db = -std::numeric_limits<double>::infinity();
  const FilterBank back = deserialize_bank(serialize_bank(bank));
  CHECK(back.entries[3].residual_power_db == -std::numeric_limits<double>::infinity());
}

TEST_CASE("selection by ear midpoint") {
  const FilterBank& bank = small_bank();
  for (std::size_t i = 0; i < bank.entries.size(); ++i) {
    const GridIndex idx = bank.grid.index_at(i);
    const ControlFilter& f = select_and_switch(bank, ears_of({bank.grid.node(idx), 0.0}));
    CHECK(f.trained_at == idx);
  }
  CHECK_THROWS_AS(select_and_switch(FilterBank{}, ears_of({})), Error);

  FilterSwitcher sw(bank);
  CHECK(sw.current().trained_at == nearest_grid(bank.grid.origin, bank.grid));
  const auto e = ears_of({bank.grid.node({2, 1, 1}), 0.0});
  CHECK(sw.update(e) == GridIndex{2, 1, 1});
  CHECK_FALSE(sw.update(e));
  CHECK_FALSE(sw.update(e));
  CHECK(sw.switch_count() == 1);
  CHECK(sw.current().trained_at == GridIndex{2, 1, 1});
  CHECK_THROWS_AS(FilterSwitcher(FilterBank{}), Error);
}

TEST_CASE("yaw from ears and nearest angle") {
  const double deg = std::numbers::pi / 180.0;
  for (double a : {-60.0, -10.0, 0.0, 15.0, 45.0, 60.0}) {
    CHECK(yaw_from_ears(ears_of({Vec3(0.01, 0.0, 0.025), a * deg})) == doctest::Approx(a * deg).epsilon(1e-12));
  }
  const std::vector<double> angles{0.0, 15 * deg, 30 * deg, 45 * deg, 60 * deg};
  CHECK(nearest_angle(22 * deg, angles) == 1);
  CHECK(nearest_angle(23 * deg, angles) == 2);
  CHECK(nearest_angle(-5 * deg, angles) == 0);
  CHECK(nearest_angle(80 * deg, angles) == 4);
}

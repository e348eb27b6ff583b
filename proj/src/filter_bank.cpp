#include "headrest/filter_bank.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include <json.hpp>

#include "headrest/byte_io.hpp"
#include "headrest/parallel.hpp"

namespace headrest {

namespace {

constexpr std::array<std::uint8_t, 4> kBankMagic{'A', 'N', 'C', 'B'};
constexpr std::uint16_t kBankVersion = 1;

void quantize_to_float(ControlFilter& filter) {
  for (auto& w : filter.taps) w = w.cast<float>().cast<double>();
}

std::array<Vec3, 2> true_ears(const HeadGeometry& geom, const HeadPose& pose) {
  const KeypointSet3D kp = true_keypoints(geom, pose);
  return {kp[Keypoint::LeftEar], kp[Keypoint::RightEar]};
}

}  // namespace

const ControlFilter& FilterBank::at(const GridIndex& idx) const {
  if (!grid.contains(idx)) throw Error(ErrorCode::NodeOutsideGrid, "node index outside the bank grid");
  return entries.at(grid.linear_index(idx));
}

void FilterBank::validate() const {
  grid.validate();
  if (entries.size() != grid.size()) throw Error(ErrorCode::InvalidArgument, "bank must hold one filter per node");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& f = entries[i];
    if (!(f.trained_at == grid.index_at(i))) throw Error(ErrorCode::InvalidArgument, "entry key mismatch");
    if (f.channels() != entries.front().channels() || f.length() != entries.front().length()) {
      throw Error(ErrorCode::InvalidArgument, "bank entries differ in shape");
    }
    for (const auto& w : f.taps) {
      if (w.size() != static_cast<Eigen::Index>(f.length()) || !w.allFinite()) {
        throw Error(ErrorCode::InvalidArgument, "bank entry has bad taps");
      }
    }
  }
}

GridIndex nearest_grid(const Vec3& point, const GridSpec& grid) {
  grid.validate();
  GridIndex best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const GridIndex idx = grid.index_at(i);
    const double d2 = (grid.node(idx) - point).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = idx;
    }
  }
  return best;
}

FilterBank train_bank(const AcousticScene& scene, const GridSpec& grid, const HeadGeometry& geom,
                      const FxlmsConfig& cfg, std::uint64_t noise_seed, unsigned threads) {
  grid.validate();
  cfg.validate();
  FilterBank bank;
  bank.grid = grid;
  bank.sample_rate = scene.sample_rate;
  bank.entries.resize(grid.size());

  parallel_for(grid.size(), threads, [&](std::size_t i) {
    const GridIndex idx = grid.index_at(i);
    const auto ears = true_ears(geom, {grid.node(idx), 0.0});
    try {
      ControlFilter f = train_fxlms(derive_plant(scene, ears), noise_seed, cfg);
      f.trained_at = idx;
      quantize_to_float(f);
      bank.entries[i] = std::move(f);
    } catch (const Error& e) {
      throw Error(e.code(), "node (" + std::to_string(idx.i) + "," + std::to_string(idx.j) + "," +
                                std::to_string(idx.k) + "): " + e.what());
    }
  });

  nlohmann::json meta;
  meta["noise_seed"] = noise_seed;
  meta["fxlms"] = {{"step_size", cfg.step_size},
                   {"filter_taps", cfg.filter_taps},
                   {"leak", cfg.leak},
                   {"max_iterations", cfg.max_iterations},
                   {"convergence_window", cfg.convergence_window},
                   {"convergence_epsilon", cfg.convergence_epsilon},
                   {"secondary_model_taps", cfg.secondary_model_taps}};
  const auto vec = [](const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); };
  meta["scene"] = {{"primary_source", vec(scene.primary_source)},
                   {"secondary_sources", {vec(scene.secondary_sources[0]), vec(scene.secondary_sources[1])}},
                   {"reference_mic", vec(scene.reference_mic)},
                   {"sample_rate", scene.sample_rate},
                   {"speed_of_sound", scene.speed_of_sound}};
  const std::string scene_text = meta["scene"].dump();
  meta["scene_digest"] = crc32({reinterpret_cast<const std::uint8_t*>(scene_text.data()), scene_text.size()});
  bank.metadata = meta.dump();
  return bank;
}

Vec3 head_center_estimate(const EarEstimate& ears) { return ears.midpoint(); }

const ControlFilter& select_and_switch(const FilterBank& bank, const EarEstimate& ears) {
  if (bank.empty()) throw Error(ErrorCode::EmptyBank, "filter bank has no entries");
  return bank.at(nearest_grid(head_center_estimate(ears), bank.grid));
}

FilterSwitcher::FilterSwitcher(const FilterBank& bank) : bank_(bank) {
  if (bank_.empty()) throw Error(ErrorCode::EmptyBank, "filter bank has no entries");
}

std::optional<GridIndex> FilterSwitcher::update(const EarEstimate& ears) {
  const GridIndex idx = nearest_grid(head_center_estimate(ears), bank_.grid);
  if (node_ && *node_ == idx) return std::nullopt;
  node_ = idx;
  ++switches_;
  return idx;
}

const ControlFilter& FilterSwitcher::current() const {
  return bank_.at(node_.value_or(nearest_grid(bank_.grid.origin, bank_.grid)));
}

AngleBank train_angle_bank(const AcousticScene& scene, const Vec3& center, std::vector<double> angles,
                           const HeadGeometry& geom, const FxlmsConfig& cfg, std::uint64_t noise_seed,
                           unsigned threads) {
  std::sort(angles.begin(), angles.end());
  AngleBank bank;
  bank.center = center;
  bank.filters.resize(angles.size());
  parallel_for(angles.size(), threads, [&](std::size_t i) {
    const auto ears = true_ears(geom, {center, angles[i]});
    ControlFilter f = train_fxlms(derive_plant(scene, ears), noise_seed, cfg);
    quantize_to_float(f);
    bank.filters[i] = std::move(f);
  });
  bank.angles = std::move(angles);
  return bank;
}

double yaw_from_ears(const EarEstimate& ears) {
  const Vec3 d = ears.left - ears.right;  // +x at zero yaw, rotates with the head about +z
  return std::atan2(d.y(), d.x());
}

std::size_t nearest_angle(double yaw, const std::vector<double>& angles) {
  if (angles.empty()) throw Error(ErrorCode::EmptyBank, "no trained angles");
  std::size_t best = 0;
  for (std::size_t i = 1; i < angles.size(); ++i) {
    if (std::abs(angles[i] - yaw) < std::abs(angles[best] - yaw)) best = i;
  }
  return best;
}

std::vector<std::uint8_t> serialize_bank(const FilterBank& bank) {
  bank.validate();
  const auto in_u16 = [](int v) {
    if (v < 0 || v > 0xffff) throw Error(ErrorCode::InvalidArgument, "grid count exceeds u16");
    return static_cast<std::uint16_t>(v);
  };
  const std::size_t channels = bank.entries.front().channels();
  const std::size_t taps = bank.entries.front().length();
  if (channels > 0xff) throw Error(ErrorCode::InvalidArgument, "too many channels");

  ByteWriter w;
  w.raw(kBankMagic);
  w.le<std::uint16_t>(kBankVersion);
  w.le(bank.grid.origin.x());
  w.le(bank.grid.origin.y());
  w.le(bank.grid.origin.z());
  w.le(bank.grid.spacing);
  w.le(in_u16(bank.grid.nx));
  w.le(in_u16(bank.grid.ny));
  w.le(in_u16(bank.grid.nz));
  w.le(static_cast<std::uint32_t>(std::lround(bank.sample_rate)));
  w.le(static_cast<std::uint32_t>(taps));
  w.le(static_cast<std::uint8_t>(channels));
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& f : bank.entries) {
    for (const auto& ch : f.taps) {
      for (Eigen::Index t = 0; t < ch.size(); ++t) w.le(static_cast<float>(ch[t]));
    }
    const nlohmann::json residual = std::isfinite(f.residual_power_db) ? nlohmann::json(f.residual_power_db)
                                                                       : nlohmann::json(nullptr);
    nodes.push_back({residual, f.converged});
  }
  const std::string meta = nlohmann::json{{"info", bank.metadata}, {"nodes", nodes}}.dump();
  w.le(static_cast<std::uint32_t>(meta.size()));
  w.raw(meta);
  w.le(crc32(w.bytes()));
  return std::move(w.bytes());
}

FilterBank deserialize_bank(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw Error(ErrorCode::TruncatedFrame, "bank file too short");
  ByteReader trailer(bytes.last(4), ErrorCode::TruncatedFrame);
  if (trailer.le<std::uint32_t>() != crc32(bytes.first(bytes.size() - 4))) {
    throw Error(ErrorCode::BadCrc, "bank file checksum mismatch");
  }
  ByteReader r(bytes.first(bytes.size() - 4), ErrorCode::TruncatedFrame);
  const auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kBankMagic.begin())) throw Error(ErrorCode::BadMagic, "not a bank file");
  if (r.le<std::uint16_t>() != kBankVersion) throw Error(ErrorCode::BadVersion, "unsupported bank version");

  FilterBank bank;
  bank.grid.origin.x() = r.le<double>();
  bank.grid.origin.y() = r.le<double>();
  bank.grid.origin.z() = r.le<double>();
  bank.grid.spacing = r.le<double>();
  bank.grid.nx = r.le<std::uint16_t>();
  bank.grid.ny = r.le<std::uint16_t>();
  bank.grid.nz = r.le<std::uint16_t>();
  bank.grid.validate();
  bank.sample_rate = r.le<std::uint32_t>();
  const auto taps = static_cast<Eigen::Index>(r.le<std::uint32_t>());
  const std::size_t channels = r.le<std::uint8_t>();
  if (static_cast<std::size_t>(taps) * channels * bank.grid.size() * sizeof(float) > r.remaining()) {
    throw Error(ErrorCode::TruncatedFrame, "bank file ends inside the coefficients");
  }
  bank.entries.resize(bank.grid.size());
  for (std::size_t i = 0; i < bank.entries.size(); ++i) {
    auto& f = bank.entries[i];
    f.trained_at = bank.grid.index_at(i);
    for (std::size_t c = 0; c < channels; ++c) {
      Eigen::VectorXd w(taps);
      for (Eigen::Index t = 0; t < taps; ++t) w[t] = r.le<float>();
      f.taps.push_back(std::move(w));
    }
  }
  const auto meta_len = r.le<std::uint32_t>();
  const auto meta_bytes = r.take(meta_len);
  if (r.remaining() != 0) throw Error(ErrorCode::BadLength, "trailing bytes after bank metadata");
  try {
    const auto meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
    bank.metadata = meta.at("info").get<std::string>();
    const auto& nodes = meta.at("nodes");
    if (nodes.size() != bank.entries.size()) throw Error(ErrorCode::BadLength, "metadata node count mismatch");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& residual = nodes[i].at(0);
      // null marks a residual that vanished entirely
      bank.entries[i].residual_power_db =
          residual.is_null() ? -std::numeric_limits<double>::infinity() : residual.get<double>();
      bank.entries[i].converged = nodes[i].at(1).get<bool>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadLength, std::string("bank metadata: ") + e.what());
  }
  bank.validate();
  return bank;
}

void save_bank(const FilterBank& bank, std::ostream& out) {
  const auto bytes = serialize_bank(bank);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "failed to write bank");
}

FilterBank load_bank(std::istream& in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_bank(bytes);
}

void save_bank(const FilterBank& bank, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path);
  save_bank(bank, out);
}

FilterBank load_bank(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return load_bank(in);
}

}  // namespace headrest

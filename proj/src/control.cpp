#include "headrest/control.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace headrest {

// std::atomic<std::shared_ptr> is not available on every supported
// toolchain; the free-function atomics give the same latest-wins swap.
void FilterSlot::install(std::shared_ptr<const ControlFilter> filter) {
  std::atomic_store_explicit(&filter_, std::move(filter), std::memory_order_release);
}

std::shared_ptr<const ControlFilter> FilterSlot::current() const {
  return std::atomic_load_explicit(&filter_, std::memory_order_acquire);
}

ControlLoop::ControlLoop(PlantSet truth, std::size_t block_size, std::size_t max_filter_taps)
    : truth_(std::move(truth)),
      block_size_(block_size),
      taps_(static_cast<Eigen::Index>(max_filter_taps)),
      path_len_(1) {
  truth_.validate();
  if (block_size_ < 1 || taps_ < 1) throw Error(ErrorCode::InvalidArgument, "block size and taps must be >= 1");
  for (const auto& row : truth_.secondary) {
    for (const auto& p : row) path_len_ = std::max(path_len_, p.taps.size());
  }
  x_ring_ = Eigen::VectorXd::Zero(2 * taps_);
  y_ring_.assign(truth_.speakers(), Eigen::VectorXd::Zero(2 * path_len_));
  s_rev_.resize(truth_.speakers());
  for (std::size_t m = 0; m < truth_.speakers(); ++m) {
    for (std::size_t e = 0; e < truth_.sensors(); ++e) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(path_len_);
      const auto& t = truth_.secondary[m][e].taps;
      r.tail(t.size()) = t.reverse();
      s_rev_[m].push_back(std::move(r));
    }
  }
  drive_.assign(truth_.speakers(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(block_size_)));
}

const ControlFilter* ControlLoop::process_block(std::span<const double> reference,
                                                const std::vector<std::span<const double>>& uncontrolled,
                                                const std::vector<std::span<double>>& controlled) {
  const std::size_t sensors = truth_.sensors();
  const std::size_t speakers = truth_.speakers();
  if (uncontrolled.size() != sensors || controlled.size() != sensors) {
    throw Error(ErrorCode::InvalidArgument, "one signal per error sensor expected");
  }
  const std::size_t len = reference.size();
  for (std::size_t e = 0; e < sensors; ++e) {
    if (uncontrolled[e].size() != len || controlled[e].size() != len) {
      throw Error(ErrorCode::InvalidArgument, "block lengths differ");
    }
  }

  // One snapshot per block.
  std::shared_ptr<const ControlFilter> filter = slot_.current();
  if (filter != prepared_source_) {
    prepared_rev_.clear();
    if (filter) {
      if (filter->channels() != speakers || static_cast<Eigen::Index>(filter->length()) > taps_) {
        throw Error(ErrorCode::InvalidArgument, "filter shape does not match the control loop");
      }
      for (const auto& w : filter->taps) {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(taps_);
        r.tail(w.size()) = w.reverse();
        prepared_rev_.push_back(std::move(r));
      }
    }
    prepared_source_ = filter;
  }
  for (auto& d : drive_) d.resize(static_cast<Eigen::Index>(len));

  for (std::size_t i = 0; i < len; ++i) {
    x_pos_ = (x_pos_ + 1) % taps_;
    x_ring_[x_pos_] = x_ring_[x_pos_ + taps_] = reference[i];
    const auto x_window = x_ring_.segment(x_pos_ + 1, taps_);

    y_pos_ = (y_pos_ + 1) % path_len_;
    for (std::size_t m = 0; m < speakers; ++m) {
      const double y = prepared_rev_.empty() ? 0.0 : prepared_rev_[m].dot(x_window);
      y_ring_[m][y_pos_] = y_ring_[m][y_pos_ + path_len_] = y;
      drive_[m][static_cast<Eigen::Index>(i)] = y;
    }
    for (std::size_t e = 0; e < sensors; ++e) {
      double acc = uncontrolled[e][i];
      for (std::size_t m = 0; m < speakers; ++m) {
        acc += s_rev_[m][e].dot(y_ring_[m].segment(y_pos_ + 1, path_len_));
      }
      controlled[e][i] = acc;
    }
  }
  return filter.get();
}

ControlResult control_stage(const PlantSet& truth, const ControlFilter& filter, const Signal& source_noise) {
  truth.validate();
  if (source_noise.sample_rate != truth.sample_rate()) {
    throw Error(ErrorCode::SampleRateMismatch, "noise and plant sample rates differ");
  }
  const Signal reference = propagate(source_noise, truth.reference);
  ControlResult out;
  for (const auto& p : truth.primary) {
    out.before.push_back(propagate(source_noise, p));
    out.after.push_back({Eigen::VectorXd::Zero(source_noise.size()), source_noise.sample_rate});
  }

  ControlLoop loop(truth, kDefaultBlockSize, std::max<std::size_t>(filter.length(), 1));
  loop.slot().install(std::make_shared<const ControlFilter>(filter));
  const auto n = static_cast<std::size_t>(source_noise.size());
  for (std::size_t start = 0; start < n; start += loop.block_size()) {
    const std::size_t len = std::min(loop.block_size(), n - start);
    std::vector<std::span<const double>> in;
    std::vector<std::span<double>> outp;
    for (std::size_t e = 0; e < truth.sensors(); ++e) {
      in.emplace_back(out.before[e].samples.data() + start, len);
      outp.emplace_back(out.after[e].samples.data() + start, len);
    }
    loop.process_block({reference.samples.data() + start, len}, in, outp);
  }
  return out;
}

ControlResult control_stage(const PlantSet& truth, const ControlFilter& filter, std::uint64_t noise_seed,
                            double duration) {
  const double fs = truth.sample_rate();
  const Signal noise = band_noise(kBandLowHz, kBandHighHz, duration + kControlWarmupSeconds, noise_seed, fs);
  ControlResult full = control_stage(truth, filter, noise);
  const auto skip = static_cast<Eigen::Index>(std::llround(kControlWarmupSeconds * fs));
  for (auto* side : {&full.before, &full.after}) {
    for (auto& s : *side) s.samples = Eigen::VectorXd(s.samples.tail(s.samples.size() - skip));
  }
  return full;
}

std::vector<double> noise_reduction_per_sensor(const ControlResult& result) {
  std::vector<double> nr;
  for (std::size_t e = 0; e < result.before.size(); ++e) {
    nr.push_back(noise_reduction_dba(result.before[e], result.after[e], kBandLowHz, kBandHighHz));
  }
  return nr;
}

}  // namespace headrest

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "headrest/control.hpp"
#include "headrest/ep_protocol.hpp"
#include "headrest/experiments.hpp"
#include "headrest/keypoint_provider.hpp"

using namespace headrest;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string bank_path;
  std::string out_dir = ".";
  std::string noise;
  std::string endpoint = "127.0.0.1:7878";
  unsigned threads = 0;
  int frames = 320;
  std::string keypoints;         // JSON Lines file, "-" for stdin
  std::string keypoints_listen;  // endpoint a live keypoint adapter connects to
};

ExperimentConfig resolve(const Options& opt) {
  ExperimentConfig cfg = opt.config_path.empty() ? ExperimentConfig{} : load_config(opt.config_path);
  if (opt.seed) cfg.seed = *opt.seed;
  if (!opt.noise.empty()) cfg.noise = opt.noise == "on";
  cfg.validate();
  return cfg;
}

std::filesystem::path output_file(const Options& opt, const std::string& name) {
  std::filesystem::create_directories(opt.out_dir);
  return std::filesystem::path(opt.out_dir) / name;
}

template <typename Rows>
void emit(const Options& opt, const ExperimentConfig& cfg, std::string_view command, const std::string& name,
          const Rows& rows) {
  std::ostringstream text;
  write_provenance(text, cfg, command);
  write_csv(text, rows);
  const auto path = output_file(opt, name);
  std::ofstream out(path, std::ios::binary);
  out << text.str();
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  std::cout << path.string() << '\n';
}

FilterBank obtain_bank(const Options& opt, const ExperimentConfig& cfg) {
  if (!opt.bank_path.empty()) return load_bank(opt.bank_path);
  std::cerr << "no --bank given, training the headrest bank in-run\n";
  return train_headrest_bank(cfg, opt.threads);
}

int train_bank_verb(const Options& opt, const ExperimentConfig& cfg) {
  const FilterBank bank = train_headrest_bank(cfg, opt.threads);
  const std::string path = opt.bank_path.empty() ? output_file(opt, "bank.ancb").string() : opt.bank_path;
  save_bank(bank, path);
  std::size_t converged = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& e : bank.entries) {
    converged += e.converged ? 1 : 0;
    worst = std::max(worst, e.residual_power_db);
  }
  std::cout << path << '\n'
            << "nodes=" << bank.entries.size() << " converged=" << converged << " worst_residual_db=" << worst << '\n';
  return 0;
}

// Head path for the protocol demo: a slow tour of the headrest grid nodes.
std::vector<HeadPose> demo_trajectory(int frames) {
  const GridSpec grid = GridSpec::headrest_grid();
  std::vector<HeadPose> poses;
  const int per_node = 16;
  for (int f = 0; f < frames; ++f) {
    const std::size_t n = static_cast<std::size_t>(f / per_node) % grid.size();
    poses.push_back({grid.node(grid.index_at(n)), 0.0});
  }
  return poses;
}

std::unique_ptr<KeypointProvider> keypoint_source(const Options& opt, const ExperimentConfig& cfg,
                                                  std::vector<std::unique_ptr<ByteStream>>& keep,
                                                  std::unique_ptr<std::istream>& file) {
  if (!opt.keypoints_listen.empty()) {
    Listener listener(Endpoint::parse(opt.keypoints_listen));
    std::cout << "waiting for keypoints on " << listener.endpoint().to_string() << std::endl;
    std::unique_ptr<ByteStream> in;
    while (!in) in = listener.accept(std::chrono::seconds(1));
    auto& stream = *keep.emplace_back(std::move(in));
    return std::make_unique<JsonLinesProvider>(
        std::make_unique<ByteStreamLineSource>(stream, std::chrono::seconds(2)), cfg.confidence_gate);
  }
  if (!opt.keypoints.empty()) {
    std::istream* in = &std::cin;
    if (opt.keypoints != "-") {
      file = std::make_unique<std::ifstream>(opt.keypoints);
      if (!*file) throw Error(ErrorCode::Io, "cannot open '" + opt.keypoints + "'");
      in = file.get();
    }
    return std::make_unique<JsonLinesProvider>(std::make_unique<IstreamLineSource>(*in), cfg.confidence_gate);
  }
  return std::make_unique<SyntheticProvider>(cfg.head, demo_trajectory(opt.frames), cfg.camera, cfg.calibration(),
                                             cfg.observation_model(), cfg.frames_per_second, cfg.confidence_gate);
}

int serve_ep(const Options& opt, const ExperimentConfig& cfg) {
  std::vector<std::unique_ptr<ByteStream>> keep;
  std::unique_ptr<std::istream> file;
  auto provider = keypoint_source(opt, cfg, keep, file);

  Listener listener(Endpoint::parse(opt.endpoint));
  std::cout << "listening on " << listener.endpoint().to_string() << std::endl;
  std::unique_ptr<ByteStream> stream;
  while (!stream) stream = listener.accept(std::chrono::seconds(1));

  const Eigen::Isometry3d stage_from_camera = cfg.calibration().stage_from_camera();
  Publisher publisher(*stream);
  const auto start = std::chrono::steady_clock::now();
  std::optional<std::uint64_t> first_us;
  while (const auto frame = provider->next_frame()) {
    if (!first_us) first_us = frame->timestamp_us;
    std::this_thread::sleep_until(start + std::chrono::microseconds(frame->timestamp_us - *first_us));
    const EarEstimate ears = infer_true_ears(transformed(frame->keypoints, stage_from_camera));
    publisher.publish(make_message(ears, frame->timestamp_us, static_cast<float>(frame->keypoints.min_confidence())));
  }
  stream->close();
  std::cout << "sent=" << publisher.sent() << " skipped=" << provider->skipped_frames() << std::endl;
  return 0;
}

int serve_controller(const Options& opt, const ExperimentConfig& cfg) {
  const FilterBank bank = obtain_bank(opt, cfg);
  FilterSwitcher switcher(bank);
  auto stream = connect(Endpoint::parse(opt.endpoint));
  Subscriber subscriber(*stream);
  subscriber.start();

  std::cout << "t_ms,status,i,j,k" << std::endl;
  const auto start = std::chrono::steady_clock::now();
  const char* names[] = {"no_data", "fresh", "stale", "disconnected"};
  for (LinkStatus status = LinkStatus::NoData; status != LinkStatus::Disconnected;) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    status = subscriber.status();
    if (const auto msg = subscriber.poll()) {
      if (const auto node = switcher.update(to_ear_estimate(*msg))) {
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
        std::cout << ms.count() << ',' << names[static_cast<int>(status)] << ',' << node->i << ',' << node->j << ','
                  << node->k << std::endl;
      }
    }
  }
  subscriber.stop();
  const auto stats = subscriber.stats();
  std::cout << "# delivered=" << stats.delivered << " bad_crc=" << stats.bad_crc
            << " bad_version=" << stats.bad_version << " bad_length=" << stats.bad_length
            << " switches=" << switcher.switch_count() << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ear-positioning active headrest simulator"};
  app.require_subcommand(1);
  Options opt;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "INI config, or a CSV written by this tool");
    sub->add_option("--seed", opt.seed, "Base seed");
    sub->add_option("--out", opt.out_dir, "Output directory");
    sub->add_option("--noise", opt.noise, "Observation noise")->check(CLI::IsMember({"on", "off"}));
    sub->add_option("--threads", opt.threads, "Worker threads (0 = all cores)");
  };
  const auto with_bank = [&](CLI::App* sub) { sub->add_option("--bank", opt.bank_path, "Filter bank file"); };
  const auto with_endpoint = [&](CLI::App* sub) {
    sub->add_option("--endpoint", opt.endpoint, "host:port or unix:/path");
  };

  std::map<std::string, std::function<int(const ExperimentConfig&)>> verbs;
  const auto verb = [&](const std::string& name, const std::string& help, auto body) {
    CLI::App* sub = app.add_subcommand(name, help);
    common(sub);
    verbs[name] = body;
    return sub;
  };

  verb("accuracy-translate", "Signed MDE over the 7x7x3 grid", [&](const ExperimentConfig& cfg) {
    emit(opt, cfg, "accuracy-translate", "translation_mde.csv", run_translation_accuracy(cfg, opt.threads));
    return 0;
  });
  verb("accuracy-rotate", "Ear error under head rotation", [&](const ExperimentConfig& cfg) {
    emit(opt, cfg, "accuracy-rotate", "rotation_error.csv", run_rotation_accuracy(cfg, opt.threads));
    return 0;
  });
  with_bank(verb("train-bank", "Train and save the 5x5x2 filter bank",
                 [&](const ExperimentConfig& cfg) { return train_bank_verb(opt, cfg); }));
  with_bank(verb("anc-translate", "NR per grid node for ideal, EP-off and EP-on", [&](const ExperimentConfig& cfg) {
    const FilterBank bank = obtain_bank(opt, cfg);
    emit(opt, cfg, "anc-translate", "anc_translation.csv", run_anc_translation(cfg, bank, opt.threads));
    return 0;
  }));
  verb("anc-rotate", "NR per head angle for ideal, EP-off and EP-on", [&](const ExperimentConfig& cfg) {
    const AngleBank bank = train_rotation_bank(cfg, opt.threads);
    emit(opt, cfg, "anc-rotate", "anc_rotation.csv", run_anc_rotation(cfg, bank, opt.threads));
    return 0;
  });
  with_bank(verb("spectra", "Ear spectra at the displaced node", [&](const ExperimentConfig& cfg) {
    const FilterBank bank = obtain_bank(opt, cfg);
    emit(opt, cfg, "spectra", "spectra.csv", run_spectra(cfg, bank));
    return 0;
  }));
  verb("quiet-zone", "NR at off-ear probes for narrowband noise", [&](const ExperimentConfig& cfg) {
    emit(opt, cfg, "quiet-zone", "quiet_zone.csv", run_quiet_zone(cfg, opt.threads));
    return 0;
  });
  verb("record-keypoints", "Write synthetic keypoint frames as JSON Lines", [&](const ExperimentConfig& cfg) {
    SyntheticProvider provider(cfg.head, demo_trajectory(opt.frames), cfg.camera, cfg.calibration(),
                               cfg.observation_model(), cfg.frames_per_second, 0.0);
    const auto path = output_file(opt, "keypoints.jsonl");
    std::ofstream out(path, std::ios::binary);
    while (const auto frame = provider.next_frame()) out << to_json_line(*frame) << '\n';
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    std::cout << path.string() << '\n';
    return 0;
  })->add_option("--frames", opt.frames, "Frames to write")->check(CLI::PositiveNumber);
  auto* ep = verb("serve-ep", "Publish synthetic ear positions to one controller",
                  [&](const ExperimentConfig& cfg) { return serve_ep(opt, cfg); });
  with_endpoint(ep);
  ep->add_option("--frames", opt.frames, "Synthetic frames to publish")->check(CLI::PositiveNumber);
  auto* kp_file = ep->add_option("--keypoints", opt.keypoints, "Replay a JSON Lines keypoint file (- = stdin)");
  ep->add_option("--keypoints-listen", opt.keypoints_listen, "Accept a live JSON Lines keypoint stream")
      ->excludes(kp_file);
  auto* ctl = verb("serve-controller", "Receive ear positions and switch filters",
                   [&](const ExperimentConfig& cfg) { return serve_controller(opt, cfg); });
  with_endpoint(ctl);
  with_bank(ctl);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const auto report = [](std::string_view code, const std::string& message) {
    std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump() << std::endl;
  };
  try {
    const ExperimentConfig cfg = resolve(opt);
    for (const auto* sub : app.get_subcommands()) return verbs.at(sub->get_name())(cfg);
  } catch (const Error& e) {
    report(to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    report("Io", e.what());
  }
  return 1;
}

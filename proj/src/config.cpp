#include "headrest/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <type_traits>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "headrest/rng.hpp"

namespace headrest {

namespace pt = boost::property_tree;

std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::string format_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += format_double(values[i]);
  }
  return out;
}

std::string format_vec(const Vec3& v) { return format_list({v.x(), v.y(), v.z()}); }

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    while (p < end && (*p == ' ' || *p == ',' || *p == '\t')) ++p;
    if (p == end) break;
    double v = 0.0;
    const auto res = std::from_chars(p, end, v);
    if (res.ec != std::errc()) throw Error(ErrorCode::ConfigError, "'" + key + "' expects numbers, got '" + text + "'");
    out.push_back(v);
    p = res.ptr;
  }
  return out;
}

// Reads known keys section by section and rejects anything unrecognised.
class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  template <typename T>
  void number(const std::string& key, T& out) {
    const auto text = take(key);
    if (!text) return;
    const auto values = parse_list(key, *text);
    if (values.size() != 1) throw Error(ErrorCode::ConfigError, "'" + key + "' expects one number");
    if constexpr (std::is_integral_v<T>) {
      if (values[0] != std::floor(values[0]) || values[0] < 0.0) {
        throw Error(ErrorCode::ConfigError, "'" + key + "' expects a non-negative integer");
      }
    }
    out = static_cast<T>(values[0]);
  }

  void seed(const std::string& key, std::uint64_t& out) {
    const auto text = take(key);
    if (!text) return;
    const auto res = std::from_chars(text->data(), text->data() + text->size(), out);
    if (res.ec != std::errc() || res.ptr != text->data() + text->size()) {
      throw Error(ErrorCode::ConfigError, "'" + key + "' expects an unsigned integer");
    }
  }

  void vec(const std::string& key, Vec3& out) {
    const auto text = take(key);
    if (!text) return;
    const auto values = parse_list(key, *text);
    if (values.size() != 3) throw Error(ErrorCode::ConfigError, "'" + key + "' expects three numbers");
    out = Vec3(values[0], values[1], values[2]);
  }

  void list(const std::string& key, std::vector<double>& out) {
    if (const auto text = take(key)) out = parse_list(key, *text);
  }

  void flag(const std::string& key, bool& out) {
    const auto text = take(key);
    if (!text) return;
    if (*text == "on") out = true;
    else if (*text == "off") out = false;
    else throw Error(ErrorCode::ConfigError, "'" + key + "' expects on or off");
  }

  void finish() const {
    for (const auto& [section, body] : tree_) {
      if (section == "provenance" || section == "summary") continue;
      if (body.empty()) throw Error(ErrorCode::ConfigError, "key '" + section + "' outside a section");
      for (const auto& [key, value] : body) {
        if (!used_.count(section + "." + key)) {
          throw Error(ErrorCode::ConfigError, "unknown key '" + section + "." + key + "'");
        }
      }
    }
  }

 private:
  std::optional<std::string> take(const std::string& key) {
    used_.insert(key);
    const auto node = tree_.get_child_optional(pt::ptree::path_type(key, '.'));
    if (!node) return std::nullopt;
    return node->data();
  }

  const pt::ptree& tree_;
  std::set<std::string> used_;
};

}  // namespace

void ExperimentConfig::validate() const {
  camera.validate();
  head.validate();
  observation_model().validate();
  scene.validate();
  fxlms.validate();
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  if (!(camera_distance > 0.2)) fail("camera.distance must exceed 0.2 m");
  if (!(frames_per_second > 0.0)) fail("observation.frames_per_second must be positive");
  if (!(confidence_gate >= 0.0 && confidence_gate <= 1.0)) fail("observation.confidence_gate must lie in [0, 1]");
  if (accuracy_reps < 1 || nr_seeds < 1 || quiet_zone_seeds < 1 || ep_frames < 1) {
    fail("repetition counts must be at least 1");
  }
  if (rotation_angles_deg.empty() || anc_angles_deg.empty()) fail("angle lists must not be empty");
  for (const auto* list : {&rotation_angles_deg, &anc_angles_deg}) {
    for (std::size_t i = 0; i < list->size(); ++i) {
      if (std::abs((*list)[i]) > 90.0) fail("angles must lie within +-90 degrees");
      if (i && !((*list)[i] > (*list)[i - 1])) fail("angle lists must be strictly ascending");
    }
  }
  if (!(control_duration >= 0.5)) fail("experiment.control_duration must be at least 0.5 s");
  if (!(spectrum_resolution > 0.0)) fail("experiment.spectrum_resolution must be positive");
  if (!(quiet_zone_offset > 0.0)) fail("experiment.quiet_zone_offset must be positive");
  if (quiet_zone_frequencies.size() != 2 || !(quiet_zone_frequencies[0] < quiet_zone_frequencies[1])) {
    fail("experiment.quiet_zone_frequencies expects a low and a high frequency");
  }
  if (!(quiet_zone_frequencies[1] * 1.1 < scene.sample_rate / 2.0) || !(quiet_zone_frequencies[0] * 0.9 > 0.0)) {
    fail("quiet-zone frequencies must lie inside the simulated band");
  }
}

ObservationModel ExperimentConfig::observation_model() const {
  ObservationModel obs = observation;
  obs.seed = seed;
  if (!noise) {
    obs.pixel_noise_sigma = 0.0;
    obs.depth_noise_sigma_at_1m = 0.0;
  }
  return obs;
}

std::uint64_t ExperimentConfig::training_seed() const { return splitmix64(seed ^ 0x7472616e31ULL); }

std::uint64_t ExperimentConfig::control_seed(int repetition) const {
  return splitmix64(splitmix64(seed ^ 0x6374726cULL) + static_cast<std::uint64_t>(repetition));
}

ExperimentConfig parse_config(std::istream& in) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  const bool from_csv = !lines.empty() && lines.front().rfind("# [", 0) == 0;
  std::string ini;
  for (const auto& line : lines) {
    if (from_csv) {
      if (line.rfind("# ", 0) == 0) ini += line.substr(2) + '\n';
    } else {
      const auto first = line.find_first_not_of(" \t");
      if (first != std::string::npos && line[first] == '#') continue;
      ini += line + '\n';
    }
  }

  pt::ptree tree;
  try {
    std::istringstream text(ini);
    pt::read_ini(text, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::ConfigError, std::string("malformed config: ") + e.message() + " at line " +
                                            std::to_string(e.line()));
  }

  ExperimentConfig cfg;
  Reader r(tree);
  r.number("camera.fx", cfg.camera.fx);
  r.number("camera.fy", cfg.camera.fy);
  r.number("camera.cx", cfg.camera.cx);
  r.number("camera.cy", cfg.camera.cy);
  r.number("camera.width", cfg.camera.width);
  r.number("camera.height", cfg.camera.height);
  r.number("camera.distance", cfg.camera_distance);

  r.vec("head.nose", cfg.head.nose);
  r.vec("head.left_ear", cfg.head.left_ear);
  r.vec("head.right_ear", cfg.head.right_ear);
  r.vec("head.left_eye", cfg.head.left_eye);
  r.vec("head.right_eye", cfg.head.right_eye);
  r.number("head.skull_radius", cfg.head.skull_radius);

  r.flag("observation.noise", cfg.noise);
  r.number("observation.pixel_noise_sigma", cfg.observation.pixel_noise_sigma);
  r.number("observation.depth_noise_sigma_at_1m", cfg.observation.depth_noise_sigma_at_1m);
  double threshold_deg = cfg.observation.occlusion_yaw_threshold / kDeg;
  r.number("observation.occlusion_threshold_deg", threshold_deg);
  cfg.observation.occlusion_yaw_threshold = threshold_deg * kDeg;
  r.number("observation.frames_per_second", cfg.frames_per_second);
  r.number("observation.confidence_gate", cfg.confidence_gate);

  r.vec("scene.primary_source", cfg.scene.primary_source);
  r.vec("scene.left_speaker", cfg.scene.secondary_sources[0]);
  r.vec("scene.right_speaker", cfg.scene.secondary_sources[1]);
  r.vec("scene.reference_mic", cfg.scene.reference_mic);
  r.number("scene.sample_rate", cfg.scene.sample_rate);
  r.number("scene.speed_of_sound", cfg.scene.speed_of_sound);

  r.number("fxlms.step_size", cfg.fxlms.step_size);
  r.number("fxlms.filter_taps", cfg.fxlms.filter_taps);
  r.number("fxlms.leak", cfg.fxlms.leak);
  r.number("fxlms.max_iterations", cfg.fxlms.max_iterations);
  r.number("fxlms.convergence_window", cfg.fxlms.convergence_window);
  r.number("fxlms.convergence_epsilon", cfg.fxlms.convergence_epsilon);
  r.number("fxlms.secondary_model_taps", cfg.fxlms.secondary_model_taps);
  r.number("fxlms.secondary_gain_error", cfg.fxlms.secondary_gain_error);
  double delay_error = cfg.fxlms.secondary_delay_error;
  r.number("fxlms.secondary_delay_error", delay_error);
  if (delay_error != std::floor(delay_error)) throw Error(ErrorCode::ConfigError, "secondary_delay_error must be whole");
  cfg.fxlms.secondary_delay_error = static_cast<int>(delay_error);

  r.seed("experiment.seed", cfg.seed);
  r.number("experiment.accuracy_reps", cfg.accuracy_reps);
  r.vec("experiment.accuracy_rotation_center", cfg.accuracy_rotation_center);
  r.vec("experiment.anc_rotation_center", cfg.anc_rotation_center);
  r.list("experiment.rotation_angles_deg", cfg.rotation_angles_deg);
  r.list("experiment.anc_angles_deg", cfg.anc_angles_deg);
  r.number("experiment.nr_seeds", cfg.nr_seeds);
  r.number("experiment.control_duration", cfg.control_duration);
  r.number("experiment.ep_frames", cfg.ep_frames);
  r.vec("experiment.spectrum_node", cfg.spectrum_node);
  r.number("experiment.spectrum_resolution", cfg.spectrum_resolution);
  r.number("experiment.quiet_zone_offset", cfg.quiet_zone_offset);
  r.list("experiment.quiet_zone_frequencies", cfg.quiet_zone_frequencies);
  r.number("experiment.quiet_zone_seeds", cfg.quiet_zone_seeds);
  r.finish();

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config '" + path + "'");
  return parse_config(in);
}

std::string to_ini(const ExperimentConfig& cfg) {
  std::ostringstream out;
  const auto kv = [&](const char* key, const std::string& value) { out << key << " = " << value << '\n'; };
  const auto num = [&](const char* key, double value) { kv(key, format_double(value)); };

  out << "[camera]\n";
  num("fx", cfg.camera.fx);
  num("fy", cfg.camera.fy);
  num("cx", cfg.camera.cx);
  num("cy", cfg.camera.cy);
  num("width", cfg.camera.width);
  num("height", cfg.camera.height);
  num("distance", cfg.camera_distance);

  out << "[head]\n";
  kv("nose", format_vec(cfg.head.nose));
  kv("left_ear", format_vec(cfg.head.left_ear));
  kv("right_ear", format_vec(cfg.head.right_ear));
  kv("left_eye", format_vec(cfg.head.left_eye));
  kv("right_eye", format_vec(cfg.head.right_eye));
  num("skull_radius", cfg.head.skull_radius);

  out << "[observation]\n";
  kv("noise", cfg.noise ? "on" : "off");
  num("pixel_noise_sigma", cfg.observation.pixel_noise_sigma);
  num("depth_noise_sigma_at_1m", cfg.observation.depth_noise_sigma_at_1m);
  num("occlusion_threshold_deg", cfg.observation.occlusion_yaw_threshold / kDeg);
  num("frames_per_second", cfg.frames_per_second);
  num("confidence_gate", cfg.confidence_gate);

  out << "[scene]\n";
  kv("primary_source", format_vec(cfg.scene.primary_source));
  kv("left_speaker", format_vec(cfg.scene.secondary_sources[0]));
  kv("right_speaker", format_vec(cfg.scene.secondary_sources[1]));
  kv("reference_mic", format_vec(cfg.scene.reference_mic));
  num("sample_rate", cfg.scene.sample_rate);
  num("speed_of_sound", cfg.scene.speed_of_sound);

  out << "[fxlms]\n";
  num("step_size", cfg.fxlms.step_size);
  num("filter_taps", static_cast<double>(cfg.fxlms.filter_taps));
  num("leak", cfg.fxlms.leak);
  num("max_iterations", static_cast<double>(cfg.fxlms.max_iterations));
  num("convergence_window", static_cast<double>(cfg.fxlms.convergence_window));
  num("convergence_epsilon", cfg.fxlms.convergence_epsilon);
  num("secondary_model_taps", static_cast<double>(cfg.fxlms.secondary_model_taps));
  num("secondary_gain_error", cfg.fxlms.secondary_gain_error);
  num("secondary_delay_error", cfg.fxlms.secondary_delay_error);

  out << "[experiment]\n";
  kv("seed", std::to_string(cfg.seed));
  num("accuracy_reps", cfg.accuracy_reps);
  kv("accuracy_rotation_center", format_vec(cfg.accuracy_rotation_center));
  kv("anc_rotation_center", format_vec(cfg.anc_rotation_center));
  kv("rotation_angles_deg", format_list(cfg.rotation_angles_deg));
  kv("anc_angles_deg", format_list(cfg.anc_angles_deg));
  num("nr_seeds", cfg.nr_seeds);
  num("control_duration", cfg.control_duration);
  num("ep_frames", cfg.ep_frames);
  kv("spectrum_node", format_vec(cfg.spectrum_node));
  num("spectrum_resolution", cfg.spectrum_resolution);
  num("quiet_zone_offset", cfg.quiet_zone_offset);
  kv("quiet_zone_frequencies", format_list(cfg.quiet_zone_frequencies));
  num("quiet_zone_seeds", cfg.quiet_zone_seeds);
  return out.str();
}

}  // namespace headrest

#include "motionhint/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>

namespace motionhint {

using nlohmann::json;

namespace {

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw InvalidArgumentError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0 &&
                                     !v.is_number_unsigned())) {
        throw InvalidArgumentError("");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw InvalidArgumentError("");
    } else {
      if (!v.is_string()) throw InvalidArgumentError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw InvalidArgumentError("config key '" + key + "' has the wrong type");
  }
}

using Setter = std::function<void(RunConfig&, const json&, const std::string&)>;

template <typename T>
Setter setter(T RunConfig::*member) {
  return [member](RunConfig& c, const json& v, const std::string& key) {
    c.*member = get_as<T>(v, key);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed", setter(&RunConfig::seed)},
      {"window", setter(&RunConfig::window)},
      {"gamma", setter(&RunConfig::gamma)},
      {"k", setter(&RunConfig::k)},
      {"scale_min", setter(&RunConfig::scale_min)},
      {"scale_max", setter(&RunConfig::scale_max)},
      {"epochs", setter(&RunConfig::epochs)},
      {"batch_size", setter(&RunConfig::batch_size)},
      {"learning_rate", setter(&RunConfig::learning_rate)},
      {"validation_fraction", setter(&RunConfig::validation_fraction)},
      {"centralize", setter(&RunConfig::centralize)},
      {"scale_augment", setter(&RunConfig::scale_augment)},
      {"train_sigma_t", setter(&RunConfig::train_sigma_t)},
      {"train_sigma_r", setter(&RunConfig::train_sigma_r)},
      {"lambda", setter(&RunConfig::lambda)},
      {"mlra_period", setter(&RunConfig::mlra_period)},
      {"mlra_max_updates", setter(&RunConfig::mlra_max_updates)},
      {"tau_percentile", setter(&RunConfig::tau_percentile)},
      {"tau", setter(&RunConfig::tau)},
      {"alpha", setter(&RunConfig::alpha)},
      {"no_motion", setter(&RunConfig::no_motion)},
      {"no_uncertainty", setter(&RunConfig::no_uncertainty)},
      {"iterations", setter(&RunConfig::iterations)},
      {"segment_length", setter(&RunConfig::segment_length)},
      {"refine_learning_rate", setter(&RunConfig::refine_learning_rate)},
      {"origin_floor", setter(&RunConfig::origin_floor)},
      {"align",
       [](RunConfig& c, const json& v, const std::string& key) {
         c.align = parse_align_mode(get_as<std::string>(v, key));
       }},
  };
  return table;
}

void require_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw InvalidArgumentError(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw InvalidArgumentError("unknown key '" + key + "' in " + what);
  }
}

template <typename T>
T field(const json& j, const char* key, T fallback) {
  return j.contains(key) ? get_as<T>(j.at(key), key) : fallback;
}

}  // namespace

void RunConfig::validate() const {
  train_config().validate();
  refine_config(std::isnan(tau) ? std::numeric_limits<double>::infinity() : tau).validate();
  if (!(tau_percentile >= 0.0 && tau_percentile <= 100.0)) {
    throw InvalidArgumentError("tau_percentile must lie in [0, 100]");
  }
  if (!(train_sigma_t >= 0.0) || !(train_sigma_r >= 0.0)) {
    throw InvalidArgumentError("training noise must be non-negative");
  }
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.window = window;
  t.learning_rate = learning_rate;
  t.batch_size = batch_size;
  t.epochs = epochs;
  t.gamma = gamma;
  t.k = k;
  t.seed = seed;
  t.scale_min = scale_min;
  t.scale_max = scale_max;
  t.centralize = centralize;
  t.scale_augment = scale_augment;
  t.validation_fraction = validation_fraction;
  return t;
}

RefineConfig RunConfig::refine_config(double tau_value) const {
  RefineConfig r;
  r.window = window;
  r.iterations = iterations;
  r.segment_length = segment_length;
  r.adam.learning_rate = refine_learning_rate;
  r.confidence.tau = no_uncertainty ? std::numeric_limits<double>::infinity() : tau_value;
  r.confidence.alpha = alpha;
  r.confidence.weight_by_uncertainty = !no_uncertainty;
  r.use_motion = !no_motion;
  r.lambda = lambda;
  r.mlra_period = mlra_period;
  r.mlra_max_updates = mlra_max_updates;
  r.origin_floor = origin_floor;
  return r;
}

void apply_config(RunConfig& cfg, const json& j) {
  if (!j.is_object()) throw InvalidArgumentError("config must be a JSON object");
  const auto& table = setters();
  for (const auto& [key, value] : j.items()) {
    if (key == "schema_version") {
      if (!value.is_number_integer() || value.get<int>() != kSchemaVersion) {
        throw InvalidArgumentError("unsupported config schema_version");
      }
      continue;
    }
    const auto it = table.find(key);
    if (it == table.end()) throw InvalidArgumentError("unknown config key '" + key + "'");
    it->second(cfg, value, key);
  }
}

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  apply_config(cfg, read_json_file(path));
  return cfg;
}

json to_json(const RunConfig& c) {
  return json{{"schema_version", kSchemaVersion},
              {"seed", c.seed},
              {"window", c.window},
              {"gamma", c.gamma},
              {"k", c.k},
              {"scale_min", c.scale_min},
              {"scale_max", c.scale_max},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"validation_fraction", c.validation_fraction},
              {"centralize", c.centralize},
              {"scale_augment", c.scale_augment},
              {"train_sigma_t", c.train_sigma_t},
              {"train_sigma_r", c.train_sigma_r},
              {"lambda", c.lambda},
              {"mlra_period", c.mlra_period},
              {"mlra_max_updates", c.mlra_max_updates},
              {"tau_percentile", c.tau_percentile},
              {"tau", std::isnan(c.tau) ? json(nullptr) : json(c.tau)},
              {"alpha", c.alpha},
              {"no_motion", c.no_motion},
              {"no_uncertainty", c.no_uncertainty},
              {"iterations", c.iterations},
              {"segment_length", c.segment_length},
              {"refine_learning_rate", c.refine_learning_rate},
              {"origin_floor", c.origin_floor},
              {"align", std::string(to_string(c.align))}};
}

json fixture_to_json(const FixtureSpec& s) {
  json segments = json::array();
  for (const MotionSegment& m : s.profile.segments) {
    segments.push_back({m.frames, m.speed, m.yaw_rate, m.pitch_rate});
  }
  json bias = json::array();
  for (const BiasSegment& b : s.noise.bias) {
    bias.push_back({{"first", b.first},
                    {"last", b.last},
                    {"offset", std::vector<double>(b.offset.data(), b.offset.data() + 6)}});
  }
  return json{{"name", s.name},
              {"profile",
               {{"name", s.profile.name},
                {"seed", s.profile.seed},
                {"frame_period", s.profile.frame_period},
                {"ramp_frames", s.profile.ramp_frames},
                {"speed_jitter", s.profile.speed_jitter},
                {"yaw_jitter", s.profile.yaw_jitter},
                {"segments", segments}}},
              {"noise",
               {{"sigma_t", s.noise.sigma_t},
                {"sigma_r", s.noise.sigma_r},
                {"scale_drift", s.noise.scale_drift},
                {"global_scale", s.noise.global_scale},
                {"bias", bias}}},
              {"noise_seed", s.noise_seed}};
}

FixtureSpec fixture_from_json(const json& j) {
  require_keys(j, {"name", "profile", "noise", "noise_seed"}, "fixture");
  FixtureSpec s;
  s.name = field<std::string>(j, "name", "");
  if (s.name.empty()) throw InvalidArgumentError("fixture needs a name");
  s.noise_seed = field<std::uint64_t>(j, "noise_seed", 0);

  const json& p = j.value("profile", json::object());
  require_keys(p,
               {"name", "seed", "frame_period", "ramp_frames", "speed_jitter", "yaw_jitter",
                "segments"},
               "profile");
  s.profile.name = field<std::string>(p, "name", s.name);
  s.profile.seed = field<std::uint64_t>(p, "seed", 0);
  s.profile.frame_period = field<double>(p, "frame_period", s.profile.frame_period);
  s.profile.ramp_frames = field<std::size_t>(p, "ramp_frames", s.profile.ramp_frames);
  s.profile.speed_jitter = field<double>(p, "speed_jitter", 0.0);
  s.profile.yaw_jitter = field<double>(p, "yaw_jitter", 0.0);
  for (const json& seg : p.value("segments", json::array())) {
    if (!seg.is_array() || seg.size() != 4) {
      throw InvalidArgumentError("profile segments are [frames, speed, yaw_rate, pitch_rate]");
    }
    MotionSegment m{get_as<std::size_t>(seg[0], "segments"), get_as<double>(seg[1], "segments"),
                    get_as<double>(seg[2], "segments"), get_as<double>(seg[3], "segments")};
    if (m.frames < 1 || !(m.speed >= 0.0)) {
      throw InvalidArgumentError("segment durations must be >= 1 and speeds >= 0");
    }
    s.profile.segments.push_back(m);
  }
  if (s.profile.segments.empty()) throw InvalidArgumentError("profile has no segments");

  const json& n = j.value("noise", json::object());
  require_keys(n, {"sigma_t", "sigma_r", "scale_drift", "global_scale", "bias"}, "noise");
  s.noise.sigma_t = field<double>(n, "sigma_t", 0.0);
  s.noise.sigma_r = field<double>(n, "sigma_r", 0.0);
  s.noise.scale_drift = field<double>(n, "scale_drift", 1.0);
  s.noise.global_scale = field<double>(n, "global_scale", 1.0);
  for (const json& b : n.value("bias", json::array())) {
    require_keys(b, {"first", "last", "offset"}, "bias segment");
    BiasSegment seg;
    seg.first = field<std::size_t>(b, "first", 0);
    seg.last = field<std::size_t>(b, "last", 0);
    const json& off = b.value("offset", json::array());
    if (!off.is_array() || off.size() != 6) {
      throw InvalidArgumentError("bias offset must have six entries");
    }
    for (int i = 0; i < 6; ++i) seg.offset(i) = get_as<double>(off[i], "offset");
    s.noise.bias.push_back(seg);
  }
  s.noise.validate();
  return s;
}

json suite_to_json(const std::vector<FixtureSpec>& suite) {
  json fixtures = json::array();
  for (const FixtureSpec& s : suite) fixtures.push_back(fixture_to_json(s));
  return json{{"schema_version", kSchemaVersion}, {"fixtures", fixtures}};
}

std::vector<FixtureSpec> suite_from_json(const json& j) {
  require_keys(j, {"schema_version", "fixtures"}, "fixture suite");
  if (j.value("schema_version", 0) != kSchemaVersion) {
    throw InvalidArgumentError("unsupported fixture suite schema_version");
  }
  std::vector<FixtureSpec> out;
  for (const json& f : j.value("fixtures", json::array())) out.push_back(fixture_from_json(f));
  if (out.empty()) throw InvalidArgumentError("fixture suite is empty");
  return out;
}

std::vector<FixtureSpec> load_suite_file(const std::string& path) {
  return suite_from_json(read_json_file(path));
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace motionhint

#include "ilt/config.hpp"

#include <fstream>
#include <set>

#include "ilt/errors.hpp"
#include "ilt/rng.hpp"

namespace ilt {

using nlohmann::json;

CorruptionTarget parse_corruption_target(const std::string& name) {
  if (name == "none") return CorruptionTarget::None;
  if (name == "classification") return CorruptionTarget::Classification;
  if (name == "regression") return CorruptionTarget::Regression;
  throw ConfigError("corruption.task: expected none, classification or regression, got '" + name + "'");
}

std::string to_string(CorruptionTarget target) {
  switch (target) {
    case CorruptionTarget::None:
      return "none";
    case CorruptionTarget::Classification:
      return "classification";
    case CorruptionTarget::Regression:
      return "regression";
  }
  return "?";
}

SeedPlan seeds(std::uint64_t base_seed) {
  return {derive_seed(base_seed, "data"), derive_seed(base_seed, "corrupt")};
}

std::uint64_t init_seed(std::uint64_t run_seed) { return derive_seed(run_seed, "init"); }

std::uint64_t shuffle_seed(std::uint64_t run_seed) { return derive_seed(run_seed, "shuffle"); }

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (data.n_train == 0) fail("data.n_train must be >= 1");
  if (data.n_test == 0) fail("data.n_test must be >= 1");
  if (data.input_dim == 0) fail("data.input_dim must be >= 1");
  if (data.classes < 2) fail("data.classes must be >= 2");
  if (data.reg_dim == 0) fail("data.reg_dim must be >= 1");
  if (corruption.target != CorruptionTarget::None &&
      !(corruption.fraction > 0.0 && corruption.fraction <= 1.0)) {
    fail("corruption.fraction must be in (0, 1]");
  }
  for (const auto h : model.hidden) {
    if (h == 0) fail("model.hidden entries must be >= 1");
  }
  if (!(optimizer.lr >= 0.0)) fail("optimizer.lr must be >= 0");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) fail("optimizer.momentum must be in [0, 1)");
  if (optimizer.kind == OptimizerKind::Sgd && optimizer.momentum != 0.0) {
    fail("optimizer.momentum must be 0 for kind sgd");
  }
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) fail("optimizer.beta2 must be in [0, 1)");
  if (!(optimizer.epsilon > 0.0)) fail("optimizer.epsilon must be > 0");
  if (!(optimizer.decay_factor > 0.0)) fail("optimizer.decay_factor must be > 0");
  if (optimizer.decay_every < 0) fail("optimizer.decay_every must be >= 0");
  if (!weighting.task_scales.empty() && weighting.task_scales.size() != 2) {
    fail("weighting.task_scales must list one factor per task (2)");
  }
  for (const auto s : weighting.task_scales) {
    if (!(s > 0.0)) fail("weighting.task_scales entries must be > 0");
  }
  if (!(weighting.ilt_lr >= 0.0)) fail("weighting.ilt.lr must be >= 0");
  if (!(weighting.ilt_momentum >= 0.0 && weighting.ilt_momentum < 1.0)) fail("weighting.ilt.momentum must be in [0, 1)");
  if (!(weighting.clamp_lo <= 0.0 && weighting.clamp_hi >= 0.0)) fail("weighting.ilt.clamp must contain 0");
  if (!(weighting.mtu_lr >= 0.0)) fail("weighting.mtu.lr must be >= 0");
  if (!(weighting.mtu_momentum >= 0.0 && weighting.mtu_momentum < 1.0)) fail("weighting.mtu.momentum must be in [0, 1)");
  if (!(weighting.dwa_temperature > 0.0)) fail("weighting.dwa.temperature must be > 0");
  if (train.epochs < 1) fail("train.epochs must be >= 1");
  if (train.batch_size < 1) fail("train.batch_size must be >= 1");
  if (train.eval_every < 1) fail("train.eval_every must be >= 1");
  if (train.repeats < 1) fail("train.repeats must be >= 1");
  if (train.snapshot_every < 0) fail("train.snapshot_every must be >= 0");
  if (train.detection_epoch < -1 || train.detection_epoch >= train.epochs) {
    fail("train.detection_epoch must be -1 or a valid epoch index");
  }
  if (output_dir.empty()) fail("output_dir must not be empty");
}

int RunConfig::resolved_detection_epoch() const {
  if (train.detection_epoch >= 0) return train.detection_epoch;
  if (optimizer.decay_every > 0 && optimizer.decay_every < train.epochs) {
    return optimizer.decay_every - 1;
  }
  return train.epochs - 1;
}

json to_json(const RunConfig& c) {
  return json{
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"data",
       {{"n_train", c.data.n_train},
        {"n_test", c.data.n_test},
        {"input_dim", c.data.input_dim},
        {"classes", c.data.classes},
        {"reg_dim", c.data.reg_dim}}},
      {"corruption", {{"task", to_string(c.corruption.target)}, {"fraction", c.corruption.fraction}}},
      {"model", {{"hidden", c.model.hidden}, {"activation", to_string(c.model.activation)}}},
      {"optimizer",
       {{"kind", to_string(c.optimizer.kind)},
        {"lr", c.optimizer.lr},
        {"momentum", c.optimizer.momentum},
        {"beta2", c.optimizer.beta2},
        {"epsilon", c.optimizer.epsilon},
        {"decay_factor", c.optimizer.decay_factor},
        {"decay_every", c.optimizer.decay_every}}},
      {"weighting",
       {{"scheme", to_string(c.weighting.scheme)},
        {"task_scales", c.weighting.task_scales},
        {"ilt",
         {{"lr", c.weighting.ilt_lr},
          {"momentum", c.weighting.ilt_momentum},
          {"clamp_lo", c.weighting.clamp_lo},
          {"clamp_hi", c.weighting.clamp_hi},
          {"tied_rows", c.weighting.ilt_tied_rows}}},
        {"mtu", {{"lr", c.weighting.mtu_lr}, {"momentum", c.weighting.mtu_momentum}}},
        {"dwa", {{"temperature", c.weighting.dwa_temperature}}}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"eval_every", c.train.eval_every},
        {"repeats", c.train.repeats},
        {"snapshot_every", c.train.snapshot_every},
        {"detection_epoch", c.train.detection_epoch}}},
  };
}

namespace {

template <typename T>
const char* expected_type() {
  if constexpr (std::is_same_v<T, bool>) return "boolean";
  else if constexpr (std::is_same_v<T, std::string>) return "string";
  else if constexpr (std::is_floating_point_v<T>) return "number";
  else if constexpr (std::is_unsigned_v<T>) return "non-negative integer";
  else if constexpr (std::is_integral_v<T>) return "integer";
  else return "array";
}

template <typename T>
bool type_matches(const json& v) {
  if constexpr (std::is_same_v<T, bool>) return v.is_boolean();
  else if constexpr (std::is_same_v<T, std::string>) return v.is_string();
  else if constexpr (std::is_floating_point_v<T>) return v.is_number();
  else if constexpr (std::is_unsigned_v<T>) return v.is_number_unsigned();
  else if constexpr (std::is_integral_v<T>) return v.is_number_integer();
  else return v.is_array();
}

class Reader {
public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if constexpr (std::is_same_v<T, std::vector<double>> ||
                  std::is_same_v<T, std::vector<std::size_t>>) {
      using E = typename T::value_type;
      if (!v.is_array()) throw mismatch(key, std::string("array of ") + expected_type<E>());
      T values;
      for (const auto& e : v) {
        if (!type_matches<E>(e)) throw mismatch(key, std::string("array of ") + expected_type<E>());
        values.push_back(e.get<E>());
      }
      out = std::move(values);
    } else {
      if (!type_matches<T>(v)) throw mismatch(key, expected_type<T>());
      out = v.get<T>();
    }
  }

  Reader section(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  void reject_unknown() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config field '" + where(key) + "'");
    }
  }

private:
  std::string where(const std::string& key) const {
    if (path_.empty()) return key;
    return key.empty() ? path_ : path_ + "." + key;
  }
  ConfigError mismatch(const char* key, const std::string& expected) const {
    return ConfigError("config field '" + where(key) + "': expected " + expected + ", got " +
                       j_.at(key).type_name());
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Reader root(j, "");
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);

  auto data = root.section("data");
  data.get("n_train", c.data.n_train);
  data.get("n_test", c.data.n_test);
  data.get("input_dim", c.data.input_dim);
  data.get("classes", c.data.classes);
  data.get("reg_dim", c.data.reg_dim);
  data.reject_unknown();

  auto corruption = root.section("corruption");
  std::string target = to_string(c.corruption.target);
  corruption.get("task", target);
  c.corruption.target = parse_corruption_target(target);
  corruption.get("fraction", c.corruption.fraction);
  corruption.reject_unknown();

  auto model = root.section("model");
  model.get("hidden", c.model.hidden);
  std::string activation = to_string(c.model.activation);
  model.get("activation", activation);
  c.model.activation = parse_activation(activation);
  model.reject_unknown();

  auto opt = root.section("optimizer");
  std::string kind = to_string(c.optimizer.kind);
  opt.get("kind", kind);
  c.optimizer.kind = parse_optimizer_kind(kind);
  if (c.optimizer.kind == OptimizerKind::Sgd) c.optimizer.momentum = 0.0;
  opt.get("lr", c.optimizer.lr);
  opt.get("momentum", c.optimizer.momentum);
  opt.get("beta2", c.optimizer.beta2);
  opt.get("epsilon", c.optimizer.epsilon);
  opt.get("decay_factor", c.optimizer.decay_factor);
  opt.get("decay_every", c.optimizer.decay_every);
  opt.reject_unknown();

  auto w = root.section("weighting");
  std::string scheme = to_string(c.weighting.scheme);
  w.get("scheme", scheme);
  c.weighting.scheme = parse_scheme(scheme);
  w.get("task_scales", c.weighting.task_scales);
  auto ilt = w.section("ilt");
  ilt.get("lr", c.weighting.ilt_lr);
  ilt.get("momentum", c.weighting.ilt_momentum);
  ilt.get("clamp_lo", c.weighting.clamp_lo);
  ilt.get("clamp_hi", c.weighting.clamp_hi);
  ilt.get("tied_rows", c.weighting.ilt_tied_rows);
  ilt.reject_unknown();
  auto mtu = w.section("mtu");
  mtu.get("lr", c.weighting.mtu_lr);
  mtu.get("momentum", c.weighting.mtu_momentum);
  mtu.reject_unknown();
  auto dwa = w.section("dwa");
  dwa.get("temperature", c.weighting.dwa_temperature);
  dwa.reject_unknown();
  w.reject_unknown();

  auto train = root.section("train");
  train.get("epochs", c.train.epochs);
  train.get("batch_size", c.train.batch_size);
  train.get("eval_every", c.train.eval_every);
  train.get("repeats", c.train.repeats);
  train.get("snapshot_every", c.train.snapshot_every);
  train.get("detection_epoch", c.train.detection_epoch);
  train.reject_unknown();

  root.reject_unknown();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(config).dump(2) << '\n';
}

}  // namespace ilt

#include "dgp/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dgp/errors.hpp"

namespace dgp {
namespace {

using nlohmann::json;

// A JSON object plus its dotted location, for error messages.
class Section {
 public:
  Section(const json& node, std::string where, std::set<std::string> allowed)
      : node_(node), where_(std::move(where)) {
    if (!node_.is_object()) fail(where_, "must be an object");
    for (const auto& [key, value] : node_.items()) {
      if (!allowed.count(key)) fail(path(key), "unknown key");
    }
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw DataError("config: " + where + ": " + what);
  }

  std::string path(const std::string& key) const {
    return where_.empty() ? key : where_ + "." + key;
  }

  bool has(const std::string& key) const {
    return node_.contains(key) && !node_.at(key).is_null();
  }

  const json& at(const std::string& key) const {
    if (!has(key)) fail(path(key), "required key missing");
    return node_.at(key);
  }

  Section section(const std::string& key, std::set<std::string> allowed) const {
    static const json empty = json::object();
    return Section(has(key) ? node_.at(key) : empty, path(key), std::move(allowed));
  }

  std::string string(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_string()) fail(path(key), "must be a string");
    return v.get<std::string>();
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_boolean()) fail(path(key), "must be true or false");
    return v.get<bool>();
  }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_number()) fail(path(key), "must be a number");
    return v.get<double>();
  }

  double positive(const std::string& key, double fallback) const {
    const double v = number(key, fallback);
    if (!(v > 0.0)) fail(path(key), "must be positive");
    return v;
  }

  std::uint64_t unsigned_int(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      fail(path(key), "must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::size_t count(const std::string& key, std::size_t fallback) const {
    const auto v = unsigned_int(key, fallback);
    if (v == 0) fail(path(key), "must be at least 1");
    return static_cast<std::size_t>(v);
  }

  std::vector<std::string> strings(const std::string& key) const {
    if (!has(key)) return {};
    const json& v = at(key);
    if (!v.is_array()) fail(path(key), "must be a list of strings");
    std::vector<std::string> out;
    for (const auto& item : v) {
      if (!item.is_string()) fail(path(key), "must be a list of strings");
      out.push_back(item.get<std::string>());
    }
    return out;
  }

  const json& node() const { return node_; }

 private:
  const json& node_;
  std::string where_;
};

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

template <class F>
auto checked(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (std::string_view(e.what()).starts_with("config: ")) throw;
    Section::fail(where, e.what());
  }
}

LayerSpec parse_layer(const json& node, const std::string& where) {
  if (!node.is_object() || !node.contains("type") || !node.at("type").is_string()) {
    Section::fail(where, "each layer needs a string \"type\" (gp, latent or dense)");
  }
  const std::string type = node.at("type").get<std::string>();
  LayerSpec spec;
  if (type == "gp") {
    Section s(node, where,
              {"type", "output_dim", "num_inducing", "kernel", "mean_function",
               "whitened", "variance", "lengthscale", "q_sqrt_scale"});
    spec.kind = LayerKind::GP;
    if (s.has("output_dim")) spec.output_dim = s.count("output_dim", 1);
    spec.num_inducing = s.count("num_inducing", spec.num_inducing);
    if (s.has("kernel")) {
      const std::string k = s.string("kernel");
      spec.kernel = checked(s.path("kernel"), [&] { return parse_kernel_family(k); });
    }
    if (s.has("mean_function")) {
      const std::string m = s.string("mean_function");
      if (m != "auto") {
        spec.mean_function =
            checked(s.path("mean_function"), [&] { return parse_mean_kind(m); });
      }
    }
    spec.whitened = s.boolean("whitened", spec.whitened);
    spec.variance = s.positive("variance", spec.variance);
    spec.lengthscale = s.positive("lengthscale", spec.lengthscale);
    if (s.has("q_sqrt_scale")) spec.q_sqrt_scale = s.positive("q_sqrt_scale", 1.0);
  } else if (type == "latent") {
    Section s(node, where, {"type", "latent_dim", "init_variance"});
    spec.kind = LayerKind::Latent;
    spec.latent_dim = s.count("latent_dim", spec.latent_dim);
    spec.latent_init_variance = s.positive("init_variance", spec.latent_init_variance);
  } else if (type == "dense") {
    Section s(node, where, {"type", "output_dim", "activation"});
    spec.kind = LayerKind::Dense;
    if (s.has("output_dim")) spec.output_dim = s.count("output_dim", 1);
    if (s.has("activation")) {
      const std::string a = s.string("activation");
      spec.activation = checked(s.path("activation"), [&] { return parse_activation(a); });
    }
  } else {
    Section::fail(where + ".type", "unknown layer type '" + type + "'");
  }
  return spec;
}

json layer_to_json(const LayerSpec& spec) {
  json j;
  j["type"] = to_string(spec.kind);
  switch (spec.kind) {
    case LayerKind::GP:
      if (spec.output_dim) j["output_dim"] = *spec.output_dim;
      j["num_inducing"] = spec.num_inducing;
      j["kernel"] = to_string(spec.kernel);
      j["mean_function"] = spec.mean_function ? to_string(*spec.mean_function) : "auto";
      j["whitened"] = spec.whitened;
      j["variance"] = spec.variance;
      j["lengthscale"] = spec.lengthscale;
      if (spec.q_sqrt_scale) j["q_sqrt_scale"] = *spec.q_sqrt_scale;
      break;
    case LayerKind::Latent:
      j["latent_dim"] = spec.latent_dim;
      j["init_variance"] = spec.latent_init_variance;
      break;
    case LayerKind::Dense:
      if (spec.output_dim) j["output_dim"] = *spec.output_dim;
      j["activation"] = to_string(spec.activation);
      break;
  }
  return j;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text,
                              const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw DataError(std::string("config: not valid JSON: ") + e.what());
  }
  Section top(root, "", {"data", "model", "training", "output"});
  ExperimentConfig config;

  {
    Section s(top.at("data"), "data", {"train", "validation", "targets", "normalise"});
    config.data.train = resolve(base_dir, s.string("train"));
    if (s.has("validation")) {
      config.data.validation = resolve(base_dir, s.string("validation"));
    }
    if (!s.at("targets").is_array()) Section::fail("data.targets", "must be a list of strings");
    config.data.targets = s.strings("targets");
    if (config.data.targets.empty()) Section::fail("data.targets", "must name at least one column");
    config.data.normalise = s.boolean("normalise", true);
  }

  {
    Section s(top.at("model"), "model", {"layers", "noise_variance", "jitter"});
    const json& layers = s.at("layers");
    if (!layers.is_array() || layers.empty()) {
      Section::fail("model.layers", "must be a non-empty list");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      config.model.layers.push_back(
          parse_layer(layers[i], "model.layers[" + std::to_string(i) + "]"));
    }
    if (s.has("noise_variance")) {
      config.model.noise_variance = s.positive("noise_variance", 1.0);
    }
    Section j = s.section("jitter", {"initial", "growth", "max"});
    JitterPolicy& jp = config.model.jitter;
    jp.initial = j.number("initial", jp.initial);
    jp.growth = j.number("growth", jp.growth);
    jp.max = j.number("max", jp.max);
    checked("model.jitter", [&] { jp.validate(); return 0; });
  }

  {
    Section s = top.section("training",
                            {"learning_rate", "batch_size", "epochs", "seed",
                             "mc_samples", "eval_samples", "metrics_every",
                             "plateau", "frozen"});
    TrainConfig& t = config.training;
    t.learning_rate = s.positive("learning_rate", t.learning_rate);
    t.batch_size = s.count("batch_size", t.batch_size);
    t.epochs = static_cast<std::size_t>(s.unsigned_int("epochs", t.epochs));
    t.seed = s.unsigned_int("seed", t.seed);
    t.mc_samples = s.count("mc_samples", t.mc_samples);
    t.eval_samples = s.count("eval_samples", t.eval_samples);
    t.metrics_every = static_cast<std::size_t>(s.unsigned_int("metrics_every", t.metrics_every));
    t.frozen = s.strings("frozen");
    Section p = s.section("plateau", {"patience", "factor", "min_lr", "min_delta", "window"});
    t.plateau.patience = static_cast<std::size_t>(p.unsigned_int("patience", t.plateau.patience));
    t.plateau.factor = p.number("factor", t.plateau.factor);
    t.plateau.min_lr = p.number("min_lr", t.plateau.min_lr);
    t.plateau.min_delta = p.number("min_delta", t.plateau.min_delta);
    t.plateau.window = p.count("window", t.plateau.window);
    checked("training.plateau", [&] { t.plateau.validate(); return 0; });
    t.jitter = config.model.jitter;
  }

  {
    Section s = top.section("output", {"directory"});
    if (s.has("directory")) config.output_dir = resolve(base_dir, s.string("directory"));
    else config.output_dir = resolve(base_dir, config.output_dir.string());
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

std::string config_to_json(const ExperimentConfig& config) {
  json root;
  json& data = root["data"];
  data["train"] = config.data.train.string();
  if (config.data.validation) data["validation"] = config.data.validation->string();
  data["targets"] = config.data.targets;
  data["normalise"] = config.data.normalise;

  json& model = root["model"];
  model["layers"] = json::array();
  for (const auto& l : config.model.layers) model["layers"].push_back(layer_to_json(l));
  if (config.model.noise_variance) model["noise_variance"] = *config.model.noise_variance;
  model["jitter"] = {{"initial", config.model.jitter.initial},
                     {"growth", config.model.jitter.growth},
                     {"max", config.model.jitter.max}};

  const TrainConfig& t = config.training;
  json& training = root["training"];
  training["learning_rate"] = t.learning_rate;
  training["batch_size"] = t.batch_size;
  training["epochs"] = t.epochs;
  training["seed"] = t.seed;
  training["mc_samples"] = t.mc_samples;
  training["eval_samples"] = t.eval_samples;
  training["metrics_every"] = t.metrics_every;
  training["frozen"] = t.frozen;
  training["plateau"] = {{"patience", t.plateau.patience},
                         {"factor", t.plateau.factor},
                         {"min_lr", t.plateau.min_lr},
                         {"min_delta", t.plateau.min_delta},
                         {"window", t.plateau.window}};

  root["output"]["directory"] = config.output_dir.string();
  return root.dump(2);
}

}  // namespace dgp

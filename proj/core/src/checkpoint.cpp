#include "dgp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dgp/errors.hpp"
#include "dgp/init.hpp"

namespace dgp {
namespace {

using nlohmann::json;

constexpr const char* kMagic = "DGPCKPT";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_block(std::string& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u64(out, d);
  for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

Tensor vector_tensor(const std::vector<double>& v) {
  return Tensor(Shape{v.size()}, v);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  bool at_end() const { return pos_ == bytes_.size(); }

  std::string line(const std::string& field) {
    const auto nl = bytes_.find('\n', pos_);
    if (nl == std::string::npos) fail(field, "truncated");
    std::string s = bytes_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return s;
  }

  std::string take(std::size_t n, const std::string& field) {
    if (bytes_.size() - pos_ < n) fail(field, "truncated");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint64_t u64(const std::string& field) {
    const std::string s = take(8, field);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[i]);
    return v;
  }

  std::uint32_t u32(const std::string& field) {
    const std::string s = take(4, field);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[i]);
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] static void fail(const std::string& field, const std::string& what) {
    throw CheckpointError("checkpoint field '" + field + "': " + what);
  }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

json stream_to_json(const RandomStream& s) {
  return {{"key", std::to_string(s.key())}, {"counter", std::to_string(s.counter())}};
}

std::uint64_t parse_u64(const json& j, const std::string& field) {
  if (!j.is_string()) Reader::fail(field, "expected a decimal string");
  const std::string s = j.get<std::string>();
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    Reader::fail(field, "expected a decimal string");
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    Reader::fail(field, "out of range");
  }
}

RandomStream stream_from_json(const json& j, const std::string& field) {
  if (!j.is_object() || !j.contains("key") || !j.contains("counter")) {
    Reader::fail(field, "missing key/counter");
  }
  return RandomStream(parse_u64(j.at("key"), field + ".key"),
                      parse_u64(j.at("counter"), field + ".counter"));
}

template <class T>
T header_value(const json& header, const std::string& key) {
  if (!header.contains(key)) Reader::fail(key, "missing");
  try {
    return header.at(key).get<T>();
  } catch (const json::exception&) {
    Reader::fail(key, "wrong type");
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DeepGP& model,
                     const CheckpointMeta& meta) {
  const auto params = model.parameter_values();
  const AdamState& adam = meta.state.optimizer;

  json header;
  header["config"] = json::parse(config_to_json(meta.config));
  header["input_dim"] = model.input_dim();
  header["output_dim"] = model.output_dim();
  header["num_data"] = model.num_data();
  header["num_mc_samples"] = model.num_mc_samples();
  header["feature_names"] = meta.feature_names;
  header["target_names"] = meta.target_names;
  header["has_x_stats"] = meta.x_stats.has_value();
  header["has_y_stats"] = meta.y_stats.has_value();
  header["optimizer_step"] = std::to_string(adam.step);
  header["epochs_completed"] = std::to_string(meta.state.epochs_completed);
  header["streams"] = {{"shuffle", stream_to_json(meta.state.shuffle)},
                       {"sampling", stream_to_json(meta.state.sampling)}};
  json moments = json::array();
  for (const auto& [name, m] : adam.first_moment) {
    if (adam.second_moment.count(name)) moments.push_back(name);
  }
  header["moments"] = moments;

  std::vector<std::pair<std::string, Tensor>> blocks = params;
  blocks.emplace_back("optimizer.hyper",
                      vector_tensor({adam.learning_rate, adam.beta1, adam.beta2,
                                     adam.epsilon}));
  for (const auto& name : moments) {
    const std::string n = name.get<std::string>();
    blocks.emplace_back("optimizer.first_moment." + n, adam.first_moment.at(n));
    blocks.emplace_back("optimizer.second_moment." + n, adam.second_moment.at(n));
  }
  blocks.emplace_back("training.best_elbo", Tensor::scalar(meta.state.best_elbo));
  if (meta.x_stats) {
    blocks.emplace_back("data.x_mean", vector_tensor(meta.x_stats->mean));
    blocks.emplace_back("data.x_std", vector_tensor(meta.x_stats->std));
  }
  if (meta.y_stats) {
    blocks.emplace_back("data.y_mean", vector_tensor(meta.y_stats->mean));
    blocks.emplace_back("data.y_std", vector_tensor(meta.y_stats->std));
  }
  header["blocks"] = blocks.size();

  const std::string header_text = header.dump();
  std::string out = std::string(kMagic) + " " + std::to_string(kCheckpointVersion) + "\n";
  out += std::to_string(header_text.size()) + "\n";
  out += header_text;
  for (const auto& [name, t] : blocks) put_block(out, name, t);
  write_file_atomically(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  Reader r(buf.str());

  const std::string magic = r.line("magic");
  const std::string prefix = std::string(kMagic) + " ";
  if (magic.rfind(prefix, 0) != 0) Reader::fail("magic", "not a checkpoint file");
  const std::string version = magic.substr(prefix.size());
  if (version != std::to_string(kCheckpointVersion)) {
    throw CheckpointError("unsupported checkpoint version " + version + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const std::string length_text = r.line("header_length");
  if (length_text.empty() || length_text.find_first_not_of("0123456789") != std::string::npos) {
    Reader::fail("header_length", "not a number");
  }
  json header;
  try {
    header = json::parse(r.take(std::stoull(length_text), "header"));
  } catch (const json::parse_error&) {
    Reader::fail("header", "malformed JSON");
  }
  if (!header.is_object()) Reader::fail("header", "not an object");

  const auto num_blocks = header_value<std::size_t>(header, "blocks");
  std::map<std::string, Tensor> blocks;
  for (std::size_t b = 0; b < num_blocks; ++b) {
    const std::string where = "block " + std::to_string(b);
    const std::uint32_t name_len = r.u32(where + " name length");
    if (name_len > r.remaining()) Reader::fail(where + " name", "truncated");
    const std::string name = r.take(name_len, where + " name");
    const std::uint32_t rank = r.u32(name + " rank");
    if (rank > 2) Reader::fail(name + " rank", "rank " + std::to_string(rank) + " > 2");
    Shape shape;
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(r.u64(name + " shape")));
      count *= shape.back();
    }
    if (count > r.remaining() / 8) Reader::fail(name + " data", "truncated");
    std::vector<double> data(count);
    for (auto& v : data) v = std::bit_cast<double>(r.u64(name + " data"));
    if (!blocks.emplace(name, Tensor(shape, std::move(data))).second) {
      Reader::fail(name, "duplicate block");
    }
  }
  if (!r.at_end()) Reader::fail("trailer", "unexpected bytes after the last block");

  auto block = [&](const std::string& name) -> const Tensor& {
    auto it = blocks.find(name);
    if (it == blocks.end()) Reader::fail(name, "missing block");
    return it->second;
  };
  auto stats = [&](const std::string& prefix) {
    const auto mean = block(prefix + "_mean").data();
    const auto sd = block(prefix + "_std").data();
    return ColumnStats{{mean.begin(), mean.end()}, {sd.begin(), sd.end()}};
  };

  CheckpointMeta meta;
  if (!header.contains("config")) Reader::fail("config", "missing");
  try {
    meta.config = parse_config(header.at("config").dump());
  } catch (const Error& e) {
    Reader::fail("config", e.what());
  }
  meta.feature_names = header_value<std::vector<std::string>>(header, "feature_names");
  meta.target_names = header_value<std::vector<std::string>>(header, "target_names");
  if (header_value<bool>(header, "has_x_stats")) meta.x_stats = stats("data.x");
  if (header_value<bool>(header, "has_y_stats")) meta.y_stats = stats("data.y");

  const auto input_dim = header_value<std::size_t>(header, "input_dim");
  const auto output_dim = header_value<std::size_t>(header, "output_dim");
  const auto num_data = header_value<std::size_t>(header, "num_data");
  if (meta.feature_names.size() != input_dim) {
    Reader::fail("feature_names", "does not match input_dim");
  }
  if (meta.target_names.size() != output_dim) {
    Reader::fail("target_names", "does not match output_dim");
  }

  std::optional<DeepGP> model;
  try {
    model.emplace(build_model(meta.config.model, input_dim, output_dim, num_data));
    model->set_num_mc_samples(header_value<std::size_t>(header, "num_mc_samples"));
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    Reader::fail("config", e.what());
  }
  auto values = model->parameter_values();
  for (auto& [name, value] : values) {
    const Tensor& stored = block(name);
    if (stored.shape() != value.shape()) {
      Reader::fail(name, "shape " + stored.shape_string() + " but the model expects " +
                             value.shape_string());
    }
    value = stored;
  }
  model->set_parameter_values(values);

  TrainingState& state = meta.state;
  const Tensor& hyper = block("optimizer.hyper");
  if (hyper.size() != 4) Reader::fail("optimizer.hyper", "expected 4 values");
  state.optimizer.learning_rate = hyper[0];
  state.optimizer.beta1 = hyper[1];
  state.optimizer.beta2 = hyper[2];
  state.optimizer.epsilon = hyper[3];
  state.optimizer.step = parse_u64(header.value("optimizer_step", json()), "optimizer_step");
  if (!header.contains("moments") || !header.at("moments").is_array()) {
    Reader::fail("moments", "missing");
  }
  for (const auto& n : header.at("moments")) {
    if (!n.is_string()) Reader::fail("moments", "expected names");
    const std::string name = n.get<std::string>();
    state.optimizer.first_moment[name] = block("optimizer.first_moment." + name);
    state.optimizer.second_moment[name] = block("optimizer.second_moment." + name);
  }
  state.epochs_completed = static_cast<std::size_t>(
      parse_u64(header.value("epochs_completed", json()), "epochs_completed"));
  if (!header.contains("streams")) Reader::fail("streams", "missing");
  state.shuffle = stream_from_json(header.at("streams").value("shuffle", json()),
                                   "streams.shuffle");
  state.sampling = stream_from_json(header.at("streams").value("sampling", json()),
                                    "streams.sampling");
  const Tensor& best = block("training.best_elbo");
  if (best.size() != 1) Reader::fail("training.best_elbo", "expected a scalar");
  state.best_elbo = best[0];

  return Checkpoint{std::move(*model), std::move(meta)};
}

}  // namespace dgp

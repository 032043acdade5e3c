#include "dhfd/bundle.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dhfd/errors.hpp"
#include "json.hpp"

namespace dhfd {

using json = nlohmann::ordered_json;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void append_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double read_le(const std::string& in, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string pack(const double* data, std::size_t n) {
  std::string out;
  out.reserve(n * 8);
  for (std::size_t i = 0; i < n; ++i) append_le(out, data[i]);
  return out;
}

json parse(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string base64_encode(const std::string& in) {
  static constexpr char table[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const unsigned v = (static_cast<unsigned char>(in[i]) << 16) |
                       (static_cast<unsigned char>(in[i + 1]) << 8) |
                       static_cast<unsigned char>(in[i + 2]);
    out += table[(v >> 18) & 63];
    out += table[(v >> 12) & 63];
    out += table[(v >> 6) & 63];
    out += table[v & 63];
  }
  if (i < in.size()) {
    unsigned v = static_cast<unsigned char>(in[i]) << 16;
    if (i + 1 < in.size()) v |= static_cast<unsigned char>(in[i + 1]) << 8;
    out += table[(v >> 18) & 63];
    out += table[(v >> 12) & 63];
    out += i + 1 < in.size() ? table[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(const std::string& in) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  unsigned buf = 0;
  int bits = 0;
  for (char c : in) {
    if (c == '=') break;
    const int v = value(c);
    if (v < 0) throw SchemaError("invalid base64 input");
    buf = (buf << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((buf >> bits) & 0xff));
    }
  }
  return out;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------- preprocessor

std::string preprocessor_to_json(const PreprocessorState& s) {
  json j;
  j["kept_features"] = s.kept_features;
  j["train_means"] = s.train_means;
  j["train_stds"] = s.train_stds;
  j["conditioning"] = to_string(s.conditioning);
  auto& dropped = j["dropped"] = json::array();
  for (const auto& d : s.dropped) dropped.push_back({{"name", d.name}, {"reason", to_string(d.reason)}});
  return j.dump(2) + "\n";
}

PreprocessorState preprocessor_from_json(const std::string& text) {
  const json j = parse(text, "preprocessor.json");
  PreprocessorState s;
  try {
    s.kept_features = j.at("kept_features").get<std::vector<std::string>>();
    s.train_means = j.at("train_means").get<std::vector<double>>();
    s.train_stds = j.at("train_stds").get<std::vector<double>>();
    auto c = parse_conditioning(j.at("conditioning").get<std::string>());
    if (!c) throw SchemaError("preprocessor.json: unknown conditioning");
    s.conditioning = *c;
    for (const auto& d : j.value("dropped", json::array()))
      s.dropped.push_back({d.at("name").get<std::string>(),
                           d.at("reason").get<std::string>() == "constant" ? DropReason::constant
                                                                           : DropReason::missing});
  } catch (const json::exception& e) {
    throw SchemaError(std::string("preprocessor.json: ") + e.what());
  }
  if (s.train_means.size() != s.kept_features.size() ||
      s.train_stds.size() != s.kept_features.size())
    throw SchemaError("preprocessor.json: statistics do not match the feature list");
  return s;
}

// ---------------------------------------------------------------- scoring

std::string score_model_to_json(const ScoreModel& sm) {
  json j;
  j["score_type"] = to_string(sm.type);
  j["t_ae"] = sm.threshold;
  j["lambda"] = sm.lambda;
  j["dim"] = sm.re_mean.size();
  j["re_mean"] = std::vector<double>(sm.re_mean.data(), sm.re_mean.data() + sm.re_mean.size());
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor inv = sm.covariance_inverse;
  j["covariance_inverse"] = {
      {"layout", "row-major float64 little-endian"},
      {"base64", base64_encode(pack(inv.data(), static_cast<std::size_t>(inv.size())))}};
  return j.dump(2) + "\n";
}

ScoreModel score_model_from_json(const std::string& text) {
  const json j = parse(text, "scoring.json");
  ScoreModel sm;
  try {
    auto t = parse_score_type(j.at("score_type").get<std::string>());
    if (!t) throw SchemaError("scoring.json: unknown score_type");
    sm.type = *t;
    sm.threshold = j.at("t_ae").get<double>();
    sm.lambda = j.at("lambda").get<double>();
    const auto dim = j.at("dim").get<Eigen::Index>();
    const auto mean = j.at("re_mean").get<std::vector<double>>();
    sm.re_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    const std::string raw = base64_decode(j.at("covariance_inverse").at("base64").get<std::string>());
    if (raw.size() != static_cast<std::size_t>(dim * dim * 8))
      throw SchemaError("scoring.json: covariance size mismatch");
    sm.covariance_inverse.resize(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r)
      for (Eigen::Index c = 0; c < dim; ++c)
        sm.covariance_inverse(r, c) = read_le(raw, static_cast<std::size_t>((r * dim + c) * 8));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("scoring.json: ") + e.what());
  }
  return sm;
}

// ---------------------------------------------------------------- AE config

namespace {

json config_json(const AEConfig& c) {
  json j;
  j["hidden_units"] = c.hidden_units;
  j["latent_fraction"] = c.latent_fraction;
  j["learning_rate"] = c.learning_rate;
  j["noise_std"] = c.noise_std;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["early_stop_patience"] = c.early_stop_patience;
  j["seed"] = c.seed;
  j["conditioning"] = to_string(c.conditioning);
  j["activation"] = to_string(c.activation);
  j["validation_fraction"] = c.validation_fraction;
  return j;
}

AEConfig config_from(const json& j) {
  AEConfig c;
  c.hidden_units = j.value("hidden_units", c.hidden_units);
  c.latent_fraction = j.value("latent_fraction", c.latent_fraction);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.noise_std = j.value("noise_std", c.noise_std);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.seed = j.value("seed", c.seed);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  if (j.contains("conditioning")) {
    auto v = parse_conditioning(j["conditioning"].get<std::string>());
    if (!v) throw SchemaError("unknown conditioning");
    c.conditioning = *v;
  }
  if (j.contains("activation")) {
    auto v = parse_activation(j["activation"].get<std::string>());
    if (!v) throw SchemaError("unknown activation");
    c.activation = *v;
  }
  return c;
}

}  // namespace

std::string ae_config_to_json(const AEConfig& c) { return config_json(c).dump(2) + "\n"; }

AEConfig ae_config_from_json(const std::string& text) {
  try {
    return config_from(parse(text, "AE config"));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("AE config: ") + e.what());
  }
}

std::string train_report_to_json(const TrainReport& r) {
  json j;
  j["best_epoch"] = r.best_epoch;
  j["best_val_mse"] = r.best_val_mse;
  j["final_val_mse"] = r.val_mse.empty() ? 0.0 : r.val_mse.back();
  j["epochs_run"] = r.val_mse.size();
  j["train_mse"] = r.train_mse;
  j["val_mse"] = r.val_mse;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- bundle

void save_bundle(const ModelBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& m = b.model;
  json j;
  j["format"] = "dhfd-model-bundle/1";
  j["cache_key"] = b.cache_key;
  j["seed"] = m.config.seed;
  j["n_features"] = m.n_features;
  j["n_cond"] = m.n_cond;
  j["latent_dim"] = m.latent;
  j["activation"] = to_string(m.activation);
  auto layers = [](const std::vector<DenseLayer>& stack) {
    json arr = json::array();
    for (const auto& l : stack)
      arr.push_back({{"inputs", l.weights.cols()}, {"outputs", l.weights.rows()},
                     {"activated", l.activated}});
    return arr;
  };
  j["encoder"] = layers(m.encoder);
  j["decoder"] = layers(m.decoder);
  j["weights_layout"] =
      "encoder layers then decoder layers; per layer: weights (outputs x inputs, row-major) "
      "then bias; little-endian float64";
  j["config"] = config_json(m.config);
  write_file(dir / "model.json", j.dump(2) + "\n");
  const Eigen::VectorXd params = m.parameters();
  write_file(dir / "weights.bin", pack(params.data(), static_cast<std::size_t>(params.size())));
  write_file(dir / "preprocessor.json", preprocessor_to_json(m.preprocessor));
  write_file(dir / "scoring.json", score_model_to_json(b.score));
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
  const json j = parse(read_file(dir / "model.json"), "model.json");
  ModelBundle b;
  try {
    b.cache_key = j.value("cache_key", std::string());
    AEConfig cfg = config_from(j.at("config"));
    const auto n_features = j.at("n_features").get<std::size_t>();
    b.model = init_model(cfg, n_features);
    if (b.model.latent != j.at("latent_dim").get<std::size_t>() ||
        b.model.n_cond != j.at("n_cond").get<std::size_t>())
      throw SchemaError("model.json: architecture does not match its config");
  } catch (const json::exception& e) {
    throw SchemaError(std::string("model.json: ") + e.what());
  }
  const std::string raw = read_file(dir / "weights.bin");
  if (raw.size() != b.model.parameter_count() * 8)
    throw SchemaError("weights.bin: expected " + std::to_string(b.model.parameter_count()) +
                      " parameters");
  Eigen::VectorXd params(static_cast<Eigen::Index>(b.model.parameter_count()));
  for (Eigen::Index i = 0; i < params.size(); ++i)
    params(i) = read_le(raw, static_cast<std::size_t>(i) * 8);
  b.model.set_parameters(params);
  b.model.preprocessor = preprocessor_from_json(read_file(dir / "preprocessor.json"));
  if (b.model.preprocessor.n_features() != b.model.n_features)
    throw SchemaError("preprocessor.json: feature count does not match the model");
  b.score = score_model_from_json(read_file(dir / "scoring.json"));
  return b;
}

}  // namespace dhfd

#include "afgan/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "afgan/error.hpp"

namespace afgan {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename I>
I parse_int(const std::string& key, const std::string& v) {
  I out{};
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) throw ConfigError(key + ": expected an integer, got `" + v + "`");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) throw ConfigError(key + ": expected a number, got `" + v + "`");
  return out;
}

// Shortest text that parses back to the same double.
std::string real_text(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define INT_FIELD(key, member)                                                              \
  {key, Field{[](RunConfig& c, const std::string& v) { c.member = parse_int<decltype(c.member)>(key, v); }, \
              [](const RunConfig& c) { return std::to_string(c.member); }}}
#define REAL_FIELD(key, member)                                                             \
  {key, Field{[](RunConfig& c, const std::string& v) { c.member = parse_real(key, v); },    \
              [](const RunConfig& c) { return real_text(c.member); }}}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      INT_FIELD("image_size", scale.image_size),
      INT_FIELD("seed_size", scale.seed_size),
      INT_FIELD("stages", scale.stages),
      INT_FIELD("base_width", scale.base_width),
      INT_FIELD("channels", scale.channels),
      {"latent_dim", Field{[](RunConfig& c, const std::string& v) {
                             c.scale.latent_dim = c.train.latent_dim = parse_int<int>("latent_dim", v);
                           },
                           [](const RunConfig& c) { return std::to_string(c.scale.latent_dim); }}},
      INT_FIELD("batch_size", train.batch_size),
      REAL_FIELD("learning_rate", train.adam.learning_rate),
      REAL_FIELD("beta1", train.adam.beta1),
      REAL_FIELD("beta2", train.adam.beta2),
      REAL_FIELD("adam_eps", train.adam.eps),
      INT_FIELD("epochs", train.epochs),
      INT_FIELD("seed", train.seed),
      INT_FIELD("checkpoint_every", train.checkpoint_every),
      INT_FIELD("sample_every", train.sample_every),
      {"generator_loss", Field{[](RunConfig& c, const std::string& v) {
                                 if (v == "non_saturating") c.train.generator_loss = GeneratorLoss::non_saturating;
                                 else if (v == "minimax") c.train.generator_loss = GeneratorLoss::minimax;
                                 else throw ConfigError("generator_loss: expected non_saturating or minimax, got `" + v + "`");
                               },
                               [](const RunConfig& c) {
                                 return std::string(c.train.generator_loss == GeneratorLoss::minimax ? "minimax"
                                                                                                     : "non_saturating");
                               }}},
      INT_FIELD("target_size", augment.target_size),
      INT_FIELD("resize_size", augment.resize_size),
      REAL_FIELD("crop_scale_lo", augment.crop_scale_lo),
      REAL_FIELD("crop_scale_hi", augment.crop_scale_hi),
      REAL_FIELD("flip_probability", augment.flip_probability),
      INT_FIELD("num_sets", eval.num_sets),
      INT_FIELD("set_size", eval.set_size),
      INT_FIELD("eval_seed", eval.seed),
      REAL_FIELD("positive_threshold", eval.positive_threshold),
      REAL_FIELD("classifier_timeout", eval.classifier_timeout),
  };
  return table;
}

#undef INT_FIELD
#undef REAL_FIELD

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (checkpoint_every < 0 || sample_every < 0) throw ConfigError("checkpoint_every and sample_every must be >= 0");
  adam.validate();
}

void EvalConfig::validate() const {
  if (num_sets < 1 || set_size < 1) throw ConfigError("num_sets and set_size must be >= 1");
  if (num_sets > 100 || set_size > 1000) throw ConfigError("num_sets must be <= 100 and set_size <= 1000");
  if (!(positive_threshold >= 0.0 && positive_threshold <= 1.0)) throw ConfigError("positive_threshold not in [0, 1]");
  if (!(classifier_timeout > 0.0)) throw ConfigError("classifier_timeout must be > 0");
}

RunConfig RunConfig::full() { return {}; }

RunConfig RunConfig::desk() {
  RunConfig c;
  c.scale = ModelScale::desk();
  c.train.latent_dim = c.scale.latent_dim;
  c.train.epochs = 200;
  c.augment.target_size = c.scale.image_size;
  c.augment.resize_size = AugmentConfig::default_resize_for(c.scale.image_size);
  return c;
}

void RunConfig::validate() const {
  scale.validate();
  train.validate();
  augment.validate();
  eval.validate();
  if (train.latent_dim != scale.latent_dim) throw ConfigError("latent_dim differs between model and training settings");
  if (augment.target_size != scale.image_size) {
    throw ConfigError("target_size (" + std::to_string(augment.target_size) + ") must equal image_size (" +
                      std::to_string(scale.image_size) + ")");
  }
  if (augment.resize_size < augment.target_size) throw ConfigError("resize_size must be >= target_size");
  if (scale.channels != 3) throw ConfigError("channels must be 3 for RGB image data");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(*this, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key `" + key + "`");
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& [name, field] : fields()) out << name << '=' << field.get(*this) << '\n';
  return out.str();
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.first);
  return out;
}

RunConfig parse_run_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    try {
      base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_run_config(buf.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace afgan

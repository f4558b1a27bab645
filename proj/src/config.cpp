#include "wsss/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "wsss/error.hpp"

namespace wsss {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    out = std::stoull(v, &used);
  } catch (const std::logic_error&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError(key + ": trailing characters in '" + v + "'");
  return static_cast<std::size_t>(out);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::logic_error&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError(key + ": trailing characters in '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError(key + ": expected true|false, got '" + v + "'");
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<void(Config&, const std::string&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

#define SIZE_FIELD(path)                                                          \
  Field {                                                                         \
    [](Config& c, const std::string& k, const std::string& v) { c.path = to_size(k, v); }, \
        [](const Config& c) { return std::to_string(c.path); }                    \
  }
#define DOUBLE_FIELD(path)                                                          \
  Field {                                                                           \
    [](Config& c, const std::string& k, const std::string& v) { c.path = to_double(k, v); }, \
        [](const Config& c) { return fmt_double(c.path); }                          \
  }
#define BOOL_FIELD(path)                                                          \
  Field {                                                                         \
    [](Config& c, const std::string& k, const std::string& v) { c.path = to_bool(k, v); }, \
        [](const Config& c) { return std::string(c.path ? "true" : "false"); }    \
  }

// Ordered so that to_text() groups keys by section.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"model.image_size", SIZE_FIELD(model.vit.image_size)},
      {"model.patch_size", SIZE_FIELD(model.vit.patch_size)},
      {"model.embed_dim", SIZE_FIELD(model.vit.embed_dim)},
      {"model.num_heads", SIZE_FIELD(model.vit.num_heads)},
      {"model.num_blocks", SIZE_FIELD(model.vit.num_blocks)},
      {"model.mlp_ratio", SIZE_FIELD(model.vit.mlp_ratio)},
      {"model.dropout_rate", DOUBLE_FIELD(model.vit.dropout_rate)},
      {"model.num_classes", SIZE_FIELD(model.num_classes)},
      {"model.token_dim", SIZE_FIELD(model.token_dim)},
      {"model.hidden_dim", SIZE_FIELD(model.hidden_dim)},
      {"model.use_class_token", BOOL_FIELD(model.use_class_token)},
      {"model.use_context_fusion", BOOL_FIELD(model.use_context_fusion)},
      {"model.pooling",
       Field{[](Config& c, const std::string&, const std::string& v) {
               c.model.pooling = parse_pooling(v);
             },
             [](const Config& c) { return to_string(c.model.pooling); }}},
      {"model.topk", SIZE_FIELD(model.topk)},
      {"train.batch_size", SIZE_FIELD(train.batch_size)},
      {"train.epochs", SIZE_FIELD(train.epochs)},
      {"train.warm_lr", DOUBLE_FIELD(train.schedule.warm_lr)},
      {"train.warm_epochs", SIZE_FIELD(train.schedule.warm_epochs)},
      {"train.main_lr", DOUBLE_FIELD(train.schedule.main_lr)},
      {"train.seed",
       Field{[](Config& c, const std::string& k, const std::string& v) {
               c.train.seed = to_size(k, v);
             },
             [](const Config& c) { return std::to_string(c.train.seed); }}},
      {"infer.bg_threshold", DOUBLE_FIELD(infer.bg_threshold)},
      {"infer.infer_size", SIZE_FIELD(infer.infer_size)},
      {"infer.crf", BOOL_FIELD(infer.crf)},
      {"infer.score_mode",
       Field{[](Config& c, const std::string&, const std::string& v) {
               c.infer.score_mode = parse_score_mode(v);
             },
             [](const Config& c) { return to_string(c.infer.score_mode); }}},
      {"crf.iterations", SIZE_FIELD(infer.crf_params.iterations)},
      {"crf.spatial_sigma", DOUBLE_FIELD(infer.crf_params.spatial_sigma)},
      {"crf.bilateral_spatial_sigma", DOUBLE_FIELD(infer.crf_params.bilateral_spatial_sigma)},
      {"crf.bilateral_color_sigma", DOUBLE_FIELD(infer.crf_params.bilateral_color_sigma)},
      {"crf.spatial_weight", DOUBLE_FIELD(infer.crf_params.spatial_weight)},
      {"crf.bilateral_weight", DOUBLE_FIELD(infer.crf_params.bilateral_weight)},
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD

}  // namespace

std::size_t ModelConfig::stream_width() const {
  return vit.embed_dim + (use_class_token ? token_dim : 0);
}

std::size_t ModelConfig::lstm_hidden() const {
  if (hidden_dim > 0) return hidden_dim;
  return std::max<std::size_t>(1, (vit.embed_dim + token_dim) / 2);
}

void ModelConfig::validate() const {
  vit.validate();
  if (num_classes == 0 || num_classes > 254) {
    throw ConfigError("num_classes must lie in [1, 254]");
  }
  if (use_class_token && token_dim == 0) {
    throw ConfigError("token_dim must be positive when class tokens are enabled");
  }
  if (pooling == Pooling::kTopK && (topk == 0 || topk > vit.num_patches())) {
    throw ConfigError("topk must lie in [1, " + std::to_string(vit.num_patches()) + "]");
  }
}

void Config::set(const std::string& dotted_key, const std::string& value) {
  for (const auto& [key, field] : fields()) {
    if (key == dotted_key) {
      field.set(*this, key, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + dotted_key + "'");
}

std::vector<std::string> Config::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.first);
  return out;
}

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": key '" + key +
                        "' outside of a section");
    }
    cfg.set(section + "." + key, line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string Config::to_text() const {
  std::ostringstream os;
  std::string section;
  for (const auto& [key, field] : fields()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) os << '\n';
      os << '[' << sec << "]\n";
      section = sec;
    }
    os << key.substr(dot + 1) << " = " << field.get(*this) << '\n';
  }
  return os.str();
}

void Config::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << to_text();
}

void Config::validate() const {
  model.validate();
  if (train.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(train.schedule.warm_lr > 0 && train.schedule.main_lr > 0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (!(infer.bg_threshold > 0 && infer.bg_threshold < 1)) {
    throw ConfigError("bg_threshold must lie in (0, 1)");
  }
  if (infer.infer_size % model.vit.patch_size != 0) {
    throw ConfigError("infer_size " + std::to_string(infer.infer_size) +
                      " is not divisible by patch_size " +
                      std::to_string(model.vit.patch_size));
  }
  infer.crf_params.validate();
}

void apply_env_overrides(Config& cfg) {
  if (const char* s = std::getenv(kSeedEnvVar); s && *s) cfg.set("train.seed", s);
}

}  // namespace wsss

#include "fit/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace fit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "' expects true/false, got '" + v + "'");
}

template <class Cfg>
struct Field {
  std::string name;
  std::function<void(Cfg&, const std::string&)> set;
  std::function<std::string(const Cfg&)> get;
};

#define FIT_SIZE_FIELD(T, f) \
  Field<T> { #f, [](T& c, const std::string& v) { c.f = parse_size(#f, v); }, [](const T& c) { return std::to_string(c.f); } }
#define FIT_DOUBLE_FIELD(T, f) \
  Field<T> { #f, [](T& c, const std::string& v) { c.f = parse_double(#f, v); }, [](const T& c) { return format_double(c.f); } }

const std::vector<Field<ModelConfig>>& model_fields() {
  static const std::vector<Field<ModelConfig>> fields = {
      FIT_SIZE_FIELD(ModelConfig, channels),
      FIT_SIZE_FIELD(ModelConfig, encoder_depth),
      FIT_SIZE_FIELD(ModelConfig, fim_blocks),
      FIT_SIZE_FIELD(ModelConfig, subspaces),
      Field<ModelConfig>{"subspace_mode",
                         [](ModelConfig& c, const std::string& v) { c.subspace_mode = subspace_mode_from_string(v); },
                         [](const ModelConfig& c) { return std::string(to_string(c.subspace_mode)); }},
      FIT_SIZE_FIELD(ModelConfig, heads),
      FIT_SIZE_FIELD(ModelConfig, pe_length),
      FIT_SIZE_FIELD(ModelConfig, pe_hidden),
      FIT_SIZE_FIELD(ModelConfig, grid_h),
      FIT_SIZE_FIELD(ModelConfig, grid_w),
      FIT_SIZE_FIELD(ModelConfig, decoder_hidden),
      FIT_SIZE_FIELD(ModelConfig, decoder_depth),
      FIT_SIZE_FIELD(ModelConfig, max_tokens),
  };
  return fields;
}

const std::vector<Field<TrainConfig>>& train_fields() {
  static const std::vector<Field<TrainConfig>> fields = {
      FIT_SIZE_FIELD(TrainConfig, batch_size),
      FIT_SIZE_FIELD(TrainConfig, epochs),
      FIT_SIZE_FIELD(TrainConfig, steps_per_epoch),
      FIT_DOUBLE_FIELD(TrainConfig, lr_start),
      FIT_DOUBLE_FIELD(TrainConfig, lr_base),
      FIT_DOUBLE_FIELD(TrainConfig, lr_floor),
      FIT_SIZE_FIELD(TrainConfig, warmup_epochs),
      FIT_SIZE_FIELD(TrainConfig, patch_size),
      FIT_DOUBLE_FIELD(TrainConfig, scale_min),
      FIT_DOUBLE_FIELD(TrainConfig, scale_max),
      FIT_SIZE_FIELD(TrainConfig, sample_pixels),
      Field<TrainConfig>{"augment", [](TrainConfig& c, const std::string& v) { c.augment = parse_bool("augment", v); },
                         [](const TrainConfig& c) { return std::string(c.augment ? "true" : "false"); }},
      Field<TrainConfig>{"seed", [](TrainConfig& c, const std::string& v) { c.seed = parse_size("seed", v); },
                         [](const TrainConfig& c) { return std::to_string(c.seed); }},
  };
  return fields;
}

#undef FIT_SIZE_FIELD
#undef FIT_DOUBLE_FIELD

template <class Cfg>
void apply_fields(const std::vector<Field<Cfg>>& fields, Cfg& cfg, std::map<std::string, std::string>& kv) {
  for (const auto& f : fields) {
    auto it = kv.find(f.name);
    if (it == kv.end()) continue;
    f.set(cfg, it->second);
    kv.erase(it);
  }
}

}  // namespace

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + value + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

ModelConfig model_config_from(const std::map<std::string, std::string>& kv, std::map<std::string, std::string>* rest) {
  std::map<std::string, std::string> left = kv;
  ModelConfig cfg;
  apply_fields(model_fields(), cfg, left);
  if (rest) *rest = std::move(left);
  return cfg;
}

RunConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> left;
  RunConfig cfg;
  cfg.model = model_config_from(parse_key_values(text), &left);
  apply_fields(train_fields(), cfg.train, left);
  if (!left.empty()) {
    std::string names;
    for (const auto& [k, _] : left) names += (names.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config key(s): " + names);
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : model_fields()) keys.push_back(f.name);
  for (const auto& f : train_fields()) keys.push_back(f.name);
  return keys;
}

std::string to_text(const ModelConfig& cfg) {
  std::string out;
  for (const auto& f : model_fields()) out += f.name + "=" + f.get(cfg) + "\n";
  return out;
}

std::string to_text(const RunConfig& cfg) {
  std::string out = to_text(cfg.model);
  for (const auto& f : train_fields()) out += f.name + "=" + f.get(cfg.train) + "\n";
  return out;
}

}  // namespace fit

#include "pyraflow/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "pyraflow/errors.hpp"

namespace pyraflow {

int ModelConfig::scaled(int base) const {
  int v = static_cast<int>(std::lround(static_cast<double>(base) * width_scale));
  return v < 1 ? 1 : v;
}

int ModelConfig::encoder_channels(int level) const {
  static constexpr int kBase[6] = {32, 32, 64, 96, 128, 192};
  if (level < 1 || level > kLevels)
    throw ShapeError("encoder_channels: level " + std::to_string(level) + " out of range");
  return scaled(kBase[level - 1]);
}

int ModelConfig::last_kernel(int level) const {
  switch (level) {
    case 6:
    case 5:
      return 3;
    case 4:
    case 3:
      return 5;
    case 2:
      return 7;
    default:
      throw ShapeError("last_kernel: decoder has no level " + std::to_string(level));
  }
}

float ModelConfig::level_weight(int level) const {
  if (level < 2 || level > 6)
    throw ShapeError("level_weight: decoder has no level " + std::to_string(level));
  return level_loss_weights[static_cast<size_t>(6 - level)];
}

std::string format_float(float v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

float parse_float(const std::string& key, const std::string& v) {
  float out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("bad float value '" + v + "' for key '" + key + "'");
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("bad integer value '" + v + "' for key '" + key + "'");
  return out;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("bad unsigned value '" + v + "' for key '" + key + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean value '" + v + "' for key '" + key + "'");
}

std::vector<std::string> split_commas(const std::string& v) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

} // namespace

std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return out;
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os << "width_scale = " << format_float(width_scale) << "\n";
  os << "leaky_slope = " << format_float(leaky_slope) << "\n";
  os << "normalize_input = " << (normalize_input ? "true" : "false") << "\n";
  os << "seed = " << seed << "\n";
  os << "loss = " << (loss == PenaltyKind::kSquaredL2 ? "l2" : "charbonnier") << "\n";
  os << "charbonnier_eps = " << format_float(charbonnier_eps) << "\n";
  os << "charbonnier_q = " << format_float(charbonnier_q) << "\n";
  os << "loss_weights = ";
  for (size_t i = 0; i < level_loss_weights.size(); ++i)
    os << (i ? "," : "") << format_float(level_loss_weights[i]);
  os << "\n";
  return os.str();
}

bool ModelConfig::apply(const std::string& key, const std::string& value) {
  if (key == "width_scale") {
    width_scale = parse_float(key, value);
    if (width_scale <= 0) throw ConfigError("width_scale must be positive");
  } else if (key == "leaky_slope") {
    leaky_slope = parse_float(key, value);
  } else if (key == "normalize_input") {
    normalize_input = parse_bool(key, value);
  } else if (key == "seed") {
    seed = parse_u64(key, value);
  } else if (key == "loss") {
    if (value == "l2")
      loss = PenaltyKind::kSquaredL2;
    else if (value == "charbonnier")
      loss = PenaltyKind::kCharbonnier;
    else
      throw ConfigError("loss must be 'l2' or 'charbonnier', got '" + value + "'");
  } else if (key == "charbonnier_eps") {
    charbonnier_eps = parse_float(key, value);
  } else if (key == "charbonnier_q") {
    charbonnier_q = parse_float(key, value);
  } else if (key == "loss_weights") {
    auto parts = split_commas(value);
    if (parts.size() != level_loss_weights.size())
      throw ConfigError("loss_weights needs 5 comma-separated values (levels 6..2)");
    for (size_t i = 0; i < parts.size(); ++i)
      level_loss_weights[i] = parse_float(key, trim(parts[i]));
  } else {
    return false;
  }
  return true;
}

ModelConfig ModelConfig::parse_text(const std::string& text) {
  ModelConfig cfg;
  for (const auto& [k, v] : parse_kv(text))
    if (!cfg.apply(k, v)) throw ConfigError("unknown configuration key '" + k + "'");
  return cfg;
}

std::string TrainHyper::serialize() const {
  std::ostringstream os;
  auto list_int = [&os](const char* key, const auto& arr) {
    os << key << " = ";
    for (size_t i = 0; i < arr.size(); ++i) os << (i ? "," : "") << arr[i];
    os << "\n";
  };
  list_int("stage_iters", stage_iters);
  os << "stage_lr = ";
  for (size_t i = 0; i < stage_lr.size(); ++i) os << (i ? "," : "") << format_float(stage_lr[i]);
  os << "\n";
  os << "lr_milestones = ";
  for (size_t i = 0; i < lr_milestones.size(); ++i)
    os << (i ? "," : "") << format_float(lr_milestones[i]);
  os << "\n";
  os << "adam_beta1 = " << format_float(adam_beta1) << "\n";
  os << "adam_beta2 = " << format_float(adam_beta2) << "\n";
  os << "adam_eps = " << format_float(adam_eps) << "\n";
  os << "train_seed = " << seed << "\n";
  os << "dataset_size = " << dataset_size << "\n";
  os << "holdout_size = " << holdout_size << "\n";
  os << "image_size = " << image_size << "\n";
  os << "max_displacement = " << format_float(max_displacement) << "\n";
  os << "piecewise = " << (piecewise ? "true" : "false") << "\n";
  return os.str();
}

bool TrainHyper::apply(const std::string& key, const std::string& value) {
  if (key == "stage_iters") {
    auto parts = split_commas(value);
    if (parts.size() != stage_iters.size())
      throw ConfigError("stage_iters needs 6 comma-separated values");
    for (size_t i = 0; i < parts.size(); ++i) stage_iters[i] = parse_int(key, trim(parts[i]));
  } else if (key == "stage_lr") {
    auto parts = split_commas(value);
    if (parts.size() != stage_lr.size()) throw ConfigError("stage_lr needs 6 values");
    for (size_t i = 0; i < parts.size(); ++i) stage_lr[i] = parse_float(key, trim(parts[i]));
  } else if (key == "lr_milestones") {
    lr_milestones.clear();
    if (!trim(value).empty())
      for (const auto& p : split_commas(value)) lr_milestones.push_back(parse_float(key, trim(p)));
  } else if (key == "adam_beta1") {
    adam_beta1 = parse_float(key, value);
  } else if (key == "adam_beta2") {
    adam_beta2 = parse_float(key, value);
  } else if (key == "adam_eps") {
    adam_eps = parse_float(key, value);
  } else if (key == "train_seed") {
    seed = parse_u64(key, value);
  } else if (key == "dataset_size") {
    dataset_size = parse_int(key, value);
  } else if (key == "holdout_size") {
    holdout_size = parse_int(key, value);
  } else if (key == "image_size") {
    image_size = parse_int(key, value);
    if (image_size < 32 || image_size % 32 != 0)
      throw ConfigError("image_size must be a positive multiple of 32");
  } else if (key == "max_displacement") {
    max_displacement = parse_float(key, value);
  } else if (key == "piecewise") {
    piecewise = parse_bool(key, value);
  } else {
    return false;
  }
  return true;
}

} // namespace pyraflow

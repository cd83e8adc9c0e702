#include "odcs/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "odcs/errors.hpp"
#include "odcs/text.hpp"

namespace odcs {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double parse_double(std::string_view v, const std::string& key, std::size_t offset) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ParseError("config key '" + key + "': invalid number '" + std::string(v) + "'", offset);
  }
  return out;
}

std::int64_t parse_int(std::string_view v, const std::string& key, std::size_t offset) {
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ParseError("config key '" + key + "': invalid integer '" + std::string(v) + "'", offset);
  }
  return out;
}

std::uint64_t parse_u64(std::string_view v, const std::string& key, std::size_t offset) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ParseError("config key '" + key + "': invalid unsigned integer '" + std::string(v) + "'",
                     offset);
  }
  return out;
}

bool parse_bool(std::string_view v, const std::string& key, std::size_t offset) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError("config key '" + key + "': expected true/false, got '" + std::string(v) + "'",
                   offset);
}

}  // namespace

void TrainConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ContractError("config: " + m); };
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must be in [0, 1)");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (epochs < 1) fail("epochs must be at least 1");
  if (lambda < 0.0) fail("lambda must be non-negative");
  if (!(smooth > 0.0)) fail("smooth must be positive");
  if (!(width_scale > 0.0 && width_scale <= 1.0)) fail("width_scale must be in (0, 1]");
  if (input_size < 2 || input_size % 2 != 0) fail("input_size must be a positive even integer");
  if (!(bn_eps > 0.0)) fail("bn_eps must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) fail("bn_momentum must be in (0, 1]");
  if (!(aug_scale_lo > 0.0) || aug_scale_hi < aug_scale_lo) fail("invalid aug_scale range");
  if (!(aug_illum_lo > 0.0) || aug_illum_hi < aug_illum_lo) fail("invalid aug_illum range");
  if (checkpoint_dir.empty()) fail("checkpoint_dir must not be empty");
}

std::string TrainConfig::serialize() const {
  std::string out;
  const auto kv = [&out](const char* key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  kv("lr", format_double(lr));
  kv("beta1", format_double(beta1));
  kv("beta2", format_double(beta2));
  kv("batch_size", std::to_string(batch_size));
  kv("epochs", std::to_string(epochs));
  kv("lambda", format_double(lambda));
  kv("smooth", format_double(smooth));
  kv("width_scale", format_double(width_scale));
  kv("input_size", std::to_string(input_size));
  kv("seed", std::to_string(seed));
  kv("bn_eps", format_double(bn_eps));
  kv("bn_momentum", format_double(bn_momentum));
  kv("augment", augment ? "true" : "false");
  kv("aug_hflip", aug_hflip ? "true" : "false");
  kv("aug_vflip", aug_vflip ? "true" : "false");
  kv("aug_scale", aug_scale ? "true" : "false");
  kv("aug_illumination", aug_illumination ? "true" : "false");
  kv("aug_scale_lo", format_double(aug_scale_lo));
  kv("aug_scale_hi", format_double(aug_scale_hi));
  kv("aug_illum_lo", format_double(aug_illum_lo));
  kv("aug_illum_hi", format_double(aug_illum_hi));
  kv("extractor_trainable", extractor_trainable ? "true" : "false");
  kv("checkpoint_dir", checkpoint_dir);
  kv("train_manifest", train_manifest);
  return out;
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig cfg;
  using Setter = std::function<void(TrainConfig&, std::string_view, std::size_t)>;
  static const std::map<std::string, Setter, std::less<>> setters = {
      {"lr", [](TrainConfig& c, std::string_view v, std::size_t o) { c.lr = parse_double(v, "lr", o); }},
      {"beta1", [](TrainConfig& c, std::string_view v, std::size_t o) { c.beta1 = parse_double(v, "beta1", o); }},
      {"beta2", [](TrainConfig& c, std::string_view v, std::size_t o) { c.beta2 = parse_double(v, "beta2", o); }},
      {"batch_size", [](TrainConfig& c, std::string_view v, std::size_t o) { c.batch_size = static_cast<int>(parse_int(v, "batch_size", o)); }},
      {"epochs", [](TrainConfig& c, std::string_view v, std::size_t o) { c.epochs = static_cast<int>(parse_int(v, "epochs", o)); }},
      {"lambda", [](TrainConfig& c, std::string_view v, std::size_t o) { c.lambda = parse_double(v, "lambda", o); }},
      {"smooth", [](TrainConfig& c, std::string_view v, std::size_t o) { c.smooth = parse_double(v, "smooth", o); }},
      {"width_scale", [](TrainConfig& c, std::string_view v, std::size_t o) { c.width_scale = parse_double(v, "width_scale", o); }},
      {"input_size", [](TrainConfig& c, std::string_view v, std::size_t o) { c.input_size = static_cast<int>(parse_int(v, "input_size", o)); }},
      {"seed", [](TrainConfig& c, std::string_view v, std::size_t o) { c.seed = parse_u64(v, "seed", o); }},
      {"bn_eps", [](TrainConfig& c, std::string_view v, std::size_t o) { c.bn_eps = parse_double(v, "bn_eps", o); }},
      {"bn_momentum", [](TrainConfig& c, std::string_view v, std::size_t o) { c.bn_momentum = parse_double(v, "bn_momentum", o); }},
      {"augment", [](TrainConfig& c, std::string_view v, std::size_t o) { c.augment = parse_bool(v, "augment", o); }},
      {"aug_hflip", [](TrainConfig& c, std::string_view v, std::size_t o) { c.aug_hflip = parse_bool(v, "aug_hflip", o); }},
      {"aug_vflip", [](TrainConfig& c, std::string_view v, std::size_t o) { c.aug_vflip = parse_bool(v, "aug_vflip", o); }},
      {"aug_scale", [](TrainConfig& c, std::string_view v, std::size_t o) { c.aug_scale = parse_bool(v, "aug_scale", o); }},
      {"aug_illumination", [](TrainConfig& c, std::string_view v, std::size_t o) { c.aug_illumination = parse_bool(v, "aug_illumination", o); }},
      {"aug_scale_lo", [](TrainConfig& c, std::string_view v, std::size_t o) { c.aug_scale_lo = parse_double(v, "aug_scale_lo", o); }},
      {"aug_scale_hi", [](TrainConfig& c, std::string_view v, std::size_t o) { c.aug_scale_hi = parse_double(v, "aug_scale_hi", o); }},
      {"aug_illum_lo", [](TrainConfig& c, std::string_view v, std::size_t o) { c.aug_illum_lo = parse_double(v, "aug_illum_lo", o); }},
      {"aug_illum_hi", [](TrainConfig& c, std::string_view v, std::size_t o) { c.aug_illum_hi = parse_double(v, "aug_illum_hi", o); }},
      {"extractor_trainable", [](TrainConfig& c, std::string_view v, std::size_t o) { c.extractor_trainable = parse_bool(v, "extractor_trainable", o); }},
      {"checkpoint_dir", [](TrainConfig& c, std::string_view v, std::size_t) { c.checkpoint_dir = std::string(v); }},
      {"train_manifest", [](TrainConfig& c, std::string_view v, std::size_t) { c.train_manifest = std::string(v); }},
  };

  std::size_t offset = 0;
  while (offset < text.size()) {
    std::size_t eol = text.find('\n', offset);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line(text.data() + offset, eol - offset);
    const std::size_t line_offset = offset;
    offset = eol + 1;

    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("config line is not 'key = value'", line_offset);
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw ParseError("unknown config key '" + key + "'", line_offset);
    }
    it->second(cfg, value, line_offset);
  }
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool config_equal_except_epochs(const TrainConfig& a, const TrainConfig& b) {
  TrainConfig bb = b;
  bb.epochs = a.epochs;
  return a.serialize() == bb.serialize();
}

std::string resolve_path(const std::string& base_dir, const std::string& path) {
  const std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return path;
  return (std::filesystem::path(base_dir) / p).string();
}

std::string parent_dir(const std::string& path) {
  const std::string dir = std::filesystem::path(path).parent_path().string();
  return dir.empty() ? std::string(".") : dir;
}

}  // namespace odcs

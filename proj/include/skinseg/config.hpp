#pragma once

// Every tunable of a run in one place. Config files are flat `key = value`
// lines (# starts a comment); keys are the command-line flag names without
// the leading dashes. Unknown keys and out-of-range values are rejected.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "skinseg/error.hpp"
#include "skinseg/evaluation.hpp"
#include "skinseg/nn.hpp"
#include "skinseg/pipeline.hpp"

namespace skinseg {

struct RunConfig {
  GuidedFilterParams guided_filter;
  PatchGeometry geometry;
  double tau = 0.6;
  int dilation_radius = 10;
  int inference_batch = 64;

  nn::NetMode mode = nn::NetMode::dual;
  nn::Architecture arch;
  nn::SgdConfig sgd;
  int patches_per_image = 4500;
  int margin_radius = 15;

  int folds = 4;
  std::uint64_t seed = 1;
  bool deterministic = false;
  unsigned threads = 0;

  void validate() const {
    segmentation().validate();
    training().validate();
    if (folds < 2) throw std::invalid_argument("folds must be >= 2");
  }

  SegmentationConfig segmentation() const {
    SegmentationConfig s;
    s.tau = tau;
    s.dilation_radius = dilation_radius;
    s.guided_filter = guided_filter;
    s.geometry = geometry;
    s.inference_batch = inference_batch;
    s.threads = threads;
    return s;
  }

  TrainingConfig training() const {
    TrainingConfig t;
    t.mode = mode;
    t.arch = arch;
    t.sgd = sgd;
    t.sgd.seed = seed;
    t.patches_per_image = patches_per_image;
    t.margin_radius = margin_radius;
    t.threads = deterministic ? 1u : threads;
    return t;
  }

  CvConfig cross_validation() const {
    CvConfig c;
    c.segmentation = segmentation();
    c.training = training();
    c.folds = folds;
    c.seed = seed;
    return c;
  }
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc{} || res.ptr != end)
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + text + "'");
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument("config key '" + key + "': expected a boolean, got '" + text + "'");
}

inline std::map<std::string, std::function<void(RunConfig&, const std::string&, const std::string&)>> config_setters() {
  using F = std::function<void(RunConfig&, const std::string&, const std::string&)>;
  auto integer = [](auto member) -> F {
    return [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_number<int>(k, v); };
  };
  auto real = [](auto member) -> F {
    return [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_number<double>(k, v); };
  };
  return {
      {"gf-radius", integer([](RunConfig& c) -> int& { return c.guided_filter.radius; })},
      {"gf-eps", real([](RunConfig& c) -> double& { return c.guided_filter.epsilon; })},
      {"tau", real([](RunConfig& c) -> double& { return c.tau; })},
      {"dilation-radius", integer([](RunConfig& c) -> int& { return c.dilation_radius; })},
      {"inference-batch", integer([](RunConfig& c) -> int& { return c.inference_batch; })},
      {"local-side", integer([](RunConfig& c) -> int& { return c.geometry.local_side; })},
      {"global-side", integer([](RunConfig& c) -> int& { return c.geometry.global_side; })},
      {"image-height", integer([](RunConfig& c) -> int& { return c.geometry.image_h; })},
      {"image-width", integer([](RunConfig& c) -> int& { return c.geometry.image_w; })},
      {"band-smoothing", integer([](RunConfig& c) -> int& { return c.geometry.band_smoothing; })},
      {"maps", integer([](RunConfig& c) -> int& { return c.arch.maps; })},
      {"hidden", integer([](RunConfig& c) -> int& { return c.arch.hidden; })},
      {"lr", real([](RunConfig& c) -> double& { return c.sgd.learning_rate; })},
      {"momentum", real([](RunConfig& c) -> double& { return c.sgd.momentum; })},
      {"batch", integer([](RunConfig& c) -> int& { return c.sgd.batch_size; })},
      {"epochs", integer([](RunConfig& c) -> int& { return c.sgd.epochs; })},
      {"patches-per-image", integer([](RunConfig& c) -> int& { return c.patches_per_image; })},
      {"margin-radius", integer([](RunConfig& c) -> int& { return c.margin_radius; })},
      {"folds", integer([](RunConfig& c) -> int& { return c.folds; })},
      {"mode", [](RunConfig& c, const std::string&, const std::string& v) { c.mode = nn::parse_mode(v); }},
      {"seed",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"threads",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.threads = parse_number<unsigned>(k, v); }},
      {"deterministic", [](RunConfig& c, const std::string& k, const std::string& v) { c.deterministic = parse_bool(k, v); }},
  };
}

}  // namespace detail

/// Applies `key = value` lines on top of `base`.
inline RunConfig parse_run_config(const std::string& text, RunConfig base = {}) {
  const auto setters = detail::config_setters();
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second(base, key, value);
  }
  base.validate();
  return base;
}

inline RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), std::move(base));
}

}  // namespace skinseg

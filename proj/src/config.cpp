#include "priorvo/config.hpp"

#include "priorvo/errors.hpp"
#include "priorvo/pipeline.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace priorvo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const KeyValue& kv, const char* expected) {
  throw ConfigError("line " + std::to_string(kv.line) + ": `" + kv.key + "` expects " + expected + ", got `" +
                    kv.value + "`");
}

}  // namespace

std::vector<KeyValue> parse_key_values(const std::string& text) {
  std::vector<KeyValue> out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected `key = value`");
    KeyValue kv{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    if (kv.key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(kv.key).second)
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key `" + kv.key + "`");
    out.push_back(std::move(kv));
  }
  return out;
}

std::vector<KeyValue> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_key_values(text);
}

double to_double(const KeyValue& kv) {
  double v = 0.0;
  const char* end = kv.value.data() + kv.value.size();
  const auto [ptr, ec] = std::from_chars(kv.value.data(), end, v);
  if (ec != std::errc() || ptr != end) bad_value(kv, "a number");
  return v;
}

int to_int(const KeyValue& kv) {
  int v = 0;
  const char* end = kv.value.data() + kv.value.size();
  const auto [ptr, ec] = std::from_chars(kv.value.data(), end, v);
  if (ec != std::errc() || ptr != end) bad_value(kv, "an integer");
  return v;
}

bool to_bool(const KeyValue& kv) {
  if (kv.value == "true" || kv.value == "on" || kv.value == "1") return true;
  if (kv.value == "false" || kv.value == "off" || kv.value == "0") return false;
  bad_value(kv, "true/false");
}

std::vector<int> to_int_list(const KeyValue& kv) {
  std::vector<int> out;
  std::string item;
  std::istringstream in(kv.value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(to_int({kv.key, item, kv.line}));
  }
  return out;
}

void unknown_key(const KeyValue& kv) {
  throw ConfigError("line " + std::to_string(kv.line) + ": unknown key `" + kv.key + "`");
}

PipelineConfig parse_pipeline_config(const std::string& text) {
  PipelineConfig c;
  for (const KeyValue& kv : parse_key_values(text)) {
    const std::string& k = kv.key;
    if (k == "max_features") c.max_features = to_int(kv);
    else if (k == "min_features") c.min_features = to_int(kv);
    else if (k == "window") c.window = to_int(kv);
    else if (k == "pyramid_levels") c.pyramid_levels = to_int(kv);
    else if (k == "fast_threshold") c.fast_threshold = to_double(kv);
    else if (k == "grid_cell") c.grid_cell = to_int(kv);
    else if (k == "convergence") {
      if (kv.value == "strict") c.convergence_ratio = ConvergencePreset::kStrict;
      else if (kv.value == "relaxed") c.convergence_ratio = ConvergencePreset::kRelaxed;
      else c.convergence_ratio = to_double(kv);
    } else if (k == "prior_dir") c.prior_dir = kv.value;
    else if (k == "use_priors") c.use_priors = to_bool(kv);
    else if (k == "bundle_adjustment") c.bundle_adjustment = to_bool(kv);
    else if (k == "deterministic") c.deterministic = to_bool(kv);
    else if (k == "prior_bootstrap") c.prior_bootstrap = to_bool(kv);
    else if (k == "keyframe_translation_ratio") c.keyframe_translation_ratio = to_double(kv);
    else if (k == "lost_budget") c.lost_budget = to_int(kv);
    else if (k == "min_triangulation_angle") c.min_triangulation_angle = to_double(kv);
    else if (k == "seed_a0") c.seed_a0 = to_double(kv);
    else if (k == "seed_b0") c.seed_b0 = to_double(kv);
    else if (k == "prior_d_floor") c.prior_d_floor = to_double(kv);
    else if (k == "prior_d_ceiling") c.prior_d_ceiling = to_double(kv);
    else if (k == "literal_prior_range") c.literal_prior_range = to_bool(kv);
    else if (k == "bootstrap_min_disparity") c.bootstrap_min_disparity = to_double(kv);
    else if (k == "bootstrap_min_features") c.bootstrap_min_features = to_int(kv);
    else if (k == "queue_capacity") c.queue_capacity = to_int(kv);
    else unknown_key(kv);
  }
  c.validate();
  return c;
}

PipelineConfig read_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pipeline_config(ss.str());
}

}  // namespace priorvo

#include "s2m/config.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "s2m/checkpoint.hpp"

namespace s2m {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void fail(const std::string& path, int line, const std::string& msg) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, const std::string& path, int line) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(path, line, "expected a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& v, const std::string& path, int line) {
  try {
    size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    fail(path, line, "expected an integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const std::string& path, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(path, line, "expected true/false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v, const std::string& path, int line) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) fail(path, line, "empty list element");
    out.push_back(static_cast<int>(parse_int(item, path, line)));
  }
  if (out.empty()) fail(path, line, "empty list");
  return out;
}

}  // namespace

void PipelineConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw std::runtime_error("config: " + msg);
  };
  check(image_size >= 16 && (image_size & (image_size - 1)) == 0,
        "image_size must be a power of two >= 16");
  check(num_views == 12 || num_views == 14, "num_views must be 12 or 14");
  check(view_index >= -1 && view_index < num_views, "view_index out of range");
  check(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must be in [0,1)");
  check(steps_25d > 0 && steps_per_resolution > 0 && venc_steps > 0, "step counts must be > 0");
  check(lr_25d > 0 && lr_disc > 0 && lr_implicit > 0 && lr_venc > 0,
        "learning rates must be > 0");
  check(decoder_layers == 5 || decoder_layers == 6, "decoder_layers must be 5 or 6");
  check(!resolutions.empty(), "resolutions must not be empty");
  for (size_t i = 0; i < resolutions.size(); ++i) {
    check(resolutions[i] >= 2, "resolutions must be >= 2");
    check(i == 0 || resolutions[i] > resolutions[i - 1], "resolutions must be ascending");
  }
  check(encoder_grid_n >= 4 && encoder_grid_n % 4 == 0,
        "encoder_grid_n must be a multiple of 4, >= 4");
  check(points_per_step >= 0, "points_per_step must be >= 0");
  check(w_surf > 0, "w_surf must be > 0");
  check(mesh_resolution >= 2, "mesh_resolution must be >= 2");
  check(threshold > 0.0 && threshold < 1.0, "threshold must be in (0,1)");
  check(smooth_iterations >= 0, "smooth_iterations must be >= 0");
  check(eval_samples > 0, "eval_samples must be > 0");
  check(checkpoint_every >= 0, "checkpoint_every must be >= 0");
}

uint64_t PipelineConfig::structural_hash() const {
  std::ostringstream os;
  os << "image_size=" << image_size << ";num_views=" << num_views
     << ";separate_decoders=" << (separate_decoders ? 1 : 0)
     << ";decoder_layers=" << decoder_layers << ";encoder_grid_n=" << encoder_grid_n
     << ";latent_dim=128";
  return fnv1a_hash(os.str());
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);

  PipelineConfig c;
  // section -> key -> setter
  using Setter = std::function<void(const std::string&, int)>;
  std::map<std::string, std::map<std::string, Setter>> schema;
  auto I = [&](int& f) {
    return [&f, &path](const std::string& v, int l) { f = static_cast<int>(parse_int(v, path, l)); };
  };
  auto D = [&](double& f) {
    return [&f, &path](const std::string& v, int l) { f = parse_double(v, path, l); };
  };
  auto B = [&](bool& f) {
    return [&f, &path](const std::string& v, int l) { f = parse_bool(v, path, l); };
  };
  schema["pipeline"] = {
      {"seed", [&](const std::string& v, int l) { c.seed = static_cast<uint64_t>(parse_int(v, path, l)); }},
      {"checkpoint_every", I(c.checkpoint_every)},
  };
  schema["sketch25d"] = {
      {"image_size", I(c.image_size)},       {"num_views", I(c.num_views)},
      {"view_index", I(c.view_index)},       {"lambda_depth", D(c.lambda_depth)},
      {"lambda_normal", D(c.lambda_normal)}, {"lambda_mask", D(c.lambda_mask)},
      {"lambda_adv", D(c.lambda_adv)},       {"separate_decoders", B(c.separate_decoders)},
      {"dropout_rate", D(c.dropout_rate)},   {"steps", I(c.steps_25d)},
      {"lr", D(c.lr_25d)},                   {"lr_disc", D(c.lr_disc)},
  };
  schema["implicit"] = {
      {"decoder_layers", I(c.decoder_layers)},
      {"resolutions",
       [&](const std::string& v, int l) { c.resolutions = parse_int_list(v, path, l); }},
      {"encoder_grid_n", I(c.encoder_grid_n)},
      {"steps_per_resolution", I(c.steps_per_resolution)},
      {"points_per_step", I(c.points_per_step)},
      {"w_surf", D(c.w_surf)},
      {"invert_labels", B(c.invert_labels)},
      {"lr", D(c.lr_implicit)},
      {"venc_steps", I(c.venc_steps)},
      {"lr_venc", D(c.lr_venc)},
  };
  schema["extract"] = {
      {"mesh_resolution", I(c.mesh_resolution)},
      {"threshold", D(c.threshold)},
      {"smooth_iterations", I(c.smooth_iterations)},
  };
  schema["eval"] = {
      {"samples", I(c.eval_samples)},
  };

  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail(path, lineno, "malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      if (schema.find(section) == schema.end()) fail(path, lineno, "unknown section [" + section + "]");
      continue;
    }
    const size_t eq = s.find('=');
    if (eq == std::string::npos) fail(path, lineno, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (section.empty()) fail(path, lineno, "key outside any section");
    auto& keys = schema.at(section);
    auto it = keys.find(key);
    if (it == keys.end()) fail(path, lineno, "unknown key '" + key + "' in [" + section + "]");
    it->second(value, lineno);
  }
  c.validate();
  return c;
}

PipelineConfig resolve_config(const std::string& path, uint64_t seed_override,
                              bool has_seed_override) {
  PipelineConfig c = path.empty() ? PipelineConfig{} : load_pipeline_config(path);
  if (has_seed_override) c.seed = seed_override;
  c.validate();
  return c;
}

}  // namespace s2m

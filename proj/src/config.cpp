#include "bdc/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace bdc {

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const std::int64_t out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kConfig, "bad integer for " + key + ": '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kConfig, "bad number for " + key + ": '" + v + "'");
  }
}

std::vector<int> to_kernel_plan(const std::string& key, const std::string& v) {
  std::vector<int> plan;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, '-')) plan.push_back(static_cast<int>(to_int(key, trim(part))));
  if (plan.empty()) throw Error(ErrorKind::kConfig, "empty kernel plan");
  return plan;
}

}  // namespace

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg;
  cfg.config_hash = fnv1a_hex(text);
  cfg.train.config_hash = cfg.config_hash;

  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    line_no += 1;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw Error(ErrorKind::kConfig, "bad section header at line " + std::to_string(line_no));
      section = s.substr(1, s.size() - 2);
      if (section != "run" && section != "scene" && section != "model" && section != "train" &&
          section != "output")
        throw Error(ErrorKind::kConfig, "unknown section [" + section + "]");
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::kConfig, "expected key=value at line " + std::to_string(line_no));
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    const std::string qualified = section + "." + key;

    if (qualified == "run.seed") {
      cfg.train.seed = static_cast<std::uint64_t>(to_int(qualified, value));
    } else if (qualified == "scene.grid_x") {
      cfg.spec.grid_x = to_int(qualified, value);
    } else if (qualified == "scene.grid_y") {
      cfg.spec.grid_y = to_int(qualified, value);
    } else if (qualified == "scene.grid_z") {
      cfg.spec.grid_z = to_int(qualified, value);
    } else if (qualified == "scene.n_class") {
      cfg.spec.n_class = to_int(qualified, value);
    } else if (qualified == "scene.n_view") {
      cfg.spec.n_view = to_int(qualified, value);
    } else if (qualified == "scene.n_boxes") {
      cfg.spec.n_boxes = static_cast<int>(to_int(qualified, value));
    } else if (qualified == "scene.image_h") {
      cfg.spec.img_h = to_int(qualified, value);
    } else if (qualified == "scene.image_w") {
      cfg.spec.img_w = to_int(qualified, value);
    } else if (qualified == "scene.image_c") {
      cfg.spec.img_c = to_int(qualified, value);
    } else if (qualified == "model.variant") {
      cfg.spec.unit.variant = variant_from_string(value);
    } else if (qualified == "model.n_mulbiconv") {
      cfg.spec.unit.n_mulbiconv = static_cast<int>(to_int(qualified, value));
    } else if (qualified == "model.kernel_plan") {
      cfg.spec.unit.kernel_plan = to_kernel_plan(qualified, value);
    } else if (qualified == "model.stem_channels") {
      cfg.spec.stem_channels = to_int(qualified, value);
    } else if (qualified == "model.scope") {
      if (value == "base")
        cfg.spec.scope = toy::BinarizeScope::kBase;
      else if (value == "tiny")
        cfg.spec.scope = toy::BinarizeScope::kTiny;
      else
        throw Error(ErrorKind::kConfig, "scope must be base or tiny, got '" + value + "'");
    } else if (qualified == "train.lr") {
      cfg.train.lr = to_double(qualified, value);
    } else if (qualified == "train.weight_decay") {
      cfg.train.weight_decay = to_double(qualified, value);
    } else if (qualified == "train.epochs") {
      cfg.train.epochs = static_cast<int>(to_int(qualified, value));
    } else if (qualified == "train.train_scenes") {
      cfg.train.train_scenes = static_cast<int>(to_int(qualified, value));
    } else if (qualified == "train.eval_scenes") {
      cfg.train.eval_scenes = static_cast<int>(to_int(qualified, value));
    } else if (qualified == "output.csv") {
      cfg.csv_path = value;
    } else if (qualified == "output.checkpoint") {
      cfg.checkpoint_path = value;
    } else {
      throw Error(ErrorKind::kConfig, "unknown key '" + qualified + "'");
    }
  }
  cfg.spec.validate();
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::kConfig, "cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_text(ss.str());
}

}  // namespace bdc

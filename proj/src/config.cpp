#include "dspc/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "dspc/errors.hpp"

namespace dspc {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

[[noreturn]] void bad(int line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

double to_double(const std::string& v, const std::string& key, int line) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    bad(line, "key '" + key + "' needs a number, got '" + v + "'");
  }
}

int to_int(const std::string& v, const std::string& key, int line) {
  try {
    size_t pos = 0;
    long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(x);
  } catch (const std::exception&) {
    bad(line, "key '" + key + "' needs an integer, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& v, const std::string& key, int line) {
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    size_t pos = 0;
    unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<uint64_t>(x);
  } catch (const std::exception&) {
    bad(line, "key '" + key + "' needs a non-negative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& key, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad(line, "key '" + key + "' needs true/false, got '" + v + "'");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& v, const std::string& key, int line,
                       F parse_one) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) bad(line, "key '" + key + "' has an empty list entry");
    out.push_back(parse_one(item, key, line));
  }
  if (out.empty()) bad(line, "key '" + key + "' needs a comma-separated list");
  return out;
}

void apply(Config& c, const std::string& key, const std::string& val, int line) {
  if (key == "dataset") c.dataset = val;
  else if (key == "images_path") c.images_path = val;
  else if (key == "labels_path") c.labels_path = val;
  else if (key == "n") c.n = to_int(val, key, line);
  else if (key == "k") c.k = to_int(val, key, line);
  else if (key == "dim") c.dim = to_int(val, key, line);
  else if (key == "separation") c.separation = to_double(val, key, line);
  else if (key == "spread") c.spread = to_double(val, key, line);
  else if (key == "image_h") c.image_h = to_int(val, key, line);
  else if (key == "image_w") c.image_w = to_int(val, key, line);
  else if (key == "arch") c.arch = val;
  else if (key == "d") c.d = to_int(val, key, line);
  else if (key == "t1_hidden") c.t1_hidden = to_int(val, key, line);
  else if (key == "t2_hidden") c.t2_hidden = to_int(val, key, line);
  else if (key == "head_widths") c.head_widths = to_list<int>(val, key, line, to_int);
  else if (key == "beta") c.beta = to_double(val, key, line);
  else if (key == "gamma") c.gamma = to_double(val, key, line);
  else if (key == "delta") c.delta = to_double(val, key, line);
  else if (key == "noise_std") c.noise_std = to_double(val, key, line);
  else if (key == "k_nn") c.k_nn = to_int(val, key, line);
  else if (key == "relative_term") c.relative_term = to_bool(val, key, line);
  else if (key == "lc_weight") c.lc_weight = to_double(val, key, line);
  else if (key == "ortho_weight") c.ortho_weight = to_double(val, key, line);
  else if (key == "freeze_head") c.freeze_head = to_bool(val, key, line);
  else if (key == "m") c.m = to_int(val, key, line);
  else if (key == "lr_pretrain") c.lr_pretrain = to_double(val, key, line);
  else if (key == "lr_joint") c.lr_joint = to_double(val, key, line);
  else if (key == "adam_beta1") c.adam_beta1 = to_double(val, key, line);
  else if (key == "adam_beta2") c.adam_beta2 = to_double(val, key, line);
  else if (key == "adam_eps") c.adam_eps = to_double(val, key, line);
  else if (key == "epochs_pretrain") c.epochs_pretrain = to_int(val, key, line);
  else if (key == "epochs_joint") c.epochs_joint = to_int(val, key, line);
  else if (key == "head_warmup_steps") c.head_warmup_steps = to_int(val, key, line);
  else if (key == "head_warmup_lr") c.head_warmup_lr = to_double(val, key, line);
  else if (key == "eval_batch") c.eval_batch = to_int(val, key, line);
  else if (key == "seed") c.seed = to_u64(val, key, line);
  else if (key == "out") c.out = val;
  else if (key == "sweep_beta") c.sweep_beta = to_list<double>(val, key, line, to_double);
  else if (key == "sweep_gamma") c.sweep_gamma = to_list<double>(val, key, line, to_double);
  else bad(line, "unknown config key '" + key + "'");
}

}  // namespace

Config parse_config_text(const std::string& text) {
  Config c;
  std::set<std::string> seen;
  std::stringstream ss(text);
  std::string raw;
  int line = 0;
  while (std::getline(ss, raw)) {
    ++line;
    if (line == 1 && raw.size() >= 3 && raw.compare(0, 3, "\xEF\xBB\xBF") == 0) {
      raw = raw.substr(3);
    }
    size_t hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    raw = trim(raw);
    if (raw.empty()) continue;
    size_t eq = raw.find('=');
    if (eq == std::string::npos) bad(line, "expected 'key = value', got '" + raw + "'");
    std::string key = trim(raw.substr(0, eq));
    std::string val = trim(raw.substr(eq + 1));
    if (key.empty()) bad(line, "empty key");
    if (!seen.insert(key).second) bad(line, "duplicate key '" + key + "'");
    apply(c, key, val, line);
  }
  validate(c);
  return c;
}

Config parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config_text(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " (in " + path + ")");
  }
}

void validate(const Config& c) {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(c.dataset == "blob_images" || c.dataset == "blobs" ||
           c.dataset == "rings" || c.dataset == "idx",
       "dataset must be blob_images, blobs, rings or idx, got '" + c.dataset + "'");
  need(c.dataset != "idx" || !c.images_path.empty(),
       "dataset idx needs images_path");
  need(c.n >= 1, "n must be >= 1");
  need(c.k >= 2, "k must be >= 2");
  need(c.dim >= 1, "dim must be >= 1");
  need(c.spread > 0.0, "spread must be > 0");
  need(c.image_h >= 1 && c.image_w >= 1, "image_h and image_w must be >= 1");
  need(c.d >= 1, "d must be >= 1");
  need(c.t1_hidden >= 0 && c.t2_hidden >= 0, "critic widths must be >= 0");
  need(c.head_widths.size() == 3, "head_widths must list exactly three widths");
  for (int w : c.head_widths) need(w >= 1, "head_widths entries must be >= 1");
  need(c.beta >= 0.0, "beta must be >= 0");
  need(c.gamma >= 0.0, "gamma must be >= 0");
  need(c.delta >= 0.0, "delta must be >= 0");
  need(c.noise_std >= 0.0, "noise_std must be >= 0");
  need(c.k_nn >= 1, "k_nn must be >= 1");
  need(c.lc_weight >= 0.0, "lc_weight must be >= 0");
  need(c.ortho_weight >= 0.0, "ortho_weight must be >= 0");
  need(c.m >= 2, "m must be >= 2");
  need(c.lr_pretrain > 0.0 && c.lr_joint > 0.0, "learning rates must be > 0");
  need(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0, "adam_beta1 must be in [0,1)");
  need(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0, "adam_beta2 must be in [0,1)");
  need(c.adam_eps > 0.0, "adam_eps must be > 0");
  need(c.epochs_pretrain >= 0, "epochs_pretrain must be >= 0");
  need(c.epochs_joint >= 0, "epochs_joint must be >= 0");
  need(c.head_warmup_steps >= 0, "head_warmup_steps must be >= 0");
  need(c.head_warmup_lr > 0.0, "head_warmup_lr must be > 0");
  need(c.eval_batch >= 2, "eval_batch must be >= 2");
  need(!c.out.empty(), "out must not be empty");
  for (double b : c.sweep_beta) need(std::isfinite(b) && b >= 0.0, "sweep_beta entries must be finite and >= 0");
  for (double g : c.sweep_gamma) need(std::isfinite(g) && g >= 0.0, "sweep_gamma entries must be finite and >= 0");
}

}  // namespace dspc

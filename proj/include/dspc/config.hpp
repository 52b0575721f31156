#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dspc {

// Run configuration. Every field has the default shown here; a config file
// only needs the keys it wants to change. File format: one `key = value` per
// line, UTF-8, `#` starts a comment, blank lines ignored. Unknown or
// duplicated keys are rejected with ConfigError.
struct Config {
  // dataset
  std::string dataset = "blob_images";  // blob_images | blobs | rings | idx
  std::string images_path;              // idx images file
  std::string labels_path;              // idx labels file (optional)
  int n = 2000;                         // synthetic sample count
  int k = 4;                            // cluster count K
  int dim = 2;                          // raw-blob coordinate dimension
  double separation = 10.0;             // blob center spacing
  double spread = 1.0;                  // blob standard deviation
  int image_h = 16;                     // blob_images height
  int image_w = 16;                     // blob_images width

  // architecture
  std::string arch = "usps";            // mnist|fashion|usps|ytf|micro
  int d = 120;                          // latent width
  int t1_hidden = 0;                    // 0 = preset value
  int t2_hidden = 0;                    // 0 = preset value
  std::vector<int> head_widths = {256, 128, 64};

  // loss weights and graph
  double beta = 0.01;                   // MI weight
  double gamma = 1.0;                   // prior weight
  double delta = 0.5;                   // plain-reconstruction weight
  double noise_std = 0.5;               // latent perturbation spread
  int k_nn = 3;                         // affinity neighbors
  bool relative_term = true;            // dual-decode difference term in L_r
  double lc_weight = 1.0;               // spectral-loss weight in joint phase
  double ortho_weight = 1.0;            // raw-feature Gram stabilizer weight
  bool freeze_head = false;             // keep clustering head fixed in joint phase

  // optimization
  int m = 128;                          // batch size
  double lr_pretrain = 1e-3;
  double lr_joint = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs_pretrain = 20;
  int epochs_joint = 30;
  int head_warmup_steps = 300;          // head-only steps before the joint loop
  double head_warmup_lr = 1e-3;

  // evaluation and output
  int eval_batch = 1024;                // reference-batch rows for the eval factor
  uint64_t seed = 1;
  std::string out = "out";

  // sweep grids
  std::vector<double> sweep_beta = {0.01};
  std::vector<double> sweep_gamma = {1.0};
};

// Parses config text / file on top of the defaults. Errors carry the line
// number and key. `validate` re-checks cross-field constraints and is run by
// both parsers.
Config parse_config_text(const std::string& text);
Config parse_config_file(const std::string& path);
void validate(const Config& c);

}  // namespace dspc

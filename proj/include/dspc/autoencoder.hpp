#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dspc/params.hpp"
#include "dspc/rng.hpp"
#include "dspc/tensor.hpp"

namespace dspc {

struct ConvSpec {
  int ch;      // output channels
  int kernel;  // square kernel, stride 2, padding kernel/2
};

// Convolutional encoder/decoder geometry plus discriminator widths. All
// derived fields (spatial chain, flatten size, decoder output paddings,
// middle-layer index) are computed once by `make`.
struct ArchSpec {
  int in_c = 0, in_h = 0, in_w = 0;
  std::vector<ConvSpec> convs;
  int d = 0;          // latent width
  int t1_hidden = 0;  // global discriminator hidden width
  int t2_hidden = 0;  // local discriminator hidden channels

  std::vector<int> hs, ws;  // spatial extents; hs[0]=in_h, hs[i+1] after conv i
  std::vector<int> out_pad; // output_padding that inverts conv i exactly
  int flat = 0;             // channels*h*w after the last conv
  int middle = 0;           // conv index whose output is the local-MI map

  static ArchSpec make(int in_c, int in_h, int in_w, std::vector<ConvSpec> convs,
                       int d, int t1_hidden, int t2_hidden);
  // Known layouts: "mnist", "fashion", "usps", "ytf", "micro".
  static ArchSpec preset(const std::string& name);
};

// Fresh parameter set for the architecture: conv/linear weights with
// He-normal initialization, zero biases. Names are stable ("enc.conv0.w",
// "enc.mu.w", "dec.fc.b", "t1.fc1.w", "t2.conv2.b", ...).
ParamSet init_autoencoder(const ArchSpec& a, uint64_t seed);

struct EncoderOutput {
  Tensor mu;           // [m, d]
  Tensor log_var;      // [m, d], clamped to [-10, 10]
  Tensor z;            // mu + exp(0.5*log_var) ⊙ ε
  Tensor feature_map;  // middle conv activations, for the local critic
  Tensor final_conv;   // last conv activations, for the global critic
};

// Runs the conv stack and the Gaussian latent head; ε is drawn from `rng`.
EncoderOutput encode(const Tensor& x, const ParamSet& p, const ArchSpec& a,
                     Rng& rng);

// Latent codes back to images; pixels end in (0,1) through a final sigmoid.
Tensor decode(const Tensor& z, const ParamSet& p, const ArchSpec& a);

// ẑ = z ⊙ (1 + noise_std·ε), elementwise multiplicative Gaussian noise.
Tensor noisy_transform(const Tensor& z, double noise_std, Rng& rng);

struct MiScores {
  Tensor pos;  // critic scores on aligned pairs
  Tensor neg;  // scores on pairs offset by a cyclic shift
};

// Global critic: a 2-layer net on [pooled final conv ‖ z]. Negative pairs
// use z rows shifted by `shift` (1 <= shift < batch). Batches of one cannot
// form negatives.
MiScores global_mi_scores(const Tensor& final_conv, const Tensor& z,
                          const ParamSet& p, int shift);

// Local critic: z tiled over the middle map's grid, channel-concatenated,
// then two 1x1 convolutions; one score per spatial location.
MiScores local_mi_scores(const Tensor& feature_map, const Tensor& z,
                         const ParamSet& p, int shift);

// Jensen-Shannon MI estimate: mean log σ(pos) + mean log(1-σ(neg)), with
// σ clamped away from {0,1} so the logs stay finite.
Tensor js_mi(const MiScores& s);

// 0.5·Σ(mu² + exp(log_var) − 1 − log_var) averaged over the batch.
Tensor kl_to_standard_normal(const Tensor& mu, const Tensor& log_var);

struct EncoderLoss {
  Tensor total;          // −β·js_global − β·js_local + γ·kl
  double js_global = 0;  // components at evaluation, for reporting
  double js_local = 0;
  double kl = 0;
};

// β=0 switches the MI terms off entirely (no negative sampling happens).
EncoderLoss encoder_loss(const EncoderOutput& eo, const ParamSet& p,
                         double beta, double gamma, Rng& rng);

// ‖x̃_ẑ − x̃_z‖²_F + δ‖x − x̃_z‖²_F over the batch; both decodes share the
// decoder weights. With `relative_term` off only the δ-weighted plain
// reconstruction remains.
Tensor reconstruction_loss(const Tensor& x, const Tensor& z, const Tensor& z_hat,
                           const ParamSet& p, const ArchSpec& a, double delta,
                           bool relative_term = true);

}  // namespace dspc

#include "dspc/autoencoder.hpp"

#include <cmath>

#include "dspc/errors.hpp"
#include "dspc/ops.hpp"

namespace dspc {

namespace {
constexpr double kSigmoidEps = 1e-7;
constexpr double kLogVarBound = 10.0;
}  // namespace

ArchSpec ArchSpec::make(int in_c, int in_h, int in_w,
                        std::vector<ConvSpec> convs, int d, int t1_hidden,
                        int t2_hidden) {
  if (in_c < 1 || in_h < 1 || in_w < 1) {
    throw ConfigError("architecture needs positive input extents");
  }
  if (convs.empty()) throw ConfigError("architecture needs at least one conv");
  if (d < 1 || t1_hidden < 1 || t2_hidden < 1) {
    throw ConfigError("latent and critic widths must be positive");
  }
  ArchSpec a;
  a.in_c = in_c;
  a.in_h = in_h;
  a.in_w = in_w;
  a.convs = std::move(convs);
  a.d = d;
  a.t1_hidden = t1_hidden;
  a.t2_hidden = t2_hidden;
  a.hs.push_back(in_h);
  a.ws.push_back(in_w);
  for (const ConvSpec& c : a.convs) {
    if (c.ch < 1 || c.kernel < 1) {
      throw ConfigError("conv stages need positive channels and kernel");
    }
    int p = c.kernel / 2;
    int h = a.hs.back(), w = a.ws.back();
    int oh = (h + 2 * p - c.kernel) / 2 + 1;
    int ow = (w + 2 * p - c.kernel) / 2 + 1;
    if (h + 2 * p < c.kernel || oh < 1 || ow < 1) {
      throw ConfigError("conv stage shrinks " + std::to_string(h) + "x" +
                        std::to_string(w) + " below 1x1");
    }
    int oph = h - ((oh - 1) * 2 - 2 * p + c.kernel);
    int opw = w - ((ow - 1) * 2 - 2 * p + c.kernel);
    if (oph != opw) {
      throw ConfigError("decoder cannot invert a stage with unequal h/w "
                        "output padding");
    }
    a.hs.push_back(oh);
    a.ws.push_back(ow);
    a.out_pad.push_back(oph);
  }
  int layers = static_cast<int>(a.convs.size());
  a.flat = a.convs.back().ch * a.hs.back() * a.ws.back();
  a.middle = (layers + 1) / 2 - 1;
  return a;
}

ArchSpec ArchSpec::preset(const std::string& name) {
  if (name == "mnist" || name == "fashion") {
    return make(1, 28, 28, {{16, 3}, {16, 3}, {32, 3}, {32, 3}}, 120, 64, 32);
  }
  if (name == "usps") {
    return make(1, 16, 16, {{16, 3}, {32, 3}}, 120, 64, 32);
  }
  if (name == "ytf") {
    return make(3, 55, 55, {{16, 5}, {16, 5}, {32, 5}, {32, 5}}, 120, 64, 32);
  }
  if (name == "micro") {
    return make(1, 8, 8, {{4, 3}, {8, 3}}, 4, 8, 4);
  }
  throw ConfigError("unknown architecture preset '" + name + "'");
}

namespace {

Tensor he_normal(Shape shape, int fan_in, Rng& rng) {
  std::vector<double> vals(numel_of(shape));
  double stddev = std::sqrt(2.0 / fan_in);
  for (double& v : vals) v = stddev * rng.normal();
  return Tensor::from_data(std::move(shape), std::move(vals), true);
}

}  // namespace

ParamSet init_autoencoder(const ArchSpec& a, uint64_t seed) {
  Rng rng(seed);
  ParamSet p;
  int layers = static_cast<int>(a.convs.size());

  int ci = a.in_c;
  for (int i = 0; i < layers; ++i) {
    int co = a.convs[static_cast<size_t>(i)].ch;
    int k = a.convs[static_cast<size_t>(i)].kernel;
    std::string base = "enc.conv" + std::to_string(i);
    p.add(base + ".w", he_normal({co, ci, k, k}, ci * k * k, rng));
    p.add(base + ".b", Tensor::zeros({co}, true));
    ci = co;
  }
  p.add("enc.mu.w", he_normal({a.flat, a.d}, a.flat, rng));
  p.add("enc.mu.b", Tensor::zeros({a.d}, true));
  p.add("enc.lv.w", he_normal({a.flat, a.d}, a.flat, rng));
  p.add("enc.lv.b", Tensor::zeros({a.d}, true));

  p.add("dec.fc.w", he_normal({a.d, a.flat}, a.d, rng));
  p.add("dec.fc.b", Tensor::zeros({a.flat}, true));
  for (int j = 0; j < layers; ++j) {
    int src = layers - 1 - j;  // encoder conv this stage inverts
    int stage_in = a.convs[static_cast<size_t>(src)].ch;
    int stage_out = src == 0 ? a.in_c : a.convs[static_cast<size_t>(src - 1)].ch;
    int k = a.convs[static_cast<size_t>(src)].kernel;
    std::string base = "dec.conv" + std::to_string(j);
    p.add(base + ".w", he_normal({stage_in, stage_out, k, k}, stage_in * k * k, rng));
    p.add(base + ".b", Tensor::zeros({stage_out}, true));
  }

  int t1_in = a.convs.back().ch + a.d;
  p.add("t1.fc1.w", he_normal({t1_in, a.t1_hidden}, t1_in, rng));
  p.add("t1.fc1.b", Tensor::zeros({a.t1_hidden}, true));
  p.add("t1.fc2.w", he_normal({a.t1_hidden, 1}, a.t1_hidden, rng));
  p.add("t1.fc2.b", Tensor::zeros({1}, true));

  int t2_in = a.convs[static_cast<size_t>(a.middle)].ch + a.d;
  p.add("t2.conv1.w", he_normal({a.t2_hidden, t2_in, 1, 1}, t2_in, rng));
  p.add("t2.conv1.b", Tensor::zeros({a.t2_hidden}, true));
  p.add("t2.conv2.w", he_normal({1, a.t2_hidden, 1, 1}, a.t2_hidden, rng));
  p.add("t2.conv2.b", Tensor::zeros({1}, true));
  return p;
}

EncoderOutput encode(const Tensor& x, const ParamSet& p, const ArchSpec& a,
                     Rng& rng) {
  if (x.shape().size() != 4 || x.dim(0) < 1 || x.dim(1) != a.in_c ||
      x.dim(2) != a.in_h || x.dim(3) != a.in_w) {
    throw ConfigError("encoder expects [m," + std::to_string(a.in_c) + "," +
                      std::to_string(a.in_h) + "," + std::to_string(a.in_w) +
                      "], got " + shape_str(x.shape()));
  }
  int layers = static_cast<int>(a.convs.size());
  EncoderOutput out;
  Tensor h = x;
  for (int i = 0; i < layers; ++i) {
    const ConvSpec& c = a.convs[static_cast<size_t>(i)];
    std::string base = "enc.conv" + std::to_string(i);
    h = relu(add_channel_bias(
        conv2d(h, p.get(base + ".w"), 2, c.kernel / 2), p.get(base + ".b")));
    if (i == a.middle) out.feature_map = h;
  }
  out.final_conv = h;

  int m = x.dim(0);
  Tensor flat = reshape(h, {m, a.flat});
  out.mu = add_rowvec(matmul(flat, p.get("enc.mu.w")), p.get("enc.mu.b"));
  out.log_var =
      clamp(add_rowvec(matmul(flat, p.get("enc.lv.w")), p.get("enc.lv.b")),
            -kLogVarBound, kLogVarBound);

  std::vector<double> eps(static_cast<size_t>(m) * a.d);
  for (double& v : eps) v = rng.normal();
  Tensor eps_t = Tensor::from_data({m, a.d}, std::move(eps));
  out.z = add(out.mu, mul(exp(mul(out.log_var, 0.5)), eps_t));
  return out;
}

Tensor decode(const Tensor& z, const ParamSet& p, const ArchSpec& a) {
  if (z.shape().size() != 2 || z.dim(1) != a.d) {
    throw ConfigError("decoder expects [m," + std::to_string(a.d) + "], got " +
                      shape_str(z.shape()));
  }
  int m = z.dim(0);
  int layers = static_cast<int>(a.convs.size());
  Tensor h = relu(add_rowvec(matmul(z, p.get("dec.fc.w")), p.get("dec.fc.b")));
  h = reshape(h, {m, a.convs.back().ch, a.hs.back(), a.ws.back()});
  for (int j = 0; j < layers; ++j) {
    int src = layers - 1 - j;
    const ConvSpec& c = a.convs[static_cast<size_t>(src)];
    std::string base = "dec.conv" + std::to_string(j);
    h = add_channel_bias(
        conv2d_transpose(h, p.get(base + ".w"), 2, c.kernel / 2,
                         a.out_pad[static_cast<size_t>(src)]),
        p.get(base + ".b"));
    h = j + 1 < layers ? relu(h) : sigmoid(h);
  }
  return h;
}

Tensor noisy_transform(const Tensor& z, double noise_std, Rng& rng) {
  if (noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
  std::vector<double> eps(z.numel());
  for (double& v : eps) v = rng.normal();
  Tensor eps_t = Tensor::from_data(z.shape(), std::move(eps));
  return mul(z, add(mul(eps_t, noise_std), 1.0));
}

namespace {

std::vector<int> shifted_perm(int m, int shift) {
  if (m < 2) {
    throw ConfigError("batch of " + std::to_string(m) +
                      " cannot form negative pairs");
  }
  if (shift < 1 || shift >= m) {
    throw ConfigError("negative-pair shift " + std::to_string(shift) +
                      " outside [1," + std::to_string(m - 1) + "]");
  }
  std::vector<int> perm(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) perm[static_cast<size_t>(i)] = (i + shift) % m;
  return perm;
}

}  // namespace

MiScores global_mi_scores(const Tensor& final_conv, const Tensor& z,
                          const ParamSet& p, int shift) {
  std::vector<int> perm = shifted_perm(z.dim(0), shift);
  Tensor summary = avg_pool_all(final_conv);
  auto critic = [&](const Tensor& code) {
    Tensor h = relu(add_rowvec(matmul(concat_cols(summary, code), p.get("t1.fc1.w")),
                               p.get("t1.fc1.b")));
    return add_rowvec(matmul(h, p.get("t1.fc2.w")), p.get("t1.fc2.b"));
  };
  return MiScores{critic(z), critic(permute_rows(z, perm))};
}

MiScores local_mi_scores(const Tensor& feature_map, const Tensor& z,
                         const ParamSet& p, int shift) {
  std::vector<int> perm = shifted_perm(z.dim(0), shift);
  int h = feature_map.dim(2), w = feature_map.dim(3);
  auto critic = [&](const Tensor& code) {
    Tensor cat = concat_channels(feature_map, tile_spatial(code, h, w));
    Tensor hid = relu(add_channel_bias(conv2d(cat, p.get("t2.conv1.w"), 1, 0),
                                       p.get("t2.conv1.b")));
    return add_channel_bias(conv2d(hid, p.get("t2.conv2.w"), 1, 0),
                            p.get("t2.conv2.b"));
  };
  return MiScores{critic(z), critic(permute_rows(z, perm))};
}

Tensor js_mi(const MiScores& s) {
  Tensor sp = clamp(sigmoid(s.pos), kSigmoidEps, 1.0 - kSigmoidEps);
  Tensor sn = clamp(sigmoid(s.neg), kSigmoidEps, 1.0 - kSigmoidEps);
  return add(mean(log(sp)), mean(log(sub(1.0, sn))));
}

Tensor kl_to_standard_normal(const Tensor& mu, const Tensor& log_var) {
  if (mu.shape().size() != 2 || mu.shape() != log_var.shape()) {
    throw ShapeError("kl term expects matching [m,d] mu and log_var");
  }
  int m = mu.dim(0);
  Tensor per_entry = sub(add(exp(log_var), square(mu)), add(log_var, 1.0));
  return mul(sum(per_entry), 0.5 / m);
}

EncoderLoss encoder_loss(const EncoderOutput& eo, const ParamSet& p,
                         double beta, double gamma, Rng& rng) {
  if (beta < 0.0 || gamma < 0.0) {
    throw ConfigError("beta and gamma must be >= 0");
  }
  EncoderLoss out;
  Tensor kl = kl_to_standard_normal(eo.mu, eo.log_var);
  out.kl = kl.value();
  out.total = mul(kl, gamma);
  if (beta > 0.0) {
    int m = eo.z.dim(0);
    if (m < 2) {
      throw ConfigError("batch of 1 cannot form negative pairs");
    }
    int shift = 1 + static_cast<int>(rng.randint(m - 1));
    Tensor jg = js_mi(global_mi_scores(eo.final_conv, eo.z, p, shift));
    Tensor jl = js_mi(local_mi_scores(eo.feature_map, eo.z, p, shift));
    out.js_global = jg.value();
    out.js_local = jl.value();
    out.total = add(out.total, mul(add(jg, jl), -beta));
  }
  return out;
}

Tensor reconstruction_loss(const Tensor& x, const Tensor& z, const Tensor& z_hat,
                           const ParamSet& p, const ArchSpec& a, double delta,
                           bool relative_term) {
  if (delta < 0.0) throw ConfigError("delta must be >= 0");
  if (z_hat.shape() != z.shape()) {
    throw ShapeError("z_hat shape " + shape_str(z_hat.shape()) +
                     " does not match z " + shape_str(z.shape()));
  }
  Tensor xz = decode(z, p, a);
  if (xz.shape() != x.shape()) {
    throw ShapeError("decoded batch " + shape_str(xz.shape()) +
                     " does not match input " + shape_str(x.shape()));
  }
  int m = x.dim(0);
  Tensor plain = frobenius_norm_sq(sub(x, xz));
  if (!relative_term) return mul(plain, delta / m);
  Tensor xzh = decode(z_hat, p, a);
  return mul(add(frobenius_norm_sq(sub(xzh, xz)), mul(plain, delta)), 1.0 / m);
}

}  // namespace dspc

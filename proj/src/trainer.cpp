#include "dspc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "dspc/adam.hpp"
#include "dspc/autoencoder.hpp"
#include "dspc/data_io.hpp"
#include "dspc/errors.hpp"
#include "dspc/kmeans.hpp"
#include "dspc/metrics.hpp"
#include "dspc/ops.hpp"
#include "dspc/params.hpp"
#include "dspc/rng.hpp"
#include "dspc/spectral.hpp"
#include "dspc/tensor.hpp"

namespace dspc::run {
namespace {

namespace fs = std::filesystem;

// Seed tags keep the independent random streams (init, batching, training
// noise, clustering) decoupled, so adding draws to one never shifts another.
constexpr uint64_t kTagParams = 11;
constexpr uint64_t kTagPretrainRng = 21;
constexpr uint64_t kTagPretrainBatches = 22;
constexpr uint64_t kTagHeadInit = 31;
constexpr uint64_t kTagInitEncode = 41;
constexpr uint64_t kTagMuYInit = 42;
constexpr uint64_t kTagWarmup = 43;
constexpr uint64_t kTagJointRng = 51;
constexpr uint64_t kTagJointBatches = 52;
constexpr uint64_t kTagRefreshEncode = 600;
constexpr uint64_t kTagRefreshAssign = 900;
constexpr uint64_t kTagEvalEncode = 801;
constexpr uint64_t kTagEvalAssign = 802;

uint64_t tag(const Config& c, uint64_t t) { return mix_seed(c.seed, t); }

std::string fd(double v) { return io::format_double(v); }

bool all_finite(std::initializer_list<double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

ArchSpec resolve_arch(const Config& c) {
  ArchSpec base = ArchSpec::preset(c.arch);
  int t1 = c.t1_hidden > 0 ? c.t1_hidden : base.t1_hidden;
  int t2 = c.t2_hidden > 0 ? c.t2_hidden : base.t2_hidden;
  return ArchSpec::make(base.in_c, base.in_h, base.in_w, base.convs, c.d, t1, t2);
}

io::Dataset resolve_dataset(const Config& c) {
  if (c.dataset == "blob_images") {
    return io::make_blob_images(c.n, c.k, c.image_h, c.image_w, c.seed);
  }
  if (c.dataset == "blobs") {
    return io::make_blobs(c.n, c.k, c.dim, c.separation, c.spread, c.seed);
  }
  if (c.dataset == "rings") return io::make_rings(c.n, c.seed);
  return io::load_idx(c.images_path, c.labels_path, "idx");
}

void check_shape(const io::Dataset& d, const ArchSpec& a) {
  if (d.c != a.in_c || d.h != a.in_h || d.w != a.in_w) {
    throw ConfigError("dataset images are " + std::to_string(d.c) + "x" +
                      std::to_string(d.h) + "x" + std::to_string(d.w) +
                      " but architecture expects " + std::to_string(a.in_c) +
                      "x" + std::to_string(a.in_h) + "x" + std::to_string(a.in_w));
  }
}

// Contiguous [begin, end) rows of a flat row-major array as a constant tensor.
Tensor rows_range(const std::vector<double>& flat, int d, int begin, int end) {
  std::vector<double> out(flat.begin() + static_cast<size_t>(begin) * d,
                          flat.begin() + static_cast<size_t>(end) * d);
  return Tensor::from_data({end - begin, d}, std::move(out));
}

Tensor rows_gather(const std::vector<double>& flat, int d,
                   const std::vector<int>& idx) {
  std::vector<double> out(idx.size() * static_cast<size_t>(d));
  for (size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(flat.begin() + static_cast<size_t>(idx[i]) * d, d,
                out.begin() + i * static_cast<size_t>(d));
  }
  return Tensor::from_data({static_cast<int>(idx.size()), d}, std::move(out));
}

std::vector<int> sample_rows(int n, int m, Rng& rng) {
  std::vector<int> all(static_cast<size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  for (int j = 0; j < m; ++j) {
    int swap = j + static_cast<int>(rng.randint(n - j));
    std::swap(all[static_cast<size_t>(j)], all[static_cast<size_t>(swap)]);
  }
  all.resize(static_cast<size_t>(m));
  return all;
}

// Full-dataset latent codes, computed in m-row chunks so each chunk's graph
// is released before the next one is built.
struct Codes {
  int n = 0, d = 0;
  std::vector<double> mu;
};

Codes encode_all(const io::TrainView& view, const ParamSet& p,
                 const ArchSpec& a, int chunk, uint64_t seed) {
  Codes out;
  out.n = view.n;
  out.d = a.d;
  out.mu.reserve(static_cast<size_t>(view.n) * a.d);
  Rng rng(seed);
  for (int start = 0; start < view.n; start += chunk) {
    int end = std::min(view.n, start + chunk);
    std::vector<int> idx(static_cast<size_t>(end - start));
    std::iota(idx.begin(), idx.end(), start);
    Tensor x = io::make_batch(view, idx);
    EncoderOutput eo = encode(x, p, a, rng);
    const std::vector<double>& mu = eo.mu.data();
    out.mu.insert(out.mu.end(), mu.begin(), mu.end());
  }
  return out;
}

// --- checkpoint plumbing -------------------------------------------------

struct Meta {
  std::vector<double> mu_y;
  bool has_mu_y = false;
  bool head_trained = false;
};

std::vector<io::NamedTensor> split_meta(const std::vector<io::NamedTensor>& all,
                                        Meta& meta) {
  std::vector<io::NamedTensor> rest;
  for (const io::NamedTensor& nt : all) {
    if (nt.name == "meta.mu_y") {
      meta.mu_y = nt.data;
      meta.has_mu_y = true;
    } else if (nt.name == "meta.head_trained") {
      meta.head_trained = !nt.data.empty() && nt.data[0] != 0.0;
    } else {
      rest.push_back(nt);
    }
  }
  return rest;
}

io::Checkpoint pack(const std::string& phase, int epoch, const ParamSet& params,
                    const Adam& adam, const Rng& rng, const ClusterHead* head,
                    bool head_trained) {
  io::Checkpoint ck;
  ck.phase = phase;
  ck.epoch = epoch;
  ck.step_in_epoch = 0;
  ck.rng_state = rng.serialize();
  ck.params = params.to_named();
  if (head != nullptr) {
    ck.params.push_back({"meta.mu_y", {head->k, head->d}, head->mu_y});
    ck.params.push_back({"meta.head_trained", {1},
                         {head_trained ? 1.0 : 0.0}});
  }
  ck.adam_m = adam.m_named();
  ck.adam_v = adam.v_named();
  ck.adam_t = adam.t();
  return ck;
}

void save_ckpt(const std::string& path, const io::Checkpoint& ck) {
  std::string tmp = path + ".tmp";
  io::save_checkpoint(tmp, ck);
  fs::rename(tmp, path);
}

// Loads autoencoder parameters from a pretrain dump into a registry that may
// also hold (untouched) clustering-head parameters.
void load_autoencoder_params(ParamSet& params,
                             const std::vector<io::NamedTensor>& named) {
  std::map<std::string, const io::NamedTensor*> by_name;
  for (const io::NamedTensor& nt : named) by_name[nt.name] = &nt;
  for (auto& [name, t] : params.items) {
    if (name.rfind("y.", 0) == 0) continue;
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw ConfigError("checkpoint incompatible: missing parameter '" + name + "'");
    }
    if (it->second->shape != t.shape()) {
      throw ConfigError("checkpoint incompatible: parameter '" + name +
                        "' has a different shape");
    }
    t.data() = it->second->data;
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    throw ConfigError("checkpoint incompatible: unexpected parameter '" +
                      by_name.begin()->first + "'");
  }
}

struct LoadedModel {
  ParamSet params;
  ClusterHead head;
  bool has_head = false;
  bool head_trained = false;
  std::string phase;
  int epoch = 0;
};

LoadedModel load_model(const Config& c, const ArchSpec& arch,
                       const io::Checkpoint& ck) {
  LoadedModel m;
  m.params = init_autoencoder(arch, tag(c, kTagParams));
  m.head = make_cluster_head(c.d, c.k, c.head_widths);
  m.phase = ck.phase;
  m.epoch = ck.epoch;
  Meta meta;
  std::vector<io::NamedTensor> rest = split_meta(ck.params, meta);
  if (ck.phase == "train") {
    init_cluster_params(m.params, m.head, tag(c, kTagHeadInit));
    m.params.load_named(rest);
    if (meta.has_mu_y) {
      if (meta.mu_y.size() != static_cast<size_t>(c.k) * c.d) {
        throw ConfigError("checkpoint cluster means do not match k and d");
      }
      m.head.mu_y = meta.mu_y;
    }
    m.has_head = true;
    m.head_trained = meta.head_trained;
  } else if (ck.phase == "pretrain") {
    load_autoencoder_params(m.params, rest);
  } else {
    throw ConfigError("unknown checkpoint phase '" + ck.phase + "'");
  }
  return m;
}

std::string resolve_eval_checkpoint(const Options& o) {
  if (!o.checkpoint.empty()) return o.checkpoint;
  std::string joint = o.cfg.out + "/train.dspc";
  if (fs::exists(joint)) return joint;
  std::string pre = o.cfg.out + "/pretrain.dspc";
  if (fs::exists(pre)) return pre;
  throw ConfigError("no checkpoint under '" + o.cfg.out +
                    "'; run pretrain/train or pass --checkpoint");
}

// Embeds every row through the clustering head, reusing the Cholesky factor
// of one reference batch so all chunks live in the same output basis.
std::vector<double> embed_rows(const Codes& codes, const ParamSet& params,
                               ClusterHead& head, int chunk) {
  int refn = std::min(chunk, codes.n);
  if (refn < head.k) {
    throw ConfigError("reference batch smaller than the cluster count");
  }
  Tensor zr = rows_range(codes.mu, codes.d, 0, refn);
  forward_orthogonalized(zr, params, head);
  std::vector<double> out;
  out.reserve(static_cast<size_t>(codes.n) * head.k);
  for (int start = 0; start < codes.n; start += chunk) {
    int end = std::min(codes.n, start + chunk);
    Tensor zc = rows_range(codes.mu, codes.d, start, end);
    Tensor y = forward_with_factor(zc, params, head);
    const std::vector<double>& v = y.data();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

// Head-only optimization on frozen codes: brings the spectral head to its
// operating point before the joint loop, where the shared learning rate is
// too small to train it from scratch.
void warmup_head(const Config& c, ParamSet& params, ClusterHead& head,
                 const Codes& codes) {
  ParamSet head_set;
  for (auto& [name, t] : params.items) {
    if (name.rfind("y.", 0) == 0) head_set.add(name, t);
  }
  int refn = std::min(c.eval_batch, codes.n);
  Tensor zr = rows_range(codes.mu, codes.d, 0, refn);
  forward_orthogonalized(zr, params, head);
  absorb_ortho_factor(params, head);
  Adam opt(head_set, c.head_warmup_lr, c.adam_beta1, c.adam_beta2, c.adam_eps);
  Rng rng(tag(c, kTagWarmup));
  for (int s = 0; s < c.head_warmup_steps; ++s) {
    std::vector<int> idx = sample_rows(codes.n, c.m, rng);
    Tensor zb = rows_gather(codes.mu, codes.d, idx);
    AffinityGraph g = build_affinity(zb, c.k_nn);
    Tensor y = forward_orthogonalized(zb, params, head);
    Tensor loss = add(spectral_loss(g, y), ortho_penalty(y, head));
    if (!std::isfinite(loss.value())) {
      throw NumericError("head warm-up diverged at step " + std::to_string(s));
    }
    params.zero_grad_all();
    backward(loss);
    opt.step(head_set);
  }
}

}  // namespace

// --- pretrain -------------------------------------------------------------

static int pretrain_impl(const Options& o) {
  const Config& c = o.cfg;
  validate(c);
  io::Dataset data = resolve_dataset(c);
  ArchSpec arch = resolve_arch(c);
  check_shape(data, arch);
  if (c.m > data.n) throw ConfigError("batch size m exceeds the dataset size");
  io::TrainView view = io::train_view(data);

  ParamSet params = init_autoencoder(arch, tag(c, kTagParams));
  Adam adam(params, c.lr_pretrain, c.adam_beta1, c.adam_beta2, c.adam_eps);
  Rng rng(tag(c, kTagPretrainRng));
  int start_epoch = 1;

  if (!o.checkpoint.empty()) {
    io::Checkpoint ck = io::load_checkpoint(o.checkpoint);
    if (ck.phase != "pretrain") {
      throw ConfigError("checkpoint phase '" + ck.phase +
                        "' cannot resume pretraining");
    }
    Meta meta;
    params.load_named(split_meta(ck.params, meta));
    adam.load_state(ck.adam_m, ck.adam_v, ck.adam_t);
    rng = Rng::deserialize(ck.rng_state);
    start_epoch = ck.epoch + 1;
  }

  fs::create_directories(c.out);
  std::string ckpt_path = c.out + "/pretrain.dspc";
  if (start_epoch == 1) {
    save_ckpt(ckpt_path, pack("pretrain", 0, params, adam, rng, nullptr, false));
  }

  std::vector<std::string> header = {"epoch",    "total",     "recon", "enc",
                                     "kl",       "mi_global", "mi_local"};
  std::vector<std::vector<std::string>> rows;
  for (int e = start_epoch; e <= c.epochs_pretrain; ++e) {
    double s_recon = 0, s_kl = 0, s_jg = 0, s_jl = 0;
    int steps = 0;
    for (const std::vector<int>& idx :
         io::batches(view.n, c.m, tag(c, kTagPretrainBatches), e)) {
      Tensor x = io::make_batch(view, idx);
      EncoderOutput eo = encode(x, params, arch, rng);
      Tensor zh = noisy_transform(eo.z, c.noise_std, rng);
      Tensor lr = reconstruction_loss(x, eo.z, zh, params, arch, c.delta,
                                      c.relative_term);
      EncoderLoss el = encoder_loss(eo, params, c.beta, c.gamma, rng);
      double v_recon = lr.value();
      if (!all_finite({v_recon, el.total.value()})) {
        std::cerr << "numeric divergence in pretrain epoch " << e
                  << "; last good checkpoint retained\n";
        return kNumericExit;
      }
      Tensor total = add(lr, el.total);
      params.zero_grad_all();
      backward(total);
      adam.step(params);
      s_recon += v_recon;
      s_kl += el.kl;
      s_jg += el.js_global;
      s_jl += el.js_local;
      ++steps;
    }
    double recon = s_recon / steps;
    double kl_term = c.gamma * (s_kl / steps);
    double mi_g = -c.beta * (s_jg / steps);
    double mi_l = -c.beta * (s_jl / steps);
    double enc = kl_term + mi_g + mi_l;
    rows.push_back({std::to_string(e), fd(recon + enc), fd(recon), fd(enc),
                    fd(kl_term), fd(mi_g), fd(mi_l)});
    io::export_csv(c.out + "/pretrain_log.csv", header, rows);
    save_ckpt(ckpt_path, pack("pretrain", e, params, adam, rng, nullptr, false));
    std::cout << "pretrain epoch " << e << "/" << c.epochs_pretrain
              << " total " << fd(recon + enc) << "\n";
  }
  if (start_epoch == 1 && rows.empty()) {
    io::export_csv(c.out + "/pretrain_log.csv", header, rows);
  }
  return kOk;
}

// --- joint training --------------------------------------------------------

static int train_impl(const Options& o) {
  const Config& c = o.cfg;
  validate(c);
  io::Dataset data = resolve_dataset(c);
  ArchSpec arch = resolve_arch(c);
  check_shape(data, arch);
  if (c.m > data.n) throw ConfigError("batch size m exceeds the dataset size");
  if (c.m <= c.k_nn) throw ConfigError("batch size m must exceed k_nn");
  if (c.m < c.k) throw ConfigError("batch size m must be at least k");
  io::TrainView view = io::train_view(data);

  ParamSet params = init_autoencoder(arch, tag(c, kTagParams));
  ClusterHead head = make_cluster_head(c.d, c.k, c.head_widths);
  init_cluster_params(params, head, tag(c, kTagHeadInit));
  ParamSet train_set;
  for (auto& [name, t] : params.items) {
    if (c.freeze_head && name.rfind("y.", 0) == 0) continue;
    train_set.add(name, t);
  }
  Adam adam(train_set, c.lr_joint, c.adam_beta1, c.adam_beta2, c.adam_eps);
  Rng rng(tag(c, kTagJointRng));
  int start_epoch = 1;
  bool head_trained = false;

  fs::create_directories(c.out);
  std::string ckpt_path = c.out + "/train.dspc";

  std::string src = o.checkpoint;
  if (src.empty() && !o.from_scratch) {
    src = c.out + "/pretrain.dspc";
    if (!fs::exists(src)) {
      throw ConfigError("joint training needs a pretrained checkpoint: run "
                        "pretrain first, pass --checkpoint, or use --from-scratch");
    }
  }

  bool resumed = false;
  if (!src.empty()) {
    io::Checkpoint ck = io::load_checkpoint(src);
    if (ck.phase == "train") {
      Meta meta;
      params.load_named(split_meta(ck.params, meta));
      if (!meta.has_mu_y ||
          meta.mu_y.size() != static_cast<size_t>(c.k) * c.d) {
        throw ConfigError("checkpoint cluster means do not match k and d");
      }
      head.mu_y = meta.mu_y;
      head_trained = meta.head_trained;
      adam.load_state(ck.adam_m, ck.adam_v, ck.adam_t);
      rng = Rng::deserialize(ck.rng_state);
      start_epoch = ck.epoch + 1;
      resumed = true;
    } else if (ck.phase == "pretrain") {
      Meta meta;
      load_autoencoder_params(params, split_meta(ck.params, meta));
    } else {
      throw ConfigError("unknown checkpoint phase '" + ck.phase + "'");
    }
  }

  if (!resumed) {
    Codes codes = encode_all(view, params, arch, c.m, tag(c, kTagInitEncode));
    KmeansResult km = kmeans(codes.mu, codes.n, codes.d, c.k, tag(c, kTagMuYInit));
    head.mu_y = km.centers;
    if (!c.freeze_head && c.head_warmup_steps > 0) {
      warmup_head(c, params, head, codes);
    }
    head_trained = !c.freeze_head &&
                   (c.head_warmup_steps > 0 || c.epochs_joint > 0);
    save_ckpt(ckpt_path, pack("train", 0, params, adam, rng, &head, head_trained));
  }

  bool labeled = data.has_labels();
  std::vector<std::string> header = {"epoch", "total",    "recon", "mi_global",
                                     "mi_local", "prior", "spectral", "ortho"};
  if (labeled) {
    header.push_back("acc");
    header.push_back("nmi");
  }
  std::vector<std::vector<std::string>> rows;
  double ortho_w = c.freeze_head ? 0.0 : c.ortho_weight;

  for (int e = start_epoch; e <= c.epochs_joint; ++e) {
    double s_recon = 0, s_jg = 0, s_jl = 0, s_prior = 0, s_lc = 0, s_pen = 0;
    int steps = 0;
    for (const std::vector<int>& idx :
         io::batches(view.n, c.m, tag(c, kTagJointBatches), e)) {
      Tensor x = io::make_batch(view, idx);
      EncoderOutput eo = encode(x, params, arch, rng);
      Tensor zh = noisy_transform(eo.z, c.noise_std, rng);
      // The graph and the head read the deterministic codes: the sampling
      // noise that feeds reconstruction would drown the metric structure.
      AffinityGraph g = build_affinity(eo.mu, c.k_nn);
      Tensor y = forward_orthogonalized(eo.mu, params, head);
      Tensor lr = reconstruction_loss(x, eo.z, zh, params, arch, c.delta,
                                      c.relative_term);
      EncoderLoss el = encoder_loss(eo, params, c.beta, 0.0, rng);
      Tensor prior = cluster_prior_kl(eo.mu, eo.log_var, row_softmax(y),
                                      head.mu_y, c.gamma);
      Tensor lc = mul(spectral_loss(g, y), c.lc_weight);
      Tensor total = add(add(add(lr, el.total), prior), lc);
      double v_pen = 0.0;
      if (ortho_w > 0.0) {
        Tensor pen = mul(ortho_penalty(y, head), ortho_w);
        v_pen = pen.value();
        total = add(total, pen);
      }
      double v_recon = lr.value(), v_prior = prior.value(), v_lc = lc.value();
      if (!all_finite({v_recon, el.total.value(), v_prior, v_lc, v_pen})) {
        std::cerr << "numeric divergence in joint epoch " << e
                  << "; last good checkpoint retained\n";
        return kNumericExit;
      }
      params.zero_grad_all();
      backward(total);
      adam.step(train_set);
      s_recon += v_recon;
      s_jg += el.js_global;
      s_jl += el.js_local;
      s_prior += v_prior;
      s_lc += v_lc;
      s_pen += v_pen;
      ++steps;
    }

    // End of epoch: reassign clusters from the current model and refresh the
    // latent means; report metrics against held-out labels when available.
    Codes codes = encode_all(view, params, arch, c.m,
                             tag(c, kTagRefreshEncode + static_cast<uint64_t>(e)));
    std::vector<int> pred;
    if (head_trained) {
      Tensor zf = rows_range(codes.mu, codes.d, 0, codes.n);
      Tensor yf = forward_orthogonalized(zf, params, head);
      pred = assign_clusters(yf, c.k,
                             tag(c, kTagRefreshAssign + static_cast<uint64_t>(e)))
                 .labels;
    } else {
      Tensor zf = rows_range(codes.mu, codes.d, 0, codes.n);
      pred = assign_clusters(zf, c.k,
                             tag(c, kTagRefreshAssign + static_cast<uint64_t>(e)))
                 .labels;
    }
    head.mu_y = update_cluster_means(codes.mu, codes.n, codes.d, pred, c.k,
                                     head.mu_y);

    double recon = s_recon / steps;
    double mi_g = -c.beta * (s_jg / steps);
    double mi_l = -c.beta * (s_jl / steps);
    double prior = s_prior / steps;
    double lc = s_lc / steps;
    double pen = s_pen / steps;
    double total = recon + mi_g + mi_l + prior + lc + pen;
    std::vector<std::string> row = {std::to_string(e), fd(total),  fd(recon),
                                    fd(mi_g),          fd(mi_l),   fd(prior),
                                    fd(lc),            fd(pen)};
    if (labeled) {
      metrics::EvalReport rep =
          metrics::evaluate(data.labels, pred, std::max(c.k, data.k_true));
      row.push_back(fd(rep.acc));
      row.push_back(fd(rep.nmi));
      std::cout << "train epoch " << e << "/" << c.epochs_joint << " total "
                << fd(total) << " acc " << fd(rep.acc) << "\n";
    } else {
      std::cout << "train epoch " << e << "/" << c.epochs_joint << " total "
                << fd(total) << "\n";
    }
    rows.push_back(row);
    io::export_csv(c.out + "/train_log.csv", header, rows);
    save_ckpt(ckpt_path, pack("train", e, params, adam, rng, &head, head_trained));
  }
  if (start_epoch == 1 && rows.empty()) {
    io::export_csv(c.out + "/train_log.csv", header, rows);
  }
  return kOk;
}

// --- evaluation ------------------------------------------------------------

static int eval_impl(const Options& o, EvalOutcome* outcome) {
  const Config& c = o.cfg;
  validate(c);
  io::Dataset data = resolve_dataset(c);
  if (!data.has_labels()) {
    throw IoError("evaluation needs labels; dataset '" + c.dataset +
                  "' has none");
  }
  ArchSpec arch = resolve_arch(c);
  check_shape(data, arch);
  io::TrainView view = io::train_view(data);

  io::Checkpoint ck = io::load_checkpoint(resolve_eval_checkpoint(o));
  LoadedModel model = load_model(c, arch, ck);
  Codes codes = encode_all(view, model.params, arch, c.m, tag(c, kTagEvalEncode));

  std::vector<int> pred;
  if (model.has_head && model.head_trained) {
    std::vector<double> y = embed_rows(codes, model.params, model.head,
                                       std::min(c.eval_batch, codes.n));
    Tensor yt = Tensor::from_data({codes.n, c.k}, std::move(y));
    pred = assign_clusters(yt, c.k, tag(c, kTagEvalAssign)).labels;
  } else {
    Tensor zt = rows_range(codes.mu, codes.d, 0, codes.n);
    pred = assign_clusters(zt, c.k, tag(c, kTagEvalAssign)).labels;
  }

  metrics::EvalReport rep =
      metrics::evaluate(data.labels, pred, std::max(c.k, data.k_true));
  fs::create_directories(c.out);
  io::export_csv(c.out + "/eval.csv",
                 {"dataset", "phase", "n", "k", "acc", "nmi"},
                 {{data.name, model.phase, std::to_string(rep.n),
                   std::to_string(rep.k), fd(rep.acc), fd(rep.nmi)}});
  std::cout << "eval " << data.name << " phase " << model.phase << " acc "
            << fd(rep.acc) << " nmi " << fd(rep.nmi) << "\n";
  if (outcome != nullptr) {
    outcome->acc = rep.acc;
    outcome->nmi = rep.nmi;
    outcome->n = rep.n;
    outcome->k = rep.k;
    outcome->phase = model.phase;
  }
  return kOk;
}

// --- embedding export -------------------------------------------------------

static int embed_impl(const Options& o) {
  const Config& c = o.cfg;
  validate(c);
  io::Dataset data = resolve_dataset(c);
  ArchSpec arch = resolve_arch(c);
  check_shape(data, arch);
  io::TrainView view = io::train_view(data);

  io::Checkpoint ck = io::load_checkpoint(resolve_eval_checkpoint(o));
  LoadedModel model = load_model(c, arch, ck);
  Codes codes = encode_all(view, model.params, arch, c.m, tag(c, kTagEvalEncode));

  bool with_head = model.has_head && model.head_trained;
  std::vector<double> y;
  if (with_head) {
    y = embed_rows(codes, model.params, model.head,
                   std::min(c.eval_batch, codes.n));
  }

  std::vector<std::string> header = {"index"};
  for (int j = 1; j <= codes.d; ++j) header.push_back("z" + std::to_string(j));
  if (with_head) {
    for (int j = 1; j <= c.k; ++j) header.push_back("y" + std::to_string(j));
  }
  if (data.has_labels()) header.push_back("label");

  std::vector<std::vector<std::string>> rows;
  rows.reserve(static_cast<size_t>(codes.n));
  for (int i = 0; i < codes.n; ++i) {
    std::vector<std::string> row;
    row.reserve(header.size());
    row.push_back(std::to_string(i));
    for (int j = 0; j < codes.d; ++j) {
      row.push_back(fd(codes.mu[static_cast<size_t>(i) * codes.d + j]));
    }
    if (with_head) {
      for (int j = 0; j < c.k; ++j) {
        row.push_back(fd(y[static_cast<size_t>(i) * c.k + j]));
      }
    }
    if (data.has_labels()) row.push_back(std::to_string(data.labels[i]));
    rows.push_back(std::move(row));
  }
  fs::create_directories(c.out);
  io::export_csv(c.out + "/embeddings.csv", header, rows);
  std::cout << "embedded " << codes.n << " rows\n";
  return kOk;
}

// --- sweep -------------------------------------------------------------------

static int sweep_impl(const Options& o) {
  const Config& c = o.cfg;
  validate(c);
  fs::create_directories(c.out);
  std::vector<std::vector<std::string>> rows;
  for (double b : c.sweep_beta) {
    for (double g : c.sweep_gamma) {
      Config cell = c;
      cell.beta = b;
      cell.gamma = g;
      cell.out = c.out + "/sweep_b" + fd(b) + "_g" + fd(g);
      std::string status = "ok";
      std::string acc, nmi;
      EvalOutcome eo;
      Options cell_opts{cell, "", false};
      int rc = pretrain(cell_opts);
      if (rc == kOk) rc = train(cell_opts);
      if (rc == kOk) rc = eval(cell_opts, &eo);
      if (rc == kOk) {
        acc = fd(eo.acc);
        nmi = fd(eo.nmi);
      } else {
        status = "exit " + std::to_string(rc);
      }
      rows.push_back({fd(b), fd(g), status, acc, nmi});
      io::export_csv(c.out + "/sweep.csv",
                     {"beta", "gamma", "status", "acc", "nmi"}, rows);
      std::cout << "sweep beta " << fd(b) << " gamma " << fd(g) << " -> "
                << (status == "ok" ? "acc " + acc : status) << "\n";
    }
  }
  return kOk;
}

// --- exit-code guard ---------------------------------------------------------

template <typename F>
static int guarded(const char* what, F&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << what << ": config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const ShapeError& e) {
    std::cerr << what << ": config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const GraphError& e) {
    std::cerr << what << ": config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const ParseError& e) {
    std::cerr << what << ": data error: " << e.what() << "\n";
    return kDataExit;
  } catch (const IoError& e) {
    std::cerr << what << ": data error: " << e.what() << "\n";
    return kDataExit;
  } catch (const NumericError& e) {
    std::cerr << what << ": numeric error: " << e.what() << "\n";
    return kNumericExit;
  }
}

int pretrain(const Options& opts) {
  return guarded("pretrain", [&] { return pretrain_impl(opts); });
}
int train(const Options& opts) {
  return guarded("train", [&] { return train_impl(opts); });
}
int eval(const Options& opts, EvalOutcome* outcome) {
  return guarded("eval", [&] { return eval_impl(opts, outcome); });
}
int embed(const Options& opts) {
  return guarded("embed", [&] { return embed_impl(opts); });
}
int sweep(const Options& opts) {
  return guarded("sweep", [&] { return sweep_impl(opts); });
}

}  // namespace dspc::run

#include "dspc/adam.hpp"

#include <cmath>

#include "dspc/errors.hpp"

namespace dspc {

Adam::Adam(const ParamSet& params, double lr, double beta1, double beta2,
           double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr <= 0.0 || beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 ||
      eps <= 0.0) {
    throw ConfigError("adam hyperparameters out of range");
  }
  for (const auto& it : params.items) {
    names_.push_back(it.first);
    shapes_.push_back(it.second.shape());
    m_.emplace_back(it.second.numel(), 0.0);
    v_.emplace_back(it.second.numel(), 0.0);
  }
}

void Adam::set_lr(double lr) {
  if (lr <= 0.0) throw ConfigError("adam learning rate must be positive");
  lr_ = lr;
}

void Adam::step(ParamSet& params) {
  if (params.items.size() != names_.size()) {
    throw ConfigError("adam state does not match the parameter registry");
  }
  ++t_;
  double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < names_.size(); ++i) {
    auto& entry = params.items[i];
    if (entry.first != names_[i]) {
      throw ConfigError("adam state expects parameter " + names_[i] +
                        ", registry has " + entry.first);
    }
    const std::vector<double>& g = entry.second.grad();
    std::vector<double>& w = entry.second.data();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    for (size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

std::vector<io::NamedTensor> Adam::m_named() const {
  std::vector<io::NamedTensor> out;
  for (size_t i = 0; i < names_.size(); ++i) {
    out.push_back({names_[i], shapes_[i], m_[i]});
  }
  return out;
}

std::vector<io::NamedTensor> Adam::v_named() const {
  std::vector<io::NamedTensor> out;
  for (size_t i = 0; i < names_.size(); ++i) {
    out.push_back({names_[i], shapes_[i], v_[i]});
  }
  return out;
}

void Adam::load_state(const std::vector<io::NamedTensor>& m,
                      const std::vector<io::NamedTensor>& v, uint64_t t) {
  auto restore = [this](const std::vector<io::NamedTensor>& src,
                        std::vector<std::vector<double>>& dst,
                        const char* what) {
    for (size_t i = 0; i < names_.size(); ++i) {
      const io::NamedTensor* found = nullptr;
      for (const auto& nt : src) {
        if (nt.name == names_[i]) {
          found = &nt;
          break;
        }
      }
      if (!found || found->data.size() != dst[i].size()) {
        throw ConfigError(std::string("checkpoint adam ") + what +
                          " state does not cover parameter " + names_[i]);
      }
      dst[i] = found->data;
    }
  };
  restore(m, m_, "m");
  restore(v, v_, "v");
  t_ = t;
}

}  // namespace dspc

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dspc/data_io.hpp"
#include "dspc/params.hpp"

namespace dspc {

// Adam over a parameter registry. Moment buffers are keyed to the registry's
// insertion order, so updates and checkpoints are deterministic.
class Adam {
 public:
  Adam(const ParamSet& params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  // Applies one update from the gradients currently on `params`, which must
  // be the registry the optimizer was built for.
  void step(ParamSet& params);

  double lr() const { return lr_; }
  void set_lr(double lr);
  uint64_t t() const { return t_; }

  std::vector<io::NamedTensor> m_named() const;
  std::vector<io::NamedTensor> v_named() const;
  void load_state(const std::vector<io::NamedTensor>& m,
                  const std::vector<io::NamedTensor>& v, uint64_t t);

 private:
  double lr_, beta1_, beta2_, eps_;
  uint64_t t_ = 0;
  std::vector<std::string> names_;
  std::vector<Shape> shapes_;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace dspc

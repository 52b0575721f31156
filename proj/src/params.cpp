#include "dspc/params.hpp"

#include "dspc/errors.hpp"

namespace dspc {

Tensor& ParamSet::add(const std::string& name, Tensor t) {
  if (has(name)) throw ConfigError("duplicate parameter " + name);
  items.emplace_back(name, std::move(t));
  return items.back().second;
}

bool ParamSet::has(const std::string& name) const {
  for (const auto& it : items) {
    if (it.first == name) return true;
  }
  return false;
}

Tensor& ParamSet::get(const std::string& name) {
  for (auto& it : items) {
    if (it.first == name) return it.second;
  }
  throw ConfigError("unknown parameter " + name);
}

const Tensor& ParamSet::get(const std::string& name) const {
  for (const auto& it : items) {
    if (it.first == name) return it.second;
  }
  throw ConfigError("unknown parameter " + name);
}

void ParamSet::zero_grad_all() {
  for (auto& it : items) it.second.zero_grad();
}

std::vector<io::NamedTensor> ParamSet::to_named() const {
  std::vector<io::NamedTensor> out;
  out.reserve(items.size());
  for (const auto& it : items) {
    out.push_back({it.first, it.second.shape(), it.second.data()});
  }
  return out;
}

void ParamSet::load_named(const std::vector<io::NamedTensor>& named) {
  for (auto& it : items) {
    const io::NamedTensor* found = nullptr;
    for (const auto& nt : named) {
      if (nt.name == it.first) {
        found = &nt;
        break;
      }
    }
    if (!found) throw ConfigError("checkpoint is missing parameter " + it.first);
    if (found->shape != it.second.shape()) {
      throw ConfigError("checkpoint parameter " + it.first + " has shape " +
                        shape_str(found->shape) + ", expected " +
                        shape_str(it.second.shape()));
    }
    it.second.data() = found->data;
  }
}

}  // namespace dspc

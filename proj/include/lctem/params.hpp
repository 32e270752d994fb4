#pragma once

#include <map>
#include <string>

#include "lctem/tensor.hpp"

namespace lctem {

template <typename Scalar>
struct Parameter {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
};

template <typename Scalar>
struct AdamMoments {
  Tensor<Scalar> m;
  Tensor<Scalar> v;
};

/// Named learnable tensors, non-learnable buffers (normalization running
/// statistics) and optimizer state. Node-based maps keep references stable
/// for the lifetime of the store, including across moves.
template <typename Scalar>
class ParamStore {
 public:
  Parameter<Scalar>& add(const std::string& name, Shape shape) {
    auto [it, inserted] = params_.try_emplace(name, Parameter<Scalar>{Tensor<Scalar>(shape), Tensor<Scalar>(shape)});
    if (!inserted) throw InputError("duplicate parameter '" + name + "'");
    return it->second;
  }

  Tensor<Scalar>& add_buffer(const std::string& name, Shape shape, Scalar fill) {
    auto [it, inserted] = buffers_.try_emplace(name, Tensor<Scalar>(shape, fill));
    if (!inserted) throw InputError("duplicate buffer '" + name + "'");
    return it->second;
  }

  Parameter<Scalar>& param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw InputError("no parameter '" + name + "'");
    return it->second;
  }

  std::map<std::string, Parameter<Scalar>>& params() { return params_; }
  const std::map<std::string, Parameter<Scalar>>& params() const { return params_; }
  std::map<std::string, Tensor<Scalar>>& buffers() { return buffers_; }
  const std::map<std::string, Tensor<Scalar>>& buffers() const { return buffers_; }
  std::map<std::string, AdamMoments<Scalar>>& moments() { return moments_; }
  const std::map<std::string, AdamMoments<Scalar>>& moments() const { return moments_; }

  long step() const { return step_; }
  void set_step(long t) { step_ = t; }
  bool poisoned() const { return poisoned_; }
  void poison() { poisoned_ = true; }

  void zero_grad() {
    for (auto& [name, p] : params_) p.grad.values().setZero();
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, p] : params_) n += p.value.size();
    return n;
  }

 private:
  std::map<std::string, Parameter<Scalar>> params_;
  std::map<std::string, Tensor<Scalar>> buffers_;
  std::map<std::string, AdamMoments<Scalar>> moments_;
  long step_ = 0;
  bool poisoned_ = false;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam update using the gradients held in the store.
/// A non-finite gradient poisons the store and throws NonFiniteError before
/// any parameter changes; every later call throws too.
template <typename Scalar>
void adam_step(ParamStore<Scalar>& store, const AdamConfig& cfg);

extern template void adam_step<float>(ParamStore<float>&, const AdamConfig&);
extern template void adam_step<double>(ParamStore<double>&, const AdamConfig&);

}  // namespace lctem

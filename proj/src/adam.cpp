#include <cmath>

#include "lctem/params.hpp"

namespace lctem {

template <typename Scalar>
void adam_step(ParamStore<Scalar>& store, const AdamConfig& cfg) {
  if (store.poisoned()) throw NonFiniteError("adam_step: optimizer state is poisoned");
  for (const auto& [name, p] : store.params()) {
    if (!p.grad.values().allFinite()) {
      store.poison();
      throw NonFiniteError("adam_step: non-finite gradient for '" + name + "'");
    }
  }
  const long t = store.step() + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto lr = static_cast<Scalar>(cfg.learning_rate);
  const auto eps = static_cast<Scalar>(cfg.epsilon);
  const auto inv_bc1 = static_cast<Scalar>(1.0 / bc1);
  const auto inv_bc2 = static_cast<Scalar>(1.0 / bc2);

  for (auto& [name, p] : store.params()) {
    auto [it, fresh] = store.moments().try_emplace(name);
    auto& mom = it->second;
    if (fresh || mom.m.shape() != p.value.shape()) {
      mom.m = Tensor<Scalar>(p.value.shape());
      mom.v = Tensor<Scalar>(p.value.shape());
    }
    const auto& g = p.grad.values();
    mom.m.values() = b1 * mom.m.values() + (Scalar(1) - b1) * g;
    mom.v.values() = b2 * mom.v.values() + (Scalar(1) - b2) * g.square();
    p.value.values() -=
        lr * (mom.m.values() * inv_bc1) / ((mom.v.values() * inv_bc2).sqrt() + eps);
  }
  store.set_step(t);
}

template void adam_step<float>(ParamStore<float>&, const AdamConfig&);
template void adam_step<double>(ParamStore<double>&, const AdamConfig&);

}  // namespace lctem

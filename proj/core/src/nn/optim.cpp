#include "sensorscan/nn/optim.hpp"

#include <cmath>
#include <unordered_map>

namespace sensorscan::nn {

Adam::Adam(std::vector<ParamGroup> groups, AdamOptions options)
    : groups_(std::move(groups)), options_(options) {
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    for (auto* p : groups_[g].params) {
      if (!p->trainable) continue;
      slots_.push_back({p, g, 0, Mat::Zero(p->value.rows(), p->value.cols()),
                        Mat::Zero(p->value.rows(), p->value.cols())});
    }
  }
}

void Adam::step() {
  const auto b1 = static_cast<Real>(options_.beta1);
  const auto b2 = static_cast<Real>(options_.beta2);
  for (auto& s : slots_) {
    Parameter& p = *s.param;
    if (p.frozen) {
      p.zero_grad();
      continue;
    }
    Mat g = p.grad;
    if (options_.weight_decay != 0) g += static_cast<Real>(options_.weight_decay) * p.value;
    ++s.step;
    s.m = b1 * s.m + (1 - b1) * g;
    s.v = b2 * s.v + (1 - b2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(s.step));
    const auto step_size = static_cast<Real>(groups_[s.group].lr / bc1);
    const auto denom_scale = static_cast<Real>(1.0 / std::sqrt(bc2));
    p.value.array() -= step_size * s.m.array() /
                       (s.v.array().sqrt() * denom_scale + static_cast<Real>(options_.eps));
    p.zero_grad();
  }
  for (const auto& g : groups_)
    for (auto* p : g.params)
      if (!p->trainable) p->zero_grad();
}

void Adam::zero_grad() {
  for (const auto& g : groups_)
    for (auto* p : g.params) p->zero_grad();
}

AdamState Adam::state() const {
  AdamState st;
  st.slots.reserve(slots_.size());
  for (const auto& s : slots_) st.slots.push_back({s.param->name, s.step, s.m, s.v});
  return st;
}

void Adam::load_state(const AdamState& state) {
  std::unordered_map<std::string, const AdamSlotState*> by_name;
  for (const auto& s : state.slots) by_name[s.name] = &s;
  for (auto& s : slots_) {
    auto it = by_name.find(s.param->name);
    if (it == by_name.end()) throw ValidationError("optimizer state lacks parameter '" + s.param->name + "'");
    const auto& saved = *it->second;
    if (saved.first_moment.rows() != s.m.rows() || saved.first_moment.cols() != s.m.cols() ||
        saved.second_moment.rows() != s.v.rows() || saved.second_moment.cols() != s.v.cols())
      throw ValidationError("optimizer state shape mismatch for '" + s.param->name + "'");
    s.step = saved.step;
    s.m = saved.first_moment;
    s.v = saved.second_moment;
  }
}

}  // namespace sensorscan::nn

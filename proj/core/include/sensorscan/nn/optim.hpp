#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sensorscan/nn/layers.hpp"

namespace sensorscan::nn {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Classic L2 penalty: weight_decay * w is added to the gradient before the moment updates.
  double weight_decay = 0.0;
};

struct ParamGroup {
  ParamRefs params;
  double lr = 1e-3;
};

// Per-parameter optimizer state, keyed by parameter name for checkpointing.
struct AdamSlotState {
  std::string name;
  std::int64_t step = 0;
  Mat first_moment;
  Mat second_moment;
};

struct AdamState {
  std::vector<AdamSlotState> slots;
};

class Adam {
 public:
  Adam(std::vector<ParamGroup> groups, AdamOptions options = {});

  // Applies one bias-corrected update to every trainable, non-frozen parameter, then zeroes
  // all gradients. Frozen parameters and their moments are left untouched.
  void step();
  void zero_grad();

  void set_lr(std::size_t group, double lr) { groups_.at(group).lr = lr; }
  double lr(std::size_t group) const { return groups_.at(group).lr; }
  const AdamOptions& options() const { return options_; }

  AdamState state() const;
  void load_state(const AdamState& state);

 private:
  struct Slot {
    Parameter* param;
    std::size_t group;
    std::int64_t step = 0;
    Mat m;
    Mat v;
  };
  std::vector<ParamGroup> groups_;
  std::vector<Slot> slots_;
  AdamOptions options_;
};

}  // namespace sensorscan::nn

#pragma once

#include <cstdint>
#include <vector>

#include "gkmvlp/config.hpp"
#include "gkmvlp/tensor.hpp"

namespace gkmvlp {

// Linear warmup over warmup_steps, then lr * decay_rate^epoch.
double scheduled_lr(const OptimizerConfig& cfg, std::int64_t step, int epoch);

// Adam with decoupled weight decay. Decay applies to weight matrices only;
// vectors (biases, norm gains, scalars) are not decayed.
class AdamW {
 public:
  explicit AdamW(const OptimizerConfig& cfg) : cfg_(cfg) {}

  // Updates every parameter in `params` from its accumulated gradient.
  void step(const std::vector<Parameter*>& params, double lr);
  [[nodiscard]] std::int64_t steps_taken() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<const Parameter*> owners_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace gkmvlp

#include "gkmvlp/optim.hpp"

#include <algorithm>
#include <cmath>

#include "gkmvlp/errors.hpp"

namespace gkmvlp {

double scheduled_lr(const OptimizerConfig& cfg, std::int64_t step, int epoch) {
  const double warm = cfg.warmup_steps > 0
                          ? std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps))
                          : 1.0;
  return cfg.lr * warm * std::pow(cfg.decay_rate, epoch);
}

void AdamW::step(const std::vector<Parameter*>& params, double lr) {
  if (owners_.empty()) {
    for (const Parameter* p : params) {
      owners_.push_back(p);
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  } else if (owners_.size() != params.size()) {
    throw ValidationError("optimizer was built for a different parameter set");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (owners_[i] != &p) throw ValidationError("optimizer parameter order changed");
    Matrix& m = m_[i];
    Matrix& v = v_[i];
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * p.grad;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
    if (p.value.rows() > 1 && p.value.cols() > 1) p.value *= 1.0 - lr * cfg_.weight_decay;
    p.value.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps);
  }
}

}  // namespace gkmvlp

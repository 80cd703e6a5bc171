#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gkmvlp::testing {

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.image_size = 24;
  c.patch_size = 4;
  c.hidden_dim = 16;
  c.projection_dim = 8;
  c.region_dim = 12;
  c.prompt_dim = 16;
  c.num_layers = 1;
  c.num_heads = 2;
  c.ffn_dim = 16;
  c.max_text_len = 16;
  return c;
}

FusionConfig tiny_fusion() {
  FusionConfig f;
  f.num_layers = 1;
  f.num_heads = 2;
  return f;
}

RunConfig tiny_run_config() {
  RunConfig cfg;
  cfg.encoder = tiny_encoder();
  cfg.fusion = tiny_fusion();
  cfg.batch_size = 2;
  cfg.epochs = 1;
  cfg.optimizer.warmup_steps = 1;
  cfg.finetune.epochs = 1;
  cfg.finetune.batch_size = 4;
  cfg.finetune.max_decode_len = 8;
  return cfg;
}

SynthConfig tiny_synth(int num_samples, std::uint64_t seed, int min_entities, int max_entities) {
  SynthConfig s;
  s.num_samples = num_samples;
  s.image_size = 24;
  s.patch_size = 4;
  s.seed = seed;
  s.min_entities_per_sample = min_entities;
  s.max_entities_per_sample = max_entities;
  return s;
}

std::unique_ptr<Model> tiny_model(const std::vector<SampleRecord>& records, std::uint64_t seed) {
  return std::make_unique<Model>(tiny_encoder(), tiny_fusion(), build_vocabulary(records), seed);
}

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

GradCheckResult gradcheck(const std::function<Var(Graph&)>& loss, const std::vector<Parameter*>& params,
                          std::size_t max_entries, std::uint64_t seed, double step, double floor) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g(true);
    g.backward(loss(g));
  }
  std::vector<Matrix> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);

  auto evaluate = [&]() {
    Graph g(false);
    return loss(g).scalar();
  };
  std::mt19937_64 rng(seed);
  GradCheckResult result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Parameter& p = *params[t];
    std::vector<Eigen::Index> entries(static_cast<std::size_t>(p.value.size()));
    std::iota(entries.begin(), entries.end(), Eigen::Index{0});
    if (max_entries > 0 && entries.size() > max_entries) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(max_entries);
    }
    for (Eigen::Index e : entries) {
      double& x = p.value.data()[e];
      const double saved = x;
      x = saved + step;
      const double up = evaluate();
      x = saved - step;
      const double down = evaluate();
      x = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[t].data()[e];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = p.name + "[" + std::to_string(e / p.value.cols()) + "," +
                       std::to_string(e % p.value.cols()) + "]";
      }
    }
  }
  return result;
}

}  // namespace gkmvlp::testing

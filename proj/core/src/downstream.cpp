#include "gkmvlp/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gkmvlp/errors.hpp"
#include "gkmvlp/metrics.hpp"
#include "gkmvlp/objectives.hpp"
#include "gkmvlp/optim.hpp"

namespace gkmvlp {
namespace {

std::mt19937_64 task_rng(std::uint64_t seed, std::uint32_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), salt};
  return std::mt19937_64(seq);
}

OptimizerConfig finetune_optimizer(const FinetuneConfig& cfg) {
  OptimizerConfig o;
  o.lr = cfg.lr;
  o.weight_decay = 0.01;
  o.warmup_steps = 0;
  o.decay_rate = 1.0;
  return o;
}

// Mini-batch loop shared by the fine-tuning tasks. `loss` builds the batch
// objective in the given graph.
template <typename LossFn>
void train_epochs(const std::vector<Parameter*>& trainable, int num_samples, const FinetuneConfig& cfg,
                  std::mt19937_64& rng, LossFn&& loss) {
  const OptimizerConfig opt_cfg = finetune_optimizer(cfg);
  AdamW optimizer(opt_cfg);
  std::vector<int> order(static_cast<std::size_t>(num_samples));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < num_samples; start += cfg.batch_size) {
      const int end = std::min(num_samples, start + cfg.batch_size);
      const std::vector<int> batch(order.begin() + start, order.begin() + end);
      for (Parameter* p : trainable) p->zero_grad();
      Graph g;
      Var objective = loss(g, batch);
      if (!std::isfinite(objective.scalar())) {
        throw NonFiniteError("non-finite fine-tuning loss; first non-finite tensor: " + g.first_non_finite());
      }
      g.backward(objective);
      optimizer.step(trainable, opt_cfg.lr);
    }
  }
}

std::vector<int> subsample(int n, double fraction, std::mt19937_64& rng) {
  if (!(fraction > 0.0) || fraction > 1.0) throw ConfigError("finetune.fraction must lie in (0, 1]");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const int keep = std::clamp(static_cast<int>(std::lround(fraction * n)), std::min(n, 2), n);
  idx.resize(static_cast<std::size_t>(keep));
  return idx;
}

Var decoder_memory(Graph& g, const Model& model, Grounding grounding, Var v, const PreparedSample& s) {
  return fused_memory(g, model, grounding, v, s.pooling, neutral_prompt(model), true);
}

}  // namespace

std::vector<Parameter*> backbone_parameters(Model& model, bool include_cross_modal) {
  std::vector<Parameter*> out = model.params().with_prefix("image.");
  if (include_cross_modal) {
    for (Parameter* p : model.params().with_prefix("xmodal.")) out.push_back(p);
  }
  return out;
}

ClassificationReport classification_report(const Matrix& scores, const std::vector<PreparedSample>& samples) {
  ClassificationReport r;
  double sum = 0.0;
  int defined = 0;
  for (int d = 0; d < kNumEntities; ++d) {
    std::vector<double> s;
    std::vector<bool> y;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      s.push_back(scores(static_cast<Eigen::Index>(i), d));
      y.push_back(samples[i].labels[static_cast<std::size_t>(d)]);
    }
    try {
      const double a = auroc(s, y);
      r.per_entity[static_cast<std::size_t>(d)] = a;
      sum += a;
      ++defined;
    } catch (const UndefinedMetricError&) {
    }
  }
  if (defined == 0) throw UndefinedMetricError("no entity has both classes in the evaluation split");
  r.mean_auroc = sum / defined;
  return r;
}

ClassificationReport finetune_classification(const Model& pretrained, const std::vector<PreparedSample>& train,
                                             const std::vector<PreparedSample>& test, double fraction,
                                             const FinetuneConfig& cfg, std::uint64_t seed) {
  auto rng = task_rng(seed, 0x636c73u);
  std::vector<int> subset = subsample(static_cast<int>(train.size()), fraction, rng);
  std::unique_ptr<Model> model = pretrained.clone();
  ParameterStore head_store;
  const Linear head = Linear::create(head_store, "cls_head", model->encoder_config().projection_dim, kNumEntities, rng);
  std::vector<Parameter*> trainable = backbone_parameters(*model, false);
  for (Parameter* p : head_store.all()) trainable.push_back(p);

  train_epochs(trainable, static_cast<int>(subset.size()), cfg, rng, [&](Graph& g, const std::vector<int>& batch) {
    std::vector<Var> logits;
    Matrix targets(static_cast<Eigen::Index>(batch.size()), kNumEntities);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const PreparedSample& s = train[static_cast<std::size_t>(subset[static_cast<std::size_t>(batch[i])])];
      logits.push_back(head(g, model->image().encode_patches(g, s.patches).z));
      for (int d = 0; d < kNumEntities; ++d) {
        targets(static_cast<Eigen::Index>(i), d) = s.labels[static_cast<std::size_t>(d)] ? 1.0 : 0.0;
      }
    }
    return ops::binary_cross_entropy(ops::concat_rows(logits), targets);
  });

  Matrix scores(static_cast<Eigen::Index>(test.size()), kNumEntities);
  for (std::size_t i = 0; i < test.size(); ++i) {
    Graph g(false);
    scores.row(static_cast<Eigen::Index>(i)) = head(g, model->image().encode_patches(g, test[i].patches, true).z, true).value();
  }
  ClassificationReport report = classification_report(scores, test);
  report.fraction = fraction;
  report.train_samples = static_cast<int>(subset.size());
  return report;
}

RegionProbe RegionProbe::random(int feature_dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RegionProbe p;
  p.weight = Matrix(feature_dim, 1);
  for (Eigen::Index i = 0; i < p.weight.rows(); ++i) p.weight(i, 0) = normal(rng);
  p.bias = Matrix(1, kNumRegions);
  for (Eigen::Index k = 0; k < kNumRegions; ++k) p.bias(0, k) = normal(rng);
  p.feature_mean = RowVector::Zero(feature_dim);
  p.feature_scale = RowVector::Ones(feature_dim);
  return p;
}

RowVector RegionProbe::predict(const Matrix& features) const {
  const Matrix x = (features.rowwise() - feature_mean).array().rowwise() * feature_scale.array();
  RowVector logits = (x * weight).transpose() + bias;
  logits.array() -= logits.maxCoeff();
  logits = logits.array().exp();
  return logits / logits.sum();
}

RegionProbe train_region_probe(const std::vector<Matrix>& features, const std::vector<int>& targets,
                               const FinetuneConfig& cfg, std::uint64_t seed) {
  if (features.empty() || features.size() != targets.size()) throw ValidationError("probe needs labelled features");
  const auto dim = features.front().cols();
  RegionProbe probe;
  // Per-dimension standardization estimated on the training features.
  RowVector mean = RowVector::Zero(dim);
  RowVector sq = RowVector::Zero(dim);
  double count = 0.0;
  for (const Matrix& f : features) {
    mean += f.colwise().sum();
    sq += f.array().square().matrix().colwise().sum();
    count += static_cast<double>(f.rows());
  }
  mean /= count;
  const RowVector var = (sq / count).array() - mean.array().square();
  probe.feature_mean = mean;
  probe.feature_scale = (var.array() + 1e-8).rsqrt();

  std::vector<Matrix> standardized;
  for (const Matrix& f : features) {
    standardized.emplace_back((f.rowwise() - mean).array().rowwise() * probe.feature_scale.array());
  }
  auto rng = task_rng(seed, 0x6c6f63u);
  ParameterStore store;
  Parameter& w = store.add_zeros("probe.weight", static_cast<int>(dim), 1);
  Parameter& b = store.add_zeros("probe.bias", 1, kNumRegions);
  FinetuneConfig probe_cfg = cfg;
  probe_cfg.lr = 1e-2;
  train_epochs(store.all(), static_cast<int>(features.size()), probe_cfg, rng,
               [&](Graph& g, const std::vector<int>& batch) {
                 std::vector<Var> rows;
                 std::vector<int> tgt;
                 for (int i : batch) {
                   Var x = g.constant(standardized[static_cast<std::size_t>(i)]);
                   rows.push_back(ops::add(ops::transpose(ops::matmul(x, g.parameter(w))), g.parameter(b)));
                   tgt.push_back(targets[static_cast<std::size_t>(i)]);
                 }
                 return ops::cross_entropy(ops::concat_rows(rows), tgt);
               });
  probe.weight = w.value;
  probe.bias = b.value;
  return probe;
}

LocalizationReport evaluate_region_probe(const RegionProbe& probe, const std::vector<Matrix>& features,
                                         const std::vector<int>& targets,
                                         const std::vector<std::array<Box, kNumRegions>>& boxes) {
  LocalizationReport r;
  r.samples = static_cast<int>(features.size());
  if (features.empty()) return r;
  std::vector<double> confidence;
  std::vector<bool> hit;
  int correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const RowVector prob = probe.predict(features[i]);
    Eigen::Index best = 0;
    prob.maxCoeff(&best);
    const int truth = targets[i];
    correct += best == truth ? 1 : 0;
    confidence.push_back(prob(best));
    hit.push_back(iou(boxes[i][static_cast<std::size_t>(best)], boxes[i][static_cast<std::size_t>(truth)]) >= 0.5);
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(features.size());
  r.map50 = average_precision(confidence, hit, features.size());
  return r;
}

Matrix region_feature_map(const Model& model, Grounding grounding, const PreparedSample& sample) {
  Graph g(false);
  Var v = model.image().encode_patches(g, sample.patches, true).v;
  Var fused = decoder_memory(g, model, grounding, v, sample);
  return sample.pooling.weights * fused.value();
}

LocalizationReport localization_probe(const Model& model, Grounding grounding,
                                      const std::vector<PreparedSample>& train,
                                      const std::vector<PreparedSample>& test, const FinetuneConfig& cfg,
                                      std::uint64_t seed) {
  auto collect = [&](const std::vector<PreparedSample>& samples, std::vector<Matrix>& feats, std::vector<int>& tgt,
                     std::vector<std::array<Box, kNumRegions>>* boxes) {
    for (const PreparedSample& s : samples) {
      if (s.planted_region < 0) continue;
      feats.push_back(region_feature_map(model, grounding, s));
      tgt.push_back(s.planted_region);
      if (boxes) boxes->push_back(s.boxes);
    }
  };
  std::vector<Matrix> train_x;
  std::vector<int> train_y;
  collect(train, train_x, train_y, nullptr);
  std::vector<Matrix> test_x;
  std::vector<int> test_y;
  std::vector<std::array<Box, kNumRegions>> test_boxes;
  collect(test, test_x, test_y, &test_boxes);
  if (train_x.empty() || test_x.empty()) throw ValidationError("localization needs single-entity samples");
  const RegionProbe probe = train_region_probe(train_x, train_y, cfg, seed);
  return evaluate_region_probe(probe, test_x, test_y, test_boxes);
}

GenerationReport generate_reports(const Model& model, Grounding grounding, const std::vector<PreparedSample>& test,
                                  int max_len) {
  GenerationReport r;
  for (const PreparedSample& s : test) {
    Graph g(false);
    Var v = model.image().encode_patches(g, s.patches, true).v;
    const Matrix memory = decoder_memory(g, model, grounding, v, s).value();
    r.candidates.push_back(model.vocab().decode(model.xmodal().greedy_decode(memory, max_len)));
    std::vector<int> ref(s.decoder_targets.begin(), s.decoder_targets.end());
    r.references.push_back(model.vocab().decode(ref));
  }
  const TextScores scores = text_metrics(r.candidates, r.references);
  r.bleu4 = scores.bleu4;
  r.rouge_l = scores.rouge_l;
  return r;
}

GenerationReport finetune_generation(const Model& pretrained, Grounding grounding,
                                     const std::vector<PreparedSample>& train,
                                     const std::vector<PreparedSample>& test, const FinetuneConfig& cfg,
                                     std::uint64_t seed) {
  auto rng = task_rng(seed, 0x67656eu);
  std::unique_ptr<Model> model = pretrained.clone();
  const std::vector<Parameter*> trainable = backbone_parameters(*model, true);
  train_epochs(trainable, static_cast<int>(train.size()), cfg, rng, [&](Graph& g, const std::vector<int>& batch) {
    std::vector<Var> logits;
    std::vector<int> targets;
    std::vector<bool> mask;
    for (int i : batch) {
      const PreparedSample& s = train[static_cast<std::size_t>(i)];
      Var v = model->image().encode_patches(g, s.patches).v;
      logits.push_back(model->xmodal().decode_logits(g, s.decoder_input, decoder_memory(g, *model, grounding, v, s)));
      targets.insert(targets.end(), s.decoder_targets.begin(), s.decoder_targets.end());
      mask.insert(mask.end(), s.decoder_input.mask.begin(), s.decoder_input.mask.end());
    }
    return lm_loss(ops::concat_rows(logits), targets, mask);
  });
  return generate_reports(*model, grounding, test, cfg.max_decode_len);
}

VqaReport vqa_evaluate(const Model& model, const AnswerHead& head, const std::vector<PreparedSample>& samples) {
  VqaReport r;
  int open_correct = 0;
  int closed_correct = 0;
  for (const PreparedSample& s : samples) {
    if (s.questions.empty()) continue;
    Graph g(false);
    Var v = model.image().encode_patches(g, s.patches, true).v;
    for (const PreparedQuestion& q : s.questions) {
      Var z = model.xmodal().image_report_encode(g, q.tokens, v, true).z_it;
      const Matrix logits = head.linear(g, ops::rows(z, 0, 1), true).value();
      Eigen::Index best = 0;
      for (Eigen::Index j = 1; j < logits.cols(); ++j) {
        if (logits(0, j) > logits(0, best)) best = j;
      }
      const bool ok = best == q.answer;
      if (q.closed) {
        ++r.closed_count;
        closed_correct += ok ? 1 : 0;
      } else {
        ++r.open_count;
        open_correct += ok ? 1 : 0;
      }
    }
  }
  r.open_acc = r.open_count ? static_cast<double>(open_correct) / r.open_count : 0.0;
  r.closed_acc = r.closed_count ? static_cast<double>(closed_correct) / r.closed_count : 0.0;
  const int total = r.open_count + r.closed_count;
  r.overall_acc = total ? static_cast<double>(open_correct + closed_correct) / total : 0.0;
  return r;
}

VqaReport finetune_vqa(const Model& pretrained, const std::vector<PreparedSample>& train,
                       const std::vector<PreparedSample>& test, const FinetuneConfig& cfg, std::uint64_t seed) {
  auto rng = task_rng(seed, 0x767161u);
  std::unique_ptr<Model> model = pretrained.clone();
  ParameterStore head_store;
  const AnswerHead head{Linear::create(head_store, "vqa_head", model->encoder_config().hidden_dim, kNumAnswers, rng)};
  std::vector<Parameter*> trainable = backbone_parameters(*model, true);
  for (Parameter* p : head_store.all()) trainable.push_back(p);
  train_epochs(trainable, static_cast<int>(train.size()), cfg, rng, [&](Graph& g, const std::vector<int>& batch) {
    std::vector<Var> logits;
    std::vector<int> answers;
    for (int i : batch) {
      const PreparedSample& s = train[static_cast<std::size_t>(i)];
      if (s.questions.empty()) continue;
      Var v = model->image().encode_patches(g, s.patches).v;
      for (const PreparedQuestion& q : s.questions) {
        Var z = model->xmodal().image_report_encode(g, q.tokens, v).z_it;
        logits.push_back(head.linear(g, ops::rows(z, 0, 1)));
        answers.push_back(q.answer);
      }
    }
    if (logits.empty()) return g.constant(Matrix::Zero(1, 1));
    return ops::cross_entropy(ops::concat_rows(logits), answers);
  });
  return vqa_evaluate(*model, head, test);
}

}  // namespace gkmvlp

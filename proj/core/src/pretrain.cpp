#include "gkmvlp/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gkmvlp/errors.hpp"
#include "gkmvlp/objectives.hpp"
#include "gkmvlp/optim.hpp"

namespace gkmvlp {
namespace {

constexpr double kMinLogTemperature = -4.605170185988091;  // ln 0.01
constexpr double kMaxLogTemperature = -0.6931471805599453;  // ln 0.5

}  // namespace

BatchOutcome pretrain_forward(Graph& g, Model& model, std::span<const PreparedSample* const> batch,
                              std::span<const int> negatives, const RunConfig& cfg,
                              const EntityEmbeddings* entities) {
  const auto b = static_cast<int>(batch.size());
  if (b < 2) throw ValidationError("pre-training batches need at least 2 samples");
  if (static_cast<int>(negatives.size()) != b) throw ShapeError("one negative report per image is required");

  std::vector<ImageEncoding> images;
  std::vector<Var> z_img;
  std::vector<Var> z_txt;
  for (const PreparedSample* s : batch) {
    images.push_back(model.image().encode_patches(g, s->patches));
    z_img.push_back(images.back().z);
    z_txt.push_back(model.text()(g, s->report).z);
  }
  Var temperature = ops::exp(g.parameter(model.log_temperature()));
  Var itc = itc_loss(ops::concat_rows(z_img), ops::concat_rows(z_txt), temperature);

  std::vector<Var> itm_logits;
  std::vector<bool> itm_labels;
  for (int i = 0; i < b; ++i) {
    const Var v = images[static_cast<std::size_t>(i)].v;
    itm_logits.push_back(model.xmodal().image_report_encode(g, batch[static_cast<std::size_t>(i)]->itm_input, v).itm_logits);
    itm_labels.push_back(true);
    const int j = negatives[static_cast<std::size_t>(i)];
    itm_logits.push_back(model.xmodal().image_report_encode(g, batch[static_cast<std::size_t>(j)]->itm_input, v).itm_logits);
    itm_labels.push_back(false);
  }
  Var itm_all = ops::concat_rows(itm_logits);
  Var itm = itm_loss(itm_all, itm_labels);

  std::vector<Var> lm_logits;
  std::vector<int> lm_targets;
  std::vector<bool> lm_mask;
  for (int i = 0; i < b; ++i) {
    const PreparedSample& s = *batch[static_cast<std::size_t>(i)];
    Var memory = fused_memory(g, model, cfg.ablation.grounding, images[static_cast<std::size_t>(i)].v, s.pooling,
                              s.prompt, false);
    lm_logits.push_back(model.xmodal().decode_logits(g, s.decoder_input, memory));
    lm_targets.insert(lm_targets.end(), s.decoder_targets.begin(), s.decoder_targets.end());
    lm_mask.insert(lm_mask.end(), s.decoder_input.mask.begin(), s.decoder_input.mask.end());
  }
  Var lm = lm_loss(ops::concat_rows(lm_logits), lm_targets, lm_mask);

  Var ecls = g.constant(Matrix::Zero(1, 1), "ecls_off");
  int qualifying = 0;
  if (cfg.ablation.ecls) {
    if (entities == nullptr) throw ValidationError("entity classification needs entity embeddings");
    Var z_pos = g.constant(entities->pos, "entity_pos");
    Var z_neg = g.constant(entities->neg, "entity_neg");
    std::vector<Var> terms;
    for (int i = 0; i < b; ++i) {
      const LabelVector& y = batch[static_cast<std::size_t>(i)]->labels;
      if (std::none_of(y.begin(), y.end(), [](bool x) { return x; })) continue;
      terms.push_back(ecls_loss(z_img[static_cast<std::size_t>(i)], z_pos, z_neg, y, model.fusion_config().temperature));
    }
    qualifying = static_cast<int>(terms.size());
    if (qualifying > 0) ecls = ops::mean(ops::concat_rows(terms));
  }

  Var total = total_loss(itc, itm, lm, ecls, cfg.loss);

  BatchOutcome out{total, {}};
  out.log.itc = itc.scalar();
  out.log.itm = itm.scalar();
  out.log.lm = lm.scalar();
  out.log.ecls = ecls.scalar();
  out.log.total = total.scalar();
  out.log.ecls_samples = qualifying;
  int correct = 0;
  for (Eigen::Index r = 0; r < itm_all.rows(); ++r) {
    const bool says_match = itm_all.value()(r, 0) > itm_all.value()(r, 1);
    correct += says_match == itm_labels[static_cast<std::size_t>(r)] ? 1 : 0;
  }
  out.log.itm_accuracy = static_cast<double>(correct) / static_cast<double>(itm_all.rows());
  return out;
}

TrainState initial_train_state(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x74726e67u};
  return TrainState{std::mt19937_64(seq), 0};
}

PretrainResult pretrain(Model& model, const std::vector<PreparedSample>& samples, const RunConfig& cfg,
                        TrainState& state, const std::function<void(const StepLog&)>& on_step) {
  validate(cfg);
  const int b = cfg.batch_size;
  const int batches = static_cast<int>(samples.size()) / b;
  if (batches == 0) throw ValidationError("fewer samples than one batch");
  AdamW optimizer(cfg.optimizer);
  const std::vector<Parameter*> params = model.params().all();
  PretrainResult result;
  std::vector<int> order(samples.size());
  const std::int64_t first_step = state.step;
  for (int epoch = 0; epoch < cfg.epochs || cfg.max_steps > 0; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), state.rng);
    for (int k = 0; k < batches; ++k) {
      if (cfg.max_steps > 0 && state.step - first_step >= cfg.max_steps) return result;
      std::vector<const PreparedSample*> batch;
      for (int i = 0; i < b; ++i) batch.push_back(&samples[static_cast<std::size_t>(order[static_cast<std::size_t>(k * b + i)])]);
      const std::vector<int> negatives = random_derangement(b, state.rng);
      std::optional<EntityEmbeddings> entities;
      if (cfg.ablation.ecls) entities = encode_entities(model.text(), model.vocab());

      model.params().zero_grad();
      Graph g;
      BatchOutcome out = pretrain_forward(g, model, batch, negatives, cfg, entities ? &*entities : nullptr);
      if (!std::isfinite(out.log.total)) {
        throw NonFiniteError("non-finite loss at step " + std::to_string(state.step) +
                             "; first non-finite tensor: " + g.first_non_finite());
      }
      g.backward(out.total);
      const double lr = scheduled_lr(cfg.optimizer, state.step, epoch);
      optimizer.step(params, lr);
      Parameter& lt = model.log_temperature();
      lt.value(0, 0) = std::clamp(lt.value(0, 0), kMinLogTemperature, kMaxLogTemperature);

      out.log.step = state.step;
      out.log.epoch = epoch;
      out.log.lr = lr;
      result.curve.push_back(out.log);
      if (on_step) on_step(out.log);
      ++state.step;
    }
    if (cfg.max_steps == 0 && epoch + 1 >= cfg.epochs) break;
  }
  return result;
}

}  // namespace gkmvlp

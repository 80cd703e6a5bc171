#include "gkmvlp/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "gkmvlp/errors.hpp"
#include "gkmvlp/objectives.hpp"

namespace gkmvlp {

SplitRecords split_records(const std::vector<SampleRecord>& records) {
  SplitRecords out;
  for (const SampleRecord& r : records) {
    switch (r.split) {
      case Split::kPretrain: out.pretrain.push_back(r); break;
      case Split::kTrain: out.train.push_back(r); break;
      case Split::kVal: out.val.push_back(r); break;
      case Split::kTest: out.test.push_back(r); break;
    }
  }
  return out;
}

PretrainRun run_pretrain(const RunConfig& cfg, const std::vector<SampleRecord>& records,
                         const std::function<void(const StepLog&)>& on_step) {
  validate(cfg);
  const SplitRecords splits = split_records(records);
  if (splits.pretrain.empty()) throw ValidationError("the manifest has no pretrain split");
  PretrainRun run;
  run.model = std::make_unique<Model>(cfg.encoder, cfg.fusion, build_vocabulary(records), cfg.seed,
                                      cfg.loss.itc_temperature);
  run.state = initial_train_state(cfg.seed);
  const std::vector<PreparedSample> samples = prepare_samples(splits.pretrain, *run.model);
  run.result = pretrain(*run.model, samples, cfg, run.state, on_step);
  return run;
}

std::string_view to_string(Task task) {
  switch (task) {
    case Task::kClassification: return "cls";
    case Task::kLocalization: return "loc";
    case Task::kGeneration: return "gen";
    case Task::kVqa: return "vqa";
  }
  return "cls";
}

std::optional<Task> parse_task(std::string_view text) {
  for (Task t : {Task::kClassification, Task::kLocalization, Task::kGeneration, Task::kVqa}) {
    if (to_string(t) == text) return t;
  }
  return std::nullopt;
}

std::optional<double> MetricReport::get(std::string_view key) const {
  for (const auto& [k, v] : values) {
    if (k == key) return v;
  }
  return std::nullopt;
}

namespace {

std::string percent_label(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", fraction * 100.0);
  return buf;
}

}  // namespace

MetricReport run_finetune(const RunConfig& cfg, Task task, const Model& model,
                          const std::vector<SampleRecord>& records, const std::vector<double>& fractions) {
  const SplitRecords splits = split_records(records);
  if (splits.train.empty() || splits.test.empty()) throw ValidationError("fine-tuning needs train and test splits");
  const std::vector<PreparedSample> train = prepare_samples(splits.train, model);
  const std::vector<PreparedSample> test = prepare_samples(splits.test, model);
  const std::uint64_t gk_before = parameter_hash(model.params(), "gk.");
  const Grounding grounding = cfg.ablation.grounding;

  MetricReport report;
  report.run = std::string(to_string(task));
  switch (task) {
    case Task::kClassification: {
      if (fractions.empty()) throw ValidationError("cls needs at least one fraction");
      for (double f : fractions) {
        const ClassificationReport r = finetune_classification(model, train, test, f, cfg.finetune, cfg.seed);
        const std::string tag = "auroc_" + percent_label(f) + "pct";
        report.values.emplace_back(tag, r.mean_auroc);
        report.values.emplace_back("train_samples_" + percent_label(f) + "pct", r.train_samples);
        const AtlasVocab& atlas = AtlasVocab::instance();
        for (int d = 0; d < kNumEntities; ++d) {
          if (const auto& a = r.per_entity[static_cast<std::size_t>(d)]) {
            std::string name = atlas.entity(d);
            std::replace(name.begin(), name.end(), ' ', '_');
            report.values.emplace_back(tag + "." + name, *a);
          }
        }
      }
      break;
    }
    case Task::kLocalization: {
      const LocalizationReport r = localization_probe(model, grounding, train, test, cfg.finetune, cfg.seed);
      report.values.emplace_back("region_accuracy", r.accuracy);
      report.values.emplace_back("map50", r.map50);
      report.values.emplace_back("samples", r.samples);
      break;
    }
    case Task::kGeneration: {
      const GenerationReport r = finetune_generation(model, grounding, train, test, cfg.finetune, cfg.seed);
      report.values.emplace_back("bleu4", r.bleu4);
      report.values.emplace_back("rougeL", r.rouge_l);
      break;
    }
    case Task::kVqa: {
      const VqaReport r = finetune_vqa(model, train, test, cfg.finetune, cfg.seed);
      if (r.open_count + r.closed_count == 0) throw ValidationError("vqa needs question-answer pairs in the test split");
      report.values.emplace_back("open_acc", r.open_acc);
      report.values.emplace_back("closed_acc", r.closed_acc);
      report.values.emplace_back("overall_acc", r.overall_acc);
      report.values.emplace_back("open_count", r.open_count);
      report.values.emplace_back("closed_count", r.closed_count);
      break;
    }
  }
  if (parameter_hash(model.params(), "gk.") != gk_before) {
    throw ValidationError("fine-tuning modified the GK module parameters");
  }
  return report;
}

void write_metric_report(const std::filesystem::path& base, const MetricReport& report) {
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
  std::ofstream txt(base.string() + ".txt");
  nlohmann::ordered_json summary;
  summary["run"] = report.run;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (const auto& [key, value] : report.values) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", value);
    txt << key << " = " << buf << "\n";
    metrics[key] = value;
  }
  summary["metrics"] = metrics;
  std::ofstream json(base.string() + ".json");
  json << summary.dump(2) << "\n";
  if (!txt || !json) throw ValidationError("cannot write report " + base.string());
}

GroundingStats measure_grounding(const Model& model, const std::vector<PreparedSample>& samples) {
  GroundingStats stats;
  double mass = 0.0;
  double baseline = 0.0;
  const GroundingModule& gk = model.gk();
  for (const PreparedSample& s : samples) {
    bool positive = false;
    for (const SentenceSpan& span : s.prompt_spans) positive = positive || !span.regions.empty();
    if (!positive) continue;
    Graph g(false);
    Var v = model.image().encode_patches(g, s.patches, true).v;
    Var z_r = gk.project_regions(g, gk.extract_region_features(g, v, s.pooling, true), true);
    const TokenSequence prompt = truncate_to(s.prompt, model.encoder_config().max_text_len);
    Var p = gk.encode_prompt(g, model.text(), prompt, true);
    FusionTrace trace;
    gk.fuse_local(g, z_r, p, prompt.mask, true, &trace);
    Matrix attention = Matrix::Zero(kNumRegions, p.rows());
    for (const Matrix& a : trace.local_attention) attention += a;
    attention /= static_cast<double>(trace.local_attention.size());
    const double visible = static_cast<double>(prompt.length());
    ++stats.samples;
    for (const SentenceSpan& span : s.prompt_spans) {
      for (int k : span.regions) {
        if (!s.pooling.valid[static_cast<std::size_t>(k)]) continue;
        double m = 0.0;
        double tokens = 0.0;
        for (const SentenceSpan& other : s.prompt_spans) {
          if (std::find(other.regions.begin(), other.regions.end(), k) == other.regions.end()) continue;
          m += attention.row(k).segment(other.begin, other.end - other.begin).sum();
          tokens += other.end - other.begin;
        }
        mass += m;
        baseline += tokens / visible;
        ++stats.region_queries;
      }
    }
  }
  if (stats.region_queries > 0) {
    stats.attention_mass = mass / stats.region_queries;
    stats.uniform_baseline = baseline / stats.region_queries;
    stats.ratio = stats.attention_mass / stats.uniform_baseline;
  }
  return stats;
}

StepLog evaluate_objectives(Model& model, const std::vector<PreparedSample>& samples, const RunConfig& cfg) {
  const int b = cfg.batch_size;
  const int batches = static_cast<int>(samples.size()) / b;
  if (batches == 0) throw ValidationError("fewer samples than one batch");
  TrainState state = initial_train_state(cfg.seed);
  std::optional<EntityEmbeddings> entities;
  if (cfg.ablation.ecls) entities = encode_entities(model.text(), model.vocab());
  StepLog mean;
  for (int k = 0; k < batches; ++k) {
    std::vector<const PreparedSample*> batch;
    for (int i = 0; i < b; ++i) batch.push_back(&samples[static_cast<std::size_t>(k * b + i)]);
    const std::vector<int> negatives = random_derangement(b, state.rng);
    Graph g(false);
    const StepLog l = pretrain_forward(g, model, batch, negatives, cfg, entities ? &*entities : nullptr).log;
    mean.itc += l.itc / batches;
    mean.itm += l.itm / batches;
    mean.lm += l.lm / batches;
    mean.ecls += l.ecls / batches;
    mean.total += l.total / batches;
    mean.itm_accuracy += l.itm_accuracy / batches;
    mean.ecls_samples += l.ecls_samples;
  }
  return mean;
}

const std::array<AblationConfig, 6>& ablation_grid() {
  static const std::array<AblationConfig, 6> grid{{
      {Grounding::kNone, false},
      {Grounding::kNone, true},
      {Grounding::kConcat, false},
      {Grounding::kCrossAttention, false},
      {Grounding::kConcat, true},
      {Grounding::kCrossAttention, true},
  }};
  return grid;
}

std::vector<AblationRow> run_ablation(const RunConfig& cfg, const std::vector<SampleRecord>& records,
                                      const std::function<void(const AblationRow&)>& on_row) {
  std::vector<AblationRow> rows;
  for (const AblationConfig& toggles : ablation_grid()) {
    RunConfig row_cfg = cfg;
    row_cfg.ablation = toggles;
    PretrainRun run = run_pretrain(row_cfg, records);
    AblationRow row{toggles, 0.0, {}};
    row.bleu4 = *run_finetune(row_cfg, Task::kGeneration, *run.model, records).get("bleu4");
    const MetricReport cls = run_finetune(row_cfg, Task::kClassification, *run.model, records, {0.01, 0.10, 1.0});
    row.auroc = {*cls.get("auroc_1pct"), *cls.get("auroc_10pct"), *cls.get("auroc_100pct")};
    rows.push_back(row);
    if (on_row) on_row(row);
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "ECLS,Concat,CA,BLEU4,AUROC_1%,AUROC_10%,AUROC_100%\n";
  char buf[160];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.6f,%.6f,%.6f,%.6f\n", r.toggles.ecls ? 1 : 0,
                  r.toggles.grounding == Grounding::kConcat ? 1 : 0,
                  r.toggles.grounding == Grounding::kCrossAttention ? 1 : 0, r.bleu4, r.auroc[0], r.auroc[1],
                  r.auroc[2]);
    out += buf;
  }
  return out;
}

}  // namespace gkmvlp

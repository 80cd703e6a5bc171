#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gkmvlp/config.hpp"
#include "gkmvlp/downstream.hpp"
#include "gkmvlp/model.hpp"
#include "gkmvlp/pretrain.hpp"

namespace gkmvlp {

struct SplitRecords {
  std::vector<SampleRecord> pretrain;
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> val;
  std::vector<SampleRecord> test;
};

SplitRecords split_records(const std::vector<SampleRecord>& records);

struct PretrainRun {
  std::unique_ptr<Model> model;
  TrainState state;
  PretrainResult result;
};

// Builds the vocabulary over every record, initializes the model from
// cfg.seed and pre-trains on the pretrain split.
PretrainRun run_pretrain(const RunConfig& cfg, const std::vector<SampleRecord>& records,
                         const std::function<void(const StepLog&)>& on_step = {});

enum class Task { kClassification, kLocalization, kGeneration, kVqa };

std::string_view to_string(Task task);
std::optional<Task> parse_task(std::string_view text);

// Ordered metric list of one run.
struct MetricReport {
  std::string run;
  std::vector<std::pair<std::string, double>> values;

  [[nodiscard]] std::optional<double> get(std::string_view key) const;
};

// Fine-tunes on the train split and evaluates on the test split. Throws
// ValidationError if the GK parameters change, or if the task cannot run on
// the given data.
MetricReport run_finetune(const RunConfig& cfg, Task task, const Model& model,
                          const std::vector<SampleRecord>& records, const std::vector<double>& fractions = {1.0});

// Writes `<base>.txt` (one "key = value" per line) and `<base>.json`.
void write_metric_report(const std::filesystem::path& base, const MetricReport& report);

// Attention of region queries on the tokens of the prompt sentences that
// name them, against the share those tokens would get under uniform
// attention. Averaged over fusion layers and heads.
struct GroundingStats {
  double attention_mass = 0.0;
  double uniform_baseline = 0.0;
  double ratio = 0.0;
  int samples = 0;
  int region_queries = 0;
};

GroundingStats measure_grounding(const Model& model, const std::vector<PreparedSample>& samples);

// Mean pre-training objectives over `samples` in batches of cfg.batch_size.
StepLog evaluate_objectives(Model& model, const std::vector<PreparedSample>& samples, const RunConfig& cfg);

struct AblationRow {
  AblationConfig toggles;
  double bleu4 = 0.0;
  std::array<double, 3> auroc{};  // 1%, 10%, 100%
};

// (ecls, grounding) rows in table order.
const std::array<AblationConfig, 6>& ablation_grid();

// Pre-trains and fine-tunes once per grid row. `on_row` sees rows as they
// complete.
std::vector<AblationRow> run_ablation(const RunConfig& cfg, const std::vector<SampleRecord>& records,
                                      const std::function<void(const AblationRow&)>& on_row = {});

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace gkmvlp

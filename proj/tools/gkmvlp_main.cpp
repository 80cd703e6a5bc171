#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gkmvlp/checkpoint.hpp"
#include "gkmvlp/config.hpp"
#include "gkmvlp/errors.hpp"
#include "gkmvlp/harness.hpp"
#include "gkmvlp/manifest.hpp"
#include "gkmvlp/synthgen.hpp"

namespace fs = std::filesystem;
using namespace gkmvlp;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string manifest;
  std::vector<std::string> settings;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "Run configuration file (dotted key = value)");
  cmd->add_option("--seed", flags.seed, "Seed overriding the configuration");
  cmd->add_option("--out", flags.out, "Output directory");
  cmd->add_option("--manifest", flags.manifest, "Manifest file or dataset directory");
  cmd->add_option("--set", flags.settings, "Extra key=value setting, repeatable");
}

RunConfig resolve_config(const CommonFlags& flags, RunConfig base = {}) {
  RunConfig cfg = flags.config.empty() ? base : load_run_config(flags.config, base);
  for (const std::string& s : flags.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got \"" + s + "\"");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (flags.seed) cfg.seed = *flags.seed;
  if (!flags.out.empty()) cfg.out_dir = flags.out;
  if (!flags.manifest.empty()) cfg.manifest = flags.manifest;
  validate(cfg);
  return cfg;
}

std::vector<SampleRecord> load_records(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigError("no manifest given (use --manifest or the manifest key)");
  fs::path path = cfg.manifest;
  if (fs::is_directory(path)) path /= kManifestFileName;
  return load_manifest(path);
}

void print_step(const StepLog& l) {
  std::printf("step %5lld  epoch %3d  lr %.2e  itc %.4f  itm %.4f  lm %.4f  ecls %.4f  total %.4f  itm_acc %.3f\n",
              static_cast<long long>(l.step), l.epoch, l.lr, l.itc, l.itm, l.lm, l.ecls, l.total, l.itm_accuracy);
  std::fflush(stdout);
}

void write_curve(const fs::path& path, const std::vector<StepLog>& curve) {
  std::ofstream out(path);
  out << "step,epoch,lr,itc,itm,lm,ecls,total,itm_accuracy,ecls_samples\n";
  for (const StepLog& l : curve) {
    out << l.step << ',' << l.epoch << ',' << l.lr << ',' << l.itc << ',' << l.itm << ',' << l.lm << ','
        << l.ecls << ',' << l.total << ',' << l.itm_accuracy << ',' << l.ecls_samples << '\n';
  }
}

int cmd_gen_synthetic(SynthConfig synth, const std::string& out, std::optional<std::uint64_t> seed,
                      const std::vector<double>& splits, int workers) {
  if (seed) synth.seed = *seed;
  if (!splits.empty()) {
    if (splits.size() != 4) throw ConfigError("--splits expects four fractions: pretrain train val test");
    for (std::size_t i = 0; i < 4; ++i) synth.split_fractions[i] = splits[i];
  }
  validate(synth);
  const std::vector<SampleRecord> records = generate_dataset(synth, workers);
  const fs::path manifest = save_manifest(out.empty() ? fs::path("data") : fs::path(out), records);
  const auto counts = split_counts(synth.num_samples, synth.split_fractions);
  std::printf("wrote %zu samples to %s (pretrain %d, train %d, val %d, test %d)\n", records.size(),
              manifest.string().c_str(), counts[0], counts[1], counts[2], counts[3]);
  return 0;
}

int cmd_pretrain(const CommonFlags& flags, int log_every) {
  const RunConfig cfg = resolve_config(flags);
  const std::vector<SampleRecord> records = load_records(cfg);
  fs::create_directories(cfg.out_dir);
  PretrainRun run = run_pretrain(cfg, records, [&](const StepLog& l) {
    if (log_every > 0 && (l.step == 1 || l.step % log_every == 0)) print_step(l);
  });
  write_curve(cfg.out_dir / "loss_curve.csv", run.result.curve);
  save_checkpoint(cfg.out_dir / "checkpoint.bin", make_checkpoint(*run.model, cfg, run.state));
  std::ofstream(cfg.out_dir / "run.cfg") << serialize_run_config(cfg);
  if (!run.result.curve.empty()) print_step(run.result.curve.back());
  std::printf("checkpoint: %s\n", (cfg.out_dir / "checkpoint.bin").string().c_str());
  return 0;
}

int cmd_finetune(const CommonFlags& flags, const std::string& checkpoint, const std::string& task_name,
                 const std::vector<double>& percents) {
  const std::optional<Task> task = parse_task(task_name);
  if (!task) throw ConfigError("unknown task \"" + task_name + "\" (expected cls, loc, gen or vqa)");
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  RunConfig cfg = resolve_config(flags, ckpt.config);
  if (cfg.encoder != ckpt.config.encoder || cfg.fusion != ckpt.config.fusion) {
    throw ConfigError("the configuration changes the architecture stored in the checkpoint");
  }
  std::vector<double> fractions;
  for (double p : percents) fractions.push_back(p / 100.0);
  if (fractions.empty()) fractions.push_back(cfg.finetune.fraction);
  if (*task != Task::kClassification && fractions.size() > 1) {
    throw ConfigError("--fraction takes several values only for the cls task");
  }
  if (*task != Task::kClassification) cfg.finetune.fraction = fractions.front();
  const std::unique_ptr<Model> model = restore_model(ckpt);
  const MetricReport report = run_finetune(cfg, *task, *model, load_records(cfg), fractions);
  write_metric_report(cfg.out_dir / report.run, report);
  for (const auto& [k, v] : report.values) std::printf("%s = %.6f\n", k.c_str(), v);
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint, const std::string& split_name) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const RunConfig cfg = resolve_config(flags, ckpt.config);
  const std::optional<Split> split = parse_split(split_name);
  if (!split) throw ConfigError("unknown split \"" + split_name + "\"");
  std::vector<SampleRecord> chosen;
  for (SampleRecord& r : load_records(cfg)) {
    if (r.split == *split) chosen.push_back(std::move(r));
  }
  if (chosen.empty()) throw ValidationError("split " + split_name + " is empty");
  const std::unique_ptr<Model> model = restore_model(ckpt);
  const std::vector<PreparedSample> samples = prepare_samples(chosen, *model);
  const StepLog obj = evaluate_objectives(*model, samples, cfg);
  const GroundingStats grounding = measure_grounding(*model, samples);
  MetricReport report;
  report.run = "eval_" + split_name;
  report.values = {{"itc", obj.itc},
                   {"itm", obj.itm},
                   {"lm", obj.lm},
                   {"ecls", obj.ecls},
                   {"total", obj.total},
                   {"itm_accuracy", obj.itm_accuracy},
                   {"grounding_attention_mass", grounding.attention_mass},
                   {"grounding_uniform_baseline", grounding.uniform_baseline},
                   {"grounding_ratio", grounding.ratio},
                   {"grounding_samples", static_cast<double>(grounding.samples)}};
  write_metric_report(cfg.out_dir / report.run, report);
  for (const auto& [k, v] : report.values) std::printf("%s = %.6f\n", k.c_str(), v);
  return 0;
}

int cmd_ablate(const CommonFlags& flags) {
  const RunConfig cfg = resolve_config(flags);
  const std::vector<SampleRecord> records = load_records(cfg);
  fs::create_directories(cfg.out_dir);
  std::vector<AblationRow> rows = run_ablation(cfg, records, [](const AblationRow& row) {
    std::fprintf(stderr, "row ecls=%s grounding=%s done: bleu4 %.4f\n", row.toggles.ecls ? "on" : "off",
                 std::string(to_string(row.toggles.grounding)).c_str(), row.bleu4);
  });
  const std::string csv = ablation_csv(rows);
  std::ofstream(cfg.out_dir / "ablation.csv") << csv;
  std::fputs(csv.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vision-language pre-training with region-grounded prompts on synthetic chest radiographs"};
  app.require_subcommand(1);

  SynthConfig synth;
  std::string synth_out;
  std::optional<std::uint64_t> synth_seed;
  std::vector<double> synth_splits;
  int synth_workers = 1;
  CLI::App* gen = app.add_subcommand("gen-synthetic", "Write a synthetic manifest and rasters");
  gen->add_option("--out", synth_out, "Target directory")->default_val("data");
  gen->add_option("--seed", synth_seed, "Generator seed");
  gen->add_option("--num-samples", synth.num_samples)->capture_default_str();
  gen->add_option("--image-size", synth.image_size)->capture_default_str();
  gen->add_option("--patch-size", synth.patch_size)->capture_default_str();
  gen->add_option("--min-entities", synth.min_entities_per_sample)->capture_default_str();
  gen->add_option("--max-entities", synth.max_entities_per_sample)->capture_default_str();
  gen->add_option("--prob-normal", synth.prob_normal)->capture_default_str();
  gen->add_option("--noise", synth.noise_std)->capture_default_str();
  gen->add_option("--splits", synth_splits, "Fractions for pretrain train val test")->expected(4);
  gen->add_option("--workers", synth_workers)->capture_default_str();

  CommonFlags pre_flags;
  int log_every = 50;
  CLI::App* pre = app.add_subcommand("pretrain", "Pre-train and write a checkpoint");
  add_common(pre, pre_flags);
  pre->add_option("--log-every", log_every, "Print every n-th step")->capture_default_str();

  CommonFlags ft_flags;
  std::string ft_ckpt;
  std::string ft_task;
  std::vector<double> ft_fractions;
  CLI::App* ft = app.add_subcommand("finetune", "Fine-tune on a downstream task and write a metric report");
  add_common(ft, ft_flags);
  ft->add_option("--checkpoint", ft_ckpt)->required();
  ft->add_option("--task", ft_task)->required()->check(CLI::IsMember({"cls", "loc", "gen", "vqa"}));
  ft->add_option("--fraction", ft_fractions, "Training data percentage (1, 10, 100); repeatable for cls")
      ->check(CLI::Range(0.0, 100.0).description("percent in (0, 100]"));

  CommonFlags ev_flags;
  std::string ev_ckpt;
  std::string ev_split = "test";
  CLI::App* ev = app.add_subcommand("eval", "Report pre-training objectives and grounding on one split");
  add_common(ev, ev_flags);
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--split", ev_split)->capture_default_str();

  CommonFlags ab_flags;
  CLI::App* ab = app.add_subcommand("ablate", "Run the grounding and entity-classification ablation grid");
  add_common(ab, ab_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_synthetic(synth, synth_out, synth_seed, synth_splits, synth_workers);
    if (*pre) return cmd_pretrain(pre_flags, log_every);
    if (*ft) return cmd_finetune(ft_flags, ft_ckpt, ft_task, ft_fractions);
    if (*ev) return cmd_eval(ev_flags, ev_ckpt, ev_split);
    if (*ab) return cmd_ablate(ab_flags);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

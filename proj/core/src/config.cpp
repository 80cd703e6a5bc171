#include "gkmvlp/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "gkmvlp/errors.hpp"

namespace gkmvlp {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("invalid value for " + std::string(key) + ": \"" + std::string(value) + "\"");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw ConfigError("invalid value for " + std::string(key) + ": \"" + std::string(value) + "\"");
}

Grounding parse_grounding(std::string_view value) {
  if (value == "none") return Grounding::kNone;
  if (value == "concat") return Grounding::kConcat;
  if (value == "cross_attention" || value == "ca") return Grounding::kCrossAttention;
  throw ConfigError("invalid value for ablation.grounding: \"" + std::string(value) + "\"");
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field int_field(const char* key, T RunConfig::*outer_member, int T::*member) {
  return {key,
          [=](RunConfig& c, std::string_view v) { (c.*outer_member).*member = parse_number<int>(key, v); },
          [=](const RunConfig& c) { return std::to_string((c.*outer_member).*member); }};
}

template <typename T>
Field double_field(const char* key, T RunConfig::*outer_member, double T::*member) {
  return {key,
          [=](RunConfig& c, std::string_view v) { (c.*outer_member).*member = parse_number<double>(key, v); },
          [=](const RunConfig& c) { return format_double((c.*outer_member).*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"paths.manifest", [](RunConfig& c, std::string_view v) { c.manifest = std::string(v); },
                 [](const RunConfig& c) { return c.manifest.string(); }});
    f.push_back({"paths.out", [](RunConfig& c, std::string_view v) { c.out_dir = std::string(v); },
                 [](const RunConfig& c) { return c.out_dir.string(); }});
    f.push_back({"seed",
                 [](RunConfig& c, std::string_view v) { c.seed = parse_number<std::uint64_t>("seed", v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    f.push_back({"train.batch_size",
                 [](RunConfig& c, std::string_view v) { c.batch_size = parse_number<int>("train.batch_size", v); },
                 [](const RunConfig& c) { return std::to_string(c.batch_size); }});
    f.push_back({"train.epochs",
                 [](RunConfig& c, std::string_view v) { c.epochs = parse_number<int>("train.epochs", v); },
                 [](const RunConfig& c) { return std::to_string(c.epochs); }});
    f.push_back({"train.max_steps",
                 [](RunConfig& c, std::string_view v) { c.max_steps = parse_number<int>("train.max_steps", v); },
                 [](const RunConfig& c) { return std::to_string(c.max_steps); }});

    using E = EncoderConfig;
    f.push_back(int_field("encoder.image_size", &RunConfig::encoder, &E::image_size));
    f.push_back(int_field("encoder.patch_size", &RunConfig::encoder, &E::patch_size));
    f.push_back(int_field("encoder.hidden_dim", &RunConfig::encoder, &E::hidden_dim));
    f.push_back(int_field("encoder.projection_dim", &RunConfig::encoder, &E::projection_dim));
    f.push_back(int_field("encoder.region_dim", &RunConfig::encoder, &E::region_dim));
    f.push_back(int_field("encoder.prompt_dim", &RunConfig::encoder, &E::prompt_dim));
    f.push_back(int_field("encoder.num_layers", &RunConfig::encoder, &E::num_layers));
    f.push_back(int_field("encoder.num_heads", &RunConfig::encoder, &E::num_heads));
    f.push_back(int_field("encoder.ffn_dim", &RunConfig::encoder, &E::ffn_dim));
    f.push_back(int_field("encoder.max_text_len", &RunConfig::encoder, &E::max_text_len));

    using F = FusionConfig;
    f.push_back(int_field("fusion.num_layers", &RunConfig::fusion, &F::num_layers));
    f.push_back(int_field("fusion.num_heads", &RunConfig::fusion, &F::num_heads));
    f.push_back(double_field("fusion.temperature", &RunConfig::fusion, &F::temperature));

    using L = LossWeights;
    f.push_back(double_field("loss.lambda_itm", &RunConfig::loss, &L::itm));
    f.push_back(double_field("loss.lambda_lm", &RunConfig::loss, &L::lm));
    f.push_back(double_field("loss.lambda_ecls", &RunConfig::loss, &L::ecls));
    f.push_back(double_field("loss.itc_temperature", &RunConfig::loss, &L::itc_temperature));

    using O = OptimizerConfig;
    f.push_back(double_field("optimizer.lr", &RunConfig::optimizer, &O::lr));
    f.push_back(double_field("optimizer.weight_decay", &RunConfig::optimizer, &O::weight_decay));
    f.push_back(int_field("optimizer.warmup_steps", &RunConfig::optimizer, &O::warmup_steps));
    f.push_back(double_field("optimizer.decay_rate", &RunConfig::optimizer, &O::decay_rate));
    f.push_back(double_field("optimizer.beta1", &RunConfig::optimizer, &O::beta1));
    f.push_back(double_field("optimizer.beta2", &RunConfig::optimizer, &O::beta2));
    f.push_back(double_field("optimizer.eps", &RunConfig::optimizer, &O::eps));

    f.push_back({"ablation.grounding",
                 [](RunConfig& c, std::string_view v) { c.ablation.grounding = parse_grounding(v); },
                 [](const RunConfig& c) { return std::string(to_string(c.ablation.grounding)); }});
    f.push_back({"ablation.ecls",
                 [](RunConfig& c, std::string_view v) { c.ablation.ecls = parse_bool("ablation.ecls", v); },
                 [](const RunConfig& c) { return std::string(c.ablation.ecls ? "on" : "off"); }});

    using T = FinetuneConfig;
    f.push_back(int_field("finetune.epochs", &RunConfig::finetune, &T::epochs));
    f.push_back(double_field("finetune.lr", &RunConfig::finetune, &T::lr));
    f.push_back(int_field("finetune.batch_size", &RunConfig::finetune, &T::batch_size));
    f.push_back(double_field("finetune.fraction", &RunConfig::finetune, &T::fraction));
    f.push_back(int_field("finetune.max_decode_len", &RunConfig::finetune, &T::max_decode_len));
    return f;
  }();
  return table;
}

}  // namespace

std::string_view to_string(Grounding g) {
  switch (g) {
    case Grounding::kNone: return "none";
    case Grounding::kConcat: return "concat";
    case Grounding::kCrossAttention: return "cross_attention";
  }
  return "none";
}

void validate(const EncoderConfig& c) {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("encoder.") + name + " must be positive");
  };
  positive(c.image_size, "image_size");
  positive(c.patch_size, "patch_size");
  positive(c.hidden_dim, "hidden_dim");
  positive(c.projection_dim, "projection_dim");
  positive(c.region_dim, "region_dim");
  positive(c.prompt_dim, "prompt_dim");
  positive(c.num_layers, "num_layers");
  positive(c.num_heads, "num_heads");
  positive(c.ffn_dim, "ffn_dim");
  positive(c.max_text_len, "max_text_len");
  if (c.image_size % c.patch_size != 0) throw ConfigError("encoder.image_size must be divisible by patch_size");
  if (c.hidden_dim % c.num_heads != 0) throw ConfigError("encoder.hidden_dim must be divisible by num_heads");
  if (c.max_text_len < 2) throw ConfigError("encoder.max_text_len must be at least 2");
}

void validate(const FusionConfig& c) {
  if (c.num_layers <= 0) throw ConfigError("fusion.num_layers must be positive");
  if (c.num_heads <= 0) throw ConfigError("fusion.num_heads must be positive");
  if (!(c.temperature > 0.0)) throw ConfigError("fusion.temperature must be positive");
}

void validate(const RunConfig& c) {
  validate(c.encoder);
  validate(c.fusion);
  if (c.encoder.prompt_dim % c.fusion.num_heads != 0 || c.encoder.hidden_dim % c.fusion.num_heads != 0) {
    throw ConfigError("fusion.num_heads must divide encoder.prompt_dim and encoder.hidden_dim");
  }
  if (c.loss.itm < 0.0 || c.loss.lm < 0.0 || c.loss.ecls < 0.0) {
    throw ConfigError("loss weights must be nonnegative");
  }
  if (!(c.loss.itc_temperature > 0.0)) throw ConfigError("loss.itc_temperature must be positive");
  if (!(c.optimizer.lr > 0.0)) throw ConfigError("optimizer.lr must be positive");
  if (c.optimizer.weight_decay < 0.0) throw ConfigError("optimizer.weight_decay must be nonnegative");
  if (c.optimizer.warmup_steps < 0) throw ConfigError("optimizer.warmup_steps must be nonnegative");
  if (!(c.optimizer.decay_rate > 0.0) || c.optimizer.decay_rate > 1.0) {
    throw ConfigError("optimizer.decay_rate must be in (0, 1]");
  }
  if (c.batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
  if (c.epochs <= 0) throw ConfigError("train.epochs must be positive");
  if (c.max_steps < 0) throw ConfigError("train.max_steps must be nonnegative");
  if (c.finetune.epochs <= 0) throw ConfigError("finetune.epochs must be positive");
  if (!(c.finetune.lr > 0.0)) throw ConfigError("finetune.lr must be positive");
  if (c.finetune.batch_size <= 0) throw ConfigError("finetune.batch_size must be positive");
  if (!(c.finetune.fraction > 0.0) || c.finetune.fraction > 1.0) {
    throw ConfigError("finetune.fraction must be in (0, 1]");
  }
  if (c.finetune.max_decode_len < 1) throw ConfigError("finetune.max_decode_len must be at least 1");
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key: " + std::string(key));
}

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate(base);
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str(), std::move(base));
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(cfg);
    out += '\n';
  }
  return out;
}

}  // namespace gkmvlp

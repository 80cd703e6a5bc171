#include "gkmvlp/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "gkmvlp/errors.hpp"

namespace gkmvlp {
namespace {

constexpr char kMagic[8] = {'G', 'K', 'M', 'V', 'L', 'P', 'C', 'K'};
constexpr std::uint64_t kMaxStringBytes = std::uint64_t{1} << 30;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  template <typename T>
  T pod(const char* what) {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
    return v;
  }
  std::string str(const char* what) {
    const auto n = pod<std::uint64_t>(what);
    if (n > kMaxStringBytes) throw CheckpointError(std::string("corrupt length for ") + what);
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
    return s;
  }
  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (!in_) throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  }

 private:
  std::istream& in_;
};

}  // namespace

Checkpoint make_checkpoint(const Model& model, const RunConfig& cfg, const TrainState& state) {
  Checkpoint c;
  c.config = cfg;
  c.config.encoder = model.encoder_config();
  c.config.fusion = model.fusion_config();
  c.vocab_words = model.vocab().words();
  for (const Parameter* p : model.params().all()) c.tensors.emplace_back(p->name, p->value);
  std::ostringstream rng;
  rng << state.rng;
  c.rng_state = rng.str();
  c.step = state.step;
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    Writer w(out);
    out.write(kMagic, sizeof(kMagic));
    w.pod<std::uint32_t>(ckpt.version);
    w.str(serialize_run_config(ckpt.config));
    w.pod<std::uint64_t>(ckpt.vocab_words.size());
    for (const std::string& word : ckpt.vocab_words) w.str(word);
    w.pod<std::uint64_t>(ckpt.tensors.size());
    for (const auto& [name, value] : ckpt.tensors) {
      w.str(name);
      w.pod<std::int64_t>(value.rows());
      w.pod<std::int64_t>(value.cols());
      out.write(reinterpret_cast<const char*>(value.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(value.size())));
    }
    w.str(ckpt.rng_state);
    w.pod<std::int64_t>(ckpt.step);
    out.write(kMagic, sizeof(kMagic));  // trailer
    if (!out) throw CheckpointError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(in);
  char magic[sizeof(kMagic)];
  r.bytes(magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CheckpointError(path.string() + " is not a checkpoint");
  Checkpoint c;
  c.version = r.pod<std::uint32_t>("version");
  if (c.version != kCheckpointVersion) {
    throw CheckpointError("incompatible checkpoint version " + std::to_string(c.version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  try {
    c.config = parse_run_config(r.str("config"));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
  const auto words = r.pod<std::uint64_t>("vocabulary size");
  for (std::uint64_t i = 0; i < words; ++i) c.vocab_words.push_back(r.str("vocabulary"));
  const auto tensors = r.pod<std::uint64_t>("tensor count");
  for (std::uint64_t i = 0; i < tensors; ++i) {
    std::string name = r.str("tensor name");
    const auto rows = r.pod<std::int64_t>("tensor shape");
    const auto cols = r.pod<std::int64_t>("tensor shape");
    if (rows < 0 || cols < 0 || rows * cols > (std::int64_t{1} << 28)) {
      throw CheckpointError("corrupt shape for tensor " + name);
    }
    Matrix value(rows, cols);
    r.bytes(reinterpret_cast<char*>(value.data()), sizeof(double) * static_cast<std::size_t>(value.size()),
            name.c_str());
    c.tensors.emplace_back(std::move(name), std::move(value));
  }
  c.rng_state = r.str("rng state");
  c.step = r.pod<std::int64_t>("step");
  r.bytes(magic, sizeof(magic), "trailer");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CheckpointError("checkpoint trailer is corrupt");
  return c;
}

std::unique_ptr<Model> restore_model(const Checkpoint& ckpt) {
  auto model = std::make_unique<Model>(ckpt.config.encoder, ckpt.config.fusion, Vocabulary(ckpt.vocab_words),
                                       ckpt.config.seed, ckpt.config.loss.itc_temperature);
  ParameterStore& store = model->params();
  if (store.size() != ckpt.tensors.size()) throw CheckpointError("checkpoint tensor count does not match the model");
  for (const auto& [name, value] : ckpt.tensors) {
    Parameter* p = store.find(name);
    if (p == nullptr) throw CheckpointError("checkpoint tensor " + name + " has no model parameter");
    if (p->value.rows() != value.rows() || p->value.cols() != value.cols()) {
      throw CheckpointError("checkpoint tensor " + name + " has the wrong shape");
    }
    p->value = value;
  }
  return model;
}

TrainState restore_train_state(const Checkpoint& ckpt) {
  TrainState s;
  std::istringstream in(ckpt.rng_state);
  in >> s.rng;
  if (!in) throw CheckpointError("checkpoint rng state is corrupt");
  s.step = ckpt.step;
  return s;
}

}  // namespace gkmvlp

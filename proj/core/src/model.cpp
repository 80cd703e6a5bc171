#include "gkmvlp/model.hpp"

#include <cmath>
#include <cstring>

#include "gkmvlp/errors.hpp"
#include "gkmvlp/synthgen.hpp"

namespace gkmvlp {
namespace {

std::mt19937_64 init_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6b6d766cu};
  return std::mt19937_64(seq);
}

}  // namespace

Model::Model(const EncoderConfig& encoder, const FusionConfig& fusion, Vocabulary vocab, std::uint64_t init_seed,
             double itc_temperature)
    : encoder_cfg_(encoder),
      fusion_cfg_(fusion),
      vocab_(std::move(vocab)),
      init_seed_(init_seed),
      itc_temperature_(itc_temperature) {
  validate(encoder_cfg_);
  validate(fusion_cfg_);
  if (!(itc_temperature > 0.0)) throw ConfigError("loss.itc_temperature must be positive");
  auto rng = init_rng(init_seed);
  image_ = ImageEncoder::create(params_, encoder_cfg_, rng);
  text_ = TextEncoder::create(params_, encoder_cfg_, vocab_.size(), rng);
  xmodal_ = CrossModalStack::create(params_, encoder_cfg_, vocab_.size(), rng);
  gk_ = GroundingModule::create(params_, encoder_cfg_, fusion_cfg_, rng);
  log_temp_ = &params_.add_constant("itc.log_temperature", 1, 1, std::log(itc_temperature));
}

std::unique_ptr<Model> Model::clone() const {
  auto copy = std::make_unique<Model>(encoder_cfg_, fusion_cfg_, vocab_, init_seed_, itc_temperature_);
  copy->params_.copy_values_from(params_);
  return copy;
}

std::uint64_t parameter_hash(const ParameterStore& store, std::string_view prefix) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const Parameter* p : store.with_prefix(prefix)) {
    mix(p->name.data(), p->name.size());
    const std::int64_t shape[2] = {p->value.rows(), p->value.cols()};
    mix(shape, sizeof(shape));
    mix(p->value.data(), sizeof(double) * static_cast<std::size_t>(p->value.size()));
  }
  return h;
}

std::vector<std::string> domain_lexicon() {
  const AtlasVocab& atlas = AtlasVocab::instance();
  std::vector<std::string> out;
  for (int k = 0; k < kNumRegions; ++k) out.push_back(atlas.region(k));
  for (int d = 0; d < kNumEntities; ++d) {
    out.push_back(atlas.negative_phrase(d));
    out.push_back("Is " + atlas.entity(d) + " present? Where is " + atlas.entity(d) + "?");
    out.push_back(atlas.entity(d) + " is located at");
  }
  out.emplace_back(kNoFindingSentence);
  for (const char* s : filler_sentences()) out.emplace_back(s);
  return out;
}

Vocabulary build_vocabulary(const std::vector<SampleRecord>& records) {
  std::vector<std::string> corpus;
  for (const SampleRecord& r : records) {
    corpus.push_back(r.report);
    for (const std::string& s : r.prompt.rendered) corpus.push_back(s);
    for (const QAPair& qa : r.qa_pairs) corpus.push_back(qa.question);
  }
  for (std::string& s : domain_lexicon()) corpus.push_back(std::move(s));
  return build_tokenizer(corpus);
}

PreparedSample prepare_sample(const SampleRecord& record, const Model& model) {
  const EncoderConfig& cfg = model.encoder_config();
  const Vocabulary& vocab = model.vocab();
  const int max_len = cfg.max_text_len;
  PreparedSample s;
  s.sample_id = record.sample_id;
  if (record.image.rows() != cfg.image_size || record.image.cols() != cfg.image_size) {
    throw ConfigError(record.sample_id + ": image size does not match encoder.image_size");
  }
  s.patches = patchify(record.image, cfg.patch_size);
  s.report = vocab.encode(record.report, kCls, max_len);
  s.itm_input = vocab.encode(record.report, kEnc, max_len);
  const std::vector<int> words = vocab.encode_words(record.report);
  // [BOS] w1..wm predicts w1..wm followed by [EOS], or by w(m+1) when the
  // report was cut.
  s.decoder_input = vocab.encode(record.report, kBos, max_len);
  const std::size_t body = s.decoder_input.ids.size() - 1;
  s.decoder_targets.assign(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(body));
  s.decoder_targets.push_back(body < words.size() ? words[body] : static_cast<int>(kEos));

  s.prompt = vocab.encode(render_prompt_text(record.prompt), kCls, max_len);
  std::vector<const EntityTriple*> present;
  for (const EntityTriple& t : record.prompt.triples) {
    if (t.exist) present.push_back(&t);
  }
  int pos = 1;
  const auto sentences = prompt_sentences(record.prompt);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const int n = static_cast<int>(vocab.encode_words(sentences[i]).size());
    SentenceSpan span{pos, std::min(pos + n, static_cast<int>(s.prompt.size())), {}};
    if (i < present.size()) span.regions = present[i]->regions;
    if (span.begin < span.end) s.prompt_spans.push_back(std::move(span));
    pos += n + 1;  // the "." separator
  }
  s.pooling = region_pooling(record.region_boxes, cfg);
  s.labels = record.label_vector;
  s.boxes = record.region_boxes;
  for (const QAPair& qa : record.qa_pairs) {
    s.questions.push_back({vocab.encode(qa.question, kEnc, max_len), qa.answer, qa.is_closed()});
  }
  if (present.size() == 1) s.planted_region = present.front()->regions.front();
  return s;
}

std::vector<PreparedSample> prepare_samples(const std::vector<SampleRecord>& records, const Model& model) {
  std::vector<PreparedSample> out;
  out.reserve(records.size());
  for (const SampleRecord& r : records) out.push_back(prepare_sample(r, model));
  return out;
}

TokenSequence neutral_prompt(const Model& model) {
  return model.vocab().encode(kNoFindingSentence, kCls, model.encoder_config().max_text_len);
}

Var fused_memory(Graph& g, const Model& model, Grounding grounding, Var v, const RegionPooling& pooling,
                 const TokenSequence& prompt, bool frozen_gk, FusionTrace* trace) {
  if (grounding == Grounding::kNone) return v;
  const GroundingModule& gk = model.gk();
  Var z_r = gk.project_regions(g, gk.extract_region_features(g, v, pooling, frozen_gk), frozen_gk);
  Var p = gk.encode_prompt(g, model.text(), prompt, frozen_gk);
  const TokenSequence shown = truncate_to(prompt, model.encoder_config().max_text_len);
  Var z_local = grounding == Grounding::kConcat ? gk.fuse_concat(g, z_r, p, shown.mask, frozen_gk)
                                                : gk.fuse_local(g, z_r, p, shown.mask, frozen_gk, trace);
  return gk.fuse_global(g, v, z_local, frozen_gk);
}

}  // namespace gkmvlp

#include "gkmvlp/record.hpp"

#include <algorithm>

#include "gkmvlp/errors.hpp"

namespace gkmvlp {

double iou(const Box& a, const Box& b) {
  const int ix = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const int iy = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = static_cast<double>(ix) * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kPretrain: return "pretrain";
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "pretrain";
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "pretrain") return Split::kPretrain;
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  return std::nullopt;
}

const std::string& answer_text(int answer) {
  static const std::string yes = "yes";
  static const std::string no = "no";
  if (answer == kAnswerYes) return yes;
  if (answer == kAnswerNo) return no;
  return AtlasVocab::instance().region(answer - 2);
}

std::optional<int> parse_answer(std::string_view text) {
  if (text == "yes") return kAnswerYes;
  if (text == "no") return kAnswerNo;
  if (auto r = AtlasVocab::instance().region_index(text)) return answer_for_region(*r);
  return std::nullopt;
}

bool operator==(const SampleRecord& a, const SampleRecord& b) {
  return a.sample_id == b.sample_id && a.image.rows() == b.image.rows() &&
         a.image.cols() == b.image.cols() && a.image == b.image && a.report == b.report &&
         a.prompt == b.prompt && a.region_boxes == b.region_boxes &&
         a.label_vector == b.label_vector && a.qa_pairs == b.qa_pairs && a.split == b.split;
}

void validate_record(const SampleRecord& record) {
  const auto& atlas = AtlasVocab::instance();
  const std::string where = "sample " + record.sample_id + ": ";
  if (record.sample_id.empty()) throw ValidationError("record with empty sample_id");
  if (record.image.size() == 0) throw ValidationError(where + "image: empty raster");
  if (record.image.minCoeff() < 0.0 || record.image.maxCoeff() > 1.0) {
    throw ValidationError(where + "image: intensities outside [0,1]");
  }
  const LabelVector expected = entity_label_vector(record.prompt);
  for (int d = 0; d < kNumEntities; ++d) {
    if (expected[static_cast<std::size_t>(d)] != record.label_vector[static_cast<std::size_t>(d)]) {
      throw ValidationError(where + "labels: label for " + atlas.entity(d) +
                            " disagrees with prompt existence");
    }
  }
  const int w = static_cast<int>(record.image.cols());
  const int h = static_cast<int>(record.image.rows());
  for (int k = 0; k < kNumRegions; ++k) {
    const Box& b = record.region_boxes[static_cast<std::size_t>(k)];
    if (b.x0 < 0 || b.y0 < 0 || b.x1 > w || b.y1 > h || b.x0 > b.x1 || b.y0 > b.y1) {
      throw ValidationError(where + "boxes: box for " + atlas.region(k) + " outside image bounds");
    }
  }
  for (const QAPair& qa : record.qa_pairs) {
    if (qa.answer < 0 || qa.answer >= kNumAnswers) {
      throw ValidationError(where + "qa: answer outside vocabulary for \"" + qa.question + "\"");
    }
  }
  std::size_t positives = 0;
  for (const EntityTriple& t : record.prompt.triples) positives += t.exist ? 1 : 0;
  if (record.prompt.rendered.size() != positives) {
    throw ValidationError(where + "entities: rendered sentences do not match present entities");
  }
}

}  // namespace gkmvlp

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gkmvlp/prompt.hpp"
#include "gkmvlp/raster.hpp"

namespace gkmvlp {

// Axis-aligned box in pixels, half-open: [x0, x1) x [y0, y1).
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  [[nodiscard]] int width() const { return x1 - x0; }
  [[nodiscard]] int height() const { return y1 - y0; }
  [[nodiscard]] double area() const { return static_cast<double>(width()) * height(); }
  [[nodiscard]] bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }

  friend bool operator==(const Box&, const Box&) = default;
};

double iou(const Box& a, const Box& b);

enum class Split { kPretrain, kTrain, kVal, kTest };

std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view text);

// Answer classes for visual question answering: yes, no, then one class per
// atlas region in atlas order.
inline constexpr int kAnswerYes = 0;
inline constexpr int kAnswerNo = 1;
inline constexpr int kNumAnswers = 2 + kNumRegions;
inline constexpr int answer_for_region(int region) { return 2 + region; }
const std::string& answer_text(int answer);
std::optional<int> parse_answer(std::string_view text);

struct QAPair {
  std::string question;
  int answer = 0;

  [[nodiscard]] bool is_closed() const { return answer == kAnswerYes || answer == kAnswerNo; }
  friend bool operator==(const QAPair&, const QAPair&) = default;
};

struct SampleRecord {
  std::string sample_id;
  Image image;
  std::string report;
  KnowledgePrompt prompt;
  std::array<Box, kNumRegions> region_boxes{};
  LabelVector label_vector{};
  std::vector<QAPair> qa_pairs;
  Split split = Split::kPretrain;

  friend bool operator==(const SampleRecord& a, const SampleRecord& b);
};

// Throws ValidationError naming the sample and the offending field.
void validate_record(const SampleRecord& record);

}  // namespace gkmvlp

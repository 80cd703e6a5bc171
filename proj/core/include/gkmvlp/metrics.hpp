#pragma once

#include <span>
#include <string>
#include <vector>

namespace gkmvlp {

// Probability that a random positive outranks a random negative, ties
// counted one half. Throws UndefinedMetricError unless both classes occur.
double auroc(std::span<const double> scores, const std::vector<bool>& labels);

// All-point interpolated average precision of ranked detections. Detections
// with equal confidence are ranked as one group, so the result does not
// depend on input order.
double average_precision(std::span<const double> confidences, const std::vector<bool>& true_positive,
                         std::size_t num_ground_truth);

// Corpus BLEU with uniform 1-4 gram weights and the brevity penalty.
double corpus_bleu4(const std::vector<std::vector<std::string>>& candidates,
                    const std::vector<std::vector<std::string>>& references);

// LCS F-measure (1 + b2) R P / (R + b2 P).
double rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
               double beta_squared = 1.2);

struct TextScores {
  double bleu4 = 0.0;
  double rouge_l = 0.0;  // mean over pairs
};

// Both sides are tokenized with split_words.
TextScores text_metrics(const std::vector<std::string>& candidates, const std::vector<std::string>& references);

}  // namespace gkmvlp

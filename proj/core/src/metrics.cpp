#include "gkmvlp/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>

#include "gkmvlp/errors.hpp"
#include "gkmvlp/tokenizer.hpp"

namespace gkmvlp {

double auroc(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("auroc: score and label counts differ");
  const std::size_t n = scores.size();
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw UndefinedMetricError("auroc needs both positive and negative labels");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with average ranks for ties.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) rank_sum += avg_rank;
    }
    i = j;
  }
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double average_precision(std::span<const double> confidences, const std::vector<bool>& true_positive,
                         std::size_t num_ground_truth) {
  if (confidences.size() != true_positive.size()) throw ShapeError("average_precision: length mismatch");
  if (num_ground_truth == 0) throw UndefinedMetricError("average_precision needs ground truth");
  const std::size_t n = confidences.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return confidences[a] > confidences[b]; });
  std::vector<double> recall;
  std::vector<double> precision;
  double tp = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && confidences[order[j]] == confidences[order[i]]) {
      if (true_positive[order[j]]) tp += 1.0;
      ++j;
    }
    recall.push_back(tp / static_cast<double>(num_ground_truth));
    precision.push_back(tp / static_cast<double>(j));
    i = j;
  }
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

namespace {

using NGramCounts = std::map<std::vector<std::string>, int>;

NGramCounts ngrams(const std::vector<std::string>& words, std::size_t n) {
  NGramCounts out;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++out[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                   words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

}  // namespace

double corpus_bleu4(const std::vector<std::vector<std::string>>& candidates,
                    const std::vector<std::vector<std::string>>& references) {
  if (candidates.size() != references.size()) throw ShapeError("bleu: candidate and reference counts differ");
  std::array<double, 4> matched{};
  std::array<double, 4> total{};
  double cand_len = 0.0;
  double ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += static_cast<double>(candidates[i].size());
    ref_len += static_cast<double>(references[i].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const NGramCounts c = ngrams(candidates[i], n);
      const NGramCounts r = ngrams(references[i], n);
      for (const auto& [gram, count] : c) {
        auto it = r.find(gram);
        if (it != r.end()) matched[n - 1] += std::min(count, it->second);
        total[n - 1] += count;
      }
    }
  }
  if (cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (matched[n] == 0.0) return 0.0;
    log_sum += std::log(matched[n] / total[n]);
  }
  const double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / 4.0);
}

double rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
               double beta_squared) {
  if (candidate.empty() || reference.empty()) return 0.0;
  std::vector<std::vector<int>> lcs(candidate.size() + 1, std::vector<int>(reference.size() + 1, 0));
  for (std::size_t i = 1; i <= candidate.size(); ++i) {
    for (std::size_t j = 1; j <= reference.size(); ++j) {
      lcs[i][j] = candidate[i - 1] == reference[j - 1] ? lcs[i - 1][j - 1] + 1
                                                      : std::max(lcs[i - 1][j], lcs[i][j - 1]);
    }
  }
  const double l = lcs[candidate.size()][reference.size()];
  if (l == 0.0) return 0.0;
  const double r = l / static_cast<double>(reference.size());
  const double p = l / static_cast<double>(candidate.size());
  return (1.0 + beta_squared) * r * p / (r + beta_squared * p);
}

TextScores text_metrics(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  if (candidates.size() != references.size()) throw ShapeError("text_metrics: list lengths differ");
  std::vector<std::vector<std::string>> cand;
  std::vector<std::vector<std::string>> ref;
  double rouge = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand.push_back(split_words(candidates[i]));
    ref.push_back(split_words(references[i]));
    rouge += rouge_l(cand.back(), ref.back());
  }
  TextScores out;
  out.bleu4 = corpus_bleu4(cand, ref);
  out.rouge_l = candidates.empty() ? 0.0 : rouge / static_cast<double>(candidates.size());
  return out;
}

}  // namespace gkmvlp

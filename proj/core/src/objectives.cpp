#include "gkmvlp/objectives.hpp"

#include <algorithm>
#include <numeric>

#include "gkmvlp/errors.hpp"
#include "gkmvlp/ops.hpp"

namespace gkmvlp {

Var itc_loss(Var z_img, Var z_txt, Var temperature) {
  const auto b = z_img.rows();
  if (b == 0) throw ValidationError("itc_loss needs a nonempty batch");
  if (z_txt.rows() != b || z_txt.cols() != z_img.cols()) throw ShapeError("itc_loss: embedding shapes differ");
  std::vector<int> diag(static_cast<std::size_t>(b));
  std::iota(diag.begin(), diag.end(), 0);
  Var i2t = ops::div_scalar(ops::matmul_nt(z_img, z_txt), temperature);
  Var t2i = ops::transpose(i2t);
  return ops::scale(ops::add(ops::cross_entropy(i2t, diag), ops::cross_entropy(t2i, diag)), 0.5);
}

Var itm_loss(Var logits, const std::vector<bool>& is_match) {
  if (logits.rows() == 0) throw ValidationError("itm_loss needs a nonempty batch");
  if (logits.cols() != 2 || logits.rows() != static_cast<Eigen::Index>(is_match.size())) {
    throw ShapeError("itm_loss: expected B x 2 logits and B labels");
  }
  std::vector<int> targets;
  for (bool m : is_match) targets.push_back(m ? 0 : 1);
  return ops::cross_entropy(logits, targets);
}

Var lm_loss(Var logits, std::span<const int> targets, const std::vector<bool>& mask) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows() || mask.size() != targets.size()) {
    throw ShapeError("lm_loss: logits, targets and mask lengths differ");
  }
  std::vector<double> weights;
  for (bool m : mask) weights.push_back(m ? 1.0 : 0.0);
  return ops::cross_entropy(logits, targets, std::span<const double>(weights));
}

Var total_loss(Var itc, Var itm, Var lm, Var ecls, const LossWeights& w) {
  Var out = ops::add(itc, ops::scale(itm, w.itm));
  out = ops::add(out, ops::scale(lm, w.lm));
  return ops::add(out, ops::scale(ecls, w.ecls));
}

double total_loss(double itc, double itm, double lm, double ecls, const LossWeights& w) {
  return itc + w.itm * itm + w.lm * lm + w.ecls * ecls;
}

std::vector<int> random_derangement(int n, std::mt19937_64& rng) {
  if (n < 2) throw ValidationError("negative pairs need a batch of at least 2");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  // Rejection sampling keeps the derangement uniform; the acceptance rate
  // tends to 1/e.
  for (;;) {
    for (int i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(rng))]);
    }
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) ok = perm[static_cast<std::size_t>(i)] != i;
    if (ok) return perm;
  }
}

}  // namespace gkmvlp

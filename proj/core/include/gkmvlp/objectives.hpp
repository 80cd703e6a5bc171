#pragma once

#include <random>
#include <span>
#include <vector>

#include "gkmvlp/config.hpp"
#include "gkmvlp/tensor.hpp"

namespace gkmvlp {

// Symmetric in-batch InfoNCE over cosine logits z_i z_t^T / temperature.
// Rows of both inputs must be unit norm; `temperature` is 1 x 1.
Var itc_loss(Var z_img, Var z_txt, Var temperature);

// Mean cross-entropy of B x 2 (match, no-match) logits.
Var itm_loss(Var logits, const std::vector<bool>& is_match);

// Mean cross-entropy over unmasked positions of L x V logits.
Var lm_loss(Var logits, std::span<const int> targets, const std::vector<bool>& mask);

// itc + lambda_1 itm + lambda_2 lm + lambda_3 ecls.
Var total_loss(Var itc, Var itm, Var lm, Var ecls, const LossWeights& w);
double total_loss(double itc, double itm, double lm, double ecls, const LossWeights& w);

// Uniform random permutation of 0..n-1 with no fixed point. Throws
// ValidationError for n < 2.
std::vector<int> random_derangement(int n, std::mt19937_64& rng);

}  // namespace gkmvlp

#pragma once

// Differentiable operations on graph Vars. Every op computes its value
// eagerly and records the matching backward closure.

#include <optional>
#include <span>
#include <vector>

#include "gkmvlp/tensor.hpp"

namespace gkmvlp::ops {

Var matmul(Var a, Var b);       // a * b
Var matmul_nt(Var a, Var b);    // a * b^T
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var add_row(Var a, Var row);    // broadcasts a 1xN row over every row of a
Var linear(Var x, Var weight, Var bias);  // x * W + b
Var scale(Var a, double s);
Var div_scalar(Var a, Var s);   // a / s for a 1x1 s
Var exp(Var a);
Var gelu(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var l2_normalize_rows(Var x, double eps = 1e-12);

Var rows(Var x, Eigen::Index begin, Eigen::Index count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var repeat_rows(Var row, Eigen::Index count);
Var gather_rows(Var table, std::span<const int> ids);
// Zeroes rows whose mask entry is false.
Var mask_rows(Var x, const std::vector<bool>& keep);
Var mean_rows(Var x);
Var sum(Var x);
Var mean(Var x);

// Per-row log(sum(exp(x))) as an Nx1 column.
Var logsumexp_rows(Var x);
// Gathers x(i, cols[i]) into an Nx1 column.
Var pick(Var x, std::span<const int> cols);

// Mean over rows with weight > 0 of -log softmax(logits)[target]; rows with
// zero weight are ignored. Throws ShapeError if no row is selected.
Var cross_entropy(Var logits, std::span<const int> targets,
                  std::optional<std::span<const double>> weights = std::nullopt);

// Mean over all entries of softplus(z) - y z with targets y in [0, 1].
Var binary_cross_entropy(Var logits, const Matrix& targets);

struct AttentionMask {
  // One entry per key; false keys receive zero weight.
  std::vector<bool> key_valid;
  // Query i may only see keys j <= i.
  bool causal = false;
};

// Multi-head scaled dot-product attention on already-projected inputs.
// q: n x d, k: m x d, v: m x dv, with d and dv split evenly across heads.
// When `weights_out` is set it receives the head-averaged n x m weights.
// Throws ShapeError if some query row has every key masked.
Var attention(Var q, Var k, Var v, int num_heads, const AttentionMask& mask = {},
              Matrix* weights_out = nullptr);

}  // namespace gkmvlp::ops

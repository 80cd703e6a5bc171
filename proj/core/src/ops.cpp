#include "gkmvlp/ops.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "gkmvlp/errors.hpp"

namespace gkmvlp::ops {
namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch");
  }
}

Graph& graph_of(Var a) { return a.graph(); }

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Graph& g = graph_of(a);
  Matrix out = a.value() * b.value();
  return g.record(std::move(out), {a, b}, [&g, a, b](const Matrix& dy) {
    if (a.requires_grad()) g.accumulate(a, dy * b.value().transpose());
    if (b.requires_grad()) g.accumulate(b, a.value().transpose() * dy);
  }, "matmul");
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  Graph& g = graph_of(a);
  Matrix out = a.value() * b.value().transpose();
  return g.record(std::move(out), {a, b}, [&g, a, b](const Matrix& dy) {
    if (a.requires_grad()) g.accumulate(a, dy * b.value());
    if (b.requires_grad()) g.accumulate(b, dy.transpose() * a.value());
  }, "matmul_nt");
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  Matrix out = a.value().transpose();
  return g.record(std::move(out), {a}, [&g, a](const Matrix& dy) {
    g.accumulate(a, dy.transpose());
  }, "transpose");
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Graph& g = graph_of(a);
  Matrix out = a.value() + b.value();
  return g.record(std::move(out), {a, b}, [&g, a, b](const Matrix& dy) {
    g.accumulate(a, dy);
    g.accumulate(b, dy);
  }, "add");
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Graph& g = graph_of(a);
  Matrix out = a.value() - b.value();
  return g.record(std::move(out), {a, b}, [&g, a, b](const Matrix& dy) {
    g.accumulate(a, dy);
    if (b.requires_grad()) g.accumulate(b, -dy);
  }, "sub");
}

Var hadamard(Var a, Var b) {
  require_same_shape(a, b, "hadamard");
  Graph& g = graph_of(a);
  Matrix out = a.value().cwiseProduct(b.value());
  return g.record(std::move(out), {a, b}, [&g, a, b](const Matrix& dy) {
    if (a.requires_grad()) g.accumulate(a, dy.cwiseProduct(b.value()));
    if (b.requires_grad()) g.accumulate(b, dy.cwiseProduct(a.value()));
  }, "hadamard");
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bad row shape");
  Graph& g = graph_of(a);
  Matrix out = a.value().rowwise() + row.value().row(0);
  return g.record(std::move(out), {a, row}, [&g, a, row](const Matrix& dy) {
    g.accumulate(a, dy);
    if (row.requires_grad()) g.accumulate(row, dy.colwise().sum());
  }, "add_row");
}

Var linear(Var x, Var weight, Var bias) {
  if (x.cols() != weight.rows() || bias.rows() != 1 || bias.cols() != weight.cols()) {
    throw ShapeError("linear: shape mismatch");
  }
  Graph& g = graph_of(x);
  Matrix out = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  return g.record(std::move(out), {x, weight, bias}, [&g, x, weight, bias](const Matrix& dy) {
    if (x.requires_grad()) g.accumulate(x, dy * weight.value().transpose());
    if (weight.requires_grad()) g.accumulate(weight, x.value().transpose() * dy);
    if (bias.requires_grad()) g.accumulate(bias, dy.colwise().sum());
  }, "linear");
}

Var scale(Var a, double s) {
  Graph& g = graph_of(a);
  Matrix out = a.value() * s;
  return g.record(std::move(out), {a}, [&g, a, s](const Matrix& dy) {
    g.accumulate(a, dy * s);
  }, "scale");
}

Var div_scalar(Var a, Var s) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("div_scalar: divisor must be 1x1");
  Graph& g = graph_of(a);
  const double d = s.scalar();
  Matrix out = a.value() / d;
  return g.record(std::move(out), {a, s}, [&g, a, s, d](const Matrix& dy) {
    if (a.requires_grad()) g.accumulate(a, dy / d);
    if (s.requires_grad()) {
      const double ds = -(dy.cwiseProduct(a.value())).sum() / (d * d);
      g.accumulate(s, Matrix::Constant(1, 1, ds));
    }
  }, "div_scalar");
}

Var exp(Var a) {
  Graph& g = graph_of(a);
  Matrix out = a.value().array().exp().matrix();
  const std::size_t out_id = g.size();
  return g.record(std::move(out), {a}, [&g, a, out_id](const Matrix& dy) {
    g.accumulate(a, dy.cwiseProduct(g.value(out_id)));
  }, "exp");
}

Var gelu(Var a) {
  Graph& g = graph_of(a);
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double t = x.data()[i];
    out.data()[i] = 0.5 * t * (1.0 + std::erf(t * std::numbers::sqrt2 / 2.0));
  }
  return g.record(std::move(out), {a}, [&g, a](const Matrix& dy) {
    const Matrix& xv = a.value();
    Matrix dx(xv.rows(), xv.cols());
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (Eigen::Index i = 0; i < xv.size(); ++i) {
      const double t = xv.data()[i];
      const double cdf = 0.5 * (1.0 + std::erf(t * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * t * t);
      dx.data()[i] = dy.data()[i] * (cdf + t * pdf);
    }
    g.accumulate(a, dx);
  }, "gelu");
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
    throw ShapeError("layer_norm: gain/bias shape mismatch");
  }
  Graph& g = graph_of(x);
  auto normalized = std::make_shared<Matrix>(n, d);
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  const Matrix& xv = x.value();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(i) = is;
    normalized->row(i) = (xv.row(i).array() - mu) * is;
  }
  Matrix out = normalized->array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return g.record(std::move(out), {x, gain, bias},
                  [&g, x, gain, bias, normalized, inv_std, d](const Matrix& dy) {
    if (gain.requires_grad()) {
      g.accumulate(gain, dy.cwiseProduct(*normalized).colwise().sum());
    }
    if (bias.requires_grad()) g.accumulate(bias, dy.colwise().sum());
    if (x.requires_grad()) {
      Matrix dxhat = dy.array().rowwise() * gain.value().row(0).array();
      Matrix dx(dxhat.rows(), d);
      for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
        const double mean_dxhat = dxhat.row(i).mean();
        const double mean_dxhat_xhat = dxhat.row(i).dot(normalized->row(i)) / static_cast<double>(d);
        dx.row(i) = (*inv_std)(i) *
                    (dxhat.row(i).array() - mean_dxhat - normalized->row(i).array() * mean_dxhat_xhat);
      }
      g.accumulate(x, dx);
    }
  }, "layer_norm");
}

Var l2_normalize_rows(Var x, double eps) {
  Graph& g = graph_of(x);
  const Matrix& xv = x.value();
  auto norms = std::make_shared<Eigen::VectorXd>(xv.rows());
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double nrm = std::max(xv.row(i).norm(), eps);
    (*norms)(i) = nrm;
    out.row(i) = xv.row(i) / nrm;
  }
  const std::size_t out_id = g.size();
  return g.record(std::move(out), {x}, [&g, x, norms, out_id](const Matrix& dy) {
    const Matrix& y = g.value(out_id);
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double proj = dy.row(i).dot(y.row(i));
      dx.row(i) = (dy.row(i) - proj * y.row(i)) / (*norms)(i);
    }
    g.accumulate(x, dx);
  }, "l2_normalize_rows");
}

Var rows(Var x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > x.rows()) throw ShapeError("rows: out of range");
  Graph& g = graph_of(x);
  Matrix out = x.value().middleRows(begin, count);
  return g.record(std::move(out), {x}, [&g, x, begin](const Matrix& dy) {
    g.accumulate_block(x, begin, 0, dy);
  }, "rows");
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Graph& g = graph_of(parts.front());
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index total = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    total += p.rows();
  }
  Matrix out(total, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return g.record(std::move(out), parts, [&g, parts](const Matrix& dy) {
    Eigen::Index offset = 0;
    for (const Var& p : parts) {
      if (p.requires_grad()) g.accumulate(p, dy.middleRows(offset, p.rows()));
      offset += p.rows();
    }
  }, "concat_rows");
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Graph& g = graph_of(parts.front());
  const Eigen::Index rows_n = parts.front().rows();
  Eigen::Index total = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows_n) throw ShapeError("concat_cols: row mismatch");
    total += p.cols();
  }
  Matrix out(rows_n, total);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return g.record(std::move(out), parts, [&g, parts](const Matrix& dy) {
    Eigen::Index offset = 0;
    for (const Var& p : parts) {
      if (p.requires_grad()) g.accumulate(p, dy.middleCols(offset, p.cols()));
      offset += p.cols();
    }
  }, "concat_cols");
}

Var repeat_rows(Var row, Eigen::Index count) {
  if (row.rows() != 1) throw ShapeError("repeat_rows: input must be a single row");
  Graph& g = graph_of(row);
  Matrix out = row.value().replicate(count, 1);
  return g.record(std::move(out), {row}, [&g, row](const Matrix& dy) {
    g.accumulate(row, dy.colwise().sum());
  }, "repeat_rows");
}

Var gather_rows(Var table, std::span<const int> ids) {
  Graph& g = graph_of(table);
  const Matrix& t = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) throw ShapeError("gather_rows: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return g.record(std::move(out), {table}, [&g, table, idx](const Matrix& dy) {
    Matrix dt = Matrix::Zero(table.rows(), table.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) dt.row(idx[i]) += dy.row(static_cast<Eigen::Index>(i));
    g.accumulate(table, dt);
  }, "gather_rows");
}

Var mask_rows(Var x, const std::vector<bool>& keep) {
  if (static_cast<Eigen::Index>(keep.size()) != x.rows()) throw ShapeError("mask_rows: mask length");
  Graph& g = graph_of(x);
  Matrix out = x.value();
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (!keep[i]) out.row(static_cast<Eigen::Index>(i)).setZero();
  }
  return g.record(std::move(out), {x}, [&g, x, keep](const Matrix& dy) {
    Matrix dx = dy;
    for (std::size_t i = 0; i < keep.size(); ++i) {
      if (!keep[i]) dx.row(static_cast<Eigen::Index>(i)).setZero();
    }
    g.accumulate(x, dx);
  }, "mask_rows");
}

Var mean_rows(Var x) {
  if (x.rows() == 0) throw ShapeError("mean_rows: empty input");
  Graph& g = graph_of(x);
  Matrix out = x.value().colwise().mean();
  const double inv = 1.0 / static_cast<double>(x.rows());
  return g.record(std::move(out), {x}, [&g, x, inv](const Matrix& dy) {
    g.accumulate(x, dy.replicate(x.rows(), 1) * inv);
  }, "mean_rows");
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  Matrix out = Matrix::Constant(1, 1, x.value().sum());
  return g.record(std::move(out), {x}, [&g, x](const Matrix& dy) {
    g.accumulate(x, Matrix::Constant(x.rows(), x.cols(), dy(0, 0)));
  }, "sum");
}

Var mean(Var x) {
  if (x.value().size() == 0) throw ShapeError("mean: empty input");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var logsumexp_rows(Var x) {
  Graph& g = graph_of(x);
  const Matrix& xv = x.value();
  auto probs = std::make_shared<Matrix>(xv.rows(), xv.cols());
  Matrix out(xv.rows(), 1);
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double m = xv.row(i).maxCoeff();
    const auto e = (xv.row(i).array() - m).exp();
    const double s = e.sum();
    out(i, 0) = m + std::log(s);
    probs->row(i) = e / s;
  }
  return g.record(std::move(out), {x}, [&g, x, probs](const Matrix& dy) {
    Matrix dx = probs->array().colwise() * dy.col(0).array();
    g.accumulate(x, dx);
  }, "logsumexp_rows");
}

Var pick(Var x, std::span<const int> cols) {
  if (static_cast<Eigen::Index>(cols.size()) != x.rows()) throw ShapeError("pick: one column per row");
  Graph& g = graph_of(x);
  Matrix out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int c = cols[static_cast<std::size_t>(i)];
    if (c < 0 || c >= x.cols()) throw ShapeError("pick: column out of range");
    out(i, 0) = x.value()(i, c);
  }
  std::vector<int> idx(cols.begin(), cols.end());
  return g.record(std::move(out), {x}, [&g, x, idx](const Matrix& dy) {
    Matrix dx = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      dx(static_cast<Eigen::Index>(i), idx[i]) = dy(static_cast<Eigen::Index>(i), 0);
    }
    g.accumulate(x, dx);
  }, "pick");
}

Var cross_entropy(Var logits, std::span<const int> targets,
                  std::optional<std::span<const double>> weights) {
  const Eigen::Index n = logits.rows();
  if (static_cast<Eigen::Index>(targets.size()) != n) throw ShapeError("cross_entropy: target count");
  if (weights && static_cast<Eigen::Index>(weights->size()) != n) {
    throw ShapeError("cross_entropy: weight count");
  }
  Graph& g = graph_of(logits);
  const Matrix& z = logits.value();
  auto coeff = std::make_shared<Eigen::VectorXd>(Eigen::VectorXd::Zero(n));
  double total_weight = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weights ? (*weights)[static_cast<std::size_t>(i)] : 1.0;
    (*coeff)(i) = w;
    total_weight += w;
  }
  if (total_weight <= 0.0) throw ShapeError("cross_entropy: every position is masked");
  auto probs = std::make_shared<Matrix>(Matrix::Zero(n, z.cols()));
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if ((*coeff)(i) <= 0.0) continue;
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= z.cols()) throw ShapeError("cross_entropy: target out of range");
    const double m = z.row(i).maxCoeff();
    const auto e = (z.row(i).array() - m).exp();
    const double s = e.sum();
    loss += (*coeff)(i) * (m + std::log(s) - z(i, t));
    probs->row(i) = e / s;
  }
  (*coeff) /= total_weight;
  std::vector<int> tgt(targets.begin(), targets.end());
  Matrix out = Matrix::Constant(1, 1, loss / total_weight);
  return g.record(std::move(out), {logits}, [&g, logits, probs, coeff, tgt](const Matrix& dy) {
    Matrix dz = *probs;
    for (Eigen::Index i = 0; i < dz.rows(); ++i) {
      if ((*coeff)(i) <= 0.0) continue;
      dz(i, tgt[static_cast<std::size_t>(i)]) -= 1.0;
      dz.row(i) *= (*coeff)(i) * dy(0, 0);
    }
    g.accumulate(logits, dz);
  }, "cross_entropy");
}

Var binary_cross_entropy(Var logits, const Matrix& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw ShapeError("binary_cross_entropy: target shape");
  }
  if (logits.value().size() == 0) throw ShapeError("binary_cross_entropy: empty input");
  Graph& g = graph_of(logits);
  const Matrix& z = logits.value();
  const double n = static_cast<double>(z.size());
  // softplus(z) - y z, evaluated stably.
  const Matrix loss = z.array().max(0.0) - z.array() * targets.array() + (-z.array().abs()).exp().log1p();
  auto sigma = std::make_shared<Matrix>((1.0 + (-z.array()).exp()).inverse().matrix());
  Matrix y = targets;
  return g.record(Matrix::Constant(1, 1, loss.sum() / n), {logits}, [&g, logits, sigma, y, n](const Matrix& dy) {
    g.accumulate(logits, ((*sigma - y) * (dy(0, 0) / n)).eval());
  }, "binary_cross_entropy");
}

Var attention(Var q, Var k, Var v, int num_heads, const AttentionMask& mask, Matrix* weights_out) {
  const Eigen::Index n = q.rows();
  const Eigen::Index m = k.rows();
  const Eigen::Index d = q.cols();
  const Eigen::Index dv = v.cols();
  if (k.cols() != d || v.rows() != m) throw ShapeError("attention: shape mismatch");
  if (num_heads <= 0 || d % num_heads != 0 || dv % num_heads != 0) {
    throw ShapeError("attention: dims not divisible by head count");
  }
  if (!mask.key_valid.empty() && static_cast<Eigen::Index>(mask.key_valid.size()) != m) {
    throw ShapeError("attention: key mask length");
  }
  Graph& g = graph_of(q);
  const Eigen::Index dh = d / num_heads;
  const Eigen::Index dvh = dv / num_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // Additive mask shared by every head.
  Matrix bias = Matrix::Zero(n, m);
  bool any_mask = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    bool any_valid = false;
    for (Eigen::Index j = 0; j < m; ++j) {
      const bool key_ok = mask.key_valid.empty() || mask.key_valid[static_cast<std::size_t>(j)];
      const bool causal_ok = !mask.causal || j <= i;
      if (key_ok && causal_ok) {
        any_valid = true;
      } else {
        bias(i, j) = -std::numeric_limits<double>::infinity();
        any_mask = true;
      }
    }
    if (!any_valid) throw ShapeError("attention: every key is masked for query row " + std::to_string(i));
  }

  auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(num_heads));
  Matrix out(n, dv);
  if (weights_out != nullptr) *weights_out = Matrix::Zero(n, m);
  for (int h = 0; h < num_heads; ++h) {
    Matrix scores = q.value().middleCols(h * dh, dh) * k.value().middleCols(h * dh, dh).transpose();
    scores *= inv_sqrt;
    if (any_mask) scores += bias;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = scores.row(i).maxCoeff();
      scores.row(i) = (scores.row(i).array() - mx).exp();
      scores.row(i) /= scores.row(i).sum();
    }
    out.middleCols(h * dvh, dvh) = scores * v.value().middleCols(h * dvh, dvh);
    if (weights_out != nullptr) *weights_out += scores / static_cast<double>(num_heads);
    (*probs)[static_cast<std::size_t>(h)] = std::move(scores);
  }

  return g.record(std::move(out), {q, k, v},
                  [&g, q, k, v, probs, num_heads, dh, dvh, inv_sqrt](const Matrix& dy) {
    Matrix dq = Matrix::Zero(q.rows(), q.cols());
    Matrix dk = Matrix::Zero(k.rows(), k.cols());
    Matrix dvm = Matrix::Zero(v.rows(), v.cols());
    for (int h = 0; h < num_heads; ++h) {
      const Matrix& p = (*probs)[static_cast<std::size_t>(h)];
      const auto dyh = dy.middleCols(h * dvh, dvh);
      dvm.middleCols(h * dvh, dvh) = p.transpose() * dyh;
      Matrix dp = dyh * v.value().middleCols(h * dvh, dvh).transpose();
      // Softmax backward: dS = P o (dP - rowsum(dP o P)).
      Eigen::VectorXd rowdot = dp.cwiseProduct(p).rowwise().sum();
      Matrix ds = p.cwiseProduct(dp.colwise() - rowdot);
      ds *= inv_sqrt;
      dq.middleCols(h * dh, dh) = ds * k.value().middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = ds.transpose() * q.value().middleCols(h * dh, dh);
    }
    g.accumulate(q, dq);
    g.accumulate(k, dk);
    g.accumulate(v, dvm);
  }, "attention");
}

}  // namespace gkmvlp::ops

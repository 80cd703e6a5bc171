#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Graph records every operation executed on Vars and replays their
// derivatives in reverse creation order on backward(). Parameters live
// outside any graph in a ParameterStore; a graph references them through
// leaf nodes and adds the leaf gradients into Parameter::grad at the end of
// backward(). Leaves created with Graph::frozen() are constants: nothing
// reaches the parameter through them.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gkmvlp {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

// Owns parameters with stable addresses, in registration order.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Parameter& add(std::string name, Matrix value);
  // Zero-mean uniform weights scaled by 1/sqrt(fan_in).
  Parameter& add_affine_weight(std::string name, int fan_in, int fan_out, std::mt19937_64& rng);
  Parameter& add_zeros(std::string name, int rows, int cols);
  Parameter& add_constant(std::string name, int rows, int cols, double value);
  Parameter& add_normal(std::string name, int rows, int cols, double stddev, std::mt19937_64& rng);

  [[nodiscard]] Parameter* find(std::string_view name);
  [[nodiscard]] const Parameter* find(std::string_view name) const;
  [[nodiscard]] Parameter& at(std::string_view name);
  [[nodiscard]] const Parameter& at(std::string_view name) const;

  [[nodiscard]] std::vector<Parameter*> all();
  [[nodiscard]] std::vector<const Parameter*> all() const;
  // Parameters whose name starts with `prefix`.
  [[nodiscard]] std::vector<Parameter*> with_prefix(std::string_view prefix);
  [[nodiscard]] std::vector<const Parameter*> with_prefix(std::string_view prefix) const;

  [[nodiscard]] std::size_t size() const { return params_.size(); }
  [[nodiscard]] std::size_t scalar_count() const;
  void zero_grad();
  // Copies values from `other`; names and shapes must match one to one.
  void copy_values_from(const ParameterStore& other);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] const Matrix& grad() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] double scalar() const { return value()(0, 0); }
  [[nodiscard]] bool requires_grad() const;
  [[nodiscard]] Graph& graph() const { return *graph_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using Backward = std::function<void(const Matrix& out_grad)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  [[nodiscard]] bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value, std::string_view label = "constant");
  // Trainable leaf; gradients flow into p.grad on backward().
  Var parameter(Parameter& p);
  // Stop-gradient view of p: same value, no gradient path.
  Var frozen(const Parameter& p);
  Var param(Parameter& p, bool frozen_view) { return frozen_view ? frozen(p) : parameter(p); }

  // Records an op node. `backward` runs only if some input requires grad.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward, const char* op);
  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward, const char* op);

  // Adds `g` into the gradient of `v` (no-op when v does not require grad).
  void accumulate(Var v, const Matrix& g);
  template <typename Expr>
  void accumulate_block(Var v, Eigen::Index row, Eigen::Index col, const Expr& g);

  // Runs reverse accumulation from a 1x1 root seeded with 1 and adds leaf
  // gradients into their parameters.
  void backward(Var root);

  void set_label(Var v, std::string label);
  [[nodiscard]] const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  [[nodiscard]] const Matrix& grad(std::size_t id) const;
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  // Description of the first node holding a NaN or Inf, empty if none.
  [[nodiscard]] std::string first_non_finite() const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
    const char* op = "";
    std::string label;
  };

  Node& node(Var v) { return nodes_[v.id()]; }
  bool any_needs_grad(const Var* begin, const Var* end) const;

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> trainable_leaves_;
  std::unordered_map<const Parameter*, std::size_t> frozen_leaves_;
  Matrix empty_;
};

template <typename Expr>
void Graph::accumulate_block(Var v, Eigen::Index row, Eigen::Index col, const Expr& g) {
  Node& n = node(v);
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  n.grad.block(row, col, g.rows(), g.cols()) += g;
}

inline const Matrix& Var::value() const { return graph_->value(id_); }
inline const Matrix& Var::grad() const { return graph_->grad(id_); }
inline bool Var::requires_grad() const { return graph_->requires_grad(id_); }

}  // namespace gkmvlp

#include "gkmvlp/tensor.hpp"

#include <cmath>
#include <sstream>

#include "gkmvlp/errors.hpp"

namespace gkmvlp {

Parameter& ParameterStore::add(std::string name, Matrix value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
  index_.emplace(name, params_.size());
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
  return *params_.back();
}

Parameter& ParameterStore::add_affine_weight(std::string name, int fan_in, int fan_out,
                                             std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return add(std::move(name), std::move(w));
}

Parameter& ParameterStore::add_zeros(std::string name, int rows, int cols) {
  return add(std::move(name), Matrix::Zero(rows, cols));
}

Parameter& ParameterStore::add_constant(std::string name, int rows, int cols, double value) {
  return add(std::move(name), Matrix::Constant(rows, cols, value));
}

Parameter& ParameterStore::add_normal(std::string name, int rows, int cols, double stddev,
                                      std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return add(std::move(name), std::move(w));
}

Parameter* ParameterStore::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParameterStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParameterStore::at(std::string_view name) {
  Parameter* p = find(name);
  if (p == nullptr) throw ConfigError("unknown parameter: " + std::string(name));
  return *p;
}

const Parameter& ParameterStore::at(std::string_view name) const {
  const Parameter* p = find(name);
  if (p == nullptr) throw ConfigError("unknown parameter: " + std::string(name));
  return *p;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParameterStore::with_prefix(std::string_view prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p->name.starts_with(prefix)) out.push_back(p.get());
  }
  return out;
}

std::vector<const Parameter*> ParameterStore::with_prefix(std::string_view prefix) const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) {
    if (p->name.starts_with(prefix)) out.push_back(p.get());
  }
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  if (other.params_.size() != params_.size()) {
    throw ConfigError("parameter stores differ in size");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Parameter& src = *other.params_[i];
    Parameter& dst = *params_[i];
    if (src.name != dst.name || src.value.rows() != dst.value.rows() ||
        src.value.cols() != dst.value.cols()) {
      throw ConfigError("parameter mismatch at " + dst.name);
    }
    dst.value = src.value;
  }
}

Var Graph::constant(Matrix value, std::string_view label) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  n.label = std::string(label);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::parameter(Parameter& p) {
  if (!grad_enabled_) return frozen(p);
  if (auto it = trainable_leaves_.find(&p); it != trainable_leaves_.end()) {
    return {this, it->second};
  }
  Node n;
  n.value = p.value;
  n.param = &p;
  n.needs_grad = true;
  n.op = "parameter";
  n.label = p.name;
  nodes_.push_back(std::move(n));
  trainable_leaves_.emplace(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Graph::frozen(const Parameter& p) {
  if (auto it = frozen_leaves_.find(&p); it != frozen_leaves_.end()) {
    return {this, it->second};
  }
  Node n;
  n.value = p.value;
  n.op = "frozen";
  n.label = p.name;
  nodes_.push_back(std::move(n));
  frozen_leaves_.emplace(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

bool Graph::any_needs_grad(const Var* begin, const Var* end) const {
  if (!grad_enabled_) return false;
  for (const Var* v = begin; v != end; ++v) {
    if (nodes_[v->id()].needs_grad) return true;
  }
  return false;
}

Var Graph::record(Matrix value, std::initializer_list<Var> inputs, Backward backward,
                  const char* op) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.needs_grad = any_needs_grad(inputs.begin(), inputs.end());
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::record(Matrix value, const std::vector<Var>& inputs, Backward backward,
                  const char* op) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.needs_grad = any_needs_grad(inputs.data(), inputs.data() + inputs.size());
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Graph::accumulate(Var v, const Matrix& g) {
  Node& n = node(v);
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Graph::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw ShapeError("backward root must be a scalar");
  }
  if (!nodes_[root.id()].needs_grad) return;
  nodes_[root.id()].grad = Matrix::Constant(1, 1, 1.0);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(n.grad);
    }
  }
}

void Graph::set_label(Var v, std::string label) { nodes_[v.id()].label = std::move(label); }

const Matrix& Graph::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.grad.size() == 0 ? empty_ : n.grad;
}

std::string Graph::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (!n.value.allFinite()) {
      std::ostringstream os;
      os << "node #" << i << " (op " << n.op;
      if (!n.label.empty()) os << ", " << n.label;
      os << ", shape " << n.value.rows() << "x" << n.value.cols() << ")";
      return os.str();
    }
  }
  return {};
}

}  // namespace gkmvlp

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hicross/numerics/flops.hpp"
#include "hicross/numerics/kernels.hpp"
#include "hicross/numerics/tensor.hpp"

namespace hicross {

/// Which freezing group a parameter belongs to.
enum class ParamGroup { base, visual_expert, cross_module };

inline const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::base: return "base";
    case ParamGroup::visual_expert: return "visual_expert";
    case ParamGroup::cross_module: return "cross_module";
  }
  return "?";
}

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  ParamGroup group = ParamGroup::base;
  bool frozen = false;
};

/// Named parameters in registration order. References stay valid for the
/// lifetime of the store.
template <class T>
class ParamStore {
 public:
  Parameter<T>& add(const std::string& name, Tensor<T> value, ParamGroup group) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = params_.size();
    Tensor<T> grad(value.shape());
    params_.push_back(Parameter<T>{name, std::move(value), std::move(grad), group, false});
    return params_.back();
  }

  Parameter<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return params_[it->second];
  }
  const Parameter<T>& get(const std::string& name) const {
    return const_cast<ParamStore*>(this)->get(name);
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T{0});
  }

  std::size_t count(ParamGroup g) const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p.group == g) n += p.value.size();
    return n;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (!p.frozen) n += p.value.size();
    return n;
  }

  void set_frozen(ParamGroup g, bool frozen) {
    for (auto& p : params_)
      if (p.group == g) p.frozen = frozen;
  }

 private:
  std::deque<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

struct Var {
  std::size_t id = 0;
};

/// Reverse-mode gradient tape. Operations append nodes in execution order;
/// backward() walks them in exact reverse. Single-threaded per step.
template <class T>
class Tape {
 public:
  struct Node {
    std::string op;
    Tensor<T> value;
    Tensor<T> grad;  // empty until something flows into it
    bool needs_grad = false;
    std::function<void(Tape&, std::size_t)> backward;
    Parameter<T>* param = nullptr;
  };

  explicit Tape(FlopCounter* counter = nullptr) : counter_(counter) {}

  FlopCounter* counter() const { return counter_; }

  /// Inference mode: nothing recorded on this tape will need a gradient.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }

  Var constant(Tensor<T> value, const std::string& op = "constant") {
    return push(op, std::move(value), false, nullptr);
  }

  /// Leaf bound to a parameter. Frozen parameters get no gradient.
  Var param(Parameter<T>& p) {
    Var v = push("param:" + p.name, p.value, !p.frozen && grad_enabled_, nullptr);
    nodes_[v.id].param = &p;
    return v;
  }

  Var push(std::string op, Tensor<T> value, bool needs_grad,
           std::function<void(Tape&, std::size_t)> backward) {
    if (!value.all_finite()) throw NumericError("non-finite output from op '" + op + "'");
    needs_grad = needs_grad && grad_enabled_;
    if (!needs_grad) backward = nullptr;
    nodes_.push_back(Node{std::move(op), std::move(value), Tensor<T>(), needs_grad, std::move(backward), nullptr});
    return Var{nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  /// Gradient buffer of a node, zero-allocated on first use.
  Tensor<T>& grad(Var v) { return grad(v.id); }
  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates. Parameter gradients are
  /// accumulated into Parameter::grad.
  void backward(Var loss) {
    if (value(loss).size() != 1) throw DimensionError("backward requires a scalar loss");
    grad(loss).fill(T{1});
    visit_order_.clear();
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      visit_order_.push_back(i);
      if (n.param) {
        auto& pg = n.param->grad;
        for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
      } else if (n.backward) {
        n.backward(*this, i);
      }
    }
  }

  /// Node ids visited by the last backward() call.
  const std::vector<std::size_t>& visit_order() const { return visit_order_; }

 private:
  FlopCounter* counter_;
  bool grad_enabled_ = true;
  std::deque<Node> nodes_;  // stable references to values across pushes
  std::vector<std::size_t> visit_order_;
};

}  // namespace hicross

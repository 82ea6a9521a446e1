#pragma once

// Reverse-mode autodiff over a recorded operation graph.
//
// Cotangents produced during backpropagation are ordinary graph tensors, so a
// gradient can itself be differentiated (needed by the WGAN gradient penalty,
// whose loss contains the norm of the critic's input gradient).

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "wavesr/common.hpp"

namespace wavesr {

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

// RAII guard that disables graph recording (inference / eager arithmetic).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev; }
};

inline bool grad_mode_enabled() { return detail::grad_mode_flag(); }

template <typename T>
class Tensor {
 public:
  using Vjp = std::function<Tensor(const Tensor&)>;

  struct Node {
    Shape shape;
    std::vector<T> values;
    bool requires_grad = false;
    std::shared_ptr<Node> grad;       // accumulated by backward()
    std::vector<Tensor> parents;      // inputs of the producing op
    std::vector<Vjp> vjps;            // one per parent
    const char* op = "leaf";
  };

  Tensor() = default;

  bool defined() const { return n_ != nullptr; }

  static Tensor zeros(const Shape& s) {
    return from_values(s, std::vector<T>(s.numel(), T(0)));
  }
  static Tensor full(const Shape& s, T v) {
    return from_values(s, std::vector<T>(s.numel(), v));
  }
  static Tensor scalar(T v) { return from_values(Shape{1}, {v}); }
  static Tensor from_values(const Shape& s, std::vector<T> vals) {
    if (vals.size() != s.numel()) throw ShapeMismatch("value count does not match shape " + s.str());
    auto n = std::make_shared<Node>();
    n->shape = s;
    n->values = std::move(vals);
    Tensor t;
    t.n_ = n;
    return t;
  }

  static Tensor randn(const Shape& s, Rng& rng, T stddev = T(1)) {
    std::vector<T> v(s.numel());
    for (auto& x : v) x = static_cast<T>(rng.normal()) * stddev;
    return from_values(s, std::move(v));
  }

  const Shape& shape() const { return node().shape; }
  std::size_t numel() const { return node().shape.numel(); }
  const std::vector<T>& values() const { return node().values; }
  // In-place mutation is for leaves only (optimizer updates); mutating an
  // interior node would silently desynchronize recorded vjps.
  std::vector<T>& values_mut() {
    if (!node().vjps.empty()) throw GraphDetached("cannot mutate a non-leaf tensor");
    return node().values;
  }

  T item() const {
    if (numel() != 1) throw NotScalar("item() on tensor of shape " + shape().str());
    return node().values[0];
  }

  bool requires_grad() const { return node().requires_grad; }
  Tensor& set_requires_grad(bool v) {
    node().requires_grad = v;
    return *this;
  }

  Tensor grad() const {
    Tensor g;
    g.n_ = node().grad;
    return g;
  }
  void clear_grad() { node().grad = nullptr; }

  // A leaf copy of the values, cut off from the graph.
  Tensor detach() const {
    return from_values(shape(), node().values);
  }

  const char* op_name() const { return node().op; }
  Node* raw() const { return n_.get(); }

  static Tensor make_op(const char* op, const Shape& shape, std::vector<T> values,
                        std::vector<Tensor> parents, std::vector<Vjp> vjps) {
    if (parents.size() != vjps.size()) throw GraphDetached("vjp arity mismatch in op " + std::string(op));
    bool track = grad_mode_enabled();
    bool any_grad = false;
    if (track) {
      for (const auto& p : parents) any_grad = any_grad || p.requires_grad();
    }
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->values = std::move(values);
    n->op = op;
    if (track && any_grad) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->vjps = std::move(vjps);
    }
    Tensor t;
    t.n_ = n;
    return t;
  }

  // --- autodiff -------------------------------------------------------------

  // d(output)/d(each wrt tensor); no .grad fields are touched. With
  // create_graph the returned tensors stay connected for higher-order use.
  static std::vector<Tensor> grad_of(const Tensor& output, const std::vector<Tensor>& wrt,
                                     bool create_graph = false) {
    std::unordered_map<Node*, Tensor> cot = run_backward(output, &wrt, create_graph);
    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
      auto it = cot.find(w.raw());
      if (it != cot.end())
        out.push_back(it->second);
      else
        out.push_back(zeros(w.shape()));
    }
    return out;
  }

  // Accumulates into .grad of every reachable requires_grad leaf.
  void backward(bool create_graph = false) const {
    std::unordered_map<Node*, Tensor> cot = run_backward(*this, nullptr, create_graph);
    for (auto& [raw, g] : cot) {
      if (raw->vjps.empty() && raw->requires_grad) {
        if (!raw->grad) {
          raw->grad = g.n_;
        } else {
          Tensor acc;
          acc.n_ = raw->grad;
          raw->grad = eager_add(acc, g).n_;
        }
      }
    }
  }

 private:
  std::shared_ptr<Node> n_;

  Node& node() const {
    if (!n_) throw GraphDetached("use of undefined tensor");
    return *n_;
  }

  static Tensor eager_add(const Tensor& a, const Tensor& b) {
    NoGradGuard ng;
    if (a.shape() != b.shape()) throw ShapeMismatch("grad accumulate " + a.shape().str() + " vs " + b.shape().str());
    std::vector<T> v(a.numel());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
    return from_values(a.shape(), std::move(v));
  }

  static Tensor graph_add(const Tensor& a, const Tensor& b) {
    std::vector<T> v(a.numel());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
    return make_op("add", a.shape(), std::move(v), {a, b},
                   {[](const Tensor& g) { return g; }, [](const Tensor& g) { return g; }});
  }

  static std::vector<Node*> topo_order(Node* root) {
    std::vector<Node*> order;
    std::unordered_map<Node*, int> state;  // 0 unseen, 1 open, 2 done
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.push_back({root, 0});
    state[root] = 1;
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        Node* p = n->parents[idx].raw();
        ++idx;
        auto& st = state[p];
        if (st == 0) {
          st = 1;
          stack.push_back({p, 0});
        }
      } else {
        state[n] = 2;
        order.push_back(n);
        stack.pop_back();
      }
    }
    return order;  // parents before consumers
  }

  static std::unordered_map<Node*, Tensor> run_backward(const Tensor& output,
                                                        const std::vector<Tensor>* wrt,
                                                        bool create_graph) {
    if (output.numel() != 1) throw NotScalar("backward from non-scalar " + output.shape().str());
    if (!output.requires_grad())
      throw GraphDetached("output does not depend on any tracked tensor");

    std::vector<Node*> order = topo_order(output.raw());

    // Which nodes can reach a requested target (or, for full backward, any
    // requires_grad leaf)? Only their cotangents need to be formed.
    std::unordered_set<Node*> needed;
    if (wrt) {
      std::unordered_set<Node*> targets;
      for (const auto& w : *wrt) targets.insert(w.raw());
      for (Node* n : order) {  // parents first
        bool need = targets.count(n) > 0;
        for (const auto& p : n->parents)
          if (needed.count(p.raw())) need = true;
        if (need) needed.insert(n);
      }
    } else {
      for (Node* n : order) {
        bool need = n->vjps.empty() && n->requires_grad;
        for (const auto& p : n->parents)
          if (needed.count(p.raw())) need = true;
        if (need) needed.insert(n);
      }
    }

    std::unordered_map<Node*, Tensor> cot;
    cot[output.raw()] = full(output.shape(), T(1));

    auto accumulate = [&](Node* target, const Tensor& g) {
      auto it = cot.find(target);
      if (it == cot.end()) {
        cot[target] = g;
      } else if (create_graph) {
        it->second = graph_add(it->second, g);
      } else {
        it->second = eager_add(it->second, g);
      }
    };

    for (auto rit = order.rbegin(); rit != order.rend(); ++rit) {
      Node* n = *rit;
      auto it = cot.find(n);
      if (it == cot.end() || n->vjps.empty()) continue;
      Tensor g = it->second;
      for (std::size_t i = 0; i < n->parents.size(); ++i) {
        Node* p = n->parents[i].raw();
        if (!needed.count(p)) continue;
        Tensor contrib;
        if (create_graph) {
          contrib = n->vjps[i](g);
        } else {
          NoGradGuard ng;
          contrib = n->vjps[i](g);
        }
        accumulate(p, contrib);
      }
    }
    return cot;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace wavesr

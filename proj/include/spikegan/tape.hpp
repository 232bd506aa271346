#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "spikegan/tensor.hpp"

namespace spikegan {

template <typename T>
class Tape;

// Cheap handle into a tape. Ops are free functions taking and returning Vars.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    int32_t id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor<T>& val() const { return tape->val(id); }
    const Shape& shape() const { return tape->val(id).shape(); }
};

// Eager reverse-mode tape. Nodes are appended in execution order, so parents
// always precede their consumers; one reverse sweep per backward() call
// visits every gradient-carrying node exactly once.
template <typename T>
class Tape {
  public:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;  // empty until first contribution arrives
        std::vector<int32_t> parents;
        std::function<void(Tape&, const Node&)> backward;
        Parameter<T>* bound = nullptr;
        bool requires_grad = false;
    };

    Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
        check_value(value);
        Node node;
        node.value = std::move(value);
        node.requires_grad = requires_grad;
        nodes_.push_back(std::move(node));
        return {this, static_cast<int32_t>(nodes_.size() - 1)};
    }

    // Leaf whose gradient is flushed into the parameter's accumulator.
    Var<T> use(Parameter<T>& p) {
        Var<T> v = leaf(p.value, /*requires_grad=*/true);
        nodes_.back().bound = &p;
        return v;
    }

    Var<T> push(Tensor<T> value, std::vector<int32_t> parents,
                std::function<void(Tape&, const Node&)> backward) {
        check_value(value);
        const int32_t id = static_cast<int32_t>(nodes_.size());
        Node node;
        node.value = std::move(value);
        node.parents = std::move(parents);
        for (int32_t p : node.parents) {
            if (p < 0 || p >= id) throw ShapeError("tape parent out of order");
            if (nodes_[p].requires_grad) node.requires_grad = true;
        }
        if (node.requires_grad) node.backward = std::move(backward);
        nodes_.push_back(std::move(node));
        return {this, id};
    }

    const Tensor<T>& val(int32_t id) const { return nodes_[static_cast<size_t>(id)].value; }
    const Node& node(int32_t id) const { return nodes_[static_cast<size_t>(id)]; }
    size_t size() const { return nodes_.size(); }

    // Gradient sink for a parent node: nullptr when no gradient is wanted,
    // otherwise a zero-initialized same-shape buffer to accumulate into.
    Tensor<T>* grad_dst(int32_t id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.requires_grad) return nullptr;
        if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
        return &n.grad;
    }

    const Tensor<T>& grad(const Var<T>& v) const {
        const Node& n = nodes_[static_cast<size_t>(v.id)];
        if (n.grad.empty()) throw ShapeError("no gradient recorded for node " + std::to_string(v.id));
        return n.grad;
    }

    bool has_grad(const Var<T>& v) const { return !nodes_[static_cast<size_t>(v.id)].grad.empty(); }

    // Reverse sweep seeded with d(loss)/d(loss) = 1. Gradients accumulate
    // additively, so a value used twice receives both contributions.
    void backward(const Var<T>& loss) {
        if (loss.tape != this) throw ShapeError("backward: variable from another tape");
        const Node& ln = nodes_[static_cast<size_t>(loss.id)];
        if (ln.value.size() != 1)
            throw ShapeError("backward requires a scalar loss, got shape " + shape_str(ln.value.shape()));
        if (!ln.requires_grad) return;
        if (Tensor<T>* g = grad_dst(loss.id)) (*g)[0] += T(1);
        ++backward_runs_;
        for (int32_t id = loss.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.grad.empty() || !n.requires_grad) continue;
            ++visits_;
            if (check_finite_ && !n.grad.all_finite())
                throw NumericalError("non-finite gradient at tape node " + std::to_string(id));
            if (n.backward) n.backward(*this, n);
            if (n.bound) n.bound->grad.add_(n.grad);
        }
    }

    void set_check_finite(bool on) { check_finite_ = on; }
    bool check_finite() const { return check_finite_; }

    // Introspection used by tests.
    size_t backward_runs() const { return backward_runs_; }
    size_t visited_nodes() const { return visits_; }

  private:
    void check_value(const Tensor<T>& v) const {
        if (check_finite_ && !v.all_finite())
            throw NumericalError("non-finite value entering tape at node " + std::to_string(nodes_.size()));
    }

    std::vector<Node> nodes_;
    bool check_finite_ = false;
    size_t backward_runs_ = 0;
    size_t visits_ = 0;
};

}  // namespace spikegan

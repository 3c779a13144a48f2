#pragma once

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dsgnn/numerics/dense_array.hpp"
#include "dsgnn/numerics/param_bundle.hpp"

namespace dsgnn {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const DenseArray& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t size() const { return value().size(); }
    std::size_t id() const noexcept { return id_; }
    Tape* tape() const noexcept { return tape_; }
    bool valid() const noexcept { return tape_ != nullptr; }
    bool requires_grad() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node list is a
/// topological order and backward is a single reverse sweep.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    Tape() = default;
    /// With record_gradients = false, parameters enter as constants and nothing is kept for backward.
    explicit Tape(bool record_gradients) : record_(record_gradients) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(DenseArray value) { return push(std::move(value), false, nullptr); }

    /// Free leaf that receives a gradient but is not bound to any bundle.
    Var variable(DenseArray value) { return push(std::move(value), true, nullptr); }

    /// Leaf bound to a bundle entry; backward() adds its gradient into the bundle's slot.
    /// Repeated requests for the same entry return the same node.
    Var param(ParamBundle& bundle, const std::string& name) {
        const auto key = std::make_pair(&bundle, name);
        if (auto it = param_ids_.find(key); it != param_ids_.end()) return Var(this, it->second);
        Var v = push(bundle.value(name), record_, nullptr);
        param_ids_.emplace(key, v.id());
        bindings_.push_back({v.id(), &bundle, name});
        return v;
    }

    Var record(DenseArray value, std::initializer_list<Var> inputs, BackwardFn fn) {
        bool rg = false;
        for (const Var& in : inputs) rg = rg || requires_grad(in.id());
        return push(std::move(value), rg, rg ? std::move(fn) : nullptr);
    }

    Var record(DenseArray value, const std::vector<Var>& inputs, BackwardFn fn) {
        bool rg = false;
        for (const Var& in : inputs) rg = rg || requires_grad(in.id());
        return push(std::move(value), rg, rg ? std::move(fn) : nullptr);
    }

    const DenseArray& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

    const DenseArray& grad(std::size_t id) const { return nodes_[id].grad; }

    /// Gradient accumulator for a node, allocated (zero-filled) on first use.
    DenseArray& grad_slot(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) n.grad = DenseArray(n.value.shape(), 0.0);
        return n.grad;
    }

    /// Gradient of the last backward() with respect to v (zeros if v was unreachable).
    DenseArray gradient(const Var& v) const {
        const Node& n = nodes_[v.id()];
        return n.grad.empty() ? DenseArray(n.value.shape(), 0.0) : n.grad;
    }

    /// Back-propagates from a scalar node. Node gradients are recomputed from scratch on
    /// each call; bundle gradient slots accumulate across calls until zero_grad().
    void backward(const Var& loss) {
        if (loss.tape() != this) throw ContractError("backward: loss belongs to a different tape");
        if (value(loss.id()).size() != 1) {
            throw ContractError("backward: loss must be scalar, got shape " +
                                shape_string(value(loss.id()).shape()));
        }
        for (auto& n : nodes_) n.grad = DenseArray();
        grad_slot(loss.id())[0] = 1.0;
        for (std::size_t id = loss.id() + 1; id-- > 0;) {
            Node& n = nodes_[id];
            if (n.backward && !n.grad.empty()) n.backward(*this, id);
        }
        for (const auto& b : bindings_) {
            const Node& n = nodes_[b.id];
            if (n.grad.empty()) continue;
            auto& dst = b.bundle->grad(b.name);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
        }
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        DenseArray value;
        DenseArray grad;
        bool requires_grad = false;
        BackwardFn backward;
    };
    struct Binding {
        std::size_t id;
        ParamBundle* bundle;
        std::string name;
    };

    Var push(DenseArray value, bool requires_grad, BackwardFn fn) {
        nodes_.push_back(Node{std::move(value), DenseArray(), requires_grad, std::move(fn)});
        return Var(this, nodes_.size() - 1);
    }

    std::deque<Node> nodes_;
    std::map<std::pair<ParamBundle*, std::string>, std::size_t> param_ids_;
    std::vector<Binding> bindings_;
    bool record_ = true;
};

inline const DenseArray& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

} // namespace dsgnn

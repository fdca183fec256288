#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "saml/numerics/parameter.hpp"
#include "saml/numerics/tensor.hpp"

namespace saml {

class Tape;

/// Handle to a node on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
};

/// Values captured at stop_gradient sites, in tape order.
///
/// In Record mode every stop_gradient pushes its input value; in Replay mode each
/// stop_gradient returns the recorded value instead of its input. Replaying lets a
/// finite-difference oracle evaluate the same surrogate function whose gradient the
/// tape computes: stopped quantities are held fixed while the parameter moves.
struct StopGradientReplay {
    enum class Mode { Record, Replay };
    Mode mode = Mode::Record;
    std::vector<Tensor> values;
    std::size_t cursor = 0;

    void start_replay() {
        mode = Mode::Replay;
        cursor = 0;
    }
};

/// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so node ids
/// are a topological order by construction.
class Tape {
public:
    /// Backward rule: receives the tape and the gradient flowing into this node.
    using BackwardFn = std::function<void(Tape&, const Tensor&)>;

    Tape() = default;
    explicit Tape(StopGradientReplay* replay) : replay_(replay) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Constant or input leaf. Gradients are tracked when requires_grad is set.
    Var variable(Tensor value, bool requires_grad = false) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        return append(std::move(n));
    }

    Var constant(Tensor value) { return variable(std::move(value), false); }

    /// Leaf bound to a parameter; its value is read in place and its gradient is
    /// added into Parameter::grad at the end of backward().
    Var param(Parameter& p) {
        Node n;
        n.external = &p.value;
        n.param = &p;
        n.requires_grad = !inference_;
        return append(std::move(n));
    }

    /// Generic op node. `backward` is dropped when no input requires a gradient.
    Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
        Node n;
        n.value = std::move(value);
        bool any = false;
        for (auto i : inputs) any = any || nodes_.at(i).requires_grad;
        n.requires_grad = any;
        if (any) {
            n.inputs = std::move(inputs);
            n.backward = std::move(backward);
        }
        return append(std::move(n));
    }

    /// Node whose gradient side effects go somewhere other than tape inputs (e.g. a
    /// sparse embedding table). Always participates in backward.
    Var push_effect(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = !inference_;
        n.inputs = std::move(inputs);
        n.backward = std::move(backward);
        return append(std::move(n));
    }

    const Tensor& value(std::size_t id) const {
        const Node& n = nodes_.at(id);
        return n.external ? *n.external : n.value;
    }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradient buffer of node `id`, zero-allocated on first use.
    Tensor& grad_buffer(std::size_t id) {
        Node& n = nodes_.at(id);
        if (n.grad.empty()) n.grad = Tensor(value(id).shape());
        return n.grad;
    }

    /// Adds `g` into the gradient of node `id` if it tracks gradients.
    void accumulate(std::size_t id, const Tensor& g) {
        if (!nodes_.at(id).requires_grad) return;
        Tensor& buf = grad_buffer(id);
        if (buf.size() != g.size())
            throw DimensionError("gradient shape " + shape_str(g.shape()) + " vs node shape " +
                                 shape_str(buf.shape()));
        double* d = buf.data();
        const double* s = g.data();
        for (std::size_t i = 0; i < buf.size(); ++i) d[i] += s[i];
    }

    bool wants_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

    /// Gradient accumulated on a node by the last backward(); zeros when unreachable.
    const Tensor& grad(Var v) { return grad_buffer(v.id); }

    /// Reverse sweep from a scalar loss. Each node is visited at most once, in
    /// decreasing id order. May be called repeatedly; tape-held gradients are reset
    /// at the start, parameter gradients accumulate.
    void backward(Var loss) {
        if (loss.tape != this) throw ContractError("backward: loss belongs to another tape");
        if (value(loss.id).size() != 1)
            throw ContractError("backward: loss must be a scalar, got shape " +
                                shape_str(value(loss.id).shape()));
        for (auto& n : nodes_) n.grad = Tensor();
        if (!nodes_[loss.id].requires_grad) return;
        grad_buffer(loss.id).fill(1.0);
        for (std::size_t k = loss.id + 1; k-- > 0;) {
            Node& n = nodes_[k];
            if (n.grad.empty()) continue;
            // No nodes are appended during the sweep, so n.grad stays addressable.
            if (n.backward) n.backward(*this, n.grad);
            if (n.param) flush_param(n);
        }
    }

    StopGradientReplay* replay() const noexcept { return replay_; }

    /// Forward-only mode: parameter leaves and effect nodes stop tracking gradients,
    /// so no backward closures are kept.
    void set_inference(bool on) noexcept { inference_ = on; }

private:
    struct Node {
        Tensor value;
        const Tensor* external = nullptr;
        Parameter* param = nullptr;
        bool requires_grad = false;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        Tensor grad;
    };

    Var append(Node n) {
        nodes_.push_back(std::move(n));
        return Var{this, nodes_.size() - 1};
    }

    static void flush_param(Node& n) {
        Parameter& p = *n.param;
        double* d = p.grad.data();
        const double* s = n.grad.data();
        const std::size_t w = p.value.cols();
        for (std::size_t i = 0; i < p.grad.size(); ++i) {
            d[i] += s[i];
            if (p.sparse && s[i] != 0.0) p.touch_row(i / w);
        }
    }

    std::vector<Node> nodes_;
    StopGradientReplay* replay_ = nullptr;
    bool inference_ = false;
};

inline const Tensor& Var::value() const { return tape->value(id); }
inline bool Var::requires_grad() const { return tape->requires_grad(id); }

} // namespace saml

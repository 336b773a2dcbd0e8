#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "hetpfl/tensor.hpp"

namespace hetpfl {

/**
 * Reverse-mode gradient tape.
 *
 * Nodes are appended in execution order; every operation records the forward
 * value plus a closure that scatters the incoming gradient into its parents.
 * A tape is built fresh for each training step and discarded afterwards, and
 * is confined to one thread.
 */
class Tape {
public:
    using NodeId = std::uint32_t;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Register a leaf (parameter or constant input).
    NodeId input(Tensor value) { return push(std::move(value), nullptr); }

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    std::size_t size() const { return nodes_.size(); }

    NodeId add(NodeId a, NodeId b) {
        return push(hetpfl::add(value(a), value(b)), [a, b](Tape& t, const Tensor& g) {
            t.accumulate(a, g);
            t.accumulate(b, g);
        });
    }

    NodeId sub(NodeId a, NodeId b) {
        return push(hetpfl::sub(value(a), value(b)), [a, b](Tape& t, const Tensor& g) {
            t.accumulate(a, g);
            t.accumulate(b, hetpfl::scale(g, -1.0));
        });
    }

    NodeId mul(NodeId a, NodeId b) {
        return push(hetpfl::mul(value(a), value(b)), [a, b](Tape& t, const Tensor& g) {
            t.accumulate(a, hetpfl::mul(g, t.value(b)));
            t.accumulate(b, hetpfl::mul(g, t.value(a)));
        });
    }

    NodeId mul_const(NodeId a, Tensor c) {
        Tensor fwd = hetpfl::mul(value(a), c);
        return push(std::move(fwd), [a, c = std::move(c)](Tape& t, const Tensor& g) {
            t.accumulate(a, hetpfl::mul(g, c));
        });
    }

    NodeId scale(NodeId a, double c) {
        return push(hetpfl::scale(value(a), c), [a, c](Tape& t, const Tensor& g) {
            t.accumulate(a, hetpfl::scale(g, c));
        });
    }

    NodeId add_const(NodeId a, double c) {
        return push(hetpfl::add_scalar(value(a), c),
                    [a](Tape& t, const Tensor& g) { t.accumulate(a, g); });
    }

    NodeId matmul(NodeId a, NodeId b) {
        return push(hetpfl::matmul(value(a), value(b)), [a, b](Tape& t, const Tensor& g) {
            t.accumulate(a, matmul_nt(g, t.value(b)));
            t.accumulate(b, matmul_tn(t.value(a), g));
        });
    }

    NodeId add_bias(NodeId x, NodeId b) {
        return push(hetpfl::add_bias(value(x), value(b)), [x, b](Tape& t, const Tensor& g) {
            t.accumulate(x, g);
            Tensor gb = Tensor::zeros({g.shape[1]});
            for (std::size_t i = 0; i < g.shape[0]; ++i)
                for (std::size_t j = 0; j < g.shape[1]; ++j) gb.at(j) += g.at(i, j);
            t.accumulate(b, gb);
        });
    }

    /// Subgradient at 0 is 0 by convention.
    NodeId relu(NodeId x) {
        return push(hetpfl::relu(value(x)), [x](Tape& t, const Tensor& g) {
            Tensor gx = g;
            const Tensor& in = t.value(x);
            for (std::size_t i = 0; i < gx.numel(); ++i)
                if (in.data[i] <= 0.0) gx.data[i] = 0.0;
            t.accumulate(x, gx);
        });
    }

    NodeId sigmoid(NodeId x) {
        Tensor out = hetpfl::sigmoid(value(x));
        return push(out, [x, out](Tape& t, const Tensor& g) {
            Tensor gx = g;
            for (std::size_t i = 0; i < gx.numel(); ++i)
                gx.data[i] *= out.data[i] * (1.0 - out.data[i]);
            t.accumulate(x, gx);
        });
    }

    /// log(max(x, kLogFloor)); gradient is 0 on the floored branch.
    NodeId log_floored(NodeId x) {
        return push(hetpfl::log_floored(value(x)), [x](Tape& t, const Tensor& g) {
            Tensor gx = g;
            const Tensor& in = t.value(x);
            for (std::size_t i = 0; i < gx.numel(); ++i)
                gx.data[i] = in.data[i] > kLogFloor ? gx.data[i] / in.data[i] : 0.0;
            t.accumulate(x, gx);
        });
    }

    /// Subgradient at 0 is 0 (mirrors relu's convention).
    NodeId abs(NodeId x) {
        return push(abs_val(value(x)), [x](Tape& t, const Tensor& g) {
            Tensor gx = g;
            const Tensor& in = t.value(x);
            for (std::size_t i = 0; i < gx.numel(); ++i) {
                double v = in.data[i];
                gx.data[i] *= v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
            }
            t.accumulate(x, gx);
        });
    }

    NodeId softmax(NodeId x) {
        Tensor out = hetpfl::softmax(value(x));
        return push(out, [x, out](Tape& t, const Tensor& g) {
            double dot = 0.0;
            for (std::size_t i = 0; i < g.numel(); ++i) dot += g.data[i] * out.data[i];
            Tensor gx = g;
            for (std::size_t i = 0; i < gx.numel(); ++i)
                gx.data[i] = out.data[i] * (g.data[i] - dot);
            t.accumulate(x, gx);
        });
    }

    NodeId sum(NodeId x) {
        return push(Tensor::scalar(sum_value(value(x))), [x](Tape& t, const Tensor& g) {
            t.accumulate(x, Tensor::full(t.value(x).shape, g.data[0]));
        });
    }

    NodeId mean(NodeId x) {
        std::size_t n = value(x).numel();
        return push(Tensor::scalar(mean_value(value(x))), [x, n](Tape& t, const Tensor& g) {
            t.accumulate(x, Tensor::full(t.value(x).shape,
                                         g.data[0] / static_cast<double>(n)));
        });
    }

    /// Broadcast a scalar node to a length-n vector.
    NodeId spread(NodeId s, std::size_t n) {
        if (!value(s).is_scalar()) throw ContractError("spread: input must be scalar");
        return push(Tensor::full({n}, value(s).data[0]), [s](Tape& t, const Tensor& g) {
            t.accumulate(s, Tensor::scalar(sum_value(g)));
        });
    }

    /// max of two scalars; on ties the gradient is routed to `a`.
    NodeId max2(NodeId a, NodeId b) {
        if (!value(a).is_scalar() || !value(b).is_scalar())
            throw ContractError("max2: both inputs must be scalar");
        double va = value(a).data[0], vb = value(b).data[0];
        bool take_a = va >= vb;
        return push(Tensor::scalar(take_a ? va : vb), [a, b, take_a](Tape& t, const Tensor& g) {
            t.accumulate(take_a ? a : b, g);
        });
    }

    NodeId slice(NodeId x, std::size_t offset, std::size_t len) {
        return push(slice_flat(value(x), offset, len), [x, offset](Tape& t, const Tensor& g) {
            Tensor gx = Tensor::zeros(t.value(x).shape);
            for (std::size_t i = 0; i < g.numel(); ++i) gx.data[offset + i] = g.data[i];
            t.accumulate(x, gx);
        });
    }

    NodeId reshape(NodeId x, std::vector<std::size_t> shape_) {
        return push(hetpfl::reshape(value(x), shape_), [x](Tape& t, const Tensor& g) {
            t.accumulate(x, hetpfl::reshape(g, t.value(x).shape));
        });
    }

    /// sum_k w[k] * items[k], flattened; differentiable in w with the items
    /// held as constants. All items must share one shape.
    NodeId weighted_sum(NodeId w, std::vector<Tensor> items) {
        const Tensor& wv = value(w);
        if (wv.shape.size() != 1 || wv.shape[0] != items.size())
            throw DimensionError("weighted_sum: weight " + wv.shape_str() + " for " +
                                 std::to_string(items.size()) + " items");
        for (const Tensor& it : items) require_same_shape(items.front(), it, "weighted_sum");
        Tensor out = Tensor::zeros(items.front().shape);
        for (std::size_t k = 0; k < items.size(); ++k)
            for (std::size_t i = 0; i < out.numel(); ++i)
                out.data[i] += wv.data[k] * items[k].data[i];
        return push(std::move(out), [w, items = std::move(items)](Tape& t, const Tensor& g) {
            Tensor gw = Tensor::zeros({items.size()});
            for (std::size_t k = 0; k < items.size(); ++k) {
                double s = 0.0;
                for (std::size_t i = 0; i < g.numel(); ++i) s += g.data[i] * items[k].data[i];
                gw.at(k) = s;
            }
            t.accumulate(w, gw);
        });
    }

    /// Custom elementwise op: y = f(x), dy/dx supplied by the caller as a
    /// function of (input, upstream gradient). Used by diagnostic fixtures.
    NodeId apply_unary(NodeId x, const std::function<double(double)>& f,
                       std::function<double(double, double)> df) {
        Tensor out = value(x);
        for (double& v : out.data) v = f(v);
        return push(std::move(out), [x, df = std::move(df)](Tape& t, const Tensor& g) {
            Tensor gx = g;
            const Tensor& in = t.value(x);
            for (std::size_t i = 0; i < gx.numel(); ++i) gx.data[i] = df(in.data[i], g.data[i]);
            t.accumulate(x, gx);
        });
    }

    /**
     * Replay the tape backward from a scalar root. Returns one gradient per
     * requested leaf, in order; leaves not reachable from the root get zeros
     * of their own shape.
     */
    std::vector<Tensor> backward(NodeId root, std::span<const NodeId> leaves) {
        if (!value(root).is_scalar())
            throw ContractError("backward: root must be scalar, got " + value(root).shape_str());
        grads_.assign(nodes_.size(), Tensor{});
        grads_[root] = Tensor::scalar(1.0);
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (grads_[i].numel() == 0 || !nodes_[i].back) continue;
            nodes_[i].back(*this, grads_[i]);
        }
        std::vector<Tensor> out;
        out.reserve(leaves.size());
        for (NodeId leaf : leaves) {
            out.push_back(grads_[leaf].numel() ? std::move(grads_[leaf])
                                               : Tensor::zeros(value(leaf).shape));
        }
        grads_.clear();
        return out;
    }

    Tensor gradient(NodeId root, NodeId leaf) {
        NodeId ls[1] = {leaf};
        return backward(root, ls)[0];
    }

private:
    struct Node {
        Tensor value;
        std::function<void(Tape&, const Tensor&)> back;
    };

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;

    NodeId push(Tensor value, std::function<void(Tape&, const Tensor&)> back) {
        nodes_.push_back(Node{std::move(value), std::move(back)});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    void accumulate(NodeId id, const Tensor& g) {
        if (grads_[id].numel() == 0) {
            grads_[id] = g;
        } else {
            require_same_shape(grads_[id], g, "gradient accumulate");
            for (std::size_t i = 0; i < g.numel(); ++i) grads_[id].data[i] += g.data[i];
        }
    }
};

}  // namespace hetpfl

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "mtca/errors.hpp"
#include "mtca/tensor.hpp"

namespace mtca {

/// Reverse-mode gradient tape over tensor-valued operations.
///
/// Nodes are appended in evaluation order, so walking the tape backwards is a
/// valid reverse topological order. backward() zeroes every gradient slot
/// before seeding, which makes repeated calls on the same graph identical.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&)>;

    int leaf(Tensor value) { return push(std::move(value), nullptr); }

    int node(Tensor value, BackwardFn fn) { return push(std::move(value), std::move(fn)); }

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    Tensor& value(int id) { return nodes_[static_cast<std::size_t>(id)].value; }
    Tensor& grad(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
    const Tensor& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    double scalar(int id) const {
        const Tensor& v = value(id);
        if (v.size() != 1) throw NumericError("tape node is not a scalar");
        return v[0];
    }

    std::size_t num_nodes() const { return nodes_.size(); }

    /// Accumulates d(root)/d(node) into every gradient slot.
    void backward(int root) {
        if (value(root).size() != 1)
            throw NumericError("backward: graph not rooted at a scalar loss");
        for (auto& n : nodes_) n.grad.fill(0.0);
        grad(root)[0] = 1.0;
        for (int id = root; id >= 0; --id) {
            auto& n = nodes_[static_cast<std::size_t>(id)];
            if (n.fn) n.fn(*this);
        }
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        BackwardFn fn;
    };

    int push(Tensor value, BackwardFn fn) {
        Node n;
        n.grad = Tensor::zeros(value.shape());
        n.value = std::move(value);
        n.fn = std::move(fn);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
};

/// C = A * B with dA += dC * B^T, dB += A^T * dC.
inline int op_matmul(Tape& tape, int a, int b) {
    Tensor c = matmul(tape.value(a), tape.value(b));
    return tape.node(std::move(c), [a, b, out = int(tape.num_nodes())](Tape& t) {
        const auto dc = mat_view(t.grad(out));
        mat_view(t.grad(a)).noalias() += dc * mat_view(t.value(b)).transpose();
        mat_view(t.grad(b)).noalias() += mat_view(t.value(a)).transpose() * dc;
    });
}

/// Slices one sequence position: (batch, seq, feat) -> (batch, feat).
inline int op_slice_seq(Tape& tape, int x, std::size_t pos) {
    const Tensor& v = tape.value(x);
    if (v.rank() != 3) throw std::invalid_argument("op_slice_seq: rank-3 input required");
    const std::size_t batch = v.dim(0), seq = v.dim(1), feat = v.dim(2);
    if (pos >= seq) throw std::invalid_argument("op_slice_seq: position out of range");
    Tensor out({batch, feat});
    for (std::size_t i = 0; i < batch; ++i) {
        const double* src = v.data() + (i * seq + pos) * feat;
        std::copy(src, src + feat, out.data() + i * feat);
    }
    return tape.node(std::move(out), [x, pos, batch, seq, feat,
                                      out_id = int(tape.num_nodes())](Tape& t) {
        const Tensor& dout = t.grad(out_id);
        Tensor& dx = t.grad(x);
        for (std::size_t i = 0; i < batch; ++i) {
            double* dst = dx.data() + (i * seq + pos) * feat;
            const double* src = dout.data() + i * feat;
            for (std::size_t j = 0; j < feat; ++j) dst[j] += src[j];
        }
    });
}

/// Scalar result sum_i w_i * v_i over scalar-valued nodes.
inline int op_weighted_sum(Tape& tape, const std::vector<std::pair<int, double>>& terms) {
    if (terms.empty()) throw std::invalid_argument("op_weighted_sum: no terms");
    double total = 0.0;
    for (const auto& [id, w] : terms) total += w * tape.scalar(id);
    return tape.node(Tensor::scalar(total),
                     [terms, out = int(tape.num_nodes())](Tape& t) {
                         const double g = t.grad(out)[0];
                         for (const auto& [id, w] : terms) t.grad(id)[0] += w * g;
                     });
}

} // namespace mtca

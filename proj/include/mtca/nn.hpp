// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "mtca/autodiff.hpp"
#include "mtca/rng.hpp"
#include "mtca/tensor.hpp"

namespace mtca {

namespace detail {
using RowArr = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ArrView = Eigen::Map<RowArr>;
using ConstArrView = Eigen::Map<const RowArr>;

inline ArrView arr_view(double* p, std::size_t rows, std::size_t cols) {
    return ArrView(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline ConstArrView arr_view(const double* p, std::size_t rows, std::size_t cols) {
    return ConstArrView(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
} // namespace detail

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// One GRU layer. Gate rows are stacked [update z | reset r | candidate n].
/// The candidate applies the reset gate to the recurrent term after the
/// matrix product: n = tanh(x W_n^T + b_in + r * (h W_rn^T + b_hn)).
struct GruLayerParams {
    Tensor w_input;    // (3h, in)
    Tensor w_recur;    // (3h, h)
    Tensor bias_input; // (3h)
    Tensor bias_recur; // (3h)

    std::size_t input_dim() const { return w_input.dim(1); }
    std::size_t hidden_dim() const { return w_recur.dim(1); }
};

struct DenseParams {
    Tensor weight; // (out, in)
    Tensor bias;   // (out)

    std::size_t input_dim() const { return weight.dim(1); }
    std::size_t output_dim() const { return weight.dim(0); }
};

namespace detail {
inline void fill_uniform(Tensor& t, double lo, double hi, Rng& rng) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
}
} // namespace detail

/// Weights ~ U[-k, k] with k = 1/sqrt(hidden); biases zero.
inline GruLayerParams make_gru_layer(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    GruLayerParams p;
    p.w_input = Tensor({3 * hidden_dim, input_dim});
    p.w_recur = Tensor({3 * hidden_dim, hidden_dim});
    p.bias_input = Tensor({3 * hidden_dim});
    p.bias_recur = Tensor({3 * hidden_dim});
    detail::fill_uniform(p.w_input, -k, k, rng);
    detail::fill_uniform(p.w_recur, -k, k, rng);
    return p;
}

inline DenseParams make_dense(std::size_t input_dim, std::size_t output_dim, Rng& rng) {
    const double k = 1.0 / std::sqrt(static_cast<double>(input_dim));
    DenseParams p;
    p.weight = Tensor({output_dim, input_dim});
    p.bias = Tensor({output_dim});
    detail::fill_uniform(p.weight, -k, k, rng);
    return p;
}

inline std::size_t param_count(const GruLayerParams& p) {
    return p.w_input.size() + p.w_recur.size() + p.bias_input.size() + p.bias_recur.size();
}

inline std::size_t param_count(const DenseParams& p) { return p.weight.size() + p.bias.size(); }

// ---------------------------------------------------------------------------
// GRU forward/backward cores (sequence-major internally)
// ---------------------------------------------------------------------------

struct GruLayerCache {
    Tensor x_sm;    // (seq, batch, in)
    Tensor gates_x; // (seq, batch, 3h) input-side preactivations incl. bias_input
    Tensor z, r, n; // (seq, batch, h)
    Tensor a_rec;   // (seq, batch, h) recurrent candidate preactivation incl. bias
    Tensor h;       // (seq+1, batch, h), h[0] = 0
};

namespace detail {

inline void check_gru_input(const GruLayerParams& p, const Tensor& input) {
    if (input.rank() != 3)
        throw std::invalid_argument("gru: input must be (batch, seq, features), got " +
                                    input.shape_str());
    if (input.dim(2) != p.input_dim())
        throw std::invalid_argument("gru: feature dim " + std::to_string(input.dim(2)) +
                                    " does not match layer input dim " +
                                    std::to_string(p.input_dim()));
}

/// input (batch, seq, in) -> output (batch, seq, h); zero initial state.
inline Tensor gru_layer_forward(const GruLayerParams& p, const Tensor& input,
                                GruLayerCache* cache) {
    check_gru_input(p, input);
    const std::size_t batch = input.dim(0), seq = input.dim(1), in = input.dim(2);
    const std::size_t h = p.hidden_dim(), g3 = 3 * h;

    GruLayerCache local;
    GruLayerCache& c = cache ? *cache : local;
    c.x_sm = swap_axes01(input);
    c.gates_x = Tensor({seq, batch, g3});
    c.z = Tensor({seq, batch, h});
    c.r = Tensor({seq, batch, h});
    c.n = Tensor({seq, batch, h});
    c.a_rec = Tensor({seq, batch, h});
    c.h = Tensor({seq + 1, batch, h});

    // Input-side preactivations for the whole sequence in one product.
    {
        auto gx = mat_view(c.gates_x, seq * batch, g3);
        gx.noalias() = mat_view(c.x_sm, seq * batch, in) * mat_view(p.w_input).transpose();
        gx.rowwise() += ConstVecView(p.bias_input.data(), static_cast<Eigen::Index>(g3))
                            .transpose();
    }

    Tensor gates_h({batch, g3});
    const auto w_rec = mat_view(p.w_recur);
    const auto b_rec =
        ConstVecView(p.bias_recur.data(), static_cast<Eigen::Index>(g3)).transpose();

    for (std::size_t t = 0; t < seq; ++t) {
        MatView h_prev_m(c.h.data() + t * batch * h, static_cast<Eigen::Index>(batch),
                         static_cast<Eigen::Index>(h));
        auto gh = mat_view(gates_h);
        gh.noalias() = h_prev_m * w_rec.transpose();
        gh.rowwise() += b_rec;

        auto gx = detail::arr_view(c.gates_x.data() + t * batch * g3, batch, g3);
        auto gha = detail::arr_view(gates_h.data(), batch, g3);
        auto z_t = detail::arr_view(c.z.data() + t * batch * h, batch, h);
        auto r_t = detail::arr_view(c.r.data() + t * batch * h, batch, h);
        auto n_t = detail::arr_view(c.n.data() + t * batch * h, batch, h);
        auto a_t = detail::arr_view(c.a_rec.data() + t * batch * h, batch, h);
        auto h_prev_a = detail::arr_view(c.h.data() + t * batch * h, batch, h);
        auto h_next = detail::arr_view(c.h.data() + (t + 1) * batch * h, batch, h);

        const auto hc = static_cast<Eigen::Index>(h);
        z_t = 1.0 / (1.0 + (-(gx.leftCols(hc) + gha.leftCols(hc))).exp());
        r_t = 1.0 / (1.0 + (-(gx.middleCols(hc, hc) + gha.middleCols(hc, hc))).exp());
        a_t = gha.rightCols(hc);
        n_t = (gx.rightCols(hc) + r_t * a_t).tanh();
        h_next = (1.0 - z_t) * n_t + z_t * h_prev_a;
    }

    // States h[1..seq] in sequence-major layout, then back to batch-major.
    Tensor out_sm({seq, batch, h});
    std::copy(c.h.data() + batch * h, c.h.data() + (seq + 1) * batch * h, out_sm.data());
    return swap_axes01(out_sm);
}

/// Accumulates parameter gradients and returns d(input) as (batch, seq, in).
inline Tensor gru_layer_backward(const GruLayerParams& p, const GruLayerCache& c,
                                 const Tensor& d_out, Tensor& g_w_input, Tensor& g_w_recur,
                                 Tensor& g_bias_input, Tensor& g_bias_recur) {
    const std::size_t seq = c.z.dim(0), batch = c.z.dim(1), h = c.z.dim(2);
    const std::size_t in = c.x_sm.dim(2), g3 = 3 * h;
    const auto hc = static_cast<Eigen::Index>(h);

    const Tensor dout_sm = swap_axes01(d_out); // (seq, batch, h)
    Tensor dgx({seq, batch, g3});
    Tensor dgh({batch, g3});
    Tensor dh_carry({batch, h});

    const auto w_rec = mat_view(p.w_recur);

    for (std::size_t t = seq; t-- > 0;) {
        auto dh = detail::arr_view(dh_carry.data(), batch, h);
        dh += detail::arr_view(dout_sm.data() + t * batch * h, batch, h);

        auto z_t = detail::arr_view(c.z.data() + t * batch * h, batch, h);
        auto r_t = detail::arr_view(c.r.data() + t * batch * h, batch, h);
        auto n_t = detail::arr_view(c.n.data() + t * batch * h, batch, h);
        auto a_t = detail::arr_view(c.a_rec.data() + t * batch * h, batch, h);
        auto h_prev = detail::arr_view(c.h.data() + t * batch * h, batch, h);

        auto dgx_t = detail::arr_view(dgx.data() + t * batch * g3, batch, g3);
        auto dgh_a = detail::arr_view(dgh.data(), batch, g3);

        // h = (1 - z) * n + z * h_prev
        const auto dz = (dh * (h_prev - n_t)).eval();
        const auto dn = (dh * (1.0 - z_t)).eval();
        const auto dan = (dn * (1.0 - n_t.square())).eval();
        const auto dr = (dan * a_t).eval();

        dgx_t.leftCols(hc) = dz * z_t * (1.0 - z_t);
        dgx_t.middleCols(hc, hc) = dr * r_t * (1.0 - r_t);
        dgx_t.rightCols(hc) = dan;

        dgh_a.leftCols(hc) = dgx_t.leftCols(hc);
        dgh_a.middleCols(hc, hc) = dgx_t.middleCols(hc, hc);
        dgh_a.rightCols(hc) = dan * r_t;

        // Carry into the previous step.
        dh = dh * z_t; // direct path through h_prev
        MatView dh_m(dh_carry.data(), static_cast<Eigen::Index>(batch), hc);
        dh_m.noalias() += mat_view(dgh) * w_rec;

        ConstMatView h_prev_m(c.h.data() + t * batch * h, static_cast<Eigen::Index>(batch), hc);
        mat_view(g_w_recur).noalias() += mat_view(dgh).transpose() * h_prev_m;
        VecView(g_bias_recur.data(), static_cast<Eigen::Index>(g3)) +=
            mat_view(dgh).colwise().sum().transpose();
    }

    mat_view(g_w_input).noalias() +=
        mat_view(dgx, seq * batch, g3).transpose() * mat_view(c.x_sm, seq * batch, in);
    VecView(g_bias_input.data(), static_cast<Eigen::Index>(g3)) +=
        mat_view(dgx, seq * batch, g3).colwise().sum().transpose();

    Tensor dx_sm({seq, batch, in});
    mat_view(dx_sm, seq * batch, in).noalias() =
        mat_view(dgx, seq * batch, g3) * mat_view(p.w_input);
    return swap_axes01(dx_sm);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Standalone forward operations
// ---------------------------------------------------------------------------

/// Stacked GRU over (batch, seq, in); returns the last layer's full output
/// sequence (batch, seq, hidden). Initial hidden states are zero.
inline Tensor gru_forward(std::span<const GruLayerParams> layers, const Tensor& input) {
    if (layers.empty()) throw std::invalid_argument("gru_forward: no layers");
    Tensor cur = input;
    for (const auto& layer : layers) cur = detail::gru_layer_forward(layer, cur, nullptr);
    return cur;
}

/// y = x W^T + b applied along the last axis.
inline Tensor dense_forward(const DenseParams& p, const Tensor& x) {
    if (x.rank() < 1 || x.dim(x.rank() - 1) != p.input_dim())
        throw std::invalid_argument("dense_forward: last axis " + x.shape_str() +
                                    " does not match weight " + p.weight.shape_str());
    const std::size_t in = p.input_dim(), out = p.output_dim();
    const std::size_t rows = x.size() / in;
    std::vector<std::size_t> out_shape(x.shape());
    out_shape.back() = out;
    Tensor y(out_shape);
    auto ym = mat_view(y, rows, out);
    ym.noalias() = mat_view(x, rows, in) * mat_view(p.weight).transpose();
    ym.rowwise() +=
        ConstVecView(p.bias.data(), static_cast<Eigen::Index>(out)).transpose();
    return y;
}

/// Mean of squared differences over all entries.
inline double mse_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("mse_loss: shape mismatch " + pred.shape_str() + " vs " +
                                    target.shape_str());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

/// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 input required");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < rows; ++i) {
        const double* src = logits.data() + i * cols;
        double* dst = out.data() + i * cols;
        double mx = src[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, src[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            dst[j] = std::exp(src[j] - mx);
            sum += dst[j];
        }
        for (std::size_t j = 0; j < cols; ++j) dst[j] /= sum;
    }
    return out;
}

/// Mean over the batch of -log(softmax probability of the true class).
inline double cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size())
        throw std::invalid_argument("cross_entropy_loss: bad logits/labels shapes");
    const std::size_t cols = logits.dim(1);
    for (int lbl : labels)
        if (lbl < 0 || static_cast<std::size_t>(lbl) >= cols)
            throw std::invalid_argument("cross_entropy_loss: label out of range");
    const Tensor probs = softmax_rows(logits);
    double acc = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        acc -= std::log(probs(i, static_cast<std::size_t>(labels[i])));
    return acc / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// Tape operations
// ---------------------------------------------------------------------------

struct GruLayerNodes {
    int w_input = -1, w_recur = -1, bias_input = -1, bias_recur = -1;
};

namespace detail {
inline GruLayerParams gather_gru_params(const Tape& tape, const GruLayerNodes& ids) {
    return GruLayerParams{tape.value(ids.w_input), tape.value(ids.w_recur),
                          tape.value(ids.bias_input), tape.value(ids.bias_recur)};
}
} // namespace detail

/// Stacked GRU as one tape node; BPTT through all layers on backward.
inline int op_gru(Tape& tape, int input, std::vector<GruLayerNodes> layers) {
    if (layers.empty()) throw std::invalid_argument("op_gru: no layers");
    auto caches = std::make_shared<std::vector<GruLayerCache>>(layers.size());
    Tensor cur = tape.value(input);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const GruLayerParams p = detail::gather_gru_params(tape, layers[l]);
        cur = detail::gru_layer_forward(p, cur, &(*caches)[l]);
    }
    return tape.node(std::move(cur), [input, layers = std::move(layers), caches,
                                      out = int(tape.num_nodes())](Tape& t) {
        Tensor d = t.grad(out);
        for (std::size_t l = layers.size(); l-- > 0;) {
            const GruLayerParams p = detail::gather_gru_params(t, layers[l]);
            d = detail::gru_layer_backward(p, (*caches)[l], d, t.grad(layers[l].w_input),
                                           t.grad(layers[l].w_recur),
                                           t.grad(layers[l].bias_input),
                                           t.grad(layers[l].bias_recur));
        }
        Tensor& dx = t.grad(input);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += d[i];
    });
}

inline int op_dense(Tape& tape, int x, int w, int b) {
    const DenseParams p{tape.value(w), tape.value(b)};
    Tensor y = dense_forward(p, tape.value(x));
    const std::size_t in = p.input_dim(), out_dim = p.output_dim();
    const std::size_t rows = tape.value(x).size() / in;
    return tape.node(std::move(y), [x, w, b, rows, in, out_dim,
                                    out = int(tape.num_nodes())](Tape& t) {
        const auto dy = mat_view(t.grad(out), rows, out_dim);
        mat_view(t.grad(x), rows, in).noalias() += dy * mat_view(t.value(w));
        mat_view(t.grad(w)).noalias() += dy.transpose() * mat_view(t.value(x), rows, in);
        VecView(t.grad(b).data(), static_cast<Eigen::Index>(out_dim)) +=
            dy.colwise().sum().transpose();
    });
}

inline int op_mse(Tape& tape, int pred, Tensor target) {
    const double loss = mse_loss(tape.value(pred), target);
    return tape.node(Tensor::scalar(loss), [pred, target = std::move(target),
                                            out = int(tape.num_nodes())](Tape& t) {
        const double g = t.grad(out)[0];
        const Tensor& p = t.value(pred);
        Tensor& dp = t.grad(pred);
        const double scale = 2.0 * g / static_cast<double>(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) dp[i] += scale * (p[i] - target[i]);
    });
}

inline int op_cross_entropy(Tape& tape, int logits, std::vector<int> labels) {
    const double loss = cross_entropy_loss(tape.value(logits), labels);
    Tensor probs = softmax_rows(tape.value(logits));
    return tape.node(Tensor::scalar(loss), [logits, labels = std::move(labels),
                                            probs = std::move(probs),
                                            out = int(tape.num_nodes())](Tape& t) {
        const double g = t.grad(out)[0];
        Tensor& dl = t.grad(logits);
        const std::size_t batch = probs.dim(0), cols = probs.dim(1);
        const double scale = g / static_cast<double>(batch);
        for (std::size_t i = 0; i < batch; ++i)
            for (std::size_t j = 0; j < cols; ++j) {
                const double onehot = (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
                dl(i, j) += scale * (probs(i, j) - onehot);
            }
    });
}

} // namespace mtca

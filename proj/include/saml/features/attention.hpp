#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "saml/numerics/init.hpp"
#include "saml/numerics/ops.hpp"

namespace saml {

/// Projection matrices of one multi-head attention block. All are d x d; head h
/// uses columns [h*d_k, (h+1)*d_k) of W^Q, W^K, W^V.
struct AttentionParams {
    Parameter* wq = nullptr;
    Parameter* wk = nullptr;
    Parameter* wv = nullptr;
    Parameter* wo = nullptr;
    std::size_t heads = 1;

    std::size_t dim() const { return wq->value.rows(); }

    static AttentionParams create(ParameterStore& store, const std::string& prefix, std::size_t d, std::size_t heads,
                                  std::mt19937_64& rng) {
        if (heads == 0 || d % heads != 0)
            throw ConfigError("attention: width " + std::to_string(d) + " is not divisible by " +
                              std::to_string(heads) + " heads");
        AttentionParams p;
        p.heads = heads;
        p.wq = &store.add(prefix + "/wq", init::xavier_uniform(d, d, rng));
        p.wk = &store.add(prefix + "/wk", init::xavier_uniform(d, d, rng));
        p.wv = &store.add(prefix + "/wv", init::xavier_uniform(d, d, rng));
        p.wo = &store.add(prefix + "/wo", init::xavier_uniform(d, d, rng));
        return p;
    }
};

constexpr double kMaskedScore = -1e9;

struct AttentionOutput {
    Var out;
    /// Softmax weights, [batch][head][query][key] flattened; zeros for samples without valid keys.
    std::shared_ptr<const std::vector<double>> weights;
};

/// Scaled dot-product attention per head over already projected Q, K, V.
///
/// Inputs are [batch*len x d] with sample-major rows. Key positions with mask 0 get
/// a score of -1e9 before the softmax; a sample with no valid key yields zero rows.
inline AttentionOutput scaled_dot_attention(Var q, Var k, Var v, const std::vector<char>& mask, std::size_t batch,
                                            std::size_t len, std::size_t heads) {
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    const std::size_t d = qv.cols();
    if (heads == 0 || d % heads != 0)
        throw ConfigError("attention: width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                          " heads");
    for (const Tensor* t : {&qv, &kv, &vv})
        if (t->rank() != 2 || t->rows() != batch * len || t->cols() != d)
            throw DimensionError("attention: expected [" + std::to_string(batch * len) + "x" + std::to_string(d) +
                                 "] inputs, got " + shape_str(t->shape()));
    if (mask.size() != batch * len) throw DimensionError("attention: mask length mismatch");
    const std::size_t dk = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

    auto weights = std::make_shared<std::vector<double>>(batch * heads * len * len, 0.0);
    Tensor out(Shape{batch * len, d});
    std::vector<double> scores(len);
    for (std::size_t b = 0; b < batch; ++b) {
        bool any_valid = false;
        for (std::size_t m = 0; m < len; ++m) any_valid = any_valid || mask[b * len + m];
        if (!any_valid) continue;
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * dk;
            for (std::size_t l = 0; l < len; ++l) {
                const double* qr = qv.data() + (b * len + l) * d + c0;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t m = 0; m < len; ++m) {
                    double s;
                    if (mask[b * len + m]) {
                        const double* kr = kv.data() + (b * len + m) * d + c0;
                        s = 0.0;
                        for (std::size_t c = 0; c < dk; ++c) s += qr[c] * kr[c];
                        s *= inv_sqrt;
                    } else {
                        s = kMaskedScore;
                    }
                    scores[m] = s;
                    mx = std::max(mx, s);
                }
                double z = 0.0;
                for (std::size_t m = 0; m < len; ++m) {
                    scores[m] = std::exp(scores[m] - mx);
                    z += scores[m];
                }
                double* w = weights->data() + ((b * heads + h) * len + l) * len;
                double* orow = out.data() + (b * len + l) * d + c0;
                for (std::size_t m = 0; m < len; ++m) {
                    w[m] = scores[m] / z;
                    const double* vr = vv.data() + (b * len + m) * d + c0;
                    for (std::size_t c = 0; c < dk; ++c) orow[c] += w[m] * vr[c];
                }
            }
        }
    }

    const std::size_t iq = q.id, ik = k.id, iv = v.id;
    std::shared_ptr<const std::vector<double>> saved = weights;
    Var result = q.tape->push(
        std::move(out), {iq, ik, iv},
        [iq, ik, iv, saved, batch, len, heads, d, dk, inv_sqrt](Tape& t, const Tensor& g) {
            const Tensor& qv = t.value(iq);
            const Tensor& kv = t.value(ik);
            const Tensor& vv = t.value(iv);
            double* gq = t.wants_grad(iq) ? t.grad_buffer(iq).data() : nullptr;
            double* gk = t.wants_grad(ik) ? t.grad_buffer(ik).data() : nullptr;
            double* gv = t.wants_grad(iv) ? t.grad_buffer(iv).data() : nullptr;
            std::vector<double> dp(len), ds(len);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t h = 0; h < heads; ++h) {
                    const std::size_t c0 = h * dk;
                    for (std::size_t l = 0; l < len; ++l) {
                        const double* w = saved->data() + ((b * heads + h) * len + l) * len;
                        const double* grow = g.data() + (b * len + l) * d + c0;
                        double dot = 0.0;
                        for (std::size_t m = 0; m < len; ++m) {
                            const double* vr = vv.data() + (b * len + m) * d + c0;
                            double s = 0.0;
                            for (std::size_t c = 0; c < dk; ++c) s += grow[c] * vr[c];
                            dp[m] = s;
                            dot += s * w[m];
                            if (gv) {
                                double* gvr = gv + (b * len + m) * d + c0;
                                for (std::size_t c = 0; c < dk; ++c) gvr[c] += w[m] * grow[c];
                            }
                        }
                        for (std::size_t m = 0; m < len; ++m) ds[m] = w[m] * (dp[m] - dot) * inv_sqrt;
                        const double* qr = qv.data() + (b * len + l) * d + c0;
                        for (std::size_t m = 0; m < len; ++m) {
                            if (ds[m] == 0.0) continue;
                            const double* kr = kv.data() + (b * len + m) * d + c0;
                            if (gq) {
                                double* gqr = gq + (b * len + l) * d + c0;
                                for (std::size_t c = 0; c < dk; ++c) gqr[c] += ds[m] * kr[c];
                            }
                            if (gk) {
                                double* gkr = gk + (b * len + m) * d + c0;
                                for (std::size_t c = 0; c < dk; ++c) gkr[c] += ds[m] * qr[c];
                            }
                        }
                    }
                }
            }
        });
    return {result, std::move(weights)};
}

/// Concat(head_1..head_H) W^O with head_h = softmax(Q W^Q_h (K W^K_h)^T / sqrt(d_k)) V W^V_h.
inline AttentionOutput multi_head_attention(Tape& tape, const AttentionParams& p, Var q_src, Var k_src, Var v_src,
                                            const std::vector<char>& mask, std::size_t batch, std::size_t len) {
    const std::size_t d = p.dim();
    for (Var x : {q_src, k_src, v_src})
        if (x.value().cols() != d)
            throw DimensionError("multi_head_attention: input width " + std::to_string(x.value().cols()) +
                                 " vs attention width " + std::to_string(d));
    auto q = matmul(q_src, tape.param(*p.wq));
    auto k = matmul(k_src, tape.param(*p.wk));
    auto v = matmul(v_src, tape.param(*p.wv));
    auto att = scaled_dot_attention(q, k, v, mask, batch, len, p.heads);
    return {matmul(att.out, tape.param(*p.wo)), att.weights};
}

} // namespace saml

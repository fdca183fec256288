#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "saml/numerics/tape.hpp"

namespace saml {

namespace kernel {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

inline ConstMap view(const Tensor& t) { return ConstMap(t.data(), t.rows(), t.cols()); }
inline Map view(Tensor& t) { return Map(t.data(), t.rows(), t.cols()); }

constexpr double kSigmoidClamp = 30.0;

inline double sigmoid(double x) {
    x = std::clamp(x, -kSigmoidClamp, kSigmoidClamp);
    return 1.0 / (1.0 + std::exp(-x));
}

} // namespace kernel

namespace detail {

inline void require_same_tape(const Var& a, const Var& b) {
    if (a.tape != b.tape) throw ContractError("operands live on different tapes");
}

inline void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

} // namespace detail

/// a[m x k] * b[k x n]
///
/// Evaluated row by row so each output row depends only on its own input row, and the
/// gradient of b accumulates rows in order while skipping rows with zero gradient.
/// Results are therefore bitwise independent of which other rows share the batch.
inline Var matmul(Var a, Var b) {
    detail::require_same_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    detail::require_matrix(av, "matmul");
    detail::require_matrix(bv, "matmul");
    if (av.cols() != bv.rows())
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(av.shape()) + " * " +
                             shape_str(bv.shape()));
    Tensor out(Shape{av.rows(), bv.cols()});
    {
        auto A = kernel::view(av);
        auto B = kernel::view(bv);
        auto C = kernel::view(out);
        for (Eigen::Index r = 0; r < A.rows(); ++r) C.row(r).noalias() = A.row(r) * B;
    }
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
        auto A = kernel::view(t.value(ia));
        auto B = kernel::view(t.value(ib));
        auto G = kernel::view(g);
        if (t.wants_grad(ia)) {
            auto GA = kernel::view(t.grad_buffer(ia));
            for (Eigen::Index r = 0; r < G.rows(); ++r) GA.row(r).noalias() += G.row(r) * B.transpose();
        }
        if (t.wants_grad(ib)) {
            auto GB = kernel::view(t.grad_buffer(ib));
            for (Eigen::Index r = 0; r < G.rows(); ++r) {
                if ((G.row(r).array() == 0.0).all()) continue;
                GB.noalias() += A.row(r).transpose() * G.row(r);
            }
        }
    });
}

/// Elementwise sum. `b` may also be a bias vector ([n] or [1 x n]) broadcast over the rows of `a`.
inline Var add(Var a, Var b) {
    detail::require_same_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const bool same = av.shape() == bv.shape();
    const bool bias = !same && av.rank() == 2 && bv.size() == av.cols() &&
                      (bv.rank() == 1 || (bv.rank() == 2 && bv.rows() == 1));
    if (!same && !bias)
        throw DimensionError("add: shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()) +
                             " are not broadcastable");
    Tensor out = av;
    const std::size_t n = bv.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[same ? i : i % n];
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->push(std::move(out), {ia, ib}, [ia, ib, same, n](Tape& t, const Tensor& g) {
        t.accumulate(ia, g);
        if (!t.wants_grad(ib)) return;
        if (same) {
            t.accumulate(ib, g);
            return;
        }
        Tensor& gb = t.grad_buffer(ib);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
    });
}

/// Elementwise product of equally shaped tensors.
inline Var mul(Var a, Var b) {
    detail::require_same_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.shape() != bv.shape())
        throw DimensionError("mul: shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()) +
                             " differ");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        if (t.wants_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.wants_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

inline Var scale(Var a, double c) {
    Tensor out = a.value();
    for (auto& v : out.storage()) v *= c;
    const std::size_t ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia, c](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
}

inline Var relu(Var a) {
    Tensor out = a.value();
    for (auto& v : out.storage()) v = v > 0.0 ? v : 0.0;
    const std::size_t ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(ia);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) ga[i] += g[i];
    });
}

/// 1 / (1 + e^-x) with x clamped to [-30, 30]; zero gradient outside the clamp.
inline Var sigmoid(Var a) {
    Tensor out = a.value();
    for (auto& v : out.storage()) v = kernel::sigmoid(v);
    const std::size_t ia = a.id;
    Tensor saved = out;
    return a.tape->push(std::move(out), {ia}, [ia, s = std::move(saved)](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(ia);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (std::abs(x[i]) <= kernel::kSigmoidClamp) ga[i] += g[i] * s[i] * (1.0 - s[i]);
    });
}

/// Sum of all elements, as a [1] tensor.
inline Var sum(Var a) {
    const Tensor& av = a.value();
    double s = 0.0;
    for (double v : av.values()) s += v;
    const std::size_t ia = a.id;
    return a.tape->push(Tensor::scalar(s), {ia}, [ia](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (auto& v : ga.storage()) v += g[0];
    });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Softmax along `axis` with max subtraction.
inline Var softmax(Var a, std::size_t axis) {
    const Tensor& av = a.value();
    if (axis >= av.rank())
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(av.shape()));
    const Shape& s = av.shape();
    std::size_t inner = 1;
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    const std::size_t n = s[axis];
    const std::size_t outer = av.size() / (n * inner);
    Tensor out(s);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = av[base];
            for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, av[base + k * inner]);
            double z = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double e = std::exp(av[base + k * inner] - mx);
                out[base + k * inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= z;
        }
    }
    Tensor saved = out;
    const std::size_t ia = a.id;
    return a.tape->push(std::move(out), {ia},
                        [ia, y = std::move(saved), outer, inner, n](Tape& t, const Tensor& g) {
                            Tensor& ga = t.grad_buffer(ia);
                            for (std::size_t o = 0; o < outer; ++o) {
                                for (std::size_t in = 0; in < inner; ++in) {
                                    const std::size_t base = o * n * inner + in;
                                    double dot = 0.0;
                                    for (std::size_t k = 0; k < n; ++k)
                                        dot += g[base + k * inner] * y[base + k * inner];
                                    for (std::size_t k = 0; k < n; ++k) {
                                        const std::size_t i = base + k * inner;
                                        ga[i] += y[i] * (g[i] - dot);
                                    }
                                }
                            }
                        });
}

constexpr double kCosineEps = 1e-12;

/// a.b / (|a||b| + 1e-12) over all elements of two equally sized tensors.
inline Var cosine(Var a, Var b) {
    detail::require_same_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.size() != bv.size())
        throw DimensionError("cosine: sizes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()) + " differ");
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        dot += av[i] * bv[i];
        na2 += av[i] * av[i];
        nb2 += bv[i] * bv[i];
    }
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    const double den = na * nb + kCosineEps;
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->push(Tensor::scalar(dot / den), {ia, ib},
                        [ia, ib, dot, na, nb, den](Tape& t, const Tensor& g) {
                            const Tensor& av = t.value(ia);
                            const Tensor& bv = t.value(ib);
                            const double c = dot / (den * den);
                            // d|a|/da = a/|a|; undefined at zero, taken as zero.
                            const double ka = na > 0.0 ? c * nb / na : 0.0;
                            const double kb = nb > 0.0 ? c * na / nb : 0.0;
                            if (t.wants_grad(ia)) {
                                Tensor& ga = t.grad_buffer(ia);
                                for (std::size_t i = 0; i < av.size(); ++i)
                                    ga[i] += g[0] * (bv[i] / den - ka * av[i]);
                            }
                            if (t.wants_grad(ib)) {
                                Tensor& gb = t.grad_buffer(ib);
                                for (std::size_t i = 0; i < bv.size(); ++i)
                                    gb[i] += g[0] * (av[i] / den - kb * bv[i]);
                            }
                        });
}

/// Forward identity, backward annihilator. Under a replaying tape the recorded value
/// is returned instead of the input.
inline Var stop_gradient(Var a) {
    Tape& tape = *a.tape;
    if (auto* r = tape.replay()) {
        if (r->mode == StopGradientReplay::Mode::Record) {
            r->values.push_back(a.value());
        } else {
            if (r->cursor >= r->values.size()) throw ContractError("stop_gradient replay exhausted");
            const Tensor& v = r->values[r->cursor++];
            if (v.shape() != a.value().shape()) throw ContractError("stop_gradient replay shape drift");
            return tape.constant(v);
        }
    }
    return tape.constant(a.value());
}

/// Column-wise concatenation of matrices with equal row counts.
inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    Tape& tape = *parts.front().tape;
    const std::size_t rows = parts.front().value().rows();
    std::size_t total = 0;
    std::vector<std::size_t> widths, ids;
    for (const auto& p : parts) {
        detail::require_same_tape(parts.front(), p);
        detail::require_matrix(p.value(), "concat_cols");
        if (p.value().rows() != rows)
            throw DimensionError("concat_cols: row counts differ, " + shape_str(parts.front().shape()) + " vs " +
                                 shape_str(p.shape()));
        widths.push_back(p.value().cols());
        ids.push_back(p.id);
        total += p.value().cols();
    }
    Tensor out(Shape{rows, total});
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + off);
        off += widths[k];
    }
    return tape.push(std::move(out), ids, [ids, widths, rows, total](Tape& t, const Tensor& g) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (t.wants_grad(ids[k])) {
                Tensor& gk = t.grad_buffer(ids[k]);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < widths[k]; ++c) gk[r * widths[k] + c] += g[r * total + off + c];
            }
            off += widths[k];
        }
    });
}

/// Columns [begin, begin + count) of a matrix.
inline Var slice_cols(Var a, std::size_t begin, std::size_t count) {
    const Tensor& av = a.value();
    detail::require_matrix(av, "slice_cols");
    if (count == 0 || begin + count > av.cols())
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                             ") outside " + shape_str(av.shape()));
    const std::size_t rows = av.rows(), w = av.cols();
    Tensor out(Shape{rows, count});
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(av.data() + r * w + begin, count, out.data() + r * count);
    const std::size_t ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia, rows, w, begin, count](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < count; ++c) ga[r * w + begin + c] += g[r * count + c];
    });
}

/// out[r] = a[r, index[r]]: picks one column per row, shape [rows x 1].
inline Var select_per_row(Var a, const std::vector<std::size_t>& index) {
    const Tensor& av = a.value();
    detail::require_matrix(av, "select_per_row");
    if (index.size() != av.rows())
        throw DimensionError("select_per_row: " + std::to_string(index.size()) + " indices for " +
                             shape_str(av.shape()));
    const std::size_t w = av.cols();
    Tensor out(Shape{av.rows(), 1});
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= w) throw DimensionError("select_per_row: column index out of range");
        out[r] = av[r * w + index[r]];
    }
    const std::size_t ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia, index, w](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t r = 0; r < index.size(); ++r) ga[r * w + index[r]] += g[r];
    });
}

/// Rows of an embedding table. `rows[i]` is the table row for output row i; entries
/// with `frozen[i]` set read their row but never receive gradient (reserved padding).
/// The gradient is scattered directly into `table.grad` and the touched rows recorded.
inline Var embedding_lookup(Tape& tape, Parameter& table, const std::vector<std::size_t>& rows,
                            const std::vector<char>& frozen) {
    const Tensor& tv = table.value;
    detail::require_matrix(tv, "embedding_lookup");
    if (rows.empty()) throw DimensionError("embedding_lookup: no rows requested");
    if (frozen.size() != rows.size()) throw DimensionError("embedding_lookup: frozen mask length mismatch");
    const std::size_t w = tv.cols();
    Tensor out(Shape{rows.size(), w});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= tv.rows())
            throw DimensionError("embedding_lookup: row " + std::to_string(rows[i]) + " outside table " +
                                 table.name + " " + shape_str(tv.shape()));
        std::copy_n(tv.data() + rows[i] * w, w, out.data() + i * w);
    }
    Parameter* p = &table;
    return tape.push_effect(std::move(out), {}, [p, rows, frozen, w](Tape&, const Tensor& g) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (frozen[i]) continue;
            double* dst = p->grad.data() + rows[i] * w;
            const double* src = g.data() + i * w;
            for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
            if (p->sparse) p->touch_row(rows[i]);
        }
    });
}

constexpr double kProbClamp = 1e-7;

/// Negative log-likelihood of probabilities `p` (any shape, one entry per sample) against
/// {0,1} labels, summed and divided by `normalizer`. Probabilities are clamped to
/// [1e-7, 1 - 1e-7]; clamped entries pass no gradient.
inline Var log_loss(Var p, const std::vector<double>& labels, double normalizer) {
    const Tensor& pv = p.value();
    if (pv.size() != labels.size())
        throw DimensionError("log_loss: " + std::to_string(labels.size()) + " labels for " + shape_str(pv.shape()));
    if (!(normalizer > 0.0)) throw ContractError("log_loss: normalizer must be positive");
    double total = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double q = std::clamp(pv[i], kProbClamp, 1.0 - kProbClamp);
        total -= labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q);
    }
    const std::size_t ip = p.id;
    return p.tape->push(Tensor::scalar(total / normalizer), {ip}, [ip, labels, normalizer](Tape& t, const Tensor& g) {
        const Tensor& pv = t.value(ip);
        Tensor& gp = t.grad_buffer(ip);
        for (std::size_t i = 0; i < pv.size(); ++i) {
            const double q = pv[i];
            if (q < kProbClamp || q > 1.0 - kProbClamp) continue;
            gp[i] += g[0] * (-labels[i] / q + (1.0 - labels[i]) / (1.0 - q)) / normalizer;
        }
    });
}

/// Mean over the valid positions of each sample. `x` is [batch*len x d] with
/// sample-major rows; samples without valid positions pool to zeros.
inline Var masked_mean_pool(Var x, const std::vector<char>& mask, std::size_t batch, std::size_t len) {
    const Tensor& xv = x.value();
    detail::require_matrix(xv, "masked_mean_pool");
    if (xv.rows() != batch * len || mask.size() != batch * len)
        throw DimensionError("masked_mean_pool: expected " + std::to_string(batch * len) + " rows, got " +
                             shape_str(xv.shape()));
    const std::size_t d = xv.cols();
    Tensor out(Shape{batch, d});
    std::vector<double> inv(batch, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        std::size_t n = 0;
        for (std::size_t l = 0; l < len; ++l) n += mask[b * len + l] ? 1 : 0;
        if (n == 0) continue;
        inv[b] = 1.0 / static_cast<double>(n);
        for (std::size_t l = 0; l < len; ++l) {
            if (!mask[b * len + l]) continue;
            const double* row = xv.data() + (b * len + l) * d;
            for (std::size_t c = 0; c < d; ++c) out[b * d + c] += row[c];
        }
        for (std::size_t c = 0; c < d; ++c) out[b * d + c] *= inv[b];
    }
    const std::size_t ix = x.id;
    return x.tape->push(std::move(out), {ix}, [ix, mask, inv, len, d](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(ix);
        for (std::size_t r = 0; r < mask.size(); ++r) {
            if (!mask[r]) continue;
            const std::size_t b = r / len;
            for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += g[b * d + c] * inv[b];
        }
    });
}

} // namespace saml

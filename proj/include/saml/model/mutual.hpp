#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "saml/numerics/ops.hpp"

namespace saml {

/// Denominator guard for the ratio normalization of cosines.
constexpr double kRatioGuard = 1e-6;

/// Similarity and gate coefficients of one mutual-unit pass.
struct MutualRecord {
    std::size_t batch = 0;
    std::size_t branches = 0;
    std::vector<double> alpha;  // [sample][i][j], zero on the diagonal
    std::vector<double> gate;   // [sample][i]

    double alpha_at(std::size_t t, std::size_t i, std::size_t j) const {
        return alpha[(t * branches + i) * branches + j];
    }
    double gate_at(std::size_t t, std::size_t i) const { return gate[t * branches + i]; }
};

struct MutualResult {
    Var mixed;  // [B x N*D], branch i in columns [i*D, (i+1)*D)
    std::shared_ptr<const MutualRecord> record;
};

namespace detail {

/// Intermediates of the mutual unit for one sample.
struct MutualSample {
    std::size_t n = 0, d = 0;
    std::vector<const double*> self;   // V_i as seen by row i (always live)
    std::vector<const double*> other;  // V_j as seen by other rows (live only for the owner)
    std::vector<double> norm_self, norm_other;
    std::vector<double> cos;    // [i][j]
    std::vector<double> denom;  // d_i
    std::vector<char> ratio;    // whether |d_i| > guard
    std::vector<double> alpha;  // [i][j]
    std::vector<double> gate_z, gate;
    std::vector<double> mix;    // S_i, [i][d]

    void compute(const std::vector<double>& gw, const std::vector<double>& gb, std::optional<double> gate_override) {
        norm_self.assign(n, 0.0);
        norm_other.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double a = 0.0, b = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                a += self[i][c] * self[i][c];
                b += other[i][c] * other[i][c];
            }
            norm_self[i] = std::sqrt(a);
            norm_other[i] = std::sqrt(b);
        }
        cos.assign(n * n, 0.0);
        denom.assign(n, 0.0);
        ratio.assign(n, 0);
        alpha.assign(n * n, 0.0);
        gate_z.assign(n, 0.0);
        gate.assign(n, 0.0);
        mix.assign(n * d, 0.0);
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                double dot = 0.0;
                for (std::size_t c = 0; c < d; ++c) dot += self[i][c] * other[j][c];
                cos[i * n + j] = dot / (norm_self[i] * norm_other[j] + kCosineEps);
                denom[i] += cos[i * n + j];
            }
            ratio[i] = std::abs(denom[i]) > kRatioGuard;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                r[j] = ratio[i] ? cos[i * n + j] / denom[i] : 1.0 / static_cast<double>(n - 1);
                mx = std::max(mx, r[j]);
            }
            double z = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                alpha[i * n + j] = std::exp(r[j] - mx);
                z += alpha[i * n + j];
            }
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) alpha[i * n + j] /= z;
            if (gate_override) {
                gate[i] = *gate_override;
            } else {
                double zz = gb[i];
                for (std::size_t c = 0; c < d; ++c) zz += gw[i * d + c] * self[i][c];
                gate_z[i] = zz;
                gate[i] = kernel::sigmoid(zz);
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double a = alpha[i * n + j];
                for (std::size_t c = 0; c < d; ++c) mix[i * d + c] += a * other[j][c];
            }
        }
    }
};

} // namespace detail

/// Mutual unit over the stacked branch hiddens of a batch.
///
/// For each sample and branch i:
///   c_ij  = cos(V_i, V_j)                         j != i
///   r_ij  = c_ij / sum_j c_ij  (uniform 1/(N-1) when |sum| <= 1e-6)
///   a_ij  = softmax_j(r_ij)
///   g_i   = sigmoid(w_i . V_i + b_i)              (or the fixed override)
///   M_i   = V_i + g_i * sum_j a_ij V_j
///
/// `live` and `frozen` carry the same values [B x N*D]; `frozen` is the stop-gradient
/// copy. The cross-branch V_j (j != i) is read from `frozen` unless j is the sample's
/// owning branch, so a sample only back-propagates into its own branch.
inline MutualResult mutual_mix(Var live, Var frozen, const std::vector<Var>& gate_w, const std::vector<Var>& gate_b,
                               const std::vector<std::size_t>& owner, std::size_t branches,
                               std::optional<double> gate_override = std::nullopt) {
    const Tensor& lv = live.value();
    const Tensor& fv = frozen.value();
    if (lv.shape() != fv.shape()) throw DimensionError("mutual_mix: live and frozen inputs differ in shape");
    if (lv.rank() != 2 || branches == 0 || lv.cols() % branches != 0)
        throw DimensionError("mutual_mix: input " + shape_str(lv.shape()) + " does not split into " +
                             std::to_string(branches) + " branches");
    const std::size_t batch = lv.rows(), n = branches, d = lv.cols() / branches;
    if (owner.size() != batch) throw DimensionError("mutual_mix: owner list length mismatch");
    if (n < 2) return {live, nullptr};
    const bool learned_gate = !gate_override.has_value();
    if (learned_gate && (gate_w.size() != n || gate_b.size() != n))
        throw DimensionError("mutual_mix: expected one gate per branch");

    std::vector<double> gw(n * d, 0.0), gb(n, 0.0);
    if (learned_gate) {
        for (std::size_t i = 0; i < n; ++i) {
            if (gate_w[i].value().size() != d || gate_b[i].value().size() != 1)
                throw DimensionError("mutual_mix: gate " + std::to_string(i) + " must be [" + std::to_string(d) +
                                     "] weights and a scalar bias");
            std::copy_n(gate_w[i].value().data(), d, gw.data() + i * d);
            gb[i] = gate_b[i].value()[0];
        }
    }

    auto record = std::make_shared<MutualRecord>();
    record->batch = batch;
    record->branches = n;
    record->alpha.assign(batch * n * n, 0.0);
    record->gate.assign(batch * n, 0.0);
    Tensor out(lv.shape());

    auto load = [n, d](detail::MutualSample& s, const Tensor& lv, const Tensor& fv, std::size_t t, std::size_t own) {
        s.n = n;
        s.d = d;
        s.self.resize(n);
        s.other.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            s.self[i] = lv.data() + t * n * d + i * d;
            s.other[i] = (i == own ? lv.data() : fv.data()) + t * n * d + i * d;
        }
    };

    detail::MutualSample s;
    for (std::size_t t = 0; t < batch; ++t) {
        if (owner[t] >= n) throw DataError("mutual_mix: owner " + std::to_string(owner[t]) + " out of range");
        load(s, lv, fv, t, owner[t]);
        s.compute(gw, gb, gate_override);
        std::copy(s.alpha.begin(), s.alpha.end(), record->alpha.begin() + t * n * n);
        std::copy(s.gate.begin(), s.gate.end(), record->gate.begin() + t * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < d; ++c)
                out[t * n * d + i * d + c] = s.self[i][c] + s.gate[i] * s.mix[i * d + c];
    }

    std::vector<std::size_t> inputs{live.id, frozen.id};
    std::vector<std::size_t> wid, bid;
    if (learned_gate) {
        for (std::size_t i = 0; i < n; ++i) {
            wid.push_back(gate_w[i].id);
            bid.push_back(gate_b[i].id);
            inputs.push_back(gate_w[i].id);
            inputs.push_back(gate_b[i].id);
        }
    }
    const std::size_t il = live.id, ifz = frozen.id;
    Var mixed = live.tape->push(
        std::move(out), inputs,
        [il, ifz, wid, bid, owner, batch, n, d, gate_override, load](Tape& t, const Tensor& g) {
            const Tensor& lv = t.value(il);
            const Tensor& fv = t.value(ifz);
            const bool learned = !gate_override.has_value();
            std::vector<double> gw(n * d, 0.0), gb(n, 0.0);
            if (learned) {
                for (std::size_t i = 0; i < n; ++i) {
                    std::copy_n(t.value(wid[i]).data(), d, gw.data() + i * d);
                    gb[i] = t.value(bid[i])[0];
                }
            }
            double* gl = t.wants_grad(il) ? t.grad_buffer(il).data() : nullptr;
            std::vector<double*> ggw(n, nullptr), ggb(n, nullptr);
            if (learned)
                for (std::size_t i = 0; i < n; ++i) {
                    if (t.wants_grad(wid[i])) ggw[i] = t.grad_buffer(wid[i]).data();
                    if (t.wants_grad(bid[i])) ggb[i] = t.grad_buffer(bid[i]).data();
                }
            detail::MutualSample s;
            std::vector<double> dalpha(n), dr(n), dcos(n);
            for (std::size_t tt = 0; tt < batch; ++tt) {
                const std::size_t own = owner[tt];
                load(s, lv, fv, tt, own);
                s.compute(gw, gb, gate_override);
                auto grad_live = [&](std::size_t i) { return gl ? gl + tt * n * d + i * d : nullptr; };
                for (std::size_t i = 0; i < n; ++i) {
                    const double* dm = g.data() + tt * n * d + i * d;
                    bool nonzero = false;
                    for (std::size_t c = 0; c < d && !nonzero; ++c) nonzero = dm[c] != 0.0;
                    if (!nonzero) continue;
                    double* gself = grad_live(i);
                    // M_i = V_i + g_i * S_i
                    if (gself)
                        for (std::size_t c = 0; c < d; ++c) gself[c] += dm[c];
                    if (learned) {
                        double dg = 0.0;
                        for (std::size_t c = 0; c < d; ++c) dg += dm[c] * s.mix[i * d + c];
                        if (std::abs(s.gate_z[i]) <= kernel::kSigmoidClamp) {
                            const double dz = dg * s.gate[i] * (1.0 - s.gate[i]);
                            if (ggb[i]) ggb[i][0] += dz;
                            if (ggw[i])
                                for (std::size_t c = 0; c < d; ++c) ggw[i][c] += dz * s.self[i][c];
                            if (gself)
                                for (std::size_t c = 0; c < d; ++c) gself[c] += dz * gw[i * d + c];
                        }
                    }
                    // S_i = sum_j a_ij V_j
                    double adot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        if (j == i) continue;
                        double da = 0.0;
                        for (std::size_t c = 0; c < d; ++c) da += dm[c] * s.other[j][c];
                        dalpha[j] = s.gate[i] * da;
                        adot += dalpha[j] * s.alpha[i * n + j];
                        if (j == own) {
                            if (double* go = grad_live(j))
                                for (std::size_t c = 0; c < d; ++c) go[c] += s.gate[i] * s.alpha[i * n + j] * dm[c];
                        }
                    }
                    if (!s.ratio[i]) continue;  // uniform ratios carry no gradient
                    // softmax, then r_ij = c_ij / d_i
                    double dd = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        if (j == i) continue;
                        dr[j] = s.alpha[i * n + j] * (dalpha[j] - adot);
                        dd -= dr[j] * s.cos[i * n + j] / (s.denom[i] * s.denom[i]);
                    }
                    for (std::size_t j = 0; j < n; ++j) {
                        if (j == i) continue;
                        dcos[j] = dr[j] / s.denom[i] + dd;
                        // c = a.b / (|a||b| + eps) with a = V_i (live), b = V_j
                        const double na = s.norm_self[i], nb = s.norm_other[j];
                        const double den = na * nb + kCosineEps;
                        const double k = s.cos[i * n + j] / den;
                        if (gself) {
                            const double ka = na > 0.0 ? k * nb / na : 0.0;
                            for (std::size_t c = 0; c < d; ++c)
                                gself[c] += dcos[j] * (s.other[j][c] / den - ka * s.self[i][c]);
                        }
                        if (j == own) {
                            if (double* go = grad_live(j)) {
                                const double kb = nb > 0.0 ? k * na / nb : 0.0;
                                for (std::size_t c = 0; c < d; ++c)
                                    go[c] += dcos[j] * (s.self[i][c] / den - kb * s.other[j][c]);
                            }
                        }
                    }
                }
            }
        });
    return {mixed, std::move(record)};
}

} // namespace saml

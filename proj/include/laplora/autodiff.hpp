#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "laplora/common.hpp"
#include "laplora/filters.hpp"
#include "laplora/sparse.hpp"

// =============================================================================
// laplora/autodiff.hpp
// Reverse-mode automatic differentiation over dense matrices. A Tape is a
// define-by-run graph rebuilt per optimization step: parameters live outside
// the tape as Tensors, are registered as leaves, and receive their gradients
// when backward() runs. Dense products are delegated to Eigen; sparse
// propagation keeps the deterministic CSR kernels from sparse.hpp.
// =============================================================================

namespace laplora::ad {

// Parameter: value plus the gradient of the most recent backward pass.
// grad stays empty (0x0) until a backward pass populates it.
struct Tensor {
    DenseMatrix value;
    DenseMatrix grad;
    bool requires_grad = true;

    Tensor() = default;
    explicit Tensor(DenseMatrix v, bool needs_grad = true)
        : value(std::move(v)), requires_grad(needs_grad) {}

    void zero_grad() { grad = DenseMatrix(value.rows, value.cols); }
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMat> emap(const DenseMatrix& m) {
    return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

inline Eigen::Map<RowMat> emap(DenseMatrix& m) {
    return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

}  // namespace detail

class Tape {
public:
    using NodeId = std::size_t;

    // ---- graph construction -------------------------------------------------

    /// Register a parameter. Its current value is captured; after backward()
    /// the accumulated gradient is flushed into t.grad. Re-registering the
    /// same Tensor returns the existing node, so shared parameters (e.g. a
    /// filter net used at every layer) accumulate one combined gradient.
    NodeId leaf(Tensor& t) {
        auto it = leaf_ids_.find(&t);
        if (it != leaf_ids_.end()) return it->second;
        const NodeId id = push(t.value, t.requires_grad);
        nodes_[id].leaf = &t;
        leaf_ids_.emplace(&t, id);
        return id;
    }

    /// Non-differentiable input, copied into the tape.
    NodeId constant(DenseMatrix v) { return push(std::move(v), /*requires_grad=*/false); }

    /// Non-differentiable input used by pointer; the caller keeps it alive
    /// for the tape's lifetime. Avoids copying large feature matrices.
    NodeId constant_view(const DenseMatrix* v) {
        Node nd;
        nd.view = v;
        nd.requires_grad = false;
        nodes_.push_back(std::move(nd));
        grads_.emplace_back();
        return nodes_.size() - 1;
    }

    const DenseMatrix& value(NodeId id) const {
        const Node& nd = nodes_.at(id);
        return nd.view ? *nd.view : nd.stored;
    }

    double scalar(NodeId id) const {
        const DenseMatrix& v = value(id);
        if (v.rows != 1 || v.cols != 1) throw ShapeError("scalar: node is not 1x1");
        return v(0, 0);
    }

    // ---- operations ----------------------------------------------------------

    NodeId matmul(NodeId a, NodeId b) {
        const DenseMatrix& av = value(a);
        const DenseMatrix& bv = value(b);
        if (av.cols != bv.rows)
            throw ShapeError("matmul: inner dimensions differ (" + shape_str(av) + " x " +
                             shape_str(bv) + ")");
        DenseMatrix out(av.rows, bv.cols);
        detail::emap(out).noalias() = detail::emap(av) * detail::emap(bv);
        const NodeId id = push(std::move(out), needs_grad(a) || needs_grad(b));
        nodes_[id].backward = [a, b](Tape& t, NodeId self) {
            const DenseMatrix& g = t.grads_[self];
            if (t.needs_grad(a)) {
                DenseMatrix& ga = t.grad_ref(a);
                detail::emap(ga).noalias() +=
                    detail::emap(g) * detail::emap(t.value(b)).transpose();
            }
            if (t.needs_grad(b)) {
                DenseMatrix& gb = t.grad_ref(b);
                detail::emap(gb).noalias() +=
                    detail::emap(t.value(a)).transpose() * detail::emap(g);
            }
        };
        return id;
    }

    /// y = S x with a fixed sparse operator; gradient flows only into x.
    NodeId sparse_matmul(const SparseMatrix* s, NodeId x) {
        const DenseMatrix& xv = value(x);
        if (s->n_cols != xv.rows)
            throw ShapeError("sparse_matmul: operator is " + std::to_string(s->n_rows) + "x" +
                             std::to_string(s->n_cols) + ", input has " +
                             std::to_string(xv.rows) + " rows");
        const NodeId id = push(spmm(*s, xv), needs_grad(x));
        nodes_[id].backward = [s, x](Tape& t, NodeId self) {
            if (!t.needs_grad(x)) return;
            const DenseMatrix gx = spmm_transposed(*s, t.grads_[self]);
            DenseMatrix& acc = t.grad_ref(x);
            for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += gx.data[i];
        };
        return id;
    }

    /// Same shape, or b a 1 x cols row bias broadcast over a's rows.
    NodeId add(NodeId a, NodeId b) {
        const DenseMatrix& av = value(a);
        const DenseMatrix& bv = value(b);
        const bool bias = bv.rows == 1 && bv.cols == av.cols && av.rows != 1;
        if (!bias && !av.same_shape(bv))
            throw ShapeError("add: shapes " + shape_str(av) + " and " + shape_str(bv) +
                             " are incompatible");
        DenseMatrix out(av.rows, av.cols);
        if (bias) {
            for (std::size_t i = 0; i < av.rows; ++i)
                for (std::size_t j = 0; j < av.cols; ++j) out(i, j) = av(i, j) + bv(0, j);
        } else {
            for (std::size_t i = 0; i < out.data.size(); ++i)
                out.data[i] = av.data[i] + bv.data[i];
        }
        const NodeId id = push(std::move(out), needs_grad(a) || needs_grad(b));
        nodes_[id].backward = [a, b, bias](Tape& t, NodeId self) {
            const DenseMatrix& g = t.grads_[self];
            if (t.needs_grad(a)) {
                DenseMatrix& ga = t.grad_ref(a);
                for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i];
            }
            if (t.needs_grad(b)) {
                DenseMatrix& gb = t.grad_ref(b);
                if (bias) {
                    for (std::size_t i = 0; i < g.rows; ++i)
                        for (std::size_t j = 0; j < g.cols; ++j) gb(0, j) += g(i, j);
                } else {
                    for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g.data[i];
                }
            }
        };
        return id;
    }

    NodeId sub(NodeId a, NodeId b) {
        const DenseMatrix& av = value(a);
        const DenseMatrix& bv = value(b);
        if (!av.same_shape(bv))
            throw ShapeError("sub: shapes " + shape_str(av) + " and " + shape_str(bv) +
                             " differ");
        DenseMatrix out(av.rows, av.cols);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = av.data[i] - bv.data[i];
        const NodeId id = push(std::move(out), needs_grad(a) || needs_grad(b));
        nodes_[id].backward = [a, b](Tape& t, NodeId self) {
            const DenseMatrix& g = t.grads_[self];
            if (t.needs_grad(a)) {
                DenseMatrix& ga = t.grad_ref(a);
                for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i];
            }
            if (t.needs_grad(b)) {
                DenseMatrix& gb = t.grad_ref(b);
                for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= g.data[i];
            }
        };
        return id;
    }

    NodeId mul(NodeId a, NodeId b) {
        const DenseMatrix& av = value(a);
        const DenseMatrix& bv = value(b);
        if (!av.same_shape(bv))
            throw ShapeError("mul: shapes " + shape_str(av) + " and " + shape_str(bv) +
                             " differ");
        DenseMatrix out(av.rows, av.cols);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = av.data[i] * bv.data[i];
        const NodeId id = push(std::move(out), needs_grad(a) || needs_grad(b));
        nodes_[id].backward = [a, b](Tape& t, NodeId self) {
            const DenseMatrix& g = t.grads_[self];
            if (t.needs_grad(a)) {
                DenseMatrix& ga = t.grad_ref(a);
                const DenseMatrix& bv2 = t.value(b);
                for (std::size_t i = 0; i < ga.data.size(); ++i)
                    ga.data[i] += g.data[i] * bv2.data[i];
            }
            if (t.needs_grad(b)) {
                DenseMatrix& gb = t.grad_ref(b);
                const DenseMatrix& av2 = t.value(a);
                for (std::size_t i = 0; i < gb.data.size(); ++i)
                    gb.data[i] += g.data[i] * av2.data[i];
            }
        };
        return id;
    }

    /// y = scale * x + shift, elementwise with scalar coefficients.
    NodeId affine(NodeId a, double scale, double shift) {
        const DenseMatrix& av = value(a);
        DenseMatrix out(av.rows, av.cols);
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = scale * av.data[i] + shift;
        const NodeId id = push(std::move(out), needs_grad(a));
        nodes_[id].backward = [a, scale](Tape& t, NodeId self) {
            if (!t.needs_grad(a)) return;
            const DenseMatrix& g = t.grads_[self];
            DenseMatrix& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += scale * g.data[i];
        };
        return id;
    }

    NodeId relu(NodeId a) {
        const DenseMatrix& av = value(a);
        DenseMatrix out(av.rows, av.cols);
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = av.data[i] > 0.0 ? av.data[i] : 0.0;
        const NodeId id = push(std::move(out), needs_grad(a));
        nodes_[id].backward = [a](Tape& t, NodeId self) {
            if (!t.needs_grad(a)) return;
            const DenseMatrix& g = t.grads_[self];
            const DenseMatrix& av2 = t.value(a);
            DenseMatrix& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < ga.data.size(); ++i)
                if (av2.data[i] > 0.0) ga.data[i] += g.data[i];
        };
        return id;
    }

    /// Elementwise logistic, clamped strictly inside (0,1).
    NodeId sigmoid(NodeId a) {
        const DenseMatrix& av = value(a);
        DenseMatrix out(av.rows, av.cols);
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = stable_sigmoid(av.data[i]);
        const NodeId id = push(std::move(out), needs_grad(a));
        nodes_[id].backward = [a](Tape& t, NodeId self) {
            if (!t.needs_grad(a)) return;
            const DenseMatrix& g = t.grads_[self];
            const DenseMatrix& y = t.value(self);
            DenseMatrix& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < ga.data.size(); ++i)
                ga.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
        };
        return id;
    }

    /// Inverted dropout: zero with probability p, else scale by 1/(1-p).
    /// Identity (and no RNG draw) when not training or p == 0.
    NodeId dropout(NodeId a, double p, Rng& rng, bool training) {
        if (!(p >= 0.0 && p < 1.0))
            throw ParameterError("dropout: p must be in [0,1), got " + std::to_string(p));
        if (!training || p == 0.0) return a;
        const DenseMatrix& av = value(a);
        DenseMatrix mask(av.rows, av.cols);
        const double inv_keep = 1.0 / (1.0 - p);
        for (std::size_t i = 0; i < mask.data.size(); ++i)
            mask.data[i] = rng.uniform() < p ? 0.0 : inv_keep;
        DenseMatrix out(av.rows, av.cols);
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = av.data[i] * mask.data[i];
        const NodeId id = push(std::move(out), needs_grad(a));
        nodes_[id].backward = [a, mask = std::move(mask)](Tape& t, NodeId self) {
            if (!t.needs_grad(a)) return;
            const DenseMatrix& g = t.grads_[self];
            DenseMatrix& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < ga.data.size(); ++i)
                ga.data[i] += g.data[i] * mask.data[i];
        };
        return id;
    }

    /// y[i,:] = s[i] * x[i,:], with s a column vector; differentiable in both.
    NodeId row_scale(NodeId x, NodeId s) {
        const DenseMatrix& xv = value(x);
        const DenseMatrix& sv = value(s);
        if (sv.cols != 1 || sv.rows != xv.rows)
            throw ShapeError("row_scale: scale must be " + std::to_string(xv.rows) +
                             "x1, got " + shape_str(sv));
        DenseMatrix out(xv.rows, xv.cols);
        for (std::size_t i = 0; i < xv.rows; ++i)
            for (std::size_t j = 0; j < xv.cols; ++j) out(i, j) = sv(i, 0) * xv(i, j);
        const NodeId id = push(std::move(out), needs_grad(x) || needs_grad(s));
        nodes_[id].backward = [x, s](Tape& t, NodeId self) {
            const DenseMatrix& g = t.grads_[self];
            const DenseMatrix& xv2 = t.value(x);
            const DenseMatrix& sv2 = t.value(s);
            if (t.needs_grad(x)) {
                DenseMatrix& gx = t.grad_ref(x);
                for (std::size_t i = 0; i < gx.rows; ++i)
                    for (std::size_t j = 0; j < gx.cols; ++j) gx(i, j) += sv2(i, 0) * g(i, j);
            }
            if (t.needs_grad(s)) {
                DenseMatrix& gs = t.grad_ref(s);
                for (std::size_t i = 0; i < xv2.rows; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < xv2.cols; ++j) acc += g(i, j) * xv2(i, j);
                    gs(i, 0) += acc;
                }
            }
        };
        return id;
    }

    /// Mean negative log-likelihood over masked rows, computed through a
    /// numerically stable log-softmax. Returns a 1x1 node.
    NodeId log_softmax_cross_entropy(NodeId logits, const std::vector<int>& labels,
                                     const std::vector<std::uint8_t>& mask) {
        const DenseMatrix& z = value(logits);
        if (labels.size() != z.rows || mask.size() != z.rows)
            throw ShapeError("log_softmax_cross_entropy: labels/mask length must equal rows");
        std::size_t count = 0;
        for (std::uint8_t m : mask) count += m ? 1 : 0;
        if (count == 0) throw DataError("log_softmax_cross_entropy: mask selects no rows");

        // Softmax probabilities are needed for the gradient; keep them.
        DenseMatrix probs(z.rows, z.cols);
        double loss = 0.0;
        for (std::size_t i = 0; i < z.rows; ++i) {
            double zmax = z(i, 0);
            for (std::size_t j = 1; j < z.cols; ++j) zmax = std::max(zmax, z(i, j));
            double denom = 0.0;
            for (std::size_t j = 0; j < z.cols; ++j) denom += std::exp(z(i, j) - zmax);
            const double lse = zmax + std::log(denom);
            for (std::size_t j = 0; j < z.cols; ++j)
                probs(i, j) = std::exp(z(i, j) - zmax) / denom;
            if (!mask[i]) continue;
            const int y = labels[i];
            if (y < 0 || static_cast<std::size_t>(y) >= z.cols)
                throw ValidationError("log_softmax_cross_entropy: label out of range at row " +
                                      std::to_string(i));
            loss += lse - z(i, static_cast<std::size_t>(y));
        }
        DenseMatrix out(1, 1);
        out(0, 0) = loss / static_cast<double>(count);
        const NodeId id = push(std::move(out), needs_grad(logits));
        nodes_[id].backward = [logits, labels, mask, count,
                               probs = std::move(probs)](Tape& t, NodeId self) {
            if (!t.needs_grad(logits)) return;
            const double g = t.grads_[self](0, 0) / static_cast<double>(count);
            DenseMatrix& gz = t.grad_ref(logits);
            for (std::size_t i = 0; i < gz.rows; ++i) {
                if (!mask[i]) continue;
                for (std::size_t j = 0; j < gz.cols; ++j) gz(i, j) += g * probs(i, j);
                gz(i, static_cast<std::size_t>(labels[i])) -= g;
            }
        };
        return id;
    }

    // ---- backward -------------------------------------------------------------

    /// Accumulate d(loss)/d(node) for every node reaching the 1x1 loss, then
    /// flush leaf gradients into their Tensors (overwriting Tensor.grad).
    void backward(NodeId loss) {
        const DenseMatrix& lv = value(loss);
        if (lv.rows != 1 || lv.cols != 1) throw ContractError("backward: loss must be 1x1");
        grad_ref(loss)(0, 0) = 1.0;
        for (NodeId i = loss + 1; i-- > 0;) {
            Node& nd = nodes_[i];
            if (!nd.requires_grad || grads_[i].data.empty() || !nd.backward) continue;
            nd.backward(*this, i);
        }
        for (auto& [tensor, id] : leaf_ids_) {
            if (!tensor->requires_grad) continue;
            if (!grads_[id].data.empty()) {
                tensor->grad = std::move(grads_[id]);
            } else {
                tensor->grad = DenseMatrix(tensor->value.rows, tensor->value.cols);
            }
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        DenseMatrix stored;
        const DenseMatrix* view = nullptr;
        bool requires_grad = false;
        Tensor* leaf = nullptr;
        std::function<void(Tape&, NodeId)> backward;
    };

    static std::string shape_str(const DenseMatrix& m) {
        return std::to_string(m.rows) + "x" + std::to_string(m.cols);
    }

    NodeId push(DenseMatrix v, bool requires_grad) {
        Node nd;
        nd.stored = std::move(v);
        nd.requires_grad = requires_grad;
        nodes_.push_back(std::move(nd));
        grads_.emplace_back();
        return nodes_.size() - 1;
    }

    bool needs_grad(NodeId id) const { return nodes_[id].requires_grad; }

    /// Gradient buffer for a node, allocated as zeros on first touch.
    DenseMatrix& grad_ref(NodeId id) {
        if (grads_[id].data.empty()) {
            const DenseMatrix& v = value(id);
            grads_[id] = DenseMatrix(v.rows, v.cols);
        }
        return grads_[id];
    }

    std::vector<Node> nodes_;
    std::vector<DenseMatrix> grads_;
    std::unordered_map<Tensor*, NodeId> leaf_ids_;
};

// -----------------------------------------------------------------------------
// Adam with coupled L2 regularization: the decay term is added to the raw
// gradient before the moment updates, matching the classic formulation.
// -----------------------------------------------------------------------------

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct AdamState {
    DenseMatrix m;  // first moment
    DenseMatrix v;  // second moment
    std::uint64_t t = 0;

    explicit AdamState(const Tensor& p)
        : m(p.value.rows, p.value.cols), v(p.value.rows, p.value.cols) {}
    AdamState() = default;
};

inline void adam_step(Tensor& p, AdamState& s, const AdamConfig& cfg) {
    if (p.grad.data.empty())
        throw ContractError("adam_step: gradient missing (run backward first)");
    if (!p.value.same_shape(p.grad))
        throw ShapeError("adam_step: gradient shape does not match parameter");
    if (s.m.data.empty()) s = AdamState(p);
    s.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
        const double g = p.grad.data[i] + cfg.weight_decay * p.value.data[i];
        s.m.data[i] = cfg.beta1 * s.m.data[i] + (1.0 - cfg.beta1) * g;
        s.v.data[i] = cfg.beta2 * s.v.data[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = s.m.data[i] / bc1;
        const double vhat = s.v.data[i] / bc2;
        p.value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

}  // namespace laplora::ad

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "laplora/autodiff.hpp"
#include "laplora/common.hpp"
#include "laplora/diagnostics.hpp"
#include "laplora/eigensolver.hpp"
#include "laplora/filters.hpp"
#include "laplora/graph.hpp"
#include "laplora/sparse.hpp"

// =============================================================================
// laplora/model.hpp
// The GCN backbone with the optional low-rank spectral branch, the training
// loop with validation-based early stopping, the multi-seed depth protocol,
// and binary checkpoints. A layer computes
//     P = S H  (+ U_k diag(g_lora(lambda_i)) U_k^T H  when adapted)
//     Z = P W_l, ReLU on all but the last layer,
// with dropout applied to the layer input during training. Since W_l acts on
// the right and the propagation operators on the left, the implementation
// multiplies by W_l first — identical as a linear map, far cheaper when the
// input is wider than the hidden dimension.
// =============================================================================

namespace laplora {

enum class Variant { Gcn, Lora };

inline const char* to_string(Variant v) { return v == Variant::Gcn ? "gcn" : "lora"; }

inline Variant variant_from_string(const std::string& s) {
    if (s == "gcn") return Variant::Gcn;
    if (s == "lora") return Variant::Lora;
    throw ParameterError("variant must be 'gcn' or 'lora', got '" + s + "'");
}

/// Low-rank spectral correction U_k diag(g_lora(lambda_i; alpha_l)) U_k^T H,
/// computed as three skinny products; the n x n operator is never formed.
/// `net` supplies theta; `params` supplies the annealed strength alpha_l.
inline DenseMatrix lora_correction(const DenseMatrix& h, const EigenBasis& basis,
                                   const FilterParams& params, const ThetaNet& net) {
    if (h.rows != basis.n_nodes())
        throw ShapeError("lora_correction: H has " + std::to_string(h.rows) +
                         " rows, basis has " + std::to_string(basis.n_nodes()));
    const double alpha_l = params.alpha_l();
    const std::size_t n = h.rows, d = h.cols, k = basis.k;

    // proj = U^T H  (k x d)
    DenseMatrix proj(k, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const double u = basis.eigenvectors(i, j);
            for (std::size_t c = 0; c < d; ++c) proj(j, c) += u * h(i, c);
        }
    // Scale each spectral row by the adapted response.
    for (std::size_t j = 0; j < k; ++j) {
        const double g = lora_filter(basis.eigenvalues[j], alpha_l, net);
        for (std::size_t c = 0; c < d; ++c) proj(j, c) *= g;
    }
    // out = U proj  (n x d)
    DenseMatrix out(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const double u = basis.eigenvectors(i, j);
            for (std::size_t c = 0; c < d; ++c) out(i, c) += u * proj(j, c);
        }
    return out;
}

// -----------------------------------------------------------------------------
// Configuration.
// -----------------------------------------------------------------------------

struct ModelConfig {
    std::size_t depth = 2;       // number of layers L, >= 2
    std::size_t hidden_dim = 64;
    double dropout = 0.5;
    double alpha = 0.5;          // global adaptation strength
    bool use_lora = false;
    Combine combine = Combine::Sum;
    std::size_t k = 64;          // eigenpairs consumed by the adapted branch
    std::uint64_t seed = 0;
    bool lora_on_final = true;   // apply the branch at the output layer too

    void validate() const {
        if (depth < 2) throw ParameterError("depth must be >= 2");
        if (hidden_dim < 1) throw ParameterError("hidden_dim must be >= 1");
        if (!(dropout >= 0.0 && dropout < 1.0))
            throw ParameterError("dropout must be in [0,1)");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("alpha must be in [0,1]");
        if (use_lora && k < 1) throw ParameterError("k must be >= 1");
    }
};

struct TrainConfig {
    double lr = 0.01;
    double weight_decay = 5e-4;
    std::size_t max_epochs = 200;
    std::size_t patience = 50;  // 0 = stop at the first non-improving epoch
    std::size_t n_seeds = 5;

    void validate() const {
        if (!(lr > 0.0)) throw ParameterError("lr must be positive");
        if (!(weight_decay >= 0.0)) throw ParameterError("weight_decay must be >= 0");
        if (max_epochs < 1) throw ParameterError("max_epochs must be >= 1");
        if (n_seeds < 1) throw ParameterError("n_seeds must be >= 1");
    }
};

// Private RNG streams per purpose so that, e.g., the adapted branch's extra
// initialization never shifts the base model's weights for the same seed.
namespace streams {
inline constexpr std::uint64_t kWeights = 0;
inline constexpr std::uint64_t kTheta = 1;
inline constexpr std::uint64_t kDropout = 2;

inline std::uint64_t derive(std::uint64_t seed, std::size_t depth, Variant variant,
                            std::uint64_t purpose) {
    return derive_seed({seed, static_cast<std::uint64_t>(depth),
                        variant == Variant::Lora ? 1ULL : 0ULL, purpose});
}
}  // namespace streams

// -----------------------------------------------------------------------------
// Model.
// -----------------------------------------------------------------------------

class GcnModel {
public:
    ModelConfig config;
    std::vector<ad::Tensor> weights;  // W_1..W_L; no biases
    ad::Tensor theta_w1, theta_b1, theta_w2, theta_b2;

    /// Shell with zeroed weights; the eigen slices are copied out of `basis`
    /// (first k_use columns). `s_op` and the model must outlive each other's
    /// uses; neither is owned.
    GcnModel(const ModelConfig& cfg, std::size_t n_features, std::size_t n_classes,
             const SparseMatrix* s_op, const EigenBasis* basis)
        : config(cfg), s_op_(s_op), n_features_(n_features), n_classes_(n_classes) {
        config.validate();
        if (!s_op) throw ContractError("GcnModel: propagation operator required");
        if (s_op->n_rows != s_op->n_cols) throw ShapeError("GcnModel: S must be square");
        if (n_classes < 1) throw ParameterError("GcnModel: need at least one class");

        weights.reserve(config.depth);
        for (std::size_t ell = 1; ell <= config.depth; ++ell) {
            const auto [in, out] = layer_dims(ell);
            weights.emplace_back(DenseMatrix(in, out));
        }

        if (config.use_lora) {
            if (!basis) throw ContractError("GcnModel: eigen basis required for the adapted branch");
            const std::size_t n = s_op->n_rows;
            const std::size_t want = std::min(config.k, n);  // small graphs clamp k
            if (basis->k < want)
                throw ParameterError("eigen basis holds " + std::to_string(basis->k) +
                                     " pairs but the model needs " + std::to_string(want));
            if (basis->n_nodes() != n)
                throw ShapeError("eigen basis node count does not match the graph");
            k_use_ = want;
            u_ = DenseMatrix(n, k_use_);
            for (std::size_t c = 0; c < k_use_; ++c)
                for (std::size_t i = 0; i < n; ++i) u_(i, c) = basis->eigenvectors(i, c);
            ut_ = transpose(u_);
            lambda_col_ = DenseMatrix(k_use_, 1);
            gcn_gain_col_ = DenseMatrix(k_use_, 1);
            for (std::size_t i = 0; i < k_use_; ++i) {
                lambda_col_(i, 0) = basis->eigenvalues[i];
                gcn_gain_col_(i, 0) = gcn_filter(basis->eigenvalues[i]);
            }
            theta_w1 = ad::Tensor(DenseMatrix(1, ThetaNet::kHidden));
            theta_b1 = ad::Tensor(DenseMatrix(1, ThetaNet::kHidden));
            theta_w2 = ad::Tensor(DenseMatrix(ThetaNet::kHidden, 1));
            theta_b2 = ad::Tensor(DenseMatrix(1, 1));
        }
    }

    std::size_t n_features() const { return n_features_; }
    std::size_t n_classes() const { return n_classes_; }
    std::size_t n_nodes() const { return s_op_->n_rows; }
    std::size_t k_used() const { return k_use_; }
    const SparseMatrix* propagation() const { return s_op_; }

    /// Glorot (fan-average) uniform weights; theta net from its own stream.
    void init_parameters(std::uint64_t weights_seed, std::uint64_t theta_seed) {
        Rng wrng(weights_seed);
        for (std::size_t ell = 1; ell <= config.depth; ++ell) {
            const auto [in, out] = layer_dims(ell);
            const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
            DenseMatrix& w = weights[ell - 1].value;
            for (std::size_t i = 0; i < w.data.size(); ++i)
                w.data[i] = wrng.uniform(-limit, limit);
        }
        if (config.use_lora) set_theta(ThetaNet::random_init(theta_seed));
    }

    void set_theta(const ThetaNet& net) {
        if (!config.use_lora) throw ContractError("set_theta: model has no adapted branch");
        for (std::size_t i = 0; i < ThetaNet::kHidden; ++i) {
            theta_w1.value(0, i) = net.w1[i];
            theta_b1.value(0, i) = net.b1[i];
            theta_w2.value(i, 0) = net.w2[i];
        }
        theta_b2.value(0, 0) = net.b2;
    }

    ThetaNet theta() const {
        if (!config.use_lora) throw ContractError("theta: model has no adapted branch");
        ThetaNet net;
        for (std::size_t i = 0; i < ThetaNet::kHidden; ++i) {
            net.w1[i] = theta_w1.value(0, i);
            net.b1[i] = theta_b1.value(0, i);
            net.w2[i] = theta_w2.value(i, 0);
        }
        net.b2 = theta_b2.value(0, 0);
        return net;
    }

    std::vector<ad::Tensor*> parameters() {
        std::vector<ad::Tensor*> ps;
        for (ad::Tensor& w : weights) ps.push_back(&w);
        if (config.use_lora) {
            ps.push_back(&theta_w1);
            ps.push_back(&theta_b1);
            ps.push_back(&theta_w2);
            ps.push_back(&theta_b2);
        }
        return ps;
    }

    struct Forward {
        ad::Tape::NodeId logits = 0;
        ad::Tape::NodeId embeddings = 0;  // post-activation input to the final layer
    };

    /// Full-graph forward pass. `rng` drives dropout and is required only
    /// when training with dropout > 0; evaluation never draws from it.
    /// Non-const: parameters are registered as tape leaves and receive
    /// gradients if backward() runs.
    Forward forward(ad::Tape& tape, const DenseMatrix& features, bool training,
                    Rng* rng = nullptr) {
        if (features.rows != n_nodes())
            throw ShapeError("forward: features have " + std::to_string(features.rows) +
                             " rows, graph has " + std::to_string(n_nodes()) + " nodes");
        if (features.cols != n_features_)
            throw ShapeError("forward: feature dimension mismatch");
        const bool need_rng = training && config.dropout > 0.0;
        if (need_rng && !rng) throw ContractError("forward: dropout requires an RNG");

        // theta(lambda) for all cached eigenvalues, once per pass; only the
        // per-layer scale alpha_l differs between layers.
        ad::Tape::NodeId theta_col = 0;
        ad::Tape::NodeId gain_col = 0;
        if (config.use_lora) {
            const auto lam = tape.constant(lambda_col_);
            auto z = tape.matmul(lam, tape.leaf(theta_w1));
            z = tape.add(z, tape.leaf(theta_b1));
            z = tape.relu(z);
            z = tape.matmul(z, tape.leaf(theta_w2));
            z = tape.add(z, tape.leaf(theta_b2));
            theta_col = tape.sigmoid(z);
            gain_col = tape.constant_view(&gcn_gain_col_);
        }

        Forward result;
        ad::Tape::NodeId h = tape.constant_view(&features);
        for (std::size_t ell = 1; ell <= config.depth; ++ell) {
            result.embeddings = h;  // after the loop: input to the final layer
            auto hd = need_rng ? tape.dropout(h, config.dropout, *rng, true) : h;
            auto x = tape.matmul(hd, tape.leaf(weights[ell - 1]));
            auto p = tape.sparse_matmul(s_op_, x);
            if (config.use_lora && (config.lora_on_final || ell < config.depth)) {
                // g_lora(lambda) = (1 - lambda) * (1 - alpha_l * theta(lambda))
                const double a_l = alpha_at_layer(config.alpha, ell, config.depth);
                auto damp = tape.affine(theta_col, -a_l, 1.0);
                auto coeff = tape.mul(damp, gain_col);
                auto corr = tape.matmul(tape.constant_view(&u_),
                                        tape.row_scale(tape.matmul(tape.constant_view(&ut_), x),
                                                       coeff));
                p = tape.add(p, corr);
                if (config.combine == Combine::Mean) p = tape.affine(p, 0.5, 0.0);
            }
            h = ell < config.depth ? tape.relu(p) : p;
        }
        result.logits = h;
        return result;
    }

    /// (lambda, mu) pairs of this model's layer-ell response at the cached
    /// eigenvalues (the base 1 - lambda line for the unadapted variant).
    std::vector<ModePoint> layer_spectrum(const EigenBasis& basis, std::size_t ell) const {
        std::vector<ModePoint> out;
        out.reserve(basis.eigenvalues.size());
        if (!config.use_lora) {
            for (double lambda : basis.eigenvalues) out.push_back({lambda, gcn_filter(lambda)});
            return out;
        }
        const ThetaNet net = theta();
        const double a_l = alpha_at_layer(config.alpha, ell, config.depth);
        for (double lambda : basis.eigenvalues)
            out.push_back({lambda, effective_filter(lambda, a_l, net, config.combine)});
        return out;
    }

private:
    std::pair<std::size_t, std::size_t> layer_dims(std::size_t ell) const {
        const std::size_t in = ell == 1 ? n_features_ : config.hidden_dim;
        const std::size_t out = ell == config.depth ? n_classes_ : config.hidden_dim;
        return {in, out};
    }

    const SparseMatrix* s_op_;
    std::size_t n_features_;
    std::size_t n_classes_;
    std::size_t k_use_ = 0;
    DenseMatrix u_;             // n x k_use eigenvectors
    DenseMatrix ut_;            // transpose, kept to avoid per-pass transposition
    DenseMatrix lambda_col_;    // k_use x 1
    DenseMatrix gcn_gain_col_;  // k_use x 1, entries 1 - lambda_i
};

inline GcnModel make_model(const ModelConfig& cfg, std::size_t n_features,
                           std::size_t n_classes, const SparseMatrix* s_op,
                           const EigenBasis* basis) {
    GcnModel model(cfg, n_features, n_classes, s_op, basis);
    const Variant v = cfg.use_lora ? Variant::Lora : Variant::Gcn;
    model.init_parameters(streams::derive(cfg.seed, cfg.depth, v, streams::kWeights),
                          streams::derive(cfg.seed, cfg.depth, v, streams::kTheta));
    return model;
}

// -----------------------------------------------------------------------------
// Evaluation and training.
// -----------------------------------------------------------------------------

/// Fraction of masked rows whose argmax logit matches the label
/// (ties resolved toward the lowest class index).
inline double masked_accuracy(const DenseMatrix& logits, const std::vector<int>& labels,
                              const std::vector<std::uint8_t>& mask) {
    if (labels.size() != logits.rows || mask.size() != logits.rows)
        throw ShapeError("masked_accuracy: labels/mask length must equal rows");
    std::size_t count = 0, hits = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        if (!mask[i]) continue;
        ++count;
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        if (labels[i] >= 0 && static_cast<std::size_t>(labels[i]) == best) ++hits;
    }
    if (count == 0) throw DataError("masked_accuracy: mask selects no rows");
    return static_cast<double>(hits) / static_cast<double>(count);
}

struct TrainResult {
    double test_acc = 0.0;
    double best_val_acc = 0.0;
    std::size_t best_epoch = 0;  // 1-based
    std::size_t epochs_run = 0;
    double embed_variance = 0.0;
    DenseMatrix final_embeddings;      // at the restored best checkpoint
    std::vector<double> val_history;   // one entry per epoch run
};

/// Full-batch training with Adam, masked cross-entropy on the train split,
/// and early stopping on validation accuracy: stop once the number of
/// consecutive epochs without a new best exceeds `patience`, then restore
/// the parameters of the earliest best-validation epoch.
inline TrainResult train(GcnModel& model, const GraphDataset& data, const TrainConfig& tc,
                         Rng& dropout_rng) {
    tc.validate();
    auto count_mask = [](const std::vector<std::uint8_t>& m) {
        std::size_t c = 0;
        for (std::uint8_t x : m) c += x ? 1 : 0;
        return c;
    };
    if (count_mask(data.train_mask) == 0) throw DataError("train: empty train mask");
    if (count_mask(data.val_mask) == 0) throw DataError("train: empty validation mask");
    if (count_mask(data.test_mask) == 0) throw DataError("train: empty test mask");

    std::vector<ad::Tensor*> params = model.parameters();
    ad::AdamConfig adam{tc.lr, 0.9, 0.999, 1e-8, tc.weight_decay};
    std::vector<ad::AdamState> states(params.size());

    TrainResult result;
    double best_val = -1.0;
    std::size_t since_best = 0;
    std::vector<DenseMatrix> best_params;
    best_params.reserve(params.size());

    for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        {
            ad::Tape tape;
            const auto fwd = model.forward(tape, data.features, /*training=*/true, &dropout_rng);
            const auto loss_id =
                tape.log_softmax_cross_entropy(fwd.logits, data.labels, data.train_mask);
            const double loss = tape.scalar(loss_id);
            if (!std::isfinite(loss))
                throw DataError("train: non-finite loss at epoch " + std::to_string(epoch));
            tape.backward(loss_id);
            for (std::size_t i = 0; i < params.size(); ++i)
                ad::adam_step(*params[i], states[i], adam);
        }

        ad::Tape etape;
        const auto efwd = model.forward(etape, data.features, /*training=*/false);
        const double val_acc =
            masked_accuracy(etape.value(efwd.logits), data.labels, data.val_mask);
        result.val_history.push_back(val_acc);
        result.epochs_run = epoch;

        if (val_acc > best_val) {  // strict: ties keep the earliest best epoch
            best_val = val_acc;
            result.best_epoch = epoch;
            since_best = 0;
            best_params.clear();
            for (const ad::Tensor* p : params) best_params.push_back(p->value);
        } else {
            ++since_best;
            if (since_best > tc.patience) break;
        }
    }

    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
    result.best_val_acc = best_val;

    ad::Tape ftape;
    const auto ffwd = model.forward(ftape, data.features, /*training=*/false);
    result.test_acc = masked_accuracy(ftape.value(ffwd.logits), data.labels, data.test_mask);
    result.final_embeddings = ftape.value(ffwd.embeddings);
    result.embed_variance = embedding_variance(result.final_embeddings);
    return result;
}

// -----------------------------------------------------------------------------
// Multi-seed depth protocol.
// -----------------------------------------------------------------------------

struct RunRecord {
    Variant variant = Variant::Gcn;
    std::size_t depth = 0;
    std::uint64_t seed = 0;
    double test_acc = 0.0;
    double val_acc = 0.0;
    std::size_t best_epoch = 0;
    double embed_variance = 0.0;
    DenseMatrix final_embeddings;
    ThetaNet theta;        // trained net (adapted runs only)
    std::vector<DenseMatrix> weight_values;
};

struct SummaryRow {
    Variant variant = Variant::Gcn;
    std::size_t depth = 0;
    double mean_test_acc = 0.0;
    double std_test_acc = 0.0;  // population (denominator n)
    double mean_val_acc = 0.0;
    double mean_embed_variance = 0.0;
    double std_embed_variance = 0.0;
};

struct ProtocolResult {
    std::vector<RunRecord> runs;        // ordered (variant, depth, seed) as given
    std::vector<SummaryRow> summary;    // one row per (variant, depth)
};

/// Trains every (variant, depth, seed) combination with seeds {0..n_seeds-1}
/// and private RNG streams per run, optionally across `jobs` threads. Runs
/// are independent; results land in preassigned slots, so the output is
/// identical regardless of scheduling.
inline ProtocolResult run_protocol(const GraphDataset& data, const SparseMatrix& s_op,
                                   const EigenBasis* basis,
                                   const std::vector<std::size_t>& depths,
                                   const std::vector<Variant>& variants,
                                   const ModelConfig& mc_base, const TrainConfig& tc,
                                   std::size_t jobs = 1) {
    tc.validate();
    if (depths.empty()) throw ParameterError("run_protocol: no depths given");
    if (variants.empty()) throw ParameterError("run_protocol: no variants given");
    const bool wants_lora =
        std::any_of(variants.begin(), variants.end(),
                    [](Variant v) { return v == Variant::Lora; });
    if (wants_lora && !basis)
        throw ContractError("run_protocol: adapted variant requires an eigen basis");

    struct Job {
        Variant variant;
        std::size_t depth;
        std::uint64_t seed;
    };
    std::vector<Job> jobs_list;
    for (Variant v : variants)
        for (std::size_t d : depths)
            for (std::uint64_t s = 0; s < tc.n_seeds; ++s) jobs_list.push_back({v, d, s});

    ProtocolResult out;
    out.runs.resize(jobs_list.size());

    auto run_one = [&](std::size_t idx) {
        const Job& job = jobs_list[idx];
        ModelConfig mc = mc_base;
        mc.depth = job.depth;
        mc.use_lora = job.variant == Variant::Lora;
        mc.seed = job.seed;
        mc.k = std::min(mc.k, data.n_nodes);  // small graphs clamp k
        GcnModel model = make_model(mc, data.features.cols, data.n_classes, &s_op,
                                    mc.use_lora ? basis : nullptr);
        Rng dropout_rng(streams::derive(job.seed, job.depth, job.variant, streams::kDropout));
        TrainResult tr = train(model, data, tc, dropout_rng);

        RunRecord rec;
        rec.variant = job.variant;
        rec.depth = job.depth;
        rec.seed = job.seed;
        rec.test_acc = tr.test_acc;
        rec.val_acc = tr.best_val_acc;
        rec.best_epoch = tr.best_epoch;
        rec.embed_variance = tr.embed_variance;
        rec.final_embeddings = std::move(tr.final_embeddings);
        if (mc.use_lora) rec.theta = model.theta();
        rec.weight_values.reserve(model.weights.size());
        for (const ad::Tensor& w : model.weights) rec.weight_values.push_back(w.value);
        out.runs[idx] = std::move(rec);
    };

    const std::size_t n_workers = std::max<std::size_t>(1, std::min(jobs, jobs_list.size()));
    if (n_workers == 1) {
        for (std::size_t i = 0; i < jobs_list.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(n_workers);
        std::vector<std::thread> workers;
        workers.reserve(n_workers);
        for (std::size_t w = 0; w < n_workers; ++w) {
            workers.emplace_back([&, w]() {
                try {
                    for (std::size_t i = next.fetch_add(1); i < jobs_list.size();
                         i = next.fetch_add(1))
                        run_one(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (std::thread& t : workers) t.join();
        for (const std::exception_ptr& e : errors)
            if (e) std::rethrow_exception(e);
    }

    // Per-(variant, depth) aggregation over seeds, population statistics.
    for (Variant v : variants) {
        for (std::size_t d : depths) {
            std::vector<const RunRecord*> group;
            for (const RunRecord& r : out.runs)
                if (r.variant == v && r.depth == d) group.push_back(&r);
            SummaryRow row;
            row.variant = v;
            row.depth = d;
            const double n = static_cast<double>(group.size());
            for (const RunRecord* r : group) {
                row.mean_test_acc += r->test_acc;
                row.mean_val_acc += r->val_acc;
                row.mean_embed_variance += r->embed_variance;
            }
            row.mean_test_acc /= n;
            row.mean_val_acc /= n;
            row.mean_embed_variance /= n;
            double acc_var = 0.0, emb_var = 0.0;
            for (const RunRecord* r : group) {
                acc_var += (r->test_acc - row.mean_test_acc) * (r->test_acc - row.mean_test_acc);
                emb_var += (r->embed_variance - row.mean_embed_variance) *
                           (r->embed_variance - row.mean_embed_variance);
            }
            row.std_test_acc = std::sqrt(acc_var / n);
            row.std_embed_variance = std::sqrt(emb_var / n);
            out.summary.push_back(row);
        }
    }
    return out;
}

/// Per-depth mean embedding variance per variant, recomputed from the stored
/// final embeddings. Pairs are (gcn, lora); a variant absent from the
/// protocol yields NaN in its slot.
inline std::map<std::size_t, std::pair<double, double>> variance_sweep(
    const ProtocolResult& protocol) {
    std::map<std::size_t, std::pair<double, std::size_t>> acc_gcn, acc_lora;
    for (const RunRecord& r : protocol.runs) {
        if (r.final_embeddings.rows == 0)
            throw ContractError("variance_sweep: protocol lacks stored embeddings");
        const double v = embedding_variance(r.final_embeddings);
        auto& slot = r.variant == Variant::Gcn ? acc_gcn[r.depth] : acc_lora[r.depth];
        slot.first += v;
        slot.second += 1;
    }
    std::map<std::size_t, std::pair<double, double>> out;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& [d, s] : acc_gcn)
        out[d] = {s.first / static_cast<double>(s.second), nan};
    for (const auto& [d, s] : acc_lora) {
        auto it = out.find(d);
        const double mean = s.first / static_cast<double>(s.second);
        if (it == out.end())
            out[d] = {nan, mean};
        else
            it->second.second = mean;
    }
    return out;
}

// -----------------------------------------------------------------------------
// Checkpoints: binary, little-endian.
//   "LLCK" | u32 version=1 | u64 graph_hash |
//   u32 depth | u32 hidden | u32 n_features | u32 n_classes | u32 k |
//   u32 use_lora | u32 combine (0 sum, 1 mean) | u32 lora_on_final |
//   f64 dropout | f64 alpha | u64 seed |
//   u32 n_blocks | blocks: u32 name_len, name, u32 rows, u32 cols, f64 data
// -----------------------------------------------------------------------------

struct Checkpoint {
    ModelConfig config;
    std::uint64_t graph_hash = 0;
    std::size_t n_features = 0;
    std::size_t n_classes = 0;
    std::vector<DenseMatrix> weights;
    ThetaNet theta;  // meaningful only when config.use_lora
};

inline Checkpoint snapshot_checkpoint(const GcnModel& model, std::uint64_t graph_hash) {
    Checkpoint ck;
    ck.config = model.config;
    ck.graph_hash = graph_hash;
    ck.n_features = model.n_features();
    ck.n_classes = model.n_classes();
    ck.weights.reserve(model.weights.size());
    for (const ad::Tensor& w : model.weights) ck.weights.push_back(w.value);
    if (model.config.use_lora) ck.theta = model.theta();
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    std::string buf;
    buf += "LLCK";
    detail::put_u32(buf, 1);
    detail::put_u64(buf, ck.graph_hash);
    detail::put_u32(buf, static_cast<std::uint32_t>(ck.config.depth));
    detail::put_u32(buf, static_cast<std::uint32_t>(ck.config.hidden_dim));
    detail::put_u32(buf, static_cast<std::uint32_t>(ck.n_features));
    detail::put_u32(buf, static_cast<std::uint32_t>(ck.n_classes));
    detail::put_u32(buf, static_cast<std::uint32_t>(ck.config.k));
    detail::put_u32(buf, ck.config.use_lora ? 1 : 0);
    detail::put_u32(buf, ck.config.combine == Combine::Mean ? 1 : 0);
    detail::put_u32(buf, ck.config.lora_on_final ? 1 : 0);
    detail::put_f64(buf, ck.config.dropout);
    detail::put_f64(buf, ck.config.alpha);
    detail::put_u64(buf, ck.config.seed);

    auto put_block = [&buf](const std::string& name, const DenseMatrix& m) {
        detail::put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
        detail::put_u32(buf, static_cast<std::uint32_t>(m.rows));
        detail::put_u32(buf, static_cast<std::uint32_t>(m.cols));
        for (double v : m.data) detail::put_f64(buf, v);
    };

    const std::uint32_t n_blocks =
        static_cast<std::uint32_t>(ck.weights.size()) + (ck.config.use_lora ? 4 : 0);
    detail::put_u32(buf, n_blocks);
    for (std::size_t i = 0; i < ck.weights.size(); ++i)
        put_block("W" + std::to_string(i + 1), ck.weights[i]);
    if (ck.config.use_lora) {
        DenseMatrix w1(1, ThetaNet::kHidden), b1(1, ThetaNet::kHidden);
        DenseMatrix w2(ThetaNet::kHidden, 1), b2(1, 1);
        for (std::size_t i = 0; i < ThetaNet::kHidden; ++i) {
            w1(0, i) = ck.theta.w1[i];
            b1(0, i) = ck.theta.b1[i];
            w2(i, 0) = ck.theta.w2[i];
        }
        b2(0, 0) = ck.theta.b2;
        put_block("theta_w1", w1);
        put_block("theta_b1", b1);
        put_block("theta_w2", w2);
        put_block("theta_b2", b2);
    }
    detail::write_binary_or_throw(path, buf);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string data = detail::read_binary_or_throw(path);
    detail::ByteReader r(data, path.string());
    if (r.bytes(4) != "LLCK") throw FormatError(path.string() + ": bad magic");
    if (r.u32() != 1) throw FormatError(path.string() + ": unsupported version");
    Checkpoint ck;
    ck.graph_hash = r.u64();
    ck.config.depth = r.u32();
    ck.config.hidden_dim = r.u32();
    ck.n_features = r.u32();
    ck.n_classes = r.u32();
    ck.config.k = r.u32();
    ck.config.use_lora = r.u32() != 0;
    ck.config.combine = r.u32() != 0 ? Combine::Mean : Combine::Sum;
    ck.config.lora_on_final = r.u32() != 0;
    ck.config.dropout = r.f64();
    ck.config.alpha = r.f64();
    ck.config.seed = r.u64();

    const std::uint32_t n_blocks = r.u32();
    std::unordered_map<std::string, DenseMatrix> blocks;
    for (std::uint32_t b = 0; b < n_blocks; ++b) {
        const std::uint32_t name_len = r.u32();
        const std::string name = r.bytes(name_len);
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        DenseMatrix m(rows, cols);
        for (double& v : m.data) v = r.f64();
        if (!blocks.emplace(name, std::move(m)).second)
            throw FormatError(path.string() + ": duplicate block '" + name + "'");
    }
    if (!r.exhausted()) throw FormatError(path.string() + ": trailing bytes");

    auto take = [&blocks, &path](const std::string& name) {
        auto it = blocks.find(name);
        if (it == blocks.end())
            throw FormatError(path.string() + ": missing block '" + name + "'");
        return std::move(it->second);
    };
    ck.weights.reserve(ck.config.depth);
    for (std::size_t i = 1; i <= ck.config.depth; ++i)
        ck.weights.push_back(take("W" + std::to_string(i)));
    if (ck.config.use_lora) {
        const DenseMatrix w1 = take("theta_w1"), b1 = take("theta_b1");
        const DenseMatrix w2 = take("theta_w2"), b2 = take("theta_b2");
        if (w1.cols != ThetaNet::kHidden || b1.cols != ThetaNet::kHidden ||
            w2.rows != ThetaNet::kHidden || b2.rows != 1 || b2.cols != 1)
            throw FormatError(path.string() + ": theta block shape mismatch");
        for (std::size_t i = 0; i < ThetaNet::kHidden; ++i) {
            ck.theta.w1[i] = w1(0, i);
            ck.theta.b1[i] = b1(0, i);
            ck.theta.w2[i] = w2(i, 0);
        }
        ck.theta.b2 = b2(0, 0);
    }
    return ck;
}

/// Rebuild a usable model from a checkpoint; weight shapes are validated
/// against the recorded dimensions.
inline GcnModel model_from_checkpoint(const Checkpoint& ck, const SparseMatrix* s_op,
                                      const EigenBasis* basis) {
    GcnModel model(ck.config, ck.n_features, ck.n_classes, s_op,
                   ck.config.use_lora ? basis : nullptr);
    if (ck.weights.size() != model.weights.size())
        throw FormatError("checkpoint: wrong number of weight blocks");
    for (std::size_t i = 0; i < ck.weights.size(); ++i) {
        if (!ck.weights[i].same_shape(model.weights[i].value))
            throw FormatError("checkpoint: weight W" + std::to_string(i + 1) +
                              " has the wrong shape");
        model.weights[i].value = ck.weights[i];
    }
    if (ck.config.use_lora) model.set_theta(ck.theta);
    return model;
}

}  // namespace laplora

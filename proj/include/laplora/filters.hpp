#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "laplora/common.hpp"

// =============================================================================
// laplora/filters.hpp
// Scalar spectral filters acting on Laplacian eigenvalues lambda in [0,2]:
// the base first-order filter 1 - lambda, the learned low-rank modulation
// theta(lambda) produced by a tiny MLP, the per-layer annealed strength
// alpha_l, and the combined/effective response used for stability analysis.
// =============================================================================

namespace laplora {

// How the base and adapted propagation branches are merged per layer.
enum class Combine { Sum, Mean };

inline const char* to_string(Combine c) { return c == Combine::Sum ? "sum" : "mean"; }

inline Combine combine_from_string(const std::string& s) {
    if (s == "sum") return Combine::Sum;
    if (s == "mean") return Combine::Mean;
    throw ParameterError("combine must be 'sum' or 'mean', got '" + s + "'");
}

namespace detail {

inline void check_lambda(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 2.0))
        throw DomainError("eigenvalue out of [0,2]: " + std::to_string(lambda));
}

}  // namespace detail

/// Numerically safe logistic, clamped so the result is strictly inside (0,1).
inline double stable_sigmoid(double x) {
    double s;
    if (x >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        s = e / (1.0 + e);
    }
    constexpr double lo = std::numeric_limits<double>::min();
    constexpr double hi = 1.0 - 0x1p-53;
    return std::clamp(s, lo, hi);
}

/// Base propagation response: g(lambda) = 1 - lambda.
inline double gcn_filter(double lambda) {
    detail::check_lambda(lambda);
    return 1.0 - lambda;
}

// -----------------------------------------------------------------------------
// ThetaNet: lambda -> theta(lambda) in (0,1).
// Two-layer MLP, hidden width 32, ReLU hidden activation, sigmoid output.
// -----------------------------------------------------------------------------

struct ThetaNet {
    static constexpr std::size_t kHidden = 32;

    std::vector<double> w1;  // kHidden, input weight per hidden unit
    std::vector<double> b1;  // kHidden
    std::vector<double> w2;  // kHidden, output weight per hidden unit
    double b2 = 0.0;

    ThetaNet() : w1(kHidden, 0.0), b1(kHidden, 0.0), w2(kHidden, 0.0) {}

    /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. Keeps
    /// theta near 0.5 at the start, so the initial correction is mild.
    static ThetaNet random_init(std::uint64_t seed) {
        ThetaNet net;
        Rng rng(seed);
        const double bound1 = 1.0;                               // fan_in = 1
        const double bound2 = 1.0 / std::sqrt(double(kHidden));  // fan_in = 32
        for (std::size_t i = 0; i < kHidden; ++i) net.w1[i] = rng.uniform(-bound1, bound1);
        for (std::size_t i = 0; i < kHidden; ++i) net.w2[i] = rng.uniform(-bound2, bound2);
        return net;
    }
};

/// theta(lambda) = sigmoid(w2 . relu(w1 * lambda + b1) + b2), strictly in (0,1).
inline double theta_eval(const ThetaNet& net, double lambda) {
    detail::check_lambda(lambda);
    double z = net.b2;
    for (std::size_t i = 0; i < ThetaNet::kHidden; ++i) {
        const double h = net.w1[i] * lambda + net.b1[i];
        if (h > 0.0) z += net.w2[i] * h;
    }
    return stable_sigmoid(z);
}

/// Depth-annealed adaptation strength for layer ell of total: alpha * ell / total.
inline double alpha_at_layer(double alpha, std::size_t ell, std::size_t total) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw ParameterError("alpha out of [0,1]: " + std::to_string(alpha));
    if (total < 1) throw ParameterError("total layer count must be >= 1");
    if (ell < 1 || ell > total)
        throw ParameterError("layer index out of [1," + std::to_string(total) +
                             "]: " + std::to_string(ell));
    return alpha * static_cast<double>(ell) / static_cast<double>(total);
}

/// Everything needed to evaluate the adapted filter at one layer.
struct FilterParams {
    double alpha = 0.5;           // global strength, in [0,1]
    std::size_t layer_index = 1;  // ell, in [1, depth]
    std::size_t depth = 1;        // L
    const ThetaNet* theta = nullptr;

    double alpha_l() const { return alpha_at_layer(alpha, layer_index, depth); }

    const ThetaNet& net() const {
        if (!theta) throw ContractError("FilterParams: theta net not set");
        return *theta;
    }
};

inline double alpha_at_layer(const FilterParams& p) { return p.alpha_l(); }

/// Adapted branch response: (1 - lambda) * (1 - alpha_l * theta(lambda)).
inline double lora_filter(double lambda, double alpha_l, const ThetaNet& net) {
    return gcn_filter(lambda) * (1.0 - alpha_l * theta_eval(net, lambda));
}

inline double lora_filter(double lambda, const FilterParams& p) {
    return lora_filter(lambda, p.alpha_l(), p.net());
}

/// Spectral damping factor of the adapted branch relative to the base one;
/// stays >= 0 whenever alpha <= 1 because theta < 1.
inline double beta_of_lambda(double lambda, double alpha_l, const ThetaNet& net) {
    detail::check_lambda(lambda);
    return 1.0 - alpha_l * theta_eval(net, lambda);
}

inline double beta_of_lambda(double lambda, const FilterParams& p) {
    return beta_of_lambda(lambda, p.alpha_l(), p.net());
}

/// Per-layer end-to-end response with both branches merged.
/// Sum:  (1 - lambda) * (2 - alpha_l * theta(lambda))
/// Mean: (1 - lambda) * (1 - alpha_l * theta(lambda) / 2)
/// Kept in product form: the second factor is >= 1 in sum mode, so
/// |g_eff| >= |g_gcn| holds exactly in floating point, not merely in
/// real arithmetic.
inline double effective_filter(double lambda, double alpha_l, const ThetaNet& net,
                               Combine combine) {
    const double base = gcn_filter(lambda);
    const double t = alpha_l * theta_eval(net, lambda);
    if (combine == Combine::Sum) return base * (2.0 - t);
    return base * (1.0 - 0.5 * t);
}

inline double effective_filter(double lambda, const FilterParams& p, Combine combine) {
    return effective_filter(lambda, p.alpha_l(), p.net(), combine);
}

// -----------------------------------------------------------------------------
// Stability: per-layer worst-case gain over the nontrivial spectrum. The
// contraction argument needs sup |g_eff| < 1; this report surfaces whether
// the configured filter satisfies it. Diagnostic only — nothing is clamped.
// -----------------------------------------------------------------------------

struct StabilityReport {
    double sup_gain = 0.0;               // max |g_eff| over nontrivial eigenvalues
    double argmax_lambda = 0.0;          // eigenvalue attaining it
    std::size_t argmax_layer = 0;        // layer index (1-based) attaining it
    bool stable = true;                  // sup_gain < 1 (vacuously true when empty)
    std::vector<double> per_layer_sup;   // one sup per layer, index ell-1
};

// Eigenvalues at or below this are treated as the trivial constant mode and
// excluded from the supremum: they carry no feature variation to amplify.
inline constexpr double kTrivialEigenvalue = 1e-12;

/// Worst-case gains for explicit per-layer filter parameters.
inline StabilityReport stability_report(const std::vector<double>& eigenvalues,
                                        const std::vector<FilterParams>& params_per_layer,
                                        Combine combine) {
    if (params_per_layer.empty())
        throw ParameterError("stability_report: need at least one layer");
    StabilityReport rep;
    rep.per_layer_sup.assign(params_per_layer.size(), 0.0);
    bool seen = false;
    for (std::size_t li = 0; li < params_per_layer.size(); ++li) {
        const FilterParams& p = params_per_layer[li];
        for (double lambda : eigenvalues) {
            if (lambda <= kTrivialEigenvalue) continue;
            const double gain = std::fabs(effective_filter(lambda, p, combine));
            rep.per_layer_sup[li] = std::max(rep.per_layer_sup[li], gain);
            if (!seen || gain > rep.sup_gain) {
                rep.sup_gain = gain;
                rep.argmax_lambda = lambda;
                rep.argmax_layer = li + 1;
                seen = true;
            }
        }
    }
    rep.stable = rep.sup_gain < 1.0;  // vacuously stable on an empty spectrum
    return rep;
}

/// Convenience: one shared net, annealed alpha over layers 1..total.
inline StabilityReport stability_report(const std::vector<double>& eigenvalues, double alpha,
                                        const ThetaNet& net, std::size_t total,
                                        Combine combine) {
    if (total < 1) throw ParameterError("stability_report: total layer count must be >= 1");
    std::vector<FilterParams> per_layer(total);
    for (std::size_t ell = 1; ell <= total; ++ell) {
        per_layer[ell - 1] = FilterParams{alpha, ell, total, &net};
        per_layer[ell - 1].alpha_l();  // validate eagerly
    }
    return stability_report(eigenvalues, per_layer, combine);
}

}  // namespace laplora

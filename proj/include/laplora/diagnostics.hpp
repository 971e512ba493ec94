#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "laplora/common.hpp"
#include "laplora/filters.hpp"

// =============================================================================
// laplora/diagnostics.hpp
// Oversmoothing and spectral diagnostics: embedding variance, the propagation
// spectrum mu(lambda), the depth-wise contraction ratio C(L), frequency-wise
// energy retention E(lambda; L), and serialization of the combined report to
// JSON and long-format CSV. Everything here is a pure function.
// =============================================================================

namespace laplora {

// -----------------------------------------------------------------------------
// Embedding variance: mean over feature dimensions of the per-dimension
// population variance (denominator N) across nodes. Decay of this value with
// depth is the representational-collapse signal.
// -----------------------------------------------------------------------------

inline double embedding_variance(const DenseMatrix& h) {
    if (h.rows < 2) throw DataError("embedding_variance: need at least 2 rows");
    if (h.cols == 0) throw DataError("embedding_variance: empty feature dimension");
    const double n = static_cast<double>(h.rows);
    double total = 0.0;
    for (std::size_t j = 0; j < h.cols; ++j) {
        // Welford recurrence rather than the two-pass form: when a column is
        // constant every update delta is exactly zero, so identical rows give
        // an exact 0.0 (two-pass leaves an O(ulp^2) residue whenever the
        // computed mean rounds off the repeated value).
        double mean = 0.0;
        double m2 = 0.0;
        for (std::size_t i = 0; i < h.rows; ++i) {
            const double x = h(i, j);
            const double delta = x - mean;
            mean += delta / static_cast<double>(i + 1);
            m2 += delta * (x - mean);
        }
        total += m2 / n;
    }
    return total / static_cast<double>(h.cols);
}

// -----------------------------------------------------------------------------
// Propagation spectrum. One point per cached eigenvalue, ascending; carries
// both the base response and the model's effective response (equal for a
// plain GCN).
// -----------------------------------------------------------------------------

struct SpectrumPoint {
    double lambda = 0.0;
    double mu_gcn = 0.0;
    double mu_eff = 0.0;
};

// A model with layer-dependent alpha_l has one spectrum per layer; figures
// show one curve. FinalLayer (default) uses the l = L filter, the one with
// the strongest adaptation; GeometricMean aggregates |mu_l| across layers.
enum class SpectrumLayerMode { FinalLayer, GeometricMean };

struct SpectrumConfig {
    bool use_lora = false;
    double alpha = 0.5;
    const ThetaNet* theta = nullptr;  // required when use_lora
    std::size_t depth = 1;            // L
    Combine combine = Combine::Sum;
    SpectrumLayerMode layer_mode = SpectrumLayerMode::FinalLayer;
};

inline std::vector<SpectrumPoint> propagation_spectrum(const std::vector<double>& eigenvalues,
                                                       const SpectrumConfig& cfg) {
    if (cfg.use_lora && cfg.theta == nullptr)
        throw ContractError("propagation_spectrum: theta net required for the adapted model");
    if (cfg.depth < 1) throw ParameterError("propagation_spectrum: depth must be >= 1");
    std::vector<SpectrumPoint> out;
    out.reserve(eigenvalues.size());
    for (double lambda : eigenvalues) {
        SpectrumPoint p;
        p.lambda = lambda;
        p.mu_gcn = gcn_filter(lambda);
        if (!cfg.use_lora) {
            p.mu_eff = p.mu_gcn;
        } else if (cfg.layer_mode == SpectrumLayerMode::FinalLayer) {
            const double a = alpha_at_layer(cfg.alpha, cfg.depth, cfg.depth);
            p.mu_eff = effective_filter(lambda, a, *cfg.theta, cfg.combine);
        } else {
            double prod = 1.0;
            for (std::size_t ell = 1; ell <= cfg.depth; ++ell) {
                const double a = alpha_at_layer(cfg.alpha, ell, cfg.depth);
                prod *= std::fabs(effective_filter(lambda, a, *cfg.theta, cfg.combine));
            }
            p.mu_eff = std::pow(prod, 1.0 / static_cast<double>(cfg.depth));
        }
        out.push_back(p);
    }
    return out;
}

// -----------------------------------------------------------------------------
// Contraction ratio and energy retention over a (lambda, mu) spectrum.
// -----------------------------------------------------------------------------

struct ModePoint {
    double lambda = 0.0;
    double mu = 0.0;
};

/// C(L) = (|mu_2| / |mu_1|)^L with |mu| sorted descending (ties broken by
/// ascending lambda). L = 0 gives the empty product 1; a zero leading mode
/// gives 0 by convention.
inline double contraction_ratio(const std::vector<ModePoint>& spectrum, std::size_t depth) {
    if (spectrum.size() < 2) throw DataError("contraction_ratio: need at least 2 modes");
    if (depth == 0) return 1.0;
    std::vector<std::size_t> order(spectrum.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ma = std::fabs(spectrum[a].mu);
        const double mb = std::fabs(spectrum[b].mu);
        if (ma != mb) return ma > mb;
        return spectrum[a].lambda < spectrum[b].lambda;
    });
    const double mu1 = std::fabs(spectrum[order[0]].mu);
    const double mu2 = std::fabs(spectrum[order[1]].mu);
    if (mu1 == 0.0) return 0.0;
    return std::pow(mu2 / mu1, static_cast<double>(depth));
}

/// E(lambda; L) = |mu(lambda)|^L per mode, in input order.
inline std::vector<std::pair<double, double>> energy_retention(
    const std::vector<ModePoint>& spectrum, std::size_t depth) {
    if (depth < 1) throw ParameterError("energy_retention: depth must be >= 1");
    std::vector<std::pair<double, double>> out;
    out.reserve(spectrum.size());
    for (const ModePoint& m : spectrum)
        out.emplace_back(m.lambda, std::pow(std::fabs(m.mu), static_cast<double>(depth)));
    return out;
}

namespace detail {

inline std::vector<ModePoint> pick_modes(const std::vector<SpectrumPoint>& spectrum,
                                         bool effective) {
    std::vector<ModePoint> out;
    out.reserve(spectrum.size());
    for (const SpectrumPoint& p : spectrum)
        out.push_back({p.lambda, effective ? p.mu_eff : p.mu_gcn});
    return out;
}

}  // namespace detail

// -----------------------------------------------------------------------------
// Combined report.
// -----------------------------------------------------------------------------

struct EnergyPoint {
    double lambda = 0.0;
    double e_gcn = 0.0;
    double e_eff = 0.0;
};

struct DiagnosticsReport {
    std::string variant = "gcn";  // "gcn" or "lora": what the checkpoint trained
    std::size_t depth = 16;       // stated L for the energy curve
    Combine combine = Combine::Sum;
    double alpha = 0.0;
    std::string dataset;
    std::uint64_t graph_hash = 0;

    std::vector<SpectrumPoint> spectrum;               // ascending lambda
    std::map<std::size_t, double> contraction_gcn;     // L -> C(L)
    std::map<std::size_t, double> contraction_eff;     // L -> C(L)
    std::vector<EnergyPoint> energy_curve;             // at the stated depth
    std::map<std::size_t, double> variance_gcn;        // depth -> mean variance
    std::map<std::size_t, double> variance_lora;       //   (filled by sweeps)
    StabilityReport stability;
};

/// Full report for one model configuration: spectrum at the cached
/// eigenvalues, contraction curves for L in [1, contraction_max], energy at
/// the report depth, and the stability summary over all layers. The
/// stability sup is taken over `stability_depth` layers (0 means cfg.depth);
/// a checkpoint keeps its own layer count even when the energy-retention
/// depth is overridden.
inline DiagnosticsReport build_report(const std::vector<double>& eigenvalues,
                                      const SpectrumConfig& cfg,
                                      std::size_t contraction_max = 32,
                                      std::size_t stability_depth = 0) {
    const std::size_t sdepth = stability_depth ? stability_depth : cfg.depth;
    DiagnosticsReport rep;
    rep.variant = cfg.use_lora ? "lora" : "gcn";
    rep.depth = cfg.depth;
    rep.combine = cfg.combine;
    rep.alpha = cfg.use_lora ? cfg.alpha : 0.0;
    rep.spectrum = propagation_spectrum(eigenvalues, cfg);

    const auto gcn_modes = detail::pick_modes(rep.spectrum, /*effective=*/false);
    const auto eff_modes = detail::pick_modes(rep.spectrum, /*effective=*/true);
    if (eigenvalues.size() >= 2) {
        for (std::size_t l = 1; l <= contraction_max; ++l) {
            rep.contraction_gcn[l] = contraction_ratio(gcn_modes, l);
            rep.contraction_eff[l] = contraction_ratio(eff_modes, l);
        }
    }
    const auto e_gcn = energy_retention(gcn_modes, cfg.depth);
    const auto e_eff = energy_retention(eff_modes, cfg.depth);
    rep.energy_curve.resize(e_gcn.size());
    for (std::size_t i = 0; i < e_gcn.size(); ++i)
        rep.energy_curve[i] = {e_gcn[i].first, e_gcn[i].second, e_eff[i].second};

    if (cfg.use_lora) {
        rep.stability =
            stability_report(eigenvalues, cfg.alpha, *cfg.theta, sdepth, cfg.combine);
    } else {
        // Base model: the per-layer response is 1 - lambda at every layer.
        StabilityReport s;
        s.per_layer_sup.assign(sdepth, 0.0);
        bool seen = false;
        for (double lambda : eigenvalues) {
            if (lambda <= kTrivialEigenvalue) continue;
            const double gain = std::fabs(gcn_filter(lambda));
            for (double& v : s.per_layer_sup) v = std::max(v, gain);
            if (!seen || gain > s.sup_gain) {
                s.sup_gain = gain;
                s.argmax_lambda = lambda;
                s.argmax_layer = 1;
                seen = true;
            }
        }
        s.stable = s.sup_gain < 1.0;
        rep.stability = s;
    }
    return rep;
}

// -----------------------------------------------------------------------------
// Serialization: JSON mirrors the report fields; the CSV is long-format
// `diagnostic,variant,depth,lambda,value` for direct plotting. Spectrum,
// contraction, and energy rows are labeled `gcn` (base response) and `eff`
// (the checkpoint's effective response); variance rows use the trained
// variant names.
// -----------------------------------------------------------------------------

inline nlohmann::json stability_to_json(const StabilityReport& s) {
    return nlohmann::json{{"sup_gain", s.sup_gain},
                          {"argmax_lambda", s.argmax_lambda},
                          {"argmax_layer", s.argmax_layer},
                          {"stable", s.stable},
                          {"per_layer_sup", s.per_layer_sup}};
}

inline nlohmann::json report_to_json(const DiagnosticsReport& rep) {
    nlohmann::json spectrum = nlohmann::json::array();
    for (const SpectrumPoint& p : rep.spectrum)
        spectrum.push_back({{"lambda", p.lambda}, {"mu_gcn", p.mu_gcn}, {"mu_eff", p.mu_eff}});

    auto curve_to_json = [](const std::map<std::size_t, double>& curve) {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [l, c] : curve) j[std::to_string(l)] = c;
        return j;
    };

    nlohmann::json energy = nlohmann::json::array();
    for (const EnergyPoint& p : rep.energy_curve)
        energy.push_back({{"lambda", p.lambda}, {"e_gcn", p.e_gcn}, {"e_eff", p.e_eff}});

    nlohmann::json j{{"variant", rep.variant},
                     {"depth", rep.depth},
                     {"combine", to_string(rep.combine)},
                     {"alpha", rep.alpha},
                     {"dataset", rep.dataset},
                     {"graph_hash", rep.graph_hash},
                     {"spectrum", spectrum},
                     {"contraction_curve",
                      {{"gcn", curve_to_json(rep.contraction_gcn)},
                       {"eff", curve_to_json(rep.contraction_eff)}}},
                     {"energy_curve", energy},
                     {"stability", stability_to_json(rep.stability)}};
    if (!rep.variance_gcn.empty() || !rep.variance_lora.empty())
        j["per_depth_variance"] = {{"gcn", curve_to_json(rep.variance_gcn)},
                                   {"lora", curve_to_json(rep.variance_lora)}};
    return j;
}

inline std::string report_to_long_csv(const DiagnosticsReport& rep) {
    std::string out = "diagnostic,variant,depth,lambda,value\n";
    auto row = [&out](const std::string& diag, const std::string& variant, std::size_t depth,
                      const std::string& lambda, double value) {
        out += diag;
        out += ',';
        out += variant;
        out += ',';
        out += std::to_string(depth);
        out += ',';
        out += lambda;
        out += ',';
        out += format_real17(value);
        out += '\n';
    };
    for (const SpectrumPoint& p : rep.spectrum) {
        row("spectrum", "gcn", rep.depth, format_real17(p.lambda), p.mu_gcn);
        row("spectrum", "eff", rep.depth, format_real17(p.lambda), p.mu_eff);
    }
    for (const auto& [l, c] : rep.contraction_gcn) row("contraction", "gcn", l, "", c);
    for (const auto& [l, c] : rep.contraction_eff) row("contraction", "eff", l, "", c);
    for (const EnergyPoint& p : rep.energy_curve) {
        row("energy", "gcn", rep.depth, format_real17(p.lambda), p.e_gcn);
        row("energy", "eff", rep.depth, format_real17(p.lambda), p.e_eff);
    }
    for (const auto& [d, v] : rep.variance_gcn) row("variance", "gcn", d, "", v);
    for (const auto& [d, v] : rep.variance_lora) row("variance", "lora", d, "", v);
    row("stability_sup", "eff", rep.depth, format_real17(rep.stability.argmax_lambda),
        rep.stability.sup_gain);
    row("stability_stable", "eff", rep.depth, "", rep.stability.stable ? 1.0 : 0.0);
    return out;
}

}  // namespace laplora

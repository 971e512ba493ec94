#pragma once

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "laplora/common.hpp"
#include "laplora/graph.hpp"

// =============================================================================
// laplora/datasets.hpp
// Graph container ingestion (strict CSV + meta.json), synthetic generators
// for the test corpus, and the content hash that validates eigen caches.
// =============================================================================

namespace laplora {

namespace detail {

inline std::string read_file_or_throw(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError("missing file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(std::move(line));
        start = end + 1;
    }
    return lines;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t end = line.find(',', start);
        if (end == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, end - start));
        start = end + 1;
    }
    return fields;
}

// Strict: the whole field must parse, no missing values.
inline std::size_t parse_index(std::string_view s, const char* what) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw FormatError(std::string("bad integer in ") + what + ": '" + std::string(s) + "'");
    return v;
}

inline int parse_int(std::string_view s, const char* what) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw FormatError(std::string("bad integer in ") + what + ": '" + std::string(s) + "'");
    return v;
}

inline double parse_real(std::string_view s, const char* what) {
    if (s.empty())
        throw FormatError(std::string("empty numeric field in ") + what);
    std::string buf(s);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(buf.c_str(), &end);
    if (errno != 0 || end != buf.c_str() + buf.size())
        throw FormatError(std::string("bad real in ") + what + ": '" + buf + "'");
    return v;
}

inline void write_real17(std::FILE* f, double v) {
    std::fprintf(f, "%.17g", v);
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_for_write(const std::filesystem::path& p) {
    std::FILE* f = std::fopen(p.string().c_str(), "wb");
    if (!f) throw FormatError("cannot open for writing: " + p.string());
    return FilePtr(f);
}

}  // namespace detail

// -----------------------------------------------------------------------------
// Container format.
//   meta.json     {"n_nodes":int,"n_features":int,"n_classes":int,"name":str}
//   edges.csv     header "src,dst", integer endpoints
//   features.csv  N x F reals, no header
//   labels.csv    N integers, one per line
//   masks.csv     header "train,val,test", N rows of 0/1
// -----------------------------------------------------------------------------

inline GraphDataset load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(detail::read_file_or_throw(dir / "meta.json"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("meta.json: ") + e.what());
    }
    if (!meta.contains("n_nodes") || !meta.contains("n_features") ||
        !meta.contains("n_classes") || !meta.contains("name"))
        throw FormatError("meta.json: missing required key");

    GraphDataset ds;
    ds.n_nodes = meta["n_nodes"].get<std::size_t>();
    ds.n_classes = meta["n_classes"].get<int>();
    ds.name = meta["name"].get<std::string>();
    const std::size_t n_features = meta["n_features"].get<std::size_t>();

    // edges.csv
    {
        const auto lines = detail::split_lines(detail::read_file_or_throw(dir / "edges.csv"));
        if (lines.empty() || lines[0] != "src,dst")
            throw FormatError("edges.csv: expected header 'src,dst'");
        EdgeList raw;
        raw.reserve(lines.size());
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const auto f = detail::split_csv(lines[i]);
            if (f.size() != 2) throw FormatError("edges.csv: expected 2 columns");
            raw.emplace_back(detail::parse_index(f[0], "edges.csv"),
                             detail::parse_index(f[1], "edges.csv"));
        }
        ds.edges = symmetrize(raw, ds.n_nodes);
    }

    // features.csv
    {
        const auto lines = detail::split_lines(detail::read_file_or_throw(dir / "features.csv"));
        if (lines.size() != ds.n_nodes)
            throw ConsistencyError("features.csv: row count does not match meta n_nodes");
        ds.features = DenseMatrix(ds.n_nodes, n_features);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            const auto f = detail::split_csv(lines[i]);
            if (f.size() != n_features)
                throw ConsistencyError("features.csv: column count does not match meta n_features");
            for (std::size_t j = 0; j < n_features; ++j)
                ds.features(i, j) = detail::parse_real(f[j], "features.csv");
        }
    }

    // labels.csv
    {
        const auto lines = detail::split_lines(detail::read_file_or_throw(dir / "labels.csv"));
        if (lines.size() != ds.n_nodes)
            throw ConsistencyError("labels.csv: row count does not match meta n_nodes");
        ds.labels.resize(ds.n_nodes);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            ds.labels[i] = detail::parse_int(lines[i], "labels.csv");
            if (ds.labels[i] < 0 || ds.labels[i] >= ds.n_classes)
                throw ValidationError("labels.csv: label outside [0, n_classes)");
        }
    }

    // masks.csv
    {
        const auto lines = detail::split_lines(detail::read_file_or_throw(dir / "masks.csv"));
        if (lines.empty() || lines[0] != "train,val,test")
            throw FormatError("masks.csv: expected header 'train,val,test'");
        if (lines.size() != ds.n_nodes + 1)
            throw ConsistencyError("masks.csv: row count does not match meta n_nodes");
        ds.train_mask.assign(ds.n_nodes, 0);
        ds.val_mask.assign(ds.n_nodes, 0);
        ds.test_mask.assign(ds.n_nodes, 0);
        for (std::size_t i = 0; i < ds.n_nodes; ++i) {
            const auto f = detail::split_csv(lines[i + 1]);
            if (f.size() != 3) throw FormatError("masks.csv: expected 3 columns");
            int bits[3];
            for (int c = 0; c < 3; ++c) {
                bits[c] = detail::parse_int(f[c], "masks.csv");
                if (bits[c] != 0 && bits[c] != 1)
                    throw FormatError("masks.csv: mask entries must be 0 or 1");
            }
            if (bits[0] + bits[1] + bits[2] > 1)
                throw ValidationError("masks.csv: node assigned to more than one split");
            ds.train_mask[i] = static_cast<std::uint8_t>(bits[0]);
            ds.val_mask[i] = static_cast<std::uint8_t>(bits[1]);
            ds.test_mask[i] = static_cast<std::uint8_t>(bits[2]);
        }
    }
    return ds;
}

inline void save_dataset(const GraphDataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        nlohmann::json meta = {{"n_nodes", ds.n_nodes},
                               {"n_features", ds.features.cols},
                               {"n_classes", ds.n_classes},
                               {"name", ds.name}};
        std::ofstream out(dir / "meta.json", std::ios::binary);
        out << meta.dump(2) << "\n";
    }
    {
        auto f = detail::open_for_write(dir / "edges.csv");
        std::fputs("src,dst\n", f.get());
        for (const auto& [u, v] : ds.edges)
            std::fprintf(f.get(), "%zu,%zu\n", u, v);
    }
    {
        auto f = detail::open_for_write(dir / "features.csv");
        for (std::size_t i = 0; i < ds.features.rows; ++i) {
            for (std::size_t j = 0; j < ds.features.cols; ++j) {
                if (j) std::fputc(',', f.get());
                detail::write_real17(f.get(), ds.features(i, j));
            }
            std::fputc('\n', f.get());
        }
    }
    {
        auto f = detail::open_for_write(dir / "labels.csv");
        for (int v : ds.labels) std::fprintf(f.get(), "%d\n", v);
    }
    {
        auto f = detail::open_for_write(dir / "masks.csv");
        std::fputs("train,val,test\n", f.get());
        for (std::size_t i = 0; i < ds.n_nodes; ++i)
            std::fprintf(f.get(), "%d,%d,%d\n", int(ds.train_mask[i]), int(ds.val_mask[i]),
                         int(ds.test_mask[i]));
    }
}

// -----------------------------------------------------------------------------
// Synthetic graphs.
// -----------------------------------------------------------------------------

enum class GraphKind { Path, Cycle, Complete, TwoCliques, Sbm };
enum class FeatureMode { OneHotBlock, RandomGaussian };

struct SyntheticSpec {
    GraphKind kind = GraphKind::Path;
    std::size_t n = 1;
    std::vector<std::size_t> block_sizes;  // sbm only; empty -> two equal blocks
    double p_in = 1.0;
    double p_out = 0.0;
    FeatureMode feature_mode = FeatureMode::OneHotBlock;
    std::size_t feature_dim = 0;  // 0 -> one-hot width, or 16 for gaussian
    double signal = 1.0;          // gaussian class-mean scale
    std::uint64_t seed = 0;
    // Split: default 60/20/20 round-robin per block. When train_per_class > 0,
    // a Planetoid-style split is used instead: train_per_class nodes of each
    // class, then val_count and test_count nodes from the remaining pool.
    std::size_t train_per_class = 0;
    std::size_t val_count = 0;
    std::size_t test_count = 0;
    std::string name;  // optional; defaults to the kind
};

namespace detail {

inline const char* kind_name(GraphKind k) {
    switch (k) {
        case GraphKind::Path: return "path";
        case GraphKind::Cycle: return "cycle";
        case GraphKind::Complete: return "complete";
        case GraphKind::TwoCliques: return "two_cliques";
        case GraphKind::Sbm: return "sbm";
    }
    return "unknown";
}

}  // namespace detail

inline GraphDataset generate(const SyntheticSpec& spec) {
    if (spec.n < 1) throw ParameterError("generate: n must be >= 1");
    if (spec.p_out < 0.0 || spec.p_out > spec.p_in || spec.p_in > 1.0)
        throw ParameterError("generate: need 0 <= p_out <= p_in <= 1");

    GraphDataset ds;
    ds.n_nodes = spec.n;
    ds.name = spec.name.empty() ? detail::kind_name(spec.kind) : spec.name;

    // Block assignment: non-SBM kinds are one block, except two_cliques.
    std::vector<std::size_t> block_of(spec.n, 0);
    std::size_t n_blocks = 1;
    std::vector<std::size_t> sizes;
    switch (spec.kind) {
        case GraphKind::TwoCliques:
            sizes = {spec.n / 2, spec.n - spec.n / 2};
            break;
        case GraphKind::Sbm:
            sizes = spec.block_sizes.empty()
                        ? std::vector<std::size_t>{spec.n / 2, spec.n - spec.n / 2}
                        : spec.block_sizes;
            if (std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) != spec.n)
                throw ParameterError("generate: block sizes must sum to n");
            break;
        default:
            sizes = {spec.n};
            break;
    }
    n_blocks = sizes.size();
    {
        std::size_t node = 0;
        for (std::size_t b = 0; b < n_blocks; ++b)
            for (std::size_t i = 0; i < sizes[b]; ++i) block_of[node++] = b;
    }

    // Topology.
    EdgeList raw;
    Rng edge_rng(derive_seed({spec.seed, 0x9d9e5u}));
    switch (spec.kind) {
        case GraphKind::Path:
            for (std::size_t i = 0; i + 1 < spec.n; ++i) raw.emplace_back(i, i + 1);
            break;
        case GraphKind::Cycle:
            for (std::size_t i = 0; i + 1 < spec.n; ++i) raw.emplace_back(i, i + 1);
            if (spec.n > 2) raw.emplace_back(spec.n - 1, 0);
            break;
        case GraphKind::Complete:
            for (std::size_t i = 0; i < spec.n; ++i)
                for (std::size_t j = i + 1; j < spec.n; ++j) raw.emplace_back(i, j);
            break;
        case GraphKind::TwoCliques:
        case GraphKind::Sbm: {
            const double p_in = spec.kind == GraphKind::TwoCliques ? 1.0 : spec.p_in;
            const double p_out = spec.kind == GraphKind::TwoCliques ? 0.0 : spec.p_out;
            for (std::size_t i = 0; i < spec.n; ++i) {
                for (std::size_t j = i + 1; j < spec.n; ++j) {
                    const double p = block_of[i] == block_of[j] ? p_in : p_out;
                    // One draw per pair in fixed (i,j) order keeps this
                    // bit-reproducible; p==1 always fires, p==0 never does.
                    if (edge_rng.uniform() < p) raw.emplace_back(i, j);
                }
            }
            break;
        }
    }
    ds.edges = symmetrize(raw, spec.n);

    // Labels = block id.
    ds.labels.resize(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) ds.labels[i] = static_cast<int>(block_of[i]);
    ds.n_classes = static_cast<int>(n_blocks);

    // Features.
    Rng feat_rng(derive_seed({spec.seed, 0xfea75u}));
    if (spec.feature_mode == FeatureMode::OneHotBlock) {
        const std::size_t f = spec.feature_dim ? spec.feature_dim : n_blocks;
        if (f < n_blocks) throw ParameterError("generate: one-hot feature_dim < n_blocks");
        ds.features = DenseMatrix(spec.n, f);
        for (std::size_t i = 0; i < spec.n; ++i) ds.features(i, block_of[i]) = 1.0;
    } else {
        const std::size_t f = spec.feature_dim ? spec.feature_dim : 16;
        // Class means: seeded random unit vectors scaled by `signal`.
        DenseMatrix means(n_blocks, f);
        for (std::size_t b = 0; b < n_blocks; ++b) {
            double norm2 = 0.0;
            for (std::size_t j = 0; j < f; ++j) {
                means(b, j) = feat_rng.normal();
                norm2 += means(b, j) * means(b, j);
            }
            const double scale = spec.signal / std::sqrt(std::max(norm2, 1e-300));
            for (std::size_t j = 0; j < f; ++j) means(b, j) *= scale;
        }
        ds.features = DenseMatrix(spec.n, f);
        for (std::size_t i = 0; i < spec.n; ++i)
            for (std::size_t j = 0; j < f; ++j)
                ds.features(i, j) = means(block_of[i], j) + feat_rng.normal();
    }

    // Splits.
    ds.train_mask.assign(spec.n, 0);
    ds.val_mask.assign(spec.n, 0);
    ds.test_mask.assign(spec.n, 0);
    if (spec.train_per_class == 0) {
        // 60/20/20 round-robin within each block: positions 0..2 train, 3 val, 4 test.
        std::vector<std::size_t> pos_in_block(n_blocks, 0);
        for (std::size_t i = 0; i < spec.n; ++i) {
            const std::size_t r = pos_in_block[block_of[i]]++ % 5;
            if (r < 3)
                ds.train_mask[i] = 1;
            else if (r == 3)
                ds.val_mask[i] = 1;
            else
                ds.test_mask[i] = 1;
        }
    } else {
        Rng split_rng(derive_seed({spec.seed, 0x5b117u}));
        std::vector<std::size_t> order(spec.n);
        std::iota(order.begin(), order.end(), 0);
        // Fisher-Yates with our portable rng.
        for (std::size_t i = spec.n; i > 1; --i)
            std::swap(order[i - 1], order[split_rng.below(i)]);
        std::vector<std::size_t> taken(n_blocks, 0);
        std::vector<std::size_t> rest;
        for (std::size_t idx : order) {
            const std::size_t b = block_of[idx];
            if (taken[b] < spec.train_per_class) {
                ds.train_mask[idx] = 1;
                ++taken[b];
            } else {
                rest.push_back(idx);
            }
        }
        if (rest.size() < spec.val_count + spec.test_count)
            throw ParameterError("generate: not enough nodes for requested val/test counts");
        for (std::size_t i = 0; i < spec.val_count; ++i) ds.val_mask[rest[i]] = 1;
        for (std::size_t i = 0; i < spec.test_count; ++i)
            ds.test_mask[rest[spec.val_count + i]] = 1;
    }
    return ds;
}

/// L1-normalizes each feature row in place (citation-graph style); rows whose
/// absolute sum is zero are left untouched. Off by default everywhere.
inline void row_normalize(DenseMatrix& features) {
    for (std::size_t i = 0; i < features.rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < features.cols; ++j) sum += std::fabs(features(i, j));
        if (sum == 0.0) continue;
        for (std::size_t j = 0; j < features.cols; ++j) features(i, j) /= sum;
    }
}

// -----------------------------------------------------------------------------
// Content hash (FNV-1a over n_nodes and the canonical edge list); platform
// stable, used to pair eigen caches and checkpoints with their graph.
// -----------------------------------------------------------------------------

inline std::uint64_t graph_hash(const GraphDataset& ds) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xffULL;
            h *= 0x100000001b3ULL;
        }
    };
    mix(static_cast<std::uint64_t>(ds.n_nodes));
    for (const auto& [u, v] : ds.edges) {
        mix(static_cast<std::uint64_t>(u));
        mix(static_cast<std::uint64_t>(v));
    }
    return h;
}

}  // namespace laplora

// laplora -- spectral graph learning workbench.
//
// Subcommands:
//   gen       write a synthetic dataset container
//   eigen     precompute and cache the k smallest Laplacian eigenpairs
//   sweep     train base/adapted models across depths and seeds
//   diagnose  export spectral diagnostics for a saved checkpoint
//   replay    rerun the command recorded in a manifest.json
//
// Every command that produces results also writes a manifest recording the
// effective flag values (paths absolutized), so `laplora replay` regenerates
// the outputs bit-for-bit.
//
// Exit codes: 0 success, 1 usage/format, 2 stale cache or convergence
// failure, 3 training failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "laplora/laplora.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace laplora;

// --------------------------------------------------------------------------
// Small helpers.
// --------------------------------------------------------------------------

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string abspath(const fs::path& p) {
    return fs::absolute(p).lexically_normal().string();
}

template <typename T>
std::string join_csv(const std::vector<T>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_same_v<T, std::string>)
            out += values[i];
        else
            out += std::to_string(values[i]);
    }
    return out;
}

class Stopwatch {
  public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

json base_manifest(const std::string& command, const std::vector<std::string>& argv) {
    json j;
    j["tool"] = "laplora";
    j["version"] = kVersion;
    j["command"] = command;
    j["argv"] = argv;
    return j;
}

void write_manifest(const json& j, const fs::path& path) {
    auto f = detail::open_for_write(path);
    const std::string text = j.dump(2);
    std::fwrite(text.data(), 1, text.size(), f.get());
    std::fputc('\n', f.get());
}

std::size_t resolve_jobs(std::size_t flag_jobs) {
    if (const char* env = std::getenv("LAPLORA_JOBS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end == env || *end != '\0' || v == 0)
            throw ParameterError("LAPLORA_JOBS must be a positive integer");
        return static_cast<std::size_t>(v);
    }
    return flag_jobs == 0 ? 1 : flag_jobs;
}

// --------------------------------------------------------------------------
// gen
// --------------------------------------------------------------------------

struct GenOptions {
    std::string kind;
    std::size_t n = 1;
    std::vector<std::size_t> blocks;
    double p_in = 0.5;
    double p_out = 0.05;
    std::string features = "one_hot";
    std::size_t feature_dim = 0;
    double signal = 1.0;
    std::size_t train_per_class = 0;
    std::size_t val_count = 0;
    std::size_t test_count = 0;
    std::string name;
    std::uint64_t seed = 0;
    std::string out;
};

GraphKind kind_from_string(const std::string& s) {
    static const std::map<std::string, GraphKind> table = {
        {"path", GraphKind::Path},
        {"cycle", GraphKind::Cycle},
        {"complete", GraphKind::Complete},
        {"two_cliques", GraphKind::TwoCliques},
        {"sbm", GraphKind::Sbm}};
    const auto it = table.find(s);
    if (it == table.end()) throw ParameterError("gen: unknown --kind '" + s + "'");
    return it->second;
}

FeatureMode feature_mode_from_string(const std::string& s) {
    if (s == "one_hot" || s == "one_hot_block") return FeatureMode::OneHotBlock;
    if (s == "gaussian" || s == "random_gaussian") return FeatureMode::RandomGaussian;
    throw ParameterError("gen: unknown --features '" + s + "'");
}

int cmd_gen(const GenOptions& opt) {
    Stopwatch clock;
    SyntheticSpec spec;
    spec.kind = kind_from_string(opt.kind);
    spec.n = opt.n;
    spec.block_sizes = opt.blocks;
    spec.p_in = opt.p_in;
    spec.p_out = opt.p_out;
    spec.feature_mode = feature_mode_from_string(opt.features);
    spec.feature_dim = opt.feature_dim;
    spec.signal = opt.signal;
    spec.train_per_class = opt.train_per_class;
    spec.val_count = opt.val_count;
    spec.test_count = opt.test_count;
    spec.name = opt.name;
    spec.seed = opt.seed;

    const GraphDataset ds = generate(spec);
    const fs::path out_dir = opt.out;
    save_dataset(ds, out_dir);

    std::vector<std::string> argv = {"gen",
                                     "--kind", opt.kind,
                                     "--n", std::to_string(opt.n),
                                     "--p-in", format_real17(opt.p_in),
                                     "--p-out", format_real17(opt.p_out),
                                     "--features", opt.features,
                                     "--feature-dim", std::to_string(opt.feature_dim),
                                     "--signal", format_real17(opt.signal),
                                     "--train-per-class", std::to_string(opt.train_per_class),
                                     "--val-count", std::to_string(opt.val_count),
                                     "--test-count", std::to_string(opt.test_count),
                                     "--seed", std::to_string(opt.seed),
                                     "--out", abspath(out_dir)};
    if (!opt.blocks.empty()) {
        argv.insert(argv.begin() + 5, {"--blocks", join_csv(opt.blocks)});
    }
    if (!opt.name.empty()) {
        argv.push_back("--name");
        argv.push_back(opt.name);
    }

    json manifest = base_manifest("gen", argv);
    manifest["dataset"] = {{"name", ds.name},
                           {"dir", abspath(out_dir)},
                           {"graph_hash", hex64(graph_hash(ds))}};
    manifest["outputs"] = {"meta.json", "edges.csv", "features.csv", "labels.csv",
                           "masks.csv"};
    manifest["wall_clock_seconds"] = clock.seconds();
    write_manifest(manifest, out_dir / "manifest.json");

    std::printf("gen: wrote %s (n=%zu, edges=%zu, classes=%d, hash=%s)\n",
                abspath(out_dir).c_str(), ds.n_nodes, ds.edges.size(), ds.n_classes,
                hex64(graph_hash(ds)).c_str());
    return 0;
}

// --------------------------------------------------------------------------
// eigen
// --------------------------------------------------------------------------

struct EigenOptions {
    std::string data;
    std::size_t k = 64;
    std::string out;
    double tol = 1e-8;
    std::size_t max_iter = 0;
    std::uint64_t seed = 0;
};

int cmd_eigen(const EigenOptions& opt) {
    Stopwatch clock;
    const GraphDataset ds = load_dataset(opt.data);
    const SparseMatrix lap = normalized_laplacian(ds);

    EigenBasis basis = partial_eigen(lap, opt.k, opt.tol, opt.max_iter, opt.seed);
    basis.graph_hash = graph_hash(ds);
    save_eigen_cache(basis, opt.out);

    // Recompute the true residuals for the printed summary.
    double max_residual = 0.0;
    std::vector<double> u(basis.n_nodes()), lu(basis.n_nodes());
    for (std::size_t j = 0; j < basis.k; ++j) {
        for (std::size_t i = 0; i < basis.n_nodes(); ++i) u[i] = basis.eigenvectors(i, j);
        spmv(lap, u.data(), lu.data());
        double norm2 = 0.0;
        for (std::size_t i = 0; i < basis.n_nodes(); ++i) {
            const double r = lu[i] - basis.eigenvalues[j] * u[i];
            norm2 += r * r;
        }
        max_residual = std::max(max_residual, std::sqrt(norm2));
    }

    const double elapsed = clock.seconds();
    std::vector<std::string> argv = {"eigen",
                                     "--data", abspath(opt.data),
                                     "--k", std::to_string(opt.k),
                                     "--tol", format_real17(opt.tol),
                                     "--max-iter", std::to_string(opt.max_iter),
                                     "--seed", std::to_string(opt.seed),
                                     "--out", abspath(opt.out)};
    json manifest = base_manifest("eigen", argv);
    manifest["dataset"] = {{"name", ds.name},
                           {"dir", abspath(opt.data)},
                           {"graph_hash", hex64(basis.graph_hash)}};
    manifest["outputs"] = {abspath(opt.out)};
    manifest["wall_clock_seconds"] = elapsed;
    write_manifest(manifest, fs::path(opt.out).string() + ".manifest.json");

    std::printf("eigen: k=%zu max_residual=%.3e elapsed_s=%.3f\n", basis.k, max_residual,
                elapsed);
    std::printf("eigen: wrote %s\n", abspath(opt.out).c_str());
    return 0;
}

// --------------------------------------------------------------------------
// sweep
// --------------------------------------------------------------------------

struct SweepOptions {
    std::string data;
    std::string eigen;  // empty -> none given
    std::vector<std::size_t> depths = {2, 4, 8, 16, 32};
    std::vector<std::string> variants = {"gcn", "lora"};
    double alpha = 0.5;
    std::string combine = "sum";
    std::size_t seeds = 5;
    std::size_t k = 64;
    std::size_t hidden = 64;
    double dropout = 0.5;
    double lr = 0.01;
    double weight_decay = 5e-4;
    std::size_t max_epochs = 200;
    std::size_t patience = 50;
    bool no_lora_final = false;
    bool row_norm = false;
    bool checkpoints = false;
    std::size_t jobs = 1;
    std::string out;
};

void write_results_csv(const fs::path& path, std::vector<const RunRecord*> rows) {
    std::sort(rows.begin(), rows.end(), [](const RunRecord* a, const RunRecord* b) {
        const std::string va = to_string(a->variant), vb = to_string(b->variant);
        return std::tie(va, a->depth, a->seed) < std::tie(vb, b->depth, b->seed);
    });
    auto f = detail::open_for_write(path);
    std::fputs("variant,depth,seed,test_acc,val_acc,best_epoch,embed_variance\n", f.get());
    for (const RunRecord* r : rows) {
        std::fprintf(f.get(), "%s,%zu,%llu,", to_string(r->variant), r->depth,
                     static_cast<unsigned long long>(r->seed));
        detail::write_real17(f.get(), r->test_acc);
        std::fputc(',', f.get());
        detail::write_real17(f.get(), r->val_acc);
        std::fprintf(f.get(), ",%zu,", r->best_epoch);
        detail::write_real17(f.get(), r->embed_variance);
        std::fputc('\n', f.get());
    }
}

void write_summary_csv(const fs::path& path, std::vector<const SummaryRow*> rows) {
    std::sort(rows.begin(), rows.end(), [](const SummaryRow* a, const SummaryRow* b) {
        const std::string va = to_string(a->variant), vb = to_string(b->variant);
        return std::tie(va, a->depth) < std::tie(vb, b->depth);
    });
    auto f = detail::open_for_write(path);
    std::fputs(
        "variant,depth,mean_test_acc,std_test_acc,mean_val_acc,mean_embed_variance,"
        "std_embed_variance\n",
        f.get());
    for (const SummaryRow* r : rows) {
        std::fprintf(f.get(), "%s,%zu,", to_string(r->variant), r->depth);
        detail::write_real17(f.get(), r->mean_test_acc);
        std::fputc(',', f.get());
        detail::write_real17(f.get(), r->std_test_acc);
        std::fputc(',', f.get());
        detail::write_real17(f.get(), r->mean_val_acc);
        std::fputc(',', f.get());
        detail::write_real17(f.get(), r->mean_embed_variance);
        std::fputc(',', f.get());
        detail::write_real17(f.get(), r->std_embed_variance);
        std::fputc('\n', f.get());
    }
}

int cmd_sweep(const SweepOptions& opt) {
    Stopwatch clock;

    std::vector<Variant> variants;
    variants.reserve(opt.variants.size());
    for (const std::string& v : opt.variants) variants.push_back(variant_from_string(v));
    const bool wants_lora = std::any_of(variants.begin(), variants.end(),
                                        [](Variant v) { return v == Variant::Lora; });
    if (wants_lora && opt.eigen.empty())
        throw ParameterError("sweep: --eigen is required when variants include lora");

    GraphDataset ds = load_dataset(opt.data);
    if (opt.row_norm) row_normalize(ds.features);
    const std::uint64_t hash = graph_hash(ds);

    const SparseMatrix lap = normalized_laplacian(ds);
    const SparseMatrix s_op = propagation_operator(lap);

    std::optional<EigenBasis> basis;
    if (!opt.eigen.empty()) basis = load_eigen_cache(opt.eigen, hash);

    ModelConfig mc;
    mc.hidden_dim = opt.hidden;
    mc.dropout = opt.dropout;
    mc.alpha = opt.alpha;
    mc.combine = combine_from_string(opt.combine);
    mc.k = opt.k;
    mc.lora_on_final = !opt.no_lora_final;
    TrainConfig tc;
    tc.lr = opt.lr;
    tc.weight_decay = opt.weight_decay;
    tc.max_epochs = opt.max_epochs;
    tc.patience = opt.patience;
    tc.n_seeds = opt.seeds;

    const std::size_t jobs = resolve_jobs(opt.jobs);
    const ProtocolResult protocol =
        run_protocol(ds, s_op, basis ? &*basis : nullptr, opt.depths, variants, mc, tc,
                     jobs);

    const fs::path out_dir = opt.out;
    fs::create_directories(out_dir);
    {
        std::vector<const RunRecord*> rows;
        for (const RunRecord& r : protocol.runs) rows.push_back(&r);
        write_results_csv(out_dir / "results.csv", std::move(rows));
    }
    {
        std::vector<const SummaryRow*> rows;
        for (const SummaryRow& r : protocol.summary) rows.push_back(&r);
        write_summary_csv(out_dir / "summary.csv", std::move(rows));
    }

    std::vector<std::string> outputs = {"results.csv", "summary.csv"};
    if (opt.checkpoints) {
        fs::create_directories(out_dir / "checkpoints");
        for (const RunRecord& r : protocol.runs) {
            Checkpoint ck;
            ck.config = mc;
            ck.config.depth = r.depth;
            ck.config.use_lora = r.variant == Variant::Lora;
            ck.config.seed = r.seed;
            ck.config.k = std::min(mc.k, ds.n_nodes);
            ck.graph_hash = hash;
            ck.n_features = ds.features.cols;
            ck.n_classes = static_cast<std::size_t>(ds.n_classes);
            ck.weights = r.weight_values;
            ck.theta = r.theta;
            const std::string name = std::string(to_string(r.variant)) + "_L" +
                                     std::to_string(r.depth) + "_seed" +
                                     std::to_string(r.seed) + ".llck";
            save_checkpoint(ck, out_dir / "checkpoints" / name);
            outputs.push_back("checkpoints/" + name);
        }
    }

    std::vector<std::string> argv = {"sweep",
                                     "--data", abspath(opt.data),
                                     "--depths", join_csv(opt.depths),
                                     "--variants", join_csv(opt.variants),
                                     "--alpha", format_real17(opt.alpha),
                                     "--combine", opt.combine,
                                     "--seeds", std::to_string(opt.seeds),
                                     "--k", std::to_string(opt.k),
                                     "--hidden", std::to_string(opt.hidden),
                                     "--dropout", format_real17(opt.dropout),
                                     "--lr", format_real17(opt.lr),
                                     "--weight-decay", format_real17(opt.weight_decay),
                                     "--max-epochs", std::to_string(opt.max_epochs),
                                     "--patience", std::to_string(opt.patience),
                                     "--jobs", std::to_string(jobs),
                                     "--out", abspath(out_dir)};
    if (!opt.eigen.empty()) argv.insert(argv.begin() + 3, {"--eigen", abspath(opt.eigen)});
    if (opt.no_lora_final) argv.push_back("--no-lora-final");
    if (opt.row_norm) argv.push_back("--row-normalize");
    if (opt.checkpoints) argv.push_back("--checkpoints");

    json manifest = base_manifest("sweep", argv);
    manifest["dataset"] = {{"name", ds.name},
                           {"dir", abspath(opt.data)},
                           {"graph_hash", hex64(hash)}};
    manifest["eigen_cache"] = opt.eigen.empty() ? json(nullptr) : json(abspath(opt.eigen));
    manifest["config"] = {{"depths", opt.depths},
                          {"variants", opt.variants},
                          {"hidden_dim", opt.hidden},
                          {"dropout", opt.dropout},
                          {"alpha", opt.alpha},
                          {"combine", opt.combine},
                          {"k", opt.k},
                          {"lora_on_final", !opt.no_lora_final},
                          {"row_normalize", opt.row_norm},
                          {"lr", opt.lr},
                          {"weight_decay", opt.weight_decay},
                          {"max_epochs", opt.max_epochs},
                          {"patience", opt.patience},
                          {"n_seeds", opt.seeds},
                          {"jobs", jobs}};
    json seeds = json::array();
    for (std::size_t s = 0; s < opt.seeds; ++s) seeds.push_back(s);
    manifest["seeds"] = seeds;
    manifest["outputs"] = outputs;
    manifest["wall_clock_seconds"] = clock.seconds();
    write_manifest(manifest, out_dir / "manifest.json");

    std::printf("sweep: %zu runs in %.1fs\n", protocol.runs.size(), clock.seconds());
    std::printf("%-8s %-6s %-12s %-12s %-14s\n", "variant", "depth", "test_acc", "std",
                "embed_var");
    std::vector<const SummaryRow*> rows;
    for (const SummaryRow& r : protocol.summary) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(), [](const SummaryRow* a, const SummaryRow* b) {
        const std::string va = to_string(a->variant), vb = to_string(b->variant);
        return std::tie(va, a->depth) < std::tie(vb, b->depth);
    });
    for (const SummaryRow* r : rows)
        std::printf("%-8s %-6zu %-12.4f %-12.4f %-14.6g\n", to_string(r->variant), r->depth,
                    r->mean_test_acc, r->std_test_acc, r->mean_embed_variance);
    std::printf("sweep: wrote %s\n", abspath(out_dir / "results.csv").c_str());
    return 0;
}

// --------------------------------------------------------------------------
// diagnose
// --------------------------------------------------------------------------

struct DiagnoseOptions {
    std::string data;
    std::string eigen;
    std::string model;
    std::size_t depth = 16;
    std::string layer_mode = "final";
    std::string out;
};

int cmd_diagnose(const DiagnoseOptions& opt) {
    Stopwatch clock;
    const GraphDataset ds = load_dataset(opt.data);
    const std::uint64_t hash = graph_hash(ds);
    const EigenBasis basis = load_eigen_cache(opt.eigen, hash);
    const Checkpoint ck = load_checkpoint(opt.model);
    if (ck.graph_hash != hash)
        throw StaleCacheError("diagnose: checkpoint graph hash mismatch (stale checkpoint)");

    SpectrumConfig cfg;
    cfg.use_lora = ck.config.use_lora;
    cfg.alpha = ck.config.alpha;
    cfg.theta = ck.config.use_lora ? &ck.theta : nullptr;
    cfg.depth = opt.depth;
    cfg.combine = ck.config.combine;
    if (opt.layer_mode == "final")
        cfg.layer_mode = SpectrumLayerMode::FinalLayer;
    else if (opt.layer_mode == "geomean")
        cfg.layer_mode = SpectrumLayerMode::GeometricMean;
    else
        throw ParameterError("diagnose: unknown --layer-mode '" + opt.layer_mode + "'");

    DiagnosticsReport rep =
        build_report(basis.eigenvalues, cfg, 32, ck.config.depth);
    rep.dataset = ds.name;
    rep.graph_hash = hash;

    const fs::path out_dir = opt.out;
    fs::create_directories(out_dir);
    {
        auto f = detail::open_for_write(out_dir / "report.json");
        const std::string text = report_to_json(rep).dump(2);
        std::fwrite(text.data(), 1, text.size(), f.get());
        std::fputc('\n', f.get());
    }
    {
        auto f = detail::open_for_write(out_dir / "report.csv");
        const std::string text = report_to_long_csv(rep);
        std::fwrite(text.data(), 1, text.size(), f.get());
    }

    const std::vector<std::string> argv = {"diagnose",
                                           "--data", abspath(opt.data),
                                           "--eigen", abspath(opt.eigen),
                                           "--model", abspath(opt.model),
                                           "--depth", std::to_string(opt.depth),
                                           "--layer-mode", opt.layer_mode,
                                           "--out", abspath(out_dir)};
    json manifest = base_manifest("diagnose", argv);
    manifest["dataset"] = {{"name", ds.name},
                           {"dir", abspath(opt.data)},
                           {"graph_hash", hex64(hash)}};
    manifest["eigen_cache"] = abspath(opt.eigen);
    manifest["checkpoint"] = abspath(opt.model);
    manifest["config"] = {{"variant", rep.variant},
                          {"model_depth", ck.config.depth},
                          {"report_depth", opt.depth},
                          {"alpha", ck.config.alpha},
                          {"combine", std::string(to_string(ck.config.combine))},
                          {"layer_mode", opt.layer_mode}};
    manifest["outputs"] = {"report.json", "report.csv"};
    manifest["wall_clock_seconds"] = clock.seconds();
    write_manifest(manifest, out_dir / "manifest.json");

    std::printf("diagnose: variant=%s model_depth=%zu report_depth=%zu\n",
                rep.variant.c_str(), ck.config.depth, opt.depth);
    std::printf("diagnose: sup_gain=%.6g stable=%s (lambda=%.6g, layer=%zu)\n",
                rep.stability.sup_gain, rep.stability.stable ? "true" : "false",
                rep.stability.argmax_lambda, rep.stability.argmax_layer);
    std::printf("diagnose: wrote %s\n", abspath(out_dir / "report.json").c_str());
    return 0;
}

// --------------------------------------------------------------------------
// replay
// --------------------------------------------------------------------------

int run_cli(std::vector<std::string> args);

int cmd_replay(const std::string& manifest_path, const std::string& out_override) {
    json manifest;
    try {
        manifest = json::parse(detail::read_file_or_throw(manifest_path));
    } catch (const json::exception& e) {
        throw FormatError(std::string("replay: ") + manifest_path + ": " + e.what());
    }
    if (!manifest.contains("argv") || !manifest["argv"].is_array())
        throw FormatError("replay: manifest has no argv record");
    std::vector<std::string> argv = manifest["argv"].get<std::vector<std::string>>();
    if (argv.empty()) throw FormatError("replay: manifest argv is empty");

    if (!out_override.empty()) {
        bool replaced = false;
        for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
            if (argv[i] == "--out") {
                argv[i + 1] = out_override;
                replaced = true;
            }
        }
        if (!replaced) throw FormatError("replay: manifest argv has no --out to override");
    }

    std::printf("replay: %s\n", join_csv(argv).c_str());
    return run_cli(std::move(argv));
}

// --------------------------------------------------------------------------
// Argument wiring.
// --------------------------------------------------------------------------

int run_cli(std::vector<std::string> args) {
    CLI::App app{"spectral graph learning workbench"};
    app.require_subcommand(1);

    GenOptions gen;
    CLI::App* sub_gen = app.add_subcommand("gen", "write a synthetic dataset container");
    sub_gen->add_option("--kind", gen.kind, "path|cycle|complete|two_cliques|sbm")
        ->required();
    sub_gen->add_option("--n", gen.n, "number of nodes")->required();
    sub_gen->add_option("--blocks", gen.blocks, "sbm block sizes")->delimiter(',');
    sub_gen->add_option("--p-in", gen.p_in, "within-block edge probability");
    sub_gen->add_option("--p-out", gen.p_out, "cross-block edge probability");
    sub_gen->add_option("--features", gen.features, "one_hot|gaussian");
    sub_gen->add_option("--feature-dim", gen.feature_dim, "feature width (0 = default)");
    sub_gen->add_option("--signal", gen.signal, "gaussian class-mean scale");
    sub_gen->add_option("--train-per-class", gen.train_per_class,
                        "fixed-count split: train nodes per class");
    sub_gen->add_option("--val-count", gen.val_count, "fixed-count split: val nodes");
    sub_gen->add_option("--test-count", gen.test_count, "fixed-count split: test nodes");
    sub_gen->add_option("--name", gen.name, "dataset name (defaults to kind)");
    sub_gen->add_option("--seed", gen.seed, "generator seed");
    sub_gen->add_option("--out", gen.out, "output directory")->required();

    EigenOptions eig;
    CLI::App* sub_eigen =
        app.add_subcommand("eigen", "precompute the k smallest Laplacian eigenpairs");
    sub_eigen->add_option("--data", eig.data, "dataset directory")->required();
    sub_eigen->add_option("--k", eig.k, "number of eigenpairs");
    sub_eigen->add_option("--out", eig.out, "cache file path")->required();
    sub_eigen->add_option("--tol", eig.tol, "residual tolerance");
    sub_eigen->add_option("--max-iter", eig.max_iter, "restart budget (0 = auto)");
    sub_eigen->add_option("--seed", eig.seed, "start-vector seed");

    SweepOptions sweep;
    CLI::App* sub_sweep =
        app.add_subcommand("sweep", "train variants across depths and seeds");
    sub_sweep->add_option("--data", sweep.data, "dataset directory")->required();
    sub_sweep->add_option("--eigen", sweep.eigen, "eigen cache (required for lora)");
    sub_sweep->add_option("--depths", sweep.depths, "comma-separated depths")
        ->delimiter(',');
    sub_sweep->add_option("--variants", sweep.variants, "subset of gcn,lora")
        ->delimiter(',');
    sub_sweep->add_option("--alpha", sweep.alpha, "adaptation strength");
    sub_sweep->add_option("--combine", sweep.combine, "sum|mean");
    sub_sweep->add_option("--seeds", sweep.seeds, "number of seeds (0..N-1)");
    sub_sweep->add_option("--k", sweep.k, "adaptation rank");
    sub_sweep->add_option("--hidden", sweep.hidden, "hidden width");
    sub_sweep->add_option("--dropout", sweep.dropout, "dropout probability");
    sub_sweep->add_option("--lr", sweep.lr, "Adam learning rate");
    sub_sweep->add_option("--weight-decay", sweep.weight_decay, "L2 coefficient");
    sub_sweep->add_option("--max-epochs", sweep.max_epochs, "epoch budget");
    sub_sweep->add_option("--patience", sweep.patience, "early-stopping patience");
    sub_sweep->add_flag("--no-lora-final", sweep.no_lora_final,
                        "disable adaptation on the final layer");
    sub_sweep->add_flag("--row-normalize", sweep.row_norm, "L1-normalize feature rows");
    sub_sweep->add_flag("--checkpoints", sweep.checkpoints, "save per-run checkpoints");
    sub_sweep->add_option("--jobs", sweep.jobs,
                          "worker threads (env LAPLORA_JOBS overrides)");
    sub_sweep->add_option("--out", sweep.out, "output directory")->required();

    DiagnoseOptions diag;
    CLI::App* sub_diag =
        app.add_subcommand("diagnose", "export spectral diagnostics for a checkpoint");
    sub_diag->add_option("--data", diag.data, "dataset directory")->required();
    sub_diag->add_option("--eigen", diag.eigen, "eigen cache file")->required();
    sub_diag->add_option("--model", diag.model, "checkpoint file")->required();
    sub_diag->add_option("--depth", diag.depth, "energy-retention depth");
    sub_diag->add_option("--layer-mode", diag.layer_mode, "final|geomean");
    sub_diag->add_option("--out", diag.out, "output directory")->required();

    std::string replay_manifest;
    std::string replay_out;
    CLI::App* sub_replay =
        app.add_subcommand("replay", "rerun the command recorded in a manifest");
    sub_replay->add_option("manifest", replay_manifest, "path to manifest.json")
        ->required();
    sub_replay->add_option("--out", replay_out, "override the recorded output location");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (sub_gen->parsed()) return cmd_gen(gen);
    if (sub_eigen->parsed()) return cmd_eigen(eig);
    if (sub_sweep->parsed()) return cmd_sweep(sweep);
    if (sub_diag->parsed()) return cmd_diagnose(diag);
    if (sub_replay->parsed()) return cmd_replay(replay_manifest, replay_out);
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return run_cli(std::move(args));
    } catch (const laplora::StaleCacheError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const laplora::ConvergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const laplora::DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

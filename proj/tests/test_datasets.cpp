// Container round-trips, strict-parse failures, synthetic generation, and the
// graph content hash.

#include <gtest/gtest.h>

#include <filesystem>

#include "laplora/datasets.hpp"
#include "support/testutil.hpp"

using laplora::ConsistencyError;
using laplora::FormatError;
using laplora::GraphDataset;
using laplora::ValidationError;
using testutil::TempDir;

namespace {

TEST(Datasets, SaveLoadRoundTrip) {
    const GraphDataset ds = testutil::sbm(24, 0.4, 0.05, 3);
    TempDir dir("roundtrip");
    laplora::save_dataset(ds, dir.path());
    const GraphDataset back = laplora::load_dataset(dir.path());
    EXPECT_EQ(back.n_nodes, ds.n_nodes);
    EXPECT_EQ(back.edges, ds.edges);
    EXPECT_EQ(back.labels, ds.labels);
    EXPECT_EQ(back.train_mask, ds.train_mask);
    EXPECT_EQ(back.val_mask, ds.val_mask);
    EXPECT_EQ(back.test_mask, ds.test_mask);
    EXPECT_EQ(back.n_classes, ds.n_classes);
    EXPECT_EQ(back.name, ds.name);
    // 17-significant-digit printing round-trips doubles exactly.
    EXPECT_EQ(back.features.data, ds.features.data);
}

TEST(Datasets, MissingFileIsFormatError) {
    const GraphDataset ds = testutil::two_cliques();
    TempDir dir("missing");
    laplora::save_dataset(ds, dir.path());
    std::filesystem::remove(dir / "labels.csv");
    EXPECT_THROW(laplora::load_dataset(dir.path()), FormatError);
}

TEST(Datasets, RowCountMismatchIsConsistencyError) {
    const GraphDataset ds = testutil::two_cliques();
    TempDir dir("rowcount");
    laplora::save_dataset(ds, dir.path());
    std::string labels = testutil::slurp(dir / "labels.csv");
    labels += "0\n";  // one extra row
    testutil::spit(dir / "labels.csv", labels);
    EXPECT_THROW(laplora::load_dataset(dir.path()), ConsistencyError);
}

TEST(Datasets, OverlappingMasksIsValidationError) {
    const GraphDataset ds = testutil::two_cliques();
    TempDir dir("overlap");
    laplora::save_dataset(ds, dir.path());
    std::string masks = "train,val,test\n1,1,0\n";
    for (std::size_t i = 1; i < ds.n_nodes; ++i) masks += "0,0,0\n";
    testutil::spit(dir / "masks.csv", masks);
    EXPECT_THROW(laplora::load_dataset(dir.path()), ValidationError);
}

TEST(Datasets, MalformedNumbersAreFormatErrors) {
    const GraphDataset ds = testutil::two_cliques();
    TempDir dir("badnum");
    laplora::save_dataset(ds, dir.path());
    {
        std::string edges = testutil::slurp(dir / "edges.csv");
        edges += "3,zebra\n";
        testutil::spit(dir / "edges.csv", edges);
        EXPECT_THROW(laplora::load_dataset(dir.path()), FormatError);
    }
}

TEST(Datasets, MissingHeaderIsFormatError) {
    const GraphDataset ds = testutil::two_cliques();
    TempDir dir("noheader");
    laplora::save_dataset(ds, dir.path());
    std::string edges = testutil::slurp(dir / "edges.csv");
    testutil::spit(dir / "edges.csv", edges.substr(edges.find('\n') + 1));
    EXPECT_THROW(laplora::load_dataset(dir.path()), FormatError);
}

TEST(Datasets, LabelOutOfRangeIsValidationError) {
    const GraphDataset ds = testutil::two_cliques();
    TempDir dir("badlabel");
    laplora::save_dataset(ds, dir.path());
    std::string labels;
    for (std::size_t i = 0; i < ds.n_nodes; ++i) labels += "7\n";  // n_classes == 2
    testutil::spit(dir / "labels.csv", labels);
    EXPECT_THROW(laplora::load_dataset(dir.path()), ValidationError);
}

TEST(Datasets, GeneratePathTopology) {
    laplora::SyntheticSpec spec;
    spec.kind = laplora::GraphKind::Path;
    spec.n = 3;
    const GraphDataset ds = laplora::generate(spec);
    const laplora::EdgeList want = {{0, 1}, {1, 2}};
    EXPECT_EQ(ds.edges, want);
}

TEST(Datasets, GenerateTwoCliques) {
    const GraphDataset ds = testutil::two_cliques(10);
    EXPECT_EQ(ds.n_nodes, 10u);
    EXPECT_EQ(ds.n_classes, 2);
    // 2 * C(5,2) = 20 undirected edges, none crossing the cut.
    EXPECT_EQ(ds.edges.size(), 20u);
    for (const auto& [u, v] : ds.edges) EXPECT_EQ(ds.labels[u], ds.labels[v]);
    std::size_t first_block = 0;
    for (int l : ds.labels) first_block += static_cast<std::size_t>(l == 0);
    EXPECT_EQ(first_block, 5u);
}

TEST(Datasets, SbmExtremesMatchTwoCliques) {
    laplora::SyntheticSpec spec;
    spec.kind = laplora::GraphKind::Sbm;
    spec.n = 10;
    spec.p_in = 1.0;
    spec.p_out = 0.0;
    const GraphDataset sbm = laplora::generate(spec);
    const GraphDataset cliques = testutil::two_cliques(10);
    EXPECT_EQ(sbm.edges, cliques.edges);
    EXPECT_EQ(sbm.labels, cliques.labels);
}

TEST(Datasets, GenerateIsSeedReproducible) {
    const GraphDataset a = testutil::sbm(40, 0.3, 0.08, 123);
    const GraphDataset b = testutil::sbm(40, 0.3, 0.08, 123);
    EXPECT_EQ(a.edges, b.edges);
    EXPECT_EQ(a.features.data, b.features.data);
    const GraphDataset c = testutil::sbm(40, 0.3, 0.08, 124);
    EXPECT_NE(a.edges, c.edges);
}

TEST(Datasets, GenerateInvalidProbabilitiesThrow) {
    laplora::SyntheticSpec spec;
    spec.kind = laplora::GraphKind::Sbm;
    spec.n = 10;
    spec.p_in = 0.2;
    spec.p_out = 0.5;  // p_out > p_in
    EXPECT_THROW(laplora::generate(spec), laplora::ParameterError);
}

TEST(Datasets, MasksPartitionDisjointly) {
    const GraphDataset ds = testutil::sbm(50, 0.3, 0.05, 9);
    for (std::size_t i = 0; i < ds.n_nodes; ++i)
        EXPECT_LE(ds.train_mask[i] + ds.val_mask[i] + ds.test_mask[i], 1);
}

TEST(Datasets, PlanetoidStyleSplitCounts) {
    laplora::SyntheticSpec spec;
    spec.kind = laplora::GraphKind::Sbm;
    spec.n = 60;
    spec.block_sizes = {20, 20, 20};
    spec.p_in = 0.3;
    spec.p_out = 0.05;
    spec.train_per_class = 5;
    spec.val_count = 10;
    spec.test_count = 20;
    const GraphDataset ds = laplora::generate(spec);
    std::size_t train = 0, val = 0, test = 0;
    for (std::size_t i = 0; i < ds.n_nodes; ++i) {
        train += ds.train_mask[i];
        val += ds.val_mask[i];
        test += ds.test_mask[i];
    }
    EXPECT_EQ(train, 15u);  // 5 per class, 3 classes
    EXPECT_EQ(val, 10u);
    EXPECT_EQ(test, 20u);
}

TEST(Datasets, GraphHashDetectsEdgeChanges) {
    GraphDataset a = testutil::two_cliques();
    const std::uint64_t h1 = laplora::graph_hash(a);
    EXPECT_EQ(laplora::graph_hash(a), h1);  // stable
    a.edges.pop_back();
    EXPECT_NE(laplora::graph_hash(a), h1);
}

TEST(Datasets, RowNormalizeMakesUnitL1Rows) {
    laplora::DenseMatrix m(2, 3);
    m(0, 0) = 2.0;
    m(0, 1) = -2.0;
    m(0, 2) = 4.0;
    // Row 1 stays all-zero.
    laplora::row_normalize(m);
    EXPECT_DOUBLE_EQ(m(0, 0), 0.25);
    EXPECT_DOUBLE_EQ(m(0, 1), -0.25);
    EXPECT_DOUBLE_EQ(m(0, 2), 0.5);
    EXPECT_DOUBLE_EQ(m(1, 0), 0.0);
}

}  // namespace

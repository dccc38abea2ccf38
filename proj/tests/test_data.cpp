#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include "test_util.hpp"

using namespace giplab;
namespace fs = std::filesystem;

namespace {

SynthSpec er_pair(double rho_a, double rho_b, std::size_t n_min, std::size_t n_max, std::size_t per) {
  SynthSpec s;
  ManifoldSpec a, b;
  a.rho = rho_a;
  b.rho = rho_b;
  a.n_min = b.n_min = n_min;
  a.n_max = b.n_max = n_max;
  s.manifolds = {a, b};
  s.graphs_per_manifold = per;
  return s;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("giplab_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  void write(const std::string& file, const std::string& body) const {
    std::ofstream(path / file) << body;
  }
};

void write_fixture(const TempDir& d) {
  d.write("T_graph_indicator.txt", "1\n1\n2\n2\n");
  d.write("T_A.txt", "1, 2\n3, 4\n");
  d.write("T_graph_labels.txt", "1\n-1\n");
}

template <class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const IngestError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Synth, FullDensityGivesCompleteGraph) {
  const auto graphs = generate(er_pair(1.0, 0.0, 4, 4, 3), 7);
  ASSERT_EQ(graphs.size(), 6u);
  for (const Graph& g : graphs) {
    EXPECT_EQ(g.num_nodes, 4u);
    EXPECT_EQ(g.edges.size(), g.label == 0 ? 6u : 0u);
  }
}

TEST(Synth, EdgeDensityMatchesRho) {
  for (double rho : {0.2, 0.6}) {
    const auto graphs = generate(er_pair(rho, rho, 10, 20, 100), 11);
    ASSERT_EQ(graphs.size(), 200u);
    double edges = 0.0, mean = 0.0, var = 0.0;
    for (const Graph& g : graphs) {
      EXPECT_GE(g.num_nodes, 10u);
      EXPECT_LE(g.num_nodes, 20u);
      const double pairs = g.num_nodes * (g.num_nodes - 1) / 2.0;
      edges += static_cast<double>(g.edges.size());
      mean += pairs * rho;
      var += pairs * rho * (1.0 - rho);
    }
    EXPECT_NEAR(edges, mean, 3.0 * std::sqrt(var)) << "rho " << rho;
  }
}

TEST(Synth, LabelsAndDegreeFeatures) {
  const auto graphs = generate(synth_2m_spec(), kSynthDataSeed);
  ASSERT_EQ(graphs.size(), 300u);
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const Graph& g = graphs[i];
    EXPECT_EQ(g.label, i / 150);
    ASSERT_EQ(g.feature_dim(), 17u);
    std::vector<std::size_t> deg(g.num_nodes, 0);
    for (const Edge& e : g.edges) {
      ++deg[e.u];
      ++deg[e.v];
    }
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      double row = 0.0;
      for (std::size_t c = 0; c < 17; ++c) row += g.features(v, c);
      EXPECT_EQ(row, 1.0);
      EXPECT_EQ(g.features(v, std::min<std::size_t>(deg[v], 16)), 1.0);
    }
  }
}

TEST(Synth, Deterministic) {
  const auto a = generate(synth_2m_spec(), 5);
  const auto b = generate(synth_2m_spec(), 5);
  const auto c = generate(synth_2m_spec(), 6);
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].num_nodes, b[i].num_nodes);
    EXPECT_EQ(a[i].edges, b[i].edges);
    EXPECT_EQ(a[i].features.data(), b[i].features.data());
    differs = differs || a[i].edges != c[i].edges;
  }
  EXPECT_TRUE(differs);
}

TEST(Synth, RejectsBadSpec) {
  EXPECT_THROW(generate(er_pair(1.5, 0.1, 10, 20, 5), 1), ConfigError);
  EXPECT_THROW(generate(er_pair(0.1, 0.1, 10, 5, 5), 1), ConfigError);
  SynthSpec one = er_pair(0.1, 0.1, 10, 20, 5);
  one.manifolds.pop_back();
  EXPECT_THROW(generate(one, 1), ConfigError);
}

TEST(TuIngest, ParsesFixture) {
  TempDir d("fixture");
  write_fixture(d);
  const TuDataset ds = tud_parse(d.path, "T");
  ASSERT_EQ(ds.graphs.size(), 2u);
  EXPECT_EQ(ds.num_classes, 2u);
  EXPECT_EQ(ds.graphs[0].num_nodes, 2u);
  EXPECT_EQ(ds.graphs[1].num_nodes, 2u);
  ASSERT_EQ(ds.graphs[0].edges.size(), 1u);
  ASSERT_EQ(ds.graphs[1].edges.size(), 1u);
  EXPECT_EQ(ds.graphs[0].edges[0], Edge(0, 1));
  EXPECT_EQ(ds.graphs[1].edges[0], Edge(0, 1));
  // labels 1 and -1 remap in sorted order
  EXPECT_EQ(ds.graphs[0].label, 1u);
  EXPECT_EQ(ds.graphs[1].label, 0u);
}

TEST(TuIngest, SymmetricPairsMergeAndDuplicatesCount) {
  TempDir d("dedup");
  d.write("T_graph_indicator.txt", "1\n1\n1\n");
  d.write("T_A.txt", "1, 2\n2, 1\n1, 2\n2, 3\n3, 3\n");
  d.write("T_graph_labels.txt", "0\n");
  const TuDataset ds = tud_parse(d.path, "T");
  ASSERT_EQ(ds.graphs.size(), 1u);
  EXPECT_EQ(ds.graphs[0].edges.size(), 2u);
  EXPECT_EQ(ds.cleanup.duplicates, 1u);
  EXPECT_EQ(ds.cleanup.self_loops, 1u);
}

TEST(TuIngest, NodeCountsSumToIndicatorLines) {
  TempDir d("counts");
  d.write("T_graph_indicator.txt", "1\n1\n1\n2\n3\n3\n");
  d.write("T_A.txt", "1, 2\n5, 6\n");
  d.write("T_graph_labels.txt", "0\n1\n0\n");
  const TuDataset ds = tud_parse(d.path, "T");
  std::size_t total = 0;
  for (const Graph& g : ds.graphs) total += g.num_nodes;
  EXPECT_EQ(total, 6u);
}

TEST(TuIngest, NodeAttributesPreferred) {
  TempDir d("attrs");
  write_fixture(d);
  d.write("T_node_attributes.txt", "0.5, 1\n2, 3\n4, 5\n6, 7.25\n");
  d.write("T_node_labels.txt", "0\n1\n0\n1\n");
  const TuDataset ds = tud_parse(d.path, "T");
  ASSERT_EQ(ds.graphs[1].feature_dim(), 2u);
  EXPECT_EQ(ds.graphs[0].features(0, 0), 0.5);
  EXPECT_EQ(ds.graphs[1].features(1, 1), 7.25);
}

TEST(TuIngest, NodeLabelsBecomeOneHot) {
  TempDir d("nodelabels");
  write_fixture(d);
  d.write("T_node_labels.txt", "3\n7\n7\n9\n");
  const TuDataset ds = tud_parse(d.path, "T");
  ASSERT_EQ(ds.graphs[0].feature_dim(), 3u);
  EXPECT_EQ(ds.graphs[0].features(0, 0), 1.0);
  EXPECT_EQ(ds.graphs[0].features(1, 1), 1.0);
  EXPECT_EQ(ds.graphs[1].features(1, 2), 1.0);
}

TEST(TuIngest, Errors) {
  {
    TempDir d("empty");
    write_fixture(d);
    d.write("T_graph_labels.txt", "");
    EXPECT_NE(error_of([&] { tud_parse(d.path, "T"); }).find("T_graph_labels.txt"), std::string::npos);
  }
  {
    TempDir d("missing");
    write_fixture(d);
    fs::remove(d.path / "T_A.txt");
    EXPECT_NE(error_of([&] { tud_parse(d.path, "T"); }).find("T_A.txt"), std::string::npos);
  }
  {
    TempDir d("badid");
    write_fixture(d);
    d.write("T_graph_indicator.txt", "1\n1\n5\n2\n");
    const std::string msg = error_of([&] { tud_parse(d.path, "T"); });
    EXPECT_NE(msg.find("T_graph_indicator.txt:3"), std::string::npos) << msg;
  }
  {
    TempDir d("badint");
    write_fixture(d);
    d.write("T_A.txt", "1, 2\n3, x\n");
    const std::string msg = error_of([&] { tud_parse(d.path, "T"); });
    EXPECT_NE(msg.find("T_A.txt:2"), std::string::npos) << msg;
  }
}

TEST(TuIngest, WriteReadRoundTrip) {
  SeededRng rng(3);
  auto graphs = giplab::testing::random_graphs(12, 3, 9, 0.4, 3, rng);
  for (std::size_t i = 0; i < graphs.size(); ++i) graphs[i].label = i % 3;
  TempDir d("roundtrip");
  write_tu_dataset(d.path, "R", graphs);
  const TuDataset ds = tud_parse(d.path, "R");
  ASSERT_EQ(ds.graphs.size(), graphs.size());
  EXPECT_EQ(ds.cleanup.duplicates, 0u);
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    EXPECT_EQ(ds.graphs[i].num_nodes, graphs[i].num_nodes);
    EXPECT_EQ(ds.graphs[i].label, graphs[i].label);
    auto want = graphs[i].edges;
    auto got = ds.graphs[i].edges;
    std::sort(want.begin(), want.end());
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, want);
    EXPECT_EQ(ds.graphs[i].features.data(), graphs[i].features.data());
  }
}

TEST(Folds, OneOfEachClassPerFold) {
  const std::vector<std::size_t> labels = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  const auto folds = stratified_folds(labels, 5, 1);
  ASSERT_EQ(folds.size(), 5u);
  for (const Fold& f : folds) {
    ASSERT_EQ(f.test.size(), 2u);
    EXPECT_NE(labels[f.test[0]], labels[f.test[1]]);
  }
}

TEST(Folds, PartitionProperty) {
  SeededRng gen(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + gen.below(6);
    const std::size_t classes = 1 + gen.below(4);
    std::vector<std::size_t> labels;
    for (std::size_t c = 0; c < classes; ++c)
      for (std::size_t i = 0, n = k + gen.below(20); i < n; ++i) labels.push_back(c);
    std::shuffle(labels.begin(), labels.end(), gen);
    const auto folds = stratified_folds(labels, k, gen());
    std::vector<int> seen(labels.size(), 0);
    for (const Fold& f : folds) {
      std::set<std::size_t> test(f.test.begin(), f.test.end()), train(f.train.begin(), f.train.end());
      EXPECT_EQ(test.size() + train.size(), labels.size());
      for (std::size_t id : f.test) {
        ++seen[id];
        EXPECT_EQ(train.count(id), 0u);
      }
    }
    for (int s : seen) EXPECT_EQ(s, 1);
    for (std::size_t c = 0; c < classes; ++c) {
      std::size_t lo = labels.size(), hi = 0;
      for (const Fold& f : folds) {
        const std::size_t n = static_cast<std::size_t>(
            std::count_if(f.test.begin(), f.test.end(), [&](std::size_t id) { return labels[id] == c; }));
        lo = std::min(lo, n);
        hi = std::max(hi, n);
      }
      EXPECT_LE(hi - lo, 1u);
    }
  }
}

TEST(Folds, DeterministicAndSeedSensitive) {
  std::vector<std::size_t> labels(40);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
  const auto a = stratified_folds(labels, 4, 9);
  const auto b = stratified_folds(labels, 4, 9);
  const auto c = stratified_folds(labels, 4, 10);
  bool differs = false;
  for (std::size_t f = 0; f < 4; ++f) {
    EXPECT_EQ(a[f].test, b[f].test);
    EXPECT_EQ(a[f].train, b[f].train);
    differs = differs || a[f].test != c[f].test;
  }
  EXPECT_TRUE(differs);
}

TEST(Folds, TooFewMembersThrows) {
  EXPECT_THROW(stratified_folds({0, 0, 0, 1, 1}, 3, 1), StratificationError);
  EXPECT_THROW(stratified_folds({0, 1, 0, 1}, 1, 1), StratificationError);
}

TEST(LoadDataset, Sources) {
  const Dataset d = load_dataset("synth-2M");
  EXPECT_EQ(d.graphs.size(), 300u);
  EXPECT_EQ(d.feature_dim(), 17u);
  const Dataset e = load_dataset("synth-2M@4");
  EXPECT_EQ(e.graphs.size(), 300u);
  EXPECT_THROW(load_dataset("nope"), ConfigError);
  EXPECT_THROW(load_dataset("tud:nocolon"), ConfigError);
}

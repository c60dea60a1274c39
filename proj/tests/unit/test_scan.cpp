#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "helpers.hpp"
#include "sensorscan/kmeans.hpp"
#include "sensorscan/nn/checkpoint.hpp"
#include "sensorscan/scan.hpp"
#include "testkit.hpp"

using namespace sensorscan;
using namespace sensorscan::scan;

namespace {

Mat one_hot(const std::vector<int>& c, int m) {
  Mat p = Mat::Zero(static_cast<Eigen::Index>(c.size()), m);
  for (std::size_t i = 0; i < c.size(); ++i) p(i, c[i]) = 1.0;
  return p;
}

Mat random_probs(int n, int m, Rng& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  Mat p(n, m);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = g(rng) + 1e-3;
  return p.array().colwise() / p.rowwise().sum().array();
}

// Gaussian groups with given sizes around well separated centers.
Mat grouped(const std::vector<int>& sizes, Rng& rng) {
  int n = 0;
  for (int s : sizes) n += s;
  Mat x(n, 2);
  std::normal_distribution<double> noise(0.0, 0.3);
  int r = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g)
    for (int i = 0; i < sizes[g]; ++i, ++r) {
      x(r, 0) = 10.0 * std::cos(2.0 * g) + noise(rng);
      x(r, 1) = 10.0 * std::sin(2.0 * g) + noise(rng);
    }
  return x;
}

}  // namespace

TEST_SUITE("scan") {

TEST_CASE("config validation") {
  ScanConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.freeze_epochs = cfg.epochs + 1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = ScanConfig();
  cfg.k_neighbors = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  CHECK(mining_mode_from_string(to_string(MiningMode::kNaive)) == MiningMode::kNaive);
  CHECK_THROWS_AS(mining_mode_from_string("bogus"), ValidationError);
}

TEST_CASE("mining: two points") {
  Mat x(2, 3);
  x << 0, 0, 0, 1, 1, 1;
  ScanConfig cfg;
  cfg.k_neighbors = 1;
  cfg.n_chunks = 1;
  const auto idx = mine_neighbors(x, cfg);
  CHECK(idx.neighbors[0] == std::vector<int>{1});
  CHECK(idx.neighbors[1] == std::vector<int>{0});
}

TEST_CASE("mining: chunked equals the within-chunk exhaustive oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 20 + trial * 5;
    ScanConfig cfg;
    cfg.k_neighbors = 1 + trial % 4;
    cfg.n_chunks = 1 + trial % 3;
    cfg.seed = trial;
    Mat x = testutil::randn(n, 1 + trial % 4, rng);
    if (trial % 5 == 0) x = x.array().round();  // exact ties
    const auto idx = mine_neighbors(x, cfg);
    REQUIRE(idx.size() == static_cast<std::size_t>(n));
    CHECK(idx.neighbors == testkit::knn_within_chunks(x, idx.chunk, cfg.k_neighbors));
    std::map<int, int> sizes;
    for (int c : idx.chunk) ++sizes[c];
    CHECK(static_cast<int>(sizes.size()) == cfg.n_chunks);
    int lo = n, hi = 0;
    for (auto [c, s] : sizes) lo = std::min(lo, s), hi = std::max(hi, s);
    CHECK(hi - lo <= 1);
    for (int i = 0; i < n; ++i)
      for (int j : idx.neighbors[i]) {
        CHECK(j != i);
        CHECK(idx.chunk[j] == idx.chunk[i]);
      }
  }
}

TEST_CASE("mining: naive mode, determinism and errors") {
  Rng rng(2);
  const Mat x = testutil::randn(40, 3, rng);
  ScanConfig cfg;
  cfg.k_neighbors = 4;
  cfg.mining = MiningMode::kNaive;
  const auto naive = mine_neighbors(x, cfg);
  CHECK(naive.neighbors == testkit::knn_within_chunks(x, std::vector<int>(40, 0), 4));
  cfg.mining = MiningMode::kChunked;
  cfg.n_chunks = 3;
  CHECK(mine_neighbors(x, cfg).neighbors == mine_neighbors(x, cfg).neighbors);
  cfg.n_chunks = 10;  // chunks of 4 cannot hold 4 neighbors
  CHECK_THROWS_AS(mine_neighbors(x, cfg), ValidationError);
}

TEST_CASE("neighbor csv roundtrip") {
  testutil::TempDir dir("scan_nn");
  Rng rng(3);
  ScanConfig cfg;
  cfg.k_neighbors = 3;
  cfg.n_chunks = 2;
  const auto idx = mine_neighbors(testutil::randn(30, 2, rng), cfg);
  write_neighbors_csv(idx, dir.file("nn.csv"));
  const auto back = read_neighbors_csv(dir.file("nn.csv"));
  CHECK(back.k == 3);
  CHECK(back.neighbors == idx.neighbors);
  std::ofstream(dir.file("bad.csv")) << "sample_id,neighbor_1\n0,zz\n";
  CHECK_THROWS_AS(read_neighbors_csv(dir.file("bad.csv")), ParseError);
}

TEST_CASE("subsample: balanced groups stay, a dominant group shrinks to the median") {
  Rng rng(4);
  const Mat balanced = grouped({30, 30, 30}, rng);
  CHECK(subsample_normal(balanced, 3, 1).size() == 90);
  const Mat skewed = grouped({300, 30, 20, 40}, rng);
  const auto kept = subsample_normal(skewed, 4, 1);
  CHECK(std::is_sorted(kept.begin(), kept.end()));
  std::size_t from_big = 0;
  for (auto i : kept) from_big += i < 300;
  CHECK(std::abs(static_cast<long>(from_big) - 30) <= 1);
  CHECK(kept.size() == from_big + 90);
  CHECK(subsample_normal(skewed, 4, 1) == kept);
}

TEST_CASE("loss_scan examples") {
  const Mat bal = one_hot({0, 1, 0, 1}, 2);
  CHECK(loss_scan(bal, bal, 2.0).value == doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-12));
  const Mat col = one_hot({0, 0, 0, 0}, 2);
  CHECK(std::abs(loss_scan(col, col, 2.0).value) < 1e-12);
  const Mat uni = Mat::Constant(4, 2, 0.5);
  CHECK(loss_scan(uni, uni, 2.0).value == doctest::Approx(std::log(2.0) - 2.0 * std::log(2.0)).epsilon(1e-12));
  // literal sign rewards collapse
  CHECK(loss_scan(bal, bal, 2.0, true).value > loss_scan(col, col, 2.0, true).value);
  // inconsistent one-hot pairs hit the clamp
  CHECK(loss_scan(one_hot({0}, 2), one_hot({1}, 2), 0.0).consistency == doctest::Approx(-std::log(1e-8)));
  Mat bad = bal;
  bad(0, 0) = 0.7;
  CHECK_THROWS_AS(loss_scan(bad, bal, 2.0), ValidationError);
  CHECK_THROWS_AS(loss_scan(bal, bal.topRows(2), 2.0), ValidationError);
}

TEST_CASE("loss_scan is invariant to relabeling clusters") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const int m = 2 + t % 4;
    const Mat p = random_probs(10, m, rng), q = random_probs(10, m, rng);
    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Mat pp(10, m), qp(10, m);
    for (int j = 0; j < m; ++j) pp.col(perm[j]) = p.col(j), qp.col(perm[j]) = q.col(j);
    CHECK(loss_scan(pp, qp, 2.0).value == doctest::Approx(loss_scan(p, q, 2.0).value).epsilon(1e-12));
  }
}

TEST_CASE("loss_scan: balanced one-hot assignments minimize it, exhaustively for M = 2, batch <= 8") {
  for (int b = 1; b <= 8; ++b) {
    double best = 1e300;
    int best_ones = -1;
    for (int mask = 0; mask < (1 << b); ++mask) {
      std::vector<int> c(b);
      int ones = 0;
      for (int i = 0; i < b; ++i) ones += c[i] = (mask >> i) & 1;
      const Mat p = one_hot(c, 2);
      const double v = loss_scan(p, p, 2.0).value;
      if (v < best - 1e-12) best = v, best_ones = ones;
    }
    CHECK(std::abs(2 * best_ones - b) <= 1);
  }
}

TEST_CASE("frozen training never changes the extractor") {
  model::ModelConfig mc;
  mc.n_layers = 1;
  mc.hidden = 8;
  mc.ff_dim = 8;
  mc.heads = 2;
  mc.embedding_dim = 3;
  mc.channels = 2;
  mc.window = 5;
  Rng rng(6);
  model::FeatureExtractor fx(mc, rng);
  std::vector<data::WindowSample> windows(24);
  for (auto& w : windows) w.values = testutil::randn(mc.window, mc.channels, rng);
  ScanConfig cfg;
  cfg.k_neighbors = 3;
  cfg.n_chunks = 2;
  cfg.epochs = 2;
  cfg.freeze_epochs = 2;
  cfg.batch = 8;
  WindowFeatures source(fx, windows);
  const auto before = nn::snapshot(fx.parameters());
  const auto index = mine_neighbors(source.all_features(), cfg);
  model::ClusterHead head(mc.embedding_dim, 2, rng);
  std::vector<std::size_t> ids(windows.size());
  std::iota(ids.begin(), ids.end(), 0);
  const auto head_before = nn::snapshot(head.parameters());
  const auto stats = train_scan(source, head, index, ids, cfg);
  CHECK(stats.size() == 2);
  CHECK(stats[0].extractor_frozen);
  const auto after = nn::snapshot(fx.parameters());
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].value == after[i].value);
  CHECK(nn::snapshot(head.parameters())[0].value != head_before[0].value);

  // one unfrozen epoch moves it
  cfg.freeze_epochs = 1;
  train_scan(source, head, index, ids, cfg);
  bool moved = false;
  const auto later = nn::snapshot(fx.parameters());
  for (std::size_t i = 0; i < before.size(); ++i) moved |= before[i].value != later[i].value;
  CHECK(moved);
}

TEST_CASE("two blobs: entropy term separates, no entropy term can collapse") {
  int separated = 0, collapsed = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    separated += testkit::scan_two_blobs(s, 2.0).acc == 1.0;
    collapsed += testkit::scan_two_blobs(s, 0.0).largest_share > 0.9;
  }
  CHECK(separated >= 9);
  CHECK(collapsed >= 1);
}

TEST_CASE("embedding csv export and reload") {
  testutil::TempDir dir("scan_emb");
  Rng rng(7);
  const Mat z = testutil::randn(12, 3, rng);
  std::vector<int> labels(12, 2);
  export_embeddings(z, &labels, dir.file("a.csv"));
  auto t = read_embeddings_csv(dir.file("a.csv"));
  CHECK(t.embeddings.rows() == 12);
  CHECK(t.embeddings.isApprox(z, 1e-12));
  CHECK(t.labels[5] == 2);
  export_embeddings(z, nullptr, dir.file("b.csv"));
  t = read_embeddings_csv(dir.file("b.csv"));
  CHECK(!t.labels[0].has_value());
  std::ifstream in(dir.file("b.csv"));
  std::string header;
  std::getline(in, header);
  CHECK(header == "sample_id,label_if_known,e0,e1,e2");
}

TEST_CASE("pca_project_2d") {
  Rng rng(8);
  // axis aligned 2-D data with larger spread on x: all four sign flips of each point, so the
  // sample covariance is exactly diagonal
  const Mat base = testutil::randn(10, 2, rng).cwiseAbs();
  Mat x(40, 2);
  for (int i = 0; i < 10; ++i)
    for (int s = 0; s < 4; ++s) {
      x(4 * i + s, 0) = (s & 1 ? -5.0 : 5.0) * base(i, 0);
      x(4 * i + s, 1) = (s & 2 ? -1.0 : 1.0) * base(i, 1) + 3.0;
    }
  const Mat p = pca_project_2d(x);
  const Mat centered = x.rowwise() - x.colwise().mean();
  CHECK(p.cwiseAbs().isApprox(centered.cwiseAbs(), 1e-9));
  // variance ordering and planar reconstruction
  Mat basis(2, 3);
  basis << 1, 2, -1, 0.5, -1, 0.25;
  const Mat coef = testutil::randn(40, 2, rng);
  const Mat planar = (coef * basis).rowwise() + Eigen::RowVector3d(1, 2, 3);
  const Mat y = pca_project_2d(planar);
  CHECK(y.col(0).squaredNorm() >= y.col(1).squaredNorm());
  const Mat pc = planar.rowwise() - planar.colwise().mean();
  const Mat components = (y.transpose() * y).ldlt().solve(y.transpose() * pc);
  CHECK((y * components - pc).norm() < 1e-10);
  CHECK_THROWS_AS(pca_project_2d(planar.topRows(1)), ValidationError);
}

}  // TEST_SUITE

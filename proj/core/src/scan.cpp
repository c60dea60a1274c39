#include "sensorscan/scan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sensorscan/kmeans.hpp"
#include "sensorscan/pca.hpp"
#include "text.hpp"

namespace sensorscan::scan {

const char* to_string(MiningMode mode) { return mode == MiningMode::kChunked ? "chunked" : "naive"; }

MiningMode mining_mode_from_string(const std::string& name) {
  if (name == "chunked") return MiningMode::kChunked;
  if (name == "naive") return MiningMode::kNaive;
  throw ValidationError("unknown mining mode '" + name + "' (expected chunked or naive)");
}

void ScanConfig::validate() const {
  if (k_neighbors < 1) throw ValidationError("scan: K must be >= 1");
  if (n_chunks < 1) throw ValidationError("scan: number of chunks must be >= 1");
  if (lambda_ent < 0) throw ValidationError("scan: lambda_ent must be >= 0");
  if (epochs < 0) throw ValidationError("scan: epochs must be >= 0");
  if (freeze_epochs < 0 || freeze_epochs > epochs)
    throw ValidationError("scan: freeze_epochs must lie in [0, epochs]");
  if (!(lr_head > 0) || !(lr_extractor > 0)) throw ValidationError("scan: learning rates must be > 0");
  if (weight_decay < 0) throw ValidationError("scan: weight_decay must be >= 0");
  if (batch < 2) throw ValidationError("scan: batch must be >= 2");
  if (n_clusters < 2) throw ValidationError("scan: n_clusters must be >= 2");
}

// ---------------------------------------------------------------------------
// Mining

namespace {

// Sequential sum so that results are reproducible by a plain loop.
double squared_distance(const Mat& x, Eigen::Index a, Eigen::Index b) {
  double s = 0.0;
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    const double d = static_cast<double>(x(a, f)) - static_cast<double>(x(b, f));
    s += d * d;
  }
  return s;
}

void knn_within(const Mat& x, const std::vector<int>& members, int k, std::vector<std::vector<int>>& out) {
  std::vector<std::pair<double, int>> cand;
  cand.reserve(members.size());
  for (int owner : members) {
    cand.clear();
    for (int other : members)
      if (other != owner) cand.emplace_back(squared_distance(x, owner, other), other);
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    auto& list = out[static_cast<std::size_t>(owner)];
    list.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) list[static_cast<std::size_t>(j)] = cand[static_cast<std::size_t>(j)].second;
  }
}

}  // namespace

NeighborIndex mine_neighbors(const Mat& embeddings, const ScanConfig& cfg) {
  if (cfg.k_neighbors < 1) throw ValidationError("mine_neighbors: K must be >= 1");
  const auto n = static_cast<int>(embeddings.rows());
  const int t = cfg.mining == MiningMode::kChunked ? cfg.n_chunks : 1;
  if (t < 1) throw ValidationError("mine_neighbors: number of chunks must be >= 1");
  const int smallest = n / t;
  if (smallest < cfg.k_neighbors + 1)
    throw ValidationError("mine_neighbors: chunk of " + std::to_string(smallest) + " samples is too small for K=" +
                          std::to_string(cfg.k_neighbors) + " (need K+1)");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (cfg.mining == MiningMode::kChunked) {
    Rng rng(mix_seed(cfg.seed, 0xC4C));
    std::shuffle(order.begin(), order.end(), rng);
  }

  NeighborIndex index;
  index.k = cfg.k_neighbors;
  index.neighbors.resize(static_cast<std::size_t>(n));
  index.chunk.assign(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<int>> chunks(static_cast<std::size_t>(t));
  const int rem = n % t;
  int pos = 0;
  for (int c = 0; c < t; ++c) {
    const int size = smallest + (c < rem ? 1 : 0);
    chunks[static_cast<std::size_t>(c)].assign(order.begin() + pos, order.begin() + pos + size);
    for (int id : chunks[static_cast<std::size_t>(c)]) index.chunk[static_cast<std::size_t>(id)] = c;
    pos += size;
  }
  parallel_for(chunks.size(), default_jobs(),
               [&](std::size_t c) { knn_within(embeddings, chunks[c], cfg.k_neighbors, index.neighbors); });
  return index;
}

void write_neighbors_csv(const NeighborIndex& index, const std::string& path) {
  std::string out = "sample_id";
  for (int j = 1; j <= index.k; ++j) out += ",neighbor_" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < index.size(); ++i) {
    out += std::to_string(i);
    for (int id : index.neighbors[i]) out += ',' + std::to_string(id);
    out += '\n';
  }
  detail::write_file(path, out);
}

NeighborIndex read_neighbors_csv(const std::string& path) {
  const std::string text = detail::read_file(path);
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  NeighborIndex index;
  if (!std::getline(in, line)) throw ParseError(path, 1, "empty neighbor file");
  ++lineno;
  const auto header = detail::split_fields(detail::trim(line));
  if (header.empty() || header[0] != "sample_id") throw ParseError(path, 1, "expected header starting with sample_id");
  index.k = static_cast<int>(header.size()) - 1;
  if (index.k < 1) throw ParseError(path, 1, "no neighbor columns");
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_fields(detail::trim(line));
    if (static_cast<int>(f.size()) != index.k + 1)
      throw ParseError(path, lineno, "expected " + std::to_string(index.k + 1) + " fields");
    std::size_t id = 0;
    if (!detail::parse_number(f[0], id) || id != index.neighbors.size())
      throw ParseError(path, lineno, "sample ids must be consecutive from 0");
    std::vector<int> list(static_cast<std::size_t>(index.k));
    for (int j = 0; j < index.k; ++j)
      if (!detail::parse_number(f[static_cast<std::size_t>(j) + 1], list[static_cast<std::size_t>(j)]) ||
          list[static_cast<std::size_t>(j)] < 0)
        throw ParseError(path, lineno, "bad neighbor id");
    index.neighbors.push_back(std::move(list));
  }
  for (std::size_t i = 0; i < index.size(); ++i)
    for (int id : index.neighbors[i])
      if (static_cast<std::size_t>(id) >= index.size() || static_cast<std::size_t>(id) == i)
        throw ParseError(path, i + 2, "neighbor id out of range or self-referencing");
  index.chunk.assign(index.size(), 0);
  return index;
}

// ---------------------------------------------------------------------------
// Subsampling

std::vector<std::size_t> subsample_normal(const Mat& embeddings, int n_clusters, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (n_clusters < 2 || n < static_cast<std::size_t>(n_clusters)) return all;

  cluster::KMeansOptions opts;
  opts.k = n_clusters;
  opts.seed = mix_seed(seed, 0x5B5);
  const auto km = cluster::kmeans(embeddings, opts);
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(n_clusters));
  for (std::size_t i = 0; i < n; ++i) groups[static_cast<std::size_t>(km.labels[i])].push_back(i);

  std::size_t largest = 0;
  for (std::size_t g = 1; g < groups.size(); ++g)
    if (groups[g].size() > groups[largest].size()) largest = g;
  std::vector<std::size_t> others;
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (g != largest) others.push_back(groups[g].size());
  std::sort(others.begin(), others.end());
  const std::size_t m = others.size();
  const std::size_t median = m % 2 == 1 ? others[m / 2] : (others[m / 2 - 1] + others[m / 2]) / 2;
  auto& big = groups[largest];
  if (big.size() <= median || median == 0) return all;

  std::vector<std::size_t> kept;
  Rng rng(mix_seed(seed, 0x5B6));
  std::sample(big.begin(), big.end(), std::back_inserter(kept), median, rng);
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (g != largest) kept.insert(kept.end(), groups[g].begin(), groups[g].end());
  std::sort(kept.begin(), kept.end());
  return kept;
}

// ---------------------------------------------------------------------------
// Loss

ScanLoss loss_scan(const Mat& probs, const Mat& neighbor_probs, double lambda_ent, bool literal_sign) {
  if (probs.rows() < 1 || probs.rows() != neighbor_probs.rows() || probs.cols() != neighbor_probs.cols())
    throw ValidationError("loss_scan: probability batches must be nonempty and of equal shape");
  for (const Mat* m : {&probs, &neighbor_probs}) {
    if ((m->array() < Real(0)).any() || !m->allFinite())
      throw ValidationError("loss_scan: probabilities must be finite and nonnegative");
    for (Eigen::Index i = 0; i < m->rows(); ++i)
      if (std::abs(static_cast<double>(m->row(i).sum()) - 1.0) > 1e-6)
        throw ValidationError("loss_scan: row " + std::to_string(i) + " does not sum to 1");
  }
  constexpr double kFloor = 1e-8;
  const Eigen::Index n = probs.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  ScanLoss out;
  out.grad_anchor = Mat::Zero(n, probs.cols());
  out.grad_neighbor = Mat::Zero(n, probs.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dot = static_cast<double>(probs.row(i).dot(neighbor_probs.row(i)));
    if (dot > kFloor) {
      out.consistency -= std::log(dot) * inv_n;
      const auto scale = static_cast<Real>(-inv_n / dot);
      out.grad_anchor.row(i) = neighbor_probs.row(i) * scale;
      out.grad_neighbor.row(i) = probs.row(i) * scale;
    } else {
      out.consistency -= std::log(kFloor) * inv_n;
    }
  }
  const RowVec mean = probs.colwise().sum() * static_cast<Real>(inv_n);
  RowVec dentropy(mean.size());  // dH / dmean
  for (Eigen::Index j = 0; j < mean.size(); ++j) {
    const double p = static_cast<double>(mean(j));
    if (p > kFloor) {
      out.entropy -= p * std::log(p);
      dentropy(j) = static_cast<Real>(-(std::log(p) + 1.0));
    } else {
      dentropy(j) = 0;  // 0 log 0 = 0
    }
  }
  const double sign = literal_sign ? 1.0 : -1.0;
  out.value = out.consistency + sign * lambda_ent * out.entropy;
  out.grad_anchor.rowwise() += dentropy * static_cast<Real>(sign * lambda_ent * inv_n);
  return out;
}

// ---------------------------------------------------------------------------
// Feature sources

Mat FixedEmbeddings::forward(std::span<const std::size_t> ids, nn::Mode, Rng*, int) {
  Mat out(static_cast<Eigen::Index>(ids.size()), embeddings_.cols());
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = embeddings_.row(static_cast<Eigen::Index>(ids[i]));
  return out;
}

Mat WindowFeatures::forward(std::span<const std::size_t> ids, nn::Mode mode, Rng* rng, int slot) {
  return extractor_.forward(model::stack_windows(windows_, ids), mode, rng, &caches_[slot]);
}

void WindowFeatures::backward(const Mat& dz, int slot) { extractor_.backward(dz, Mat(), caches_[slot]); }

// ---------------------------------------------------------------------------
// Training

namespace {

Mat gather_rows(const Mat& x, std::span<const std::size_t> ids) {
  Mat out(static_cast<Eigen::Index>(ids.size()), x.cols());
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(ids[i]));
  return out;
}

}  // namespace

std::vector<ScanEpochStats> train_scan(FeatureSource& features, model::ClusterHead& head,
                                       const NeighborIndex& neighbors, std::span<const std::size_t> train_ids,
                                       const ScanConfig& cfg) {
  cfg.validate();
  if (neighbors.size() != features.size())
    throw ValidationError("train_scan: neighbor index covers " + std::to_string(neighbors.size()) +
                          " samples but the feature source has " + std::to_string(features.size()));
  if (train_ids.size() < 2) throw ValidationError("train_scan: need at least 2 training samples");
  for (std::size_t id : train_ids)
    if (id >= features.size() || neighbors.neighbors[id].empty())
      throw ValidationError("train_scan: training id out of range or without neighbors");

  const nn::ParamRefs extractor_params = features.parameters();
  std::vector<bool> was_frozen;
  for (auto* p : extractor_params) was_frozen.push_back(p->frozen);
  nn::AdamOptions opts;
  opts.weight_decay = cfg.weight_decay;
  nn::Adam optimizer({nn::ParamGroup{head.parameters(), cfg.lr_head}, nn::ParamGroup{extractor_params, cfg.lr_extractor}},
                     opts);

  std::vector<std::size_t> order(train_ids.begin(), train_ids.end());
  std::vector<ScanEpochStats> history;
  Mat frozen_features;
  const auto b = static_cast<std::size_t>(cfg.batch);
  std::vector<std::size_t> nn_ids;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const bool frozen = epoch < cfg.freeze_epochs;
    for (std::size_t i = 0; i < extractor_params.size(); ++i)
      extractor_params[i]->frozen = frozen || was_frozen[i];
    if (frozen && frozen_features.size() == 0) frozen_features = features.all_features();

    Rng shuffle_rng(mix_seed(cfg.seed, 0x5CA, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Rng pick_rng(mix_seed(cfg.seed, 0x4E1, static_cast<std::uint64_t>(epoch)));

    ScanEpochStats stats;
    stats.epoch = epoch;
    stats.extractor_frozen = frozen;
    int batches = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += b) {
      const std::size_t end = std::min(order.size(), start + b);
      const std::span<const std::size_t> ids(order.data() + start, end - start);
      nn_ids.resize(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& list = neighbors.neighbors[ids[i]];
        std::uniform_int_distribution<std::size_t> pick(0, list.size() - 1);
        nn_ids[i] = static_cast<std::size_t>(list[pick(pick_rng)]);
      }

      Mat za, zn;
      if (frozen) {
        za = gather_rows(frozen_features, ids);
        zn = gather_rows(frozen_features, nn_ids);
      } else {
        Rng drop_rng(mix_seed(mix_seed(cfg.seed, 0xD5C), static_cast<std::uint64_t>(epoch), start));
        za = features.forward(ids, nn::Mode::kTrain, &drop_rng, 0);
        zn = features.forward(nn_ids, nn::Mode::kTrain, &drop_rng, 1);
      }
      model::ClusterHead::Cache ca, cn;
      const Mat pa = head.forward(za, nn::Mode::kTrain, &ca);
      const Mat pn = head.forward(zn, nn::Mode::kTrain, &cn);
      const ScanLoss loss = loss_scan(pa, pn, cfg.lambda_ent, cfg.literal_entropy_sign);
      const Mat dza = head.backward_probs(loss.grad_anchor, ca);
      const Mat dzn = head.backward_probs(loss.grad_neighbor, cn);
      if (!frozen) {
        features.backward(dza, 0);
        features.backward(dzn, 1);
      }
      optimizer.step();
      stats.loss += loss.value;
      stats.consistency += loss.consistency;
      stats.entropy += loss.entropy;
      ++batches;
    }
    if (batches > 0) {
      stats.loss /= batches;
      stats.consistency /= batches;
      stats.entropy /= batches;
    }
    history.push_back(stats);
  }
  for (std::size_t i = 0; i < extractor_params.size(); ++i) extractor_params[i]->frozen = was_frozen[i];
  return history;
}

std::vector<int> assign_clusters(FeatureSource& features, model::ClusterHead& head) {
  return model::argmax_rows(head.forward(features.all_features(), nn::Mode::kEval));
}

// ---------------------------------------------------------------------------
// Export

void export_embeddings(const Mat& embeddings, const std::vector<int>* labels, const std::string& path) {
  if (labels && labels->size() != static_cast<std::size_t>(embeddings.rows()))
    throw ValidationError("export_embeddings: label count differs from row count");
  std::string out = "sample_id,label_if_known";
  for (Eigen::Index j = 0; j < embeddings.cols(); ++j) out += ",e" + std::to_string(j);
  out += '\n';
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    out += std::to_string(i) + ',';
    if (labels) out += std::to_string((*labels)[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < embeddings.cols(); ++j) {
      out += ',';
      detail::append_real(out, static_cast<double>(embeddings(i, j)));
    }
    out += '\n';
  }
  detail::write_file(path, out);
}

EmbeddingTable read_embeddings_csv(const std::string& path) {
  const std::string text = detail::read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, 1, "empty embedding file");
  const auto header = detail::split_fields(detail::trim(line));
  if (header.size() < 3 || header[0] != "sample_id" || header[1] != "label_if_known")
    throw ParseError(path, 1, "expected header sample_id,label_if_known,e0,...");
  const std::size_t f_dim = header.size() - 2;
  std::vector<std::vector<double>> rows;
  EmbeddingTable table;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_fields(detail::trim(line));
    if (f.size() != f_dim + 2) throw ParseError(path, lineno, "wrong field count");
    if (detail::trim(f[1]).empty()) {
      table.labels.emplace_back();
    } else {
      int label = 0;
      if (!detail::parse_number(f[1], label)) throw ParseError(path, lineno, "bad label");
      table.labels.emplace_back(label);
    }
    std::vector<double> r(f_dim);
    for (std::size_t j = 0; j < f_dim; ++j)
      if (!detail::parse_number(f[j + 2], r[j])) throw ParseError(path, lineno, "bad embedding value");
    rows.push_back(std::move(r));
  }
  table.embeddings.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(f_dim));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < f_dim; ++j)
      table.embeddings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<Real>(rows[i][j]);
  return table;
}

Mat pca_project_2d(const Mat& embeddings) {
  if (embeddings.rows() < 2) throw ValidationError("pca_project_2d: need at least 2 samples");
  return cluster::fit_pca(embeddings, 2).transform(embeddings);
}

}  // namespace sensorscan::scan

#pragma once

#include "mvhm/core.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

namespace mvhm {

using SpMat = Eigen::SparseMatrix<double>;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline void require_symmetric_nonneg(const SpMat& adj, const char* who) {
  if (adj.rows() != adj.cols()) throw DomainError(std::string(who) + ": matrix not square");
  SpMat d = SpMat(adj.transpose()) - adj;
  if (d.squaredNorm() > 1e-18 * (1.0 + adj.squaredNorm()))
    throw DomainError(std::string(who) + ": adjacency not symmetric");
  for (int k = 0; k < adj.outerSize(); ++k)
    for (SpMat::InnerIterator it(adj, k); it; ++it) {
      if (it.value() < 0.0 || !std::isfinite(it.value()))
        throw DomainError(std::string(who) + ": negative or non-finite edge weight");
      if (it.row() == it.col() && it.value() != 0.0)
        throw DomainError(std::string(who) + ": self-loops not allowed");
    }
}

inline Vec weighted_degrees(const SpMat& adj) {
  Vec d = Vec::Zero(adj.rows());
  for (int k = 0; k < adj.outerSize(); ++k)
    for (SpMat::InnerIterator it(adj, k); it; ++it) d(it.row()) += it.value();
  return d;
}

// Symmetric normalized Laplacian I - D^{-1/2} A D^{-1/2}. Rows of isolated
// nodes are left entirely zero (not 1 on the diagonal): D^{-1/2} is undefined
// there, and zero rows keep padding nodes inert under filtering.
inline SpMat normalized_laplacian(const SpMat& adj) {
  require_symmetric_nonneg(adj, "normalized_laplacian");
  const int n = static_cast<int>(adj.rows());
  Vec deg = weighted_degrees(adj);
  Vec dinv(n);
  for (int i = 0; i < n; ++i) dinv(i) = deg(i) > 0.0 ? 1.0 / std::sqrt(deg(i)) : 0.0;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(adj.nonZeros() + n);
  for (int i = 0; i < n; ++i)
    if (deg(i) > 0.0) t.emplace_back(i, i, 1.0);
  for (int k = 0; k < adj.outerSize(); ++k)
    for (SpMat::InnerIterator it(adj, k); it; ++it)
      t.emplace_back(it.row(), it.col(), -it.value() * dinv(it.row()) * dinv(it.col()));
  SpMat L(n, n);
  L.setFromTriplets(t.begin(), t.end());
  return L;
}

// Largest eigenvalue via seeded block subspace iteration (block 8 with
// Rayleigh-Ritz extraction). Single-vector power iteration stalls on the
// clustered upper spectrum of normalized Laplacians, so a block is used.
inline double estimate_lambda_max(const SpMat& L, std::uint64_t seed = 12345,
                                  int max_sweeps = 200, double tol = 1e-12) {
  const int n = static_cast<int>(L.rows());
  if (n == 0) return 0.0;
  const int b = std::min(16, n);
  Rng rng(seed);
  Mat Q(n, b);
  for (int j = 0; j < b; ++j)
    for (int i = 0; i < n; ++i) Q(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Mat> qr0(Q);
  Q = qr0.householderQ() * Mat::Identity(n, b);

  double lambda = 0.0;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    Mat Y = L * Q;
    Mat H = Q.transpose() * Y;
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    lambda = es.eigenvalues().maxCoeff();
    int top;
    es.eigenvalues().maxCoeff(&top);
    Vec q = Q * es.eigenvectors().col(top);
    double resid = (L * q - lambda * q).norm();
    if (resid <= tol * std::max(1.0, std::abs(lambda))) break;
    Eigen::HouseholderQR<Mat> qr(Y);
    Q = qr.householderQ() * Mat::Identity(n, b);
  }
  return lambda;
}

// 2L/lambda_max - I, mapping the spectrum into [-1, 1]. A vanishing lambda_max
// (edgeless graph) degenerates to -I, the limit of the formula.
inline SpMat scaled_laplacian(const SpMat& L, double lambda_max) {
  const int n = static_cast<int>(L.rows());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(L.nonZeros() + n);
  if (lambda_max > 1e-12) {
    double s = 2.0 / lambda_max;
    for (int k = 0; k < L.outerSize(); ++k)
      for (SpMat::InnerIterator it(L, k); it; ++it)
        t.emplace_back(it.row(), it.col(), s * it.value());
  }
  for (int i = 0; i < n; ++i) t.emplace_back(i, i, -1.0);
  SpMat out(n, n);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

// --- Chebyshev spectral convolution ----------------------------------------

// One filter bank: thetas[i] multiplies the i-th Chebyshev basis term
// T_i(scaled L) F; polynomial order = thetas.size() - 1. Any per-term scaling
// learned alongside is absorbed into the matrices themselves.
struct ChebFilter {
  std::vector<Mat> thetas;  // each f_in x f_out
};

namespace cheb_detail {

inline void check(const SpMat& lhat, const Mat& F, const ChebFilter& filt) {
  if (filt.thetas.empty()) throw DomainError("cheb_conv: empty filter");
  if (lhat.rows() != F.rows()) throw DomainError("cheb_conv: node count mismatch");
  for (const Mat& th : filt.thetas)
    if (th.rows() != F.cols() || th.cols() != filt.thetas[0].cols())
      throw DomainError("cheb_conv: inconsistent filter shapes");
}

inline std::vector<Mat> basis(const SpMat& lhat, const Mat& F, int order) {
  std::vector<Mat> X;
  X.reserve(order + 1);
  X.push_back(F);
  if (order >= 1) X.push_back(lhat * F);
  for (int i = 2; i <= order; ++i)
    X.push_back(2.0 * (lhat * X[i - 1]) - X[i - 2]);
  return X;
}

}  // namespace cheb_detail

inline Mat cheb_conv(const SpMat& L, double lambda_max, const Mat& F,
                     const ChebFilter& filt) {
  SpMat lhat = scaled_laplacian(L, lambda_max);
  cheb_detail::check(lhat, F, filt);
  const int order = static_cast<int>(filt.thetas.size()) - 1;
  auto X = cheb_detail::basis(lhat, F, order);
  Mat out = X[0] * filt.thetas[0];
  for (int i = 1; i <= order; ++i) out += X[i] * filt.thetas[i];
  return out;
}

struct ChebGrad {
  Mat dF;
  std::vector<Mat> dthetas;
};

// Reverse-mode gradients through the recurrence. With G_i = U theta_i^T the
// adjoints satisfy A_i = G_i + 2 lhat A_{i+1} - A_{i+2} for i >= 1 and
// A_0 = G_0 - A_2, giving dF = A_0 + lhat A_1 (lhat is symmetric).
inline ChebGrad cheb_conv_grad(const SpMat& L, double lambda_max, const Mat& F,
                               const ChebFilter& filt, const Mat& upstream) {
  SpMat lhat = scaled_laplacian(L, lambda_max);
  cheb_detail::check(lhat, F, filt);
  if (upstream.rows() != F.rows() ||
      upstream.cols() != filt.thetas[0].cols())
    throw DomainError("cheb_conv_grad: upstream shape mismatch");
  const int order = static_cast<int>(filt.thetas.size()) - 1;
  auto X = cheb_detail::basis(lhat, F, order);

  ChebGrad g;
  g.dthetas.reserve(order + 1);
  for (int i = 0; i <= order; ++i) g.dthetas.push_back(X[i].transpose() * upstream);

  std::vector<Mat> G(order + 1);
  for (int i = 0; i <= order; ++i) G[i] = upstream * filt.thetas[i].transpose();

  Mat a_next2 = Mat::Zero(F.rows(), F.cols());  // A_{i+2}
  Mat a_next1 = Mat::Zero(F.rows(), F.cols());  // A_{i+1}
  for (int i = order; i >= 1; --i) {
    Mat a = G[i] + 2.0 * (lhat * a_next1) - a_next2;
    a_next2 = std::move(a_next1);
    a_next1 = std::move(a);
  }
  Mat a0 = G[0] - a_next2;
  g.dF = a0;
  if (order >= 1) g.dF += lhat * a_next1;
  return g;
}

// --- coarsening hierarchy ---------------------------------------------------

// Multilevel graph pyramid. Each level stores an even-sized adjacency: the
// real nodes first, then at most one isolated fake node padding the count to
// even. parents[l] maps every level-l node (fakes included) to a real node of
// level l+1; every parent has at most two children.
struct CoarseningHierarchy {
  struct Level {
    SpMat adj;     // padded_size x padded_size; fake rows/cols are empty
    int num_real;  // real nodes come first
  };
  std::vector<Level> levels;               // levels.size() == depth + 1
  std::vector<std::vector<int>> parents;   // one map per transition

  int padded_size(int l) const { return static_cast<int>(levels[l].adj.rows()); }
  bool is_fake(int l, int node) const { return node >= levels[l].num_real; }
};

namespace coarsen_detail {

struct LevelResult {
  std::vector<int> parent;  // over padded fine nodes
  int num_coarse = 0;
};

// One Graclus-style pass: seeded visit order, heavy-edge matching with
// degree-normalized weights, leftover singletons paired within their connected
// component (so structureless graphs keep their singleton parents), the odd
// leftover adopting the fake node when the real count is odd.
inline LevelResult match_level(const SpMat& adj, int num_real, Rng& rng) {
  const int padded = static_cast<int>(adj.rows());
  std::vector<std::vector<std::pair<int, double>>> nbr(num_real);
  for (int k = 0; k < adj.outerSize(); ++k)
    for (SpMat::InnerIterator it(adj, k); it; ++it)
      if (it.row() < num_real && it.col() < num_real && it.value() > 0.0)
        nbr[it.row()].push_back({static_cast<int>(it.col()), it.value()});
  Vec deg = weighted_degrees(adj);

  std::vector<int> order(num_real);
  std::iota(order.begin(), order.end(), 0);
  for (int i = num_real - 1; i > 0; --i) {
    int j = std::min(i, static_cast<int>(rng.uniform01() * (i + 1)));
    std::swap(order[i], order[j]);
  }

  std::vector<int> mate(num_real, -1);
  for (int u : order) {
    if (mate[u] >= 0) continue;
    int best = -1;
    double best_score = -1.0;
    for (const auto& [v, w] : nbr[u]) {
      if (mate[v] >= 0 || v == u) continue;
      double score = w * (1.0 / deg(u) + 1.0 / deg(v));
      if (score > best_score || (score == best_score && v < best)) {
        best_score = score;
        best = v;
      }
    }
    if (best >= 0) {
      mate[u] = best;
      mate[best] = u;
    }
  }

  // Leftover singletons form an independent set. Pair them up within each
  // connected component (visit order), which restores the halving bound on
  // connected graphs without inventing structure across components.
  std::vector<int> comp(num_real, -1);
  int ncomp = 0;
  for (int s = 0; s < num_real; ++s) {
    if (comp[s] >= 0) continue;
    std::queue<int> q;
    q.push(s);
    comp[s] = ncomp;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (const auto& [v, w] : nbr[u])
        if (comp[v] < 0) {
          comp[v] = ncomp;
          q.push(v);
        }
    }
    ++ncomp;
  }
  std::vector<int> pending(ncomp, -1);
  for (int u : order) {
    if (mate[u] >= 0) continue;
    int c = comp[u];
    if (pending[c] >= 0) {
      mate[u] = pending[c];
      mate[pending[c]] = u;
      pending[c] = -1;
    } else {
      pending[c] = u;
    }
  }

  LevelResult res;
  res.parent.assign(padded, -1);
  for (int u : order) {
    if (res.parent[u] >= 0) continue;
    int id = res.num_coarse++;
    res.parent[u] = id;
    if (mate[u] >= 0) res.parent[mate[u]] = id;
  }
  // The fake fine node (if present) joins the first single-child parent.
  if (padded > num_real) {
    int adopt = -1;
    for (int u : order)
      if (mate[u] < 0) {
        adopt = res.parent[u];
        break;
      }
    res.parent[num_real] = adopt >= 0 ? adopt : 0;
  }
  return res;
}

inline SpMat coarse_adjacency(const SpMat& fine, const std::vector<int>& parent,
                              int num_coarse, int padded_coarse) {
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < fine.outerSize(); ++k)
    for (SpMat::InnerIterator it(fine, k); it; ++it) {
      int p = parent[it.row()], q = parent[it.col()];
      if (p != q) t.emplace_back(p, q, it.value());
    }
  SpMat out(padded_coarse, padded_coarse);
  out.setFromTriplets(t.begin(), t.end());  // duplicate triplets sum
  (void)num_coarse;
  return out;
}

}  // namespace coarsen_detail

inline CoarseningHierarchy coarsen(const SpMat& adj, int levels = 3,
                                   std::uint64_t seed = 0) {
  require_symmetric_nonneg(adj, "coarsen");
  if (levels < 1) throw ConfigError("coarsen: levels must be >= 1");
  const int n = static_cast<int>(adj.rows());
  Rng rng(splitmix64(seed ^ 0x636f617273656eull));

  CoarseningHierarchy h;
  {
    int padded = n + (n % 2);
    SpMat a(padded, padded);
    std::vector<Eigen::Triplet<double>> t;
    for (int k = 0; k < adj.outerSize(); ++k)
      for (SpMat::InnerIterator it(adj, k); it; ++it)
        t.emplace_back(it.row(), it.col(), it.value());
    a.setFromTriplets(t.begin(), t.end());
    h.levels.push_back({std::move(a), n});
  }

  for (int l = 0; l < levels; ++l) {
    const auto& fine = h.levels.back();
    auto res = coarsen_detail::match_level(fine.adj, fine.num_real, rng);
    int padded_coarse = res.num_coarse + (res.num_coarse % 2);
    SpMat ca = coarsen_detail::coarse_adjacency(fine.adj, res.parent,
                                                res.num_coarse, padded_coarse);
    h.parents.push_back(std::move(res.parent));
    h.levels.push_back({std::move(ca), res.num_coarse});
  }
  return h;
}

// Coarse-to-fine: every real fine node copies its parent's feature row; fake
// rows stay zero. F has one row per real node of level l+1.
inline Mat upsample(const Mat& coarse_features, const CoarseningHierarchy& h,
                    int level) {
  if (level < 0 || level + 1 >= static_cast<int>(h.levels.size()))
    throw DomainError("upsample: level out of range");
  if (coarse_features.rows() != h.levels[level + 1].num_real)
    throw DomainError("upsample: row count does not match coarse level");
  Mat out = Mat::Zero(h.padded_size(level), coarse_features.cols());
  const auto& par = h.parents[level];
  for (int i = 0; i < h.levels[level].num_real; ++i)
    out.row(i) = coarse_features.row(par[i]);
  return out;
}

// Fine-to-coarse mean over each parent's real children; the inverse of
// upsample on parent-constant signals.
inline Mat pool_mean(const Mat& fine_features, const CoarseningHierarchy& h,
                     int level) {
  if (level < 0 || level + 1 >= static_cast<int>(h.levels.size()))
    throw DomainError("pool_mean: level out of range");
  if (fine_features.rows() != h.levels[level].num_real &&
      fine_features.rows() != h.padded_size(level))
    throw DomainError("pool_mean: row count does not match fine level");
  const auto& par = h.parents[level];
  Mat out = Mat::Zero(h.levels[level + 1].num_real, fine_features.cols());
  Vec cnt = Vec::Zero(out.rows());
  for (int i = 0; i < h.levels[level].num_real; ++i) {
    out.row(par[i]) += fine_features.row(i);
    cnt(par[i]) += 1.0;
  }
  for (int p = 0; p < out.rows(); ++p)
    if (cnt(p) > 0.0) out.row(p) /= cnt(p);
  return out;
}

// --- graph U-Net pool/unpool ------------------------------------------------

struct GPoolResult {
  Mat features;          // k x f, gated by sigmoid of the score
  std::vector<int> idx;  // selected rows, score-descending (ties: lower index)
  SpMat adj;             // induced subgraph
};

inline GPoolResult gpool(const Mat& F, const SpMat& adj, int k, const Vec& p) {
  if (adj.rows() != F.rows()) throw DomainError("gpool: node count mismatch");
  if (p.size() != F.cols()) throw DomainError("gpool: projection size mismatch");
  double pn = p.norm();
  if (pn <= 0.0) throw DomainError("gpool: zero projection vector");
  if (k < 1 || k > F.rows()) throw DomainError("gpool: k out of range");
  Vec y = F * (p / pn);

  std::vector<int> order(F.rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (y(a) != y(b)) return y(a) > y(b);
    return a < b;
  });
  order.resize(k);

  GPoolResult out;
  out.idx = order;
  out.features.resize(k, F.cols());
  for (int i = 0; i < k; ++i) {
    double gate = 1.0 / (1.0 + std::exp(-y(order[i])));
    out.features.row(i) = F.row(order[i]) * gate;
  }
  std::vector<int> where(F.rows(), -1);
  for (int i = 0; i < k; ++i) where[order[i]] = i;
  std::vector<Eigen::Triplet<double>> t;
  for (int c = 0; c < adj.outerSize(); ++c)
    for (SpMat::InnerIterator it(adj, c); it; ++it) {
      int r = where[it.row()], cc = where[it.col()];
      if (r >= 0 && cc >= 0) t.emplace_back(r, cc, it.value());
    }
  out.adj.resize(k, k);
  out.adj.setFromTriplets(t.begin(), t.end());
  return out;
}

// Scatter pooled rows back to their original indices; everything else zero.
inline Mat gunpool(const Mat& pooled, const std::vector<int>& idx, int n) {
  if (static_cast<int>(idx.size()) != pooled.rows())
    throw DomainError("gunpool: index count mismatch");
  Mat out = Mat::Zero(n, pooled.cols());
  for (int i = 0; i < pooled.rows(); ++i) {
    if (idx[i] < 0 || idx[i] >= n) throw DomainError("gunpool: index out of range");
    out.row(idx[i]) = pooled.row(i);
  }
  return out;
}

// Side-by-side feature concatenation of per-view matrices (same row count).
inline Mat concat_views(const std::vector<Mat>& views) {
  if (views.empty()) throw DomainError("concat_views: no views");
  Eigen::Index rows = views[0].rows(), cols = 0;
  for (const Mat& v : views) {
    if (v.rows() != rows) throw DomainError("concat_views: row count mismatch");
    cols += v.cols();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Mat& v : views) {
    out.middleCols(at, v.cols()) = v;
    at += v.cols();
  }
  return out;
}

// --- hierarchy serialization ------------------------------------------------

inline void save_hierarchy(const std::string& path, const CoarseningHierarchy& h) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "mvhm-hier/1\n";
  out << "levels " << h.levels.size() << "\n";
  for (std::size_t l = 0; l < h.levels.size(); ++l) {
    const auto& lev = h.levels[l];
    std::vector<std::array<double, 3>> edges;  // u, v, w with u < v
    for (int k = 0; k < lev.adj.outerSize(); ++k)
      for (SpMat::InnerIterator it(lev.adj, k); it; ++it)
        if (it.row() < it.col())
          edges.push_back({double(it.row()), double(it.col()), it.value()});
    std::sort(edges.begin(), edges.end());
    out << "level " << l << " real " << lev.num_real << " padded "
        << lev.adj.rows() << "\n";
    out << "edges " << edges.size() << "\n";
    for (const auto& e : edges)
      out << int(e[0]) << " " << int(e[1]) << " " << g17(e[2]) << "\n";
    if (l < h.parents.size()) {
      out << "parents " << h.parents[l].size() << "\n";
      for (std::size_t i = 0; i < h.parents[l].size(); ++i)
        out << h.parents[l][i] << (i + 1 < h.parents[l].size() ? ' ' : '\n');
      if (h.parents[l].empty()) out << "\n";
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

inline CoarseningHierarchy load_hierarchy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  int lineno = 0;
  auto next = [&]() {
    std::string line;
    if (!std::getline(in, line))
      throw ParseError(path + ":" + std::to_string(lineno + 1) +
                       ": unexpected end of file");
    ++lineno;
    return line;
  };
  if (next() != "mvhm-hier/1") throw ParseError(path + ":1: bad header");
  std::size_t nlevels = 0;
  {
    std::istringstream ls(next());
    std::string kw;
    if (!(ls >> kw >> nlevels) || kw != "levels" || nlevels < 1)
      throw ParseError(path + ":2: expected 'levels <n>'");
  }
  CoarseningHierarchy h;
  for (std::size_t l = 0; l < nlevels; ++l) {
    std::string kw1, kw2, kw3;
    std::size_t li;
    int real = 0, padded = 0;
    {
      std::istringstream ls(next());
      if (!(ls >> kw1 >> li >> kw2 >> real >> kw3 >> padded) || kw1 != "level" ||
          li != l || kw2 != "real" || kw3 != "padded" || real < 0 || padded < real)
        throw ParseError(path + ":" + std::to_string(lineno) + ": bad level header");
    }
    std::size_t nedges = 0;
    {
      std::istringstream ls(next());
      if (!(ls >> kw1 >> nedges) || kw1 != "edges")
        throw ParseError(path + ":" + std::to_string(lineno) + ": expected edge count");
    }
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(nedges * 2);
    for (std::size_t e = 0; e < nedges; ++e) {
      std::istringstream ls(next());
      int u, v;
      double w;
      if (!(ls >> u >> v >> w) || u < 0 || v < 0 || u >= padded || v >= padded)
        throw ParseError(path + ":" + std::to_string(lineno) + ": bad edge");
      t.emplace_back(u, v, w);
      t.emplace_back(v, u, w);
    }
    SpMat a(padded, padded);
    a.setFromTriplets(t.begin(), t.end());
    h.levels.push_back({std::move(a), real});
    if (l + 1 < nlevels) {
      std::size_t np = 0;
      {
        std::istringstream ls(next());
        if (!(ls >> kw1 >> np) || kw1 != "parents")
          throw ParseError(path + ":" + std::to_string(lineno) + ": expected parents");
      }
      std::istringstream ls(next());
      std::vector<int> par(np);
      for (std::size_t i = 0; i < np; ++i)
        if (!(ls >> par[i]))
          throw ParseError(path + ":" + std::to_string(lineno) + ": bad parent list");
      h.parents.push_back(std::move(par));
    }
  }
  return h;
}

}  // namespace mvhm

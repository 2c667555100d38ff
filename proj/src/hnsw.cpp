#include "csanet/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>

namespace csanet {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

}  // namespace

HnswGraph HnswGraph::build(const Matrix& data, const HnswParams& params) {
  HnswGraph g;
  g.params_ = params;
  g.params_.m = std::max<std::size_t>(params.m, 2);
  const std::size_t n = data.rows();
  g.levels_.resize(n);
  g.links_.resize(n);
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double level_mult = 1.0 / std::log(static_cast<double>(g.params_.m));
  for (std::size_t i = 0; i < n; ++i) {
    const double u = std::max(unif(rng), 1e-12);
    const int level = static_cast<int>(std::floor(-std::log(u) * level_mult));
    g.levels_[i] = level;
    g.links_[i].resize(static_cast<std::size_t>(level) + 1);
    g.insert(data, static_cast<std::uint32_t>(i), level);
  }
  return g;
}

std::vector<HnswGraph::Candidate> HnswGraph::search_layer(const Matrix& data,
                                                          std::span<const double> query,
                                                          std::uint32_t entry, std::size_t ef,
                                                          int level) const {
  std::vector<char> visited(levels_.size(), 0);
  // Min-heap of frontier candidates, max-heap of the current best ef.
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;
  std::priority_queue<Candidate> best;
  const Candidate start{squared_distance(query, data.row(entry)), entry};
  frontier.push(start);
  best.push(start);
  visited[entry] = 1;
  while (!frontier.empty()) {
    const Candidate cur = frontier.top();
    if (best.size() >= ef && cur > best.top()) break;
    frontier.pop();
    for (std::uint32_t nb : links_[cur.second][static_cast<std::size_t>(level)]) {
      if (visited[nb]) continue;
      visited[nb] = 1;
      const Candidate c{squared_distance(query, data.row(nb)), nb};
      if (best.size() < ef || c < best.top()) {
        frontier.push(c);
        best.push(c);
        if (best.size() > ef) best.pop();
      }
    }
  }
  std::vector<Candidate> out;
  out.reserve(best.size());
  while (!best.empty()) {
    out.push_back(best.top());
    best.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<std::uint32_t> HnswGraph::select_neighbors(const Matrix& data,
                                                       std::vector<Candidate> candidates,
                                                       std::size_t max_links) const {
  // Diversity heuristic: keep a candidate only if it is closer to the base
  // than to every neighbor already kept.
  std::sort(candidates.begin(), candidates.end());
  std::vector<std::uint32_t> kept;
  std::vector<std::uint32_t> pruned;
  for (const auto& [dist, node] : candidates) {
    if (kept.size() >= max_links) break;
    bool good = true;
    for (std::uint32_t k : kept) {
      if (squared_distance(data.row(node), data.row(k)) < dist) {
        good = false;
        break;
      }
    }
    (good ? kept : pruned).push_back(node);
  }
  // Top up with the closest pruned candidates so sparse regions stay connected.
  for (std::uint32_t p : pruned) {
    if (kept.size() >= max_links) break;
    kept.push_back(p);
  }
  return kept;
}

void HnswGraph::insert(const Matrix& data, std::uint32_t node, int level) {
  if (max_level_ < 0) {
    entry_ = node;
    max_level_ = level;
    return;
  }
  const auto query = data.row(node);
  std::uint32_t ep = entry_;
  double ep_dist = squared_distance(query, data.row(ep));
  for (int lc = max_level_; lc > level; --lc) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::uint32_t nb : links_[ep][static_cast<std::size_t>(lc)]) {
        const double d = squared_distance(query, data.row(nb));
        if (d < ep_dist || (d == ep_dist && nb < ep)) {
          ep = nb;
          ep_dist = d;
          changed = true;
        }
      }
    }
  }
  for (int lc = std::min(level, max_level_); lc >= 0; --lc) {
    const auto found = search_layer(data, query, ep, params_.ef_construction, lc);
    const std::size_t max_links = lc == 0 ? 2 * params_.m : params_.m;
    const auto neighbors = select_neighbors(data, found, params_.m);
    auto& mine = links_[node][static_cast<std::size_t>(lc)];
    mine = neighbors;
    for (std::uint32_t nb : neighbors) {
      auto& theirs = links_[nb][static_cast<std::size_t>(lc)];
      theirs.push_back(node);
      if (theirs.size() > max_links) {
        std::vector<Candidate> cands;
        cands.reserve(theirs.size());
        for (std::uint32_t t : theirs) {
          cands.emplace_back(squared_distance(data.row(nb), data.row(t)), t);
        }
        theirs = select_neighbors(data, std::move(cands), max_links);
      }
    }
    ep = found.front().second;
  }
  if (level > max_level_) {
    max_level_ = level;
    entry_ = node;
  }
}

std::vector<std::pair<double, std::uint32_t>> HnswGraph::search(const Matrix& data,
                                                                std::span<const double> query,
                                                                std::size_t k,
                                                                std::size_t ef) const {
  if (levels_.empty() || k == 0) return {};
  std::uint32_t ep = entry_;
  double ep_dist = squared_distance(query, data.row(ep));
  for (int lc = max_level_; lc > 0; --lc) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::uint32_t nb : links_[ep][static_cast<std::size_t>(lc)]) {
        const double d = squared_distance(query, data.row(nb));
        if (d < ep_dist || (d == ep_dist && nb < ep)) {
          ep = nb;
          ep_dist = d;
          changed = true;
        }
      }
    }
  }
  auto found = search_layer(data, query, ep, std::max(ef, k), 0);
  if (found.size() > k) found.resize(k);
  return found;
}

}  // namespace csanet

#include "mtlink/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "mtlink/rng.hpp"

namespace mtlink {

std::int64_t GridConfig::n_rows() const {
  return static_cast<std::int64_t>(std::ceil(180.0 / cell_size_deg));
}

std::int64_t GridConfig::n_cols() const {
  return static_cast<std::int64_t>(std::ceil(360.0 / cell_size_deg));
}

std::int64_t grid_tokenize(double lat, double lon, const GridConfig& cfg) {
  if (cfg.cell_size_deg <= 0.0)
    throw ValidationError("grid_tokenize: cell size must be positive");
  if (!(lat >= -90.0 && lat <= 90.0))
    throw ValidationError("grid_tokenize: latitude " + std::to_string(lat) + " out of range");
  if (!(lon >= -180.0 && lon <= 180.0))
    throw ValidationError("grid_tokenize: longitude " + std::to_string(lon) + " out of range");

  const std::int64_t rows = cfg.n_rows();
  const std::int64_t cols = cfg.n_cols();
  auto wrap = [](std::int64_t idx, std::int64_t n) { return ((idx % n) + n) % n; };
  const std::int64_t row =
      wrap(static_cast<std::int64_t>(std::floor((lat - cfg.origin_lat) / cfg.cell_size_deg)), rows);
  const std::int64_t col =
      wrap(static_cast<std::int64_t>(std::floor((lon - cfg.origin_lon) / cfg.cell_size_deg)), cols);
  return row * cols + col;
}

std::int64_t grid_tokenize(const CheckinPoint& p, const GridConfig& cfg) {
  if (!p.has_coords())
    throw ValidationError("grid_tokenize: point has no raw coordinates");
  return grid_tokenize(*p.lat, *p.lon, cfg);
}

std::vector<CheckinSequence> build_sequences(const std::vector<CheckinPoint>& points,
                                             const BuildOptions& opts) {
  // Ordered map keeps output order independent of input order.
  std::map<std::pair<std::string, char>, std::vector<SeqPoint>> grouped;
  for (const CheckinPoint& p : points) {
    SeqPoint sp;
    sp.timestamp_utc = p.timestamp_utc;
    sp.poi_id = p.poi_id.value_or(-1);
    sp.lat = p.lat;
    sp.lon = p.lon;
    grouped[{p.user_id, p.platform}].push_back(sp);
  }

  std::vector<CheckinSequence> out;
  for (auto& [key, pts] : grouped) {
    std::stable_sort(pts.begin(), pts.end(),
                     [](const SeqPoint& a, const SeqPoint& b) { return a.timestamp_utc < b.timestamp_utc; });

    std::vector<std::vector<SeqPoint>> chunks;
    if (opts.daily_split) {
      std::vector<SeqPoint> cur;
      std::int64_t cur_day = 0;
      for (const SeqPoint& p : pts) {
        // Floor division keeps pre-epoch timestamps in the right day bucket.
        const std::int64_t day =
            (p.timestamp_utc >= 0 ? p.timestamp_utc : p.timestamp_utc - 86399) / 86400;
        if (!cur.empty() && day != cur_day) {
          chunks.push_back(std::move(cur));
          cur.clear();
        }
        cur_day = day;
        cur.push_back(p);
      }
      if (!cur.empty()) chunks.push_back(std::move(cur));
    } else {
      chunks.push_back(std::move(pts));
    }

    for (auto& chunk : chunks) {
      if (chunk.size() < opts.min_len || chunk.size() > opts.max_len) continue;
      CheckinSequence seq;
      seq.user_id = key.first;
      seq.platform = key.second;
      seq.points = std::move(chunk);
      out.push_back(std::move(seq));
    }
  }
  return out;
}

std::vector<PairSample> sample_pairs(const std::vector<CheckinSequence>& seqs_a,
                                     const std::vector<CheckinSequence>& seqs_b,
                                     const IdentityMap& identities, std::size_t neg_ratio,
                                     std::uint64_t seed) {
  std::unordered_map<std::string, std::string> a_to_b;
  for (const auto& [ua, ub] : identities.links) a_to_b[ua] = ub;

  std::vector<PairSample> out;
  std::set<std::pair<std::size_t, std::size_t>> positive_idx;
  for (std::size_t i = 0; i < seqs_a.size(); ++i) {
    auto it = a_to_b.find(seqs_a[i].user_id);
    if (it == a_to_b.end()) continue;
    for (std::size_t j = 0; j < seqs_b.size(); ++j) {
      if (seqs_b[j].user_id != it->second) continue;
      out.push_back({seqs_a[i], seqs_b[j], 1});
      positive_idx.insert({i, j});
    }
  }

  const std::size_t n_pos = out.size();
  const std::size_t want_neg = n_pos * neg_ratio;
  const std::size_t total_pairs = seqs_a.size() * seqs_b.size();
  const std::size_t available_neg = total_pairs - positive_idx.size();
  if (want_neg > available_neg)
    throw ExhaustionError("sample_pairs: requested " + std::to_string(want_neg) +
                          " negatives but only " + std::to_string(available_neg) + " exist");

  Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> chosen;
  chosen.reserve(want_neg);
  if (want_neg * 4 >= available_neg) {
    // Dense request: enumerate candidates and Fisher-Yates a prefix.
    std::vector<std::pair<std::size_t, std::size_t>> cand;
    cand.reserve(available_neg);
    for (std::size_t i = 0; i < seqs_a.size(); ++i)
      for (std::size_t j = 0; j < seqs_b.size(); ++j)
        if (!positive_idx.count({i, j})) cand.push_back({i, j});
    for (std::size_t i = 0; i < want_neg; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(
                                    rng.uniform_int(0, static_cast<std::int64_t>(cand.size() - i) - 1));
      std::swap(cand[i], cand[j]);
      chosen.push_back(cand[i]);
    }
  } else {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    while (chosen.size() < want_neg) {
      const std::size_t i =
          static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(seqs_a.size()) - 1));
      const std::size_t j =
          static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(seqs_b.size()) - 1));
      if (positive_idx.count({i, j}) || seen.count({i, j})) continue;
      seen.insert({i, j});
      chosen.push_back({i, j});
    }
  }

  for (const auto& [i, j] : chosen) out.push_back({seqs_a[i], seqs_b[j], 0});
  return out;
}

DatasetSplits split_dataset(const std::vector<PairSample>& pairs,
                            const std::array<double, 3>& fractions, std::uint64_t seed) {
  const double total_frac = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total_frac - 1.0) > 1e-9)
    throw ValidationError("split_dataset: fractions must sum to 1, got " +
                          std::to_string(total_frac));

  // Union-find over platform-qualified identities; each pair links its two
  // endpoints so connected identities land in the same split.
  std::unordered_map<std::string, std::size_t> ids;
  auto vertex = [&](const CheckinSequence& s) {
    const std::string key = std::string(1, s.platform) + ":" + s.user_id;
    auto [it, _] = ids.try_emplace(key, ids.size());
    return it->second;
  };
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(pairs.size());
  for (const PairSample& p : pairs) edges.push_back({vertex(p.seq_a), vertex(p.seq_b)});

  std::vector<std::size_t> parent(ids.size());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [a, b] : edges) parent[find(a)] = find(b);

  std::unordered_map<std::size_t, std::size_t> comp_index;
  std::vector<std::vector<std::size_t>> comp_pairs;  // component -> pair indices
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const std::size_t root = find(edges[pi].first);
    auto [it, fresh] = comp_index.try_emplace(root, comp_pairs.size());
    if (fresh) comp_pairs.emplace_back();
    comp_pairs[it->second].push_back(pi);
  }

  std::vector<std::size_t> order(comp_pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(
                                  rng.uniform_int(0, static_cast<std::int64_t>(order.size() - i) - 1));
    std::swap(order[i], order[j]);
  }

  // Largest-remaining-deficit greedy (tie break: train, val, test) hits the
  // exact fractions whenever components are single pairs.
  const double n = static_cast<double>(pairs.size());
  std::array<double, 3> deficit = {fractions[0] * n, fractions[1] * n, fractions[2] * n};
  DatasetSplits splits;
  std::array<std::vector<PairSample>*, 3> buckets = {&splits.train, &splits.val, &splits.test};
  for (std::size_t ci : order) {
    std::size_t best = 0;
    for (std::size_t b = 1; b < 3; ++b)
      if (deficit[b] > deficit[best]) best = b;
    for (std::size_t pi : comp_pairs[ci]) buckets[best]->push_back(pairs[pi]);
    deficit[best] -= static_cast<double>(comp_pairs[ci].size());
  }
  return splits;
}

}  // namespace mtlink

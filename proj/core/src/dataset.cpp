#include "mtlink/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "mtlink/rng.hpp"

namespace mtlink {

using nlohmann::json;
using nlohmann::ordered_json;

const std::vector<PairSample>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ValidationError("unknown split '" + name + "' (expected train, val or test)");
}

Dataset preprocess(const std::vector<CheckinPoint>& checkins_a,
                   const std::vector<CheckinPoint>& checkins_b, const IdentityMap& identities,
                   const PreprocessOptions& opts) {
  const double frac_sum = opts.fractions[0] + opts.fractions[1] + opts.fractions[2];
  if (std::abs(frac_sum - 1.0) > 1e-9)
    throw ValidationError("preprocess: split fractions must sum to 1");
  if (identities.links.empty()) throw ValidationError("preprocess: empty identity map");

  // Tokenize: raw coordinates go through the grid, pre-tokenized ids pass
  // through as-is.
  auto tokenize = [&](std::vector<CheckinPoint> pts) {
    for (CheckinPoint& p : pts)
      if (p.has_coords()) p.poi_id = grid_tokenize(p, opts.grid);
    return pts;
  };

  BuildOptions build_a{opts.min_len, opts.max_len,
                       opts.daily_split == DailySplitMode::PlatformA ||
                           opts.daily_split == DailySplitMode::Both};
  BuildOptions build_b{opts.min_len, opts.max_len,
                       opts.daily_split == DailySplitMode::PlatformB ||
                           opts.daily_split == DailySplitMode::Both};
  auto seqs_a = build_sequences(tokenize(checkins_a), build_a);
  auto seqs_b = build_sequences(tokenize(checkins_b), build_b);

  // Linked identities that still have sequences on both platforms after
  // filtering.
  std::unordered_set<std::string> users_a, users_b;
  for (const auto& s : seqs_a) users_a.insert(s.user_id);
  for (const auto& s : seqs_b) users_b.insert(s.user_id);
  std::vector<std::pair<std::string, std::string>> links;
  for (const auto& link : identities.links)
    if (users_a.count(link.first) && users_b.count(link.second)) links.push_back(link);
  if (links.empty())
    throw ValidationError("preprocess: no linked identity has sequences on both platforms");

  // Identity-level split before any pair sampling (leakage guard).
  Rng rng(opts.seed);
  std::vector<std::size_t> order(links.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(
                                  rng.uniform_int(0, static_cast<std::int64_t>(order.size() - i) - 1));
    std::swap(order[i], order[j]);
  }
  const double n = static_cast<double>(links.size());
  std::array<double, 3> deficit = {opts.fractions[0] * n, opts.fractions[1] * n,
                                   opts.fractions[2] * n};
  std::array<std::vector<std::pair<std::string, std::string>>, 3> split_links;
  for (std::size_t oi : order) {
    std::size_t best = 0;
    for (std::size_t b = 1; b < 3; ++b)
      if (deficit[b] > deficit[best]) best = b;
    split_links[best].push_back(links[oi]);
    deficit[best] -= 1.0;
  }

  Dataset ds;
  ds.meta.grid = opts.grid;
  std::array<std::vector<PairSample>*, 3> buckets = {&ds.train, &ds.val, &ds.test};
  for (std::size_t b = 0; b < 3; ++b) {
    if (split_links[b].empty()) continue;
    std::unordered_set<std::string> in_a, in_b;
    IdentityMap split_ids;
    for (const auto& link : split_links[b]) {
      in_a.insert(link.first);
      in_b.insert(link.second);
      split_ids.links.push_back(link);
    }
    std::vector<CheckinSequence> sa, sb;
    for (const auto& s : seqs_a)
      if (in_a.count(s.user_id)) sa.push_back(s);
    for (const auto& s : seqs_b)
      if (in_b.count(s.user_id)) sb.push_back(s);
    *buckets[b] = sample_pairs(sa, sb, split_ids, opts.neg_ratio, Rng(opts.seed).split(b + 1).seed());
  }

  // Dense vocabulary over every token that survived filtering, plus the
  // corpus time reference.
  std::map<std::int64_t, std::int64_t> vocab_map;
  std::int64_t t_min = std::numeric_limits<std::int64_t>::max();
  auto scan = [&](const CheckinSequence& s) {
    for (const SeqPoint& p : s.points) {
      vocab_map.emplace(p.poi_id, 0);
      t_min = std::min(t_min, p.timestamp_utc);
    }
  };
  for (auto* bucket : buckets)
    for (const PairSample& pair : *bucket) {
      scan(pair.seq_a);
      scan(pair.seq_b);
    }
  std::int64_t next_id = 0;
  for (auto& [raw, dense] : vocab_map) {
    dense = next_id++;
    ds.meta.vocab.push_back(raw);
  }
  ds.meta.t_ref = t_min;

  auto remap = [&](CheckinSequence& s) {
    for (SeqPoint& p : s.points) p.poi_id = vocab_map.at(p.poi_id);
  };
  for (auto* bucket : buckets)
    for (PairSample& pair : *bucket) {
      remap(pair.seq_a);
      remap(pair.seq_b);
    }
  return ds;
}

namespace {

ordered_json seq_to_json(const CheckinSequence& s) {
  ordered_json j;
  j["user"] = s.user_id;
  j["platform"] = std::string(1, s.platform);
  json t = json::array(), poi = json::array();
  bool any_coords = false;
  for (const SeqPoint& p : s.points) {
    t.push_back(p.timestamp_utc);
    poi.push_back(p.poi_id);
    any_coords = any_coords || (p.lat.has_value() && p.lon.has_value());
  }
  j["t"] = t;
  j["poi"] = poi;
  if (any_coords) {
    json lat = json::array(), lon = json::array();
    for (const SeqPoint& p : s.points) {
      lat.push_back(p.lat.value_or(0.0));
      lon.push_back(p.lon.value_or(0.0));
    }
    j["lat"] = lat;
    j["lon"] = lon;
  }
  return j;
}

CheckinSequence seq_from_json(const json& j) {
  CheckinSequence s;
  s.user_id = j.at("user").get<std::string>();
  s.platform = j.at("platform").get<std::string>().at(0);
  const auto& t = j.at("t");
  const auto& poi = j.at("poi");
  if (t.size() != poi.size()) throw ValidationError("dataset: t/poi length mismatch");
  const bool coords = j.contains("lat") && j.contains("lon");
  for (std::size_t i = 0; i < t.size(); ++i) {
    SeqPoint p;
    p.timestamp_utc = t[i].get<std::int64_t>();
    p.poi_id = poi[i].get<std::int64_t>();
    if (coords) {
      p.lat = j["lat"][i].get<double>();
      p.lon = j["lon"][i].get<double>();
    }
    s.points.push_back(p);
  }
  return s;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);

  ordered_json meta;
  meta["type"] = "meta";
  meta["version"] = 1;
  meta["grid"] = {{"cell_size_deg", ds.meta.grid.cell_size_deg},
                  {"origin_lat", ds.meta.grid.origin_lat},
                  {"origin_lon", ds.meta.grid.origin_lon}};
  meta["vocab"] = ds.meta.vocab;
  meta["t_ref"] = ds.meta.t_ref;
  meta["counts"] = {{"train", ds.train.size()}, {"val", ds.val.size()}, {"test", ds.test.size()}};
  out << meta.dump() << '\n';

  auto dump_split = [&](const std::vector<PairSample>& pairs, const char* name) {
    for (const PairSample& p : pairs) {
      ordered_json j;
      j["split"] = name;
      j["label"] = p.label;
      j["a"] = seq_to_json(p.seq_a);
      j["b"] = seq_to_json(p.seq_b);
      out << j.dump() << '\n';
    }
  };
  dump_split(ds.train, "train");
  dump_split(ds.val, "val");
  dump_split(ds.test, "test");
  if (!out) throw IoError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset file is empty: " + path);

  Dataset ds;
  json meta;
  try {
    meta = json::parse(line);
  } catch (const json::exception& e) {
    throw ValidationError(path + ": bad meta record: " + e.what());
  }
  if (meta.value("type", "") != "meta")
    throw ValidationError(path + ": first record must be the meta record");
  ds.meta.grid.cell_size_deg = meta["grid"]["cell_size_deg"].get<double>();
  ds.meta.grid.origin_lat = meta["grid"]["origin_lat"].get<double>();
  ds.meta.grid.origin_lon = meta["grid"]["origin_lon"].get<double>();
  ds.meta.vocab = meta["vocab"].get<std::vector<std::int64_t>>();
  ds.meta.t_ref = meta["t_ref"].get<std::int64_t>();

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": bad JSON: " + e.what());
    }
    PairSample p;
    p.label = j.at("label").get<int>();
    p.seq_a = seq_from_json(j.at("a"));
    p.seq_b = seq_from_json(j.at("b"));
    const std::string split = j.at("split").get<std::string>();
    if (split == "train")
      ds.train.push_back(std::move(p));
    else if (split == "val")
      ds.val.push_back(std::move(p));
    else if (split == "test")
      ds.test.push_back(std::move(p));
    else
      throw ValidationError(path + ":" + std::to_string(line_no) + ": unknown split " + split);
  }
  return ds;
}

std::vector<EncodedPair> encode_pairs(const std::vector<PairSample>& pairs) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  for (const PairSample& p : pairs) out.push_back(encode_pair(p));
  return out;
}

}  // namespace mtlink

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mtlink/data_model.hpp"
#include "mtlink/model.hpp"

namespace mtlink {

struct DatasetMeta {
  GridConfig grid;
  std::vector<std::int64_t> vocab;  // raw cell ids; dense token = index
  std::int64_t t_ref = 0;           // earliest timestamp in the corpus
};

/// Tokenized, split dataset. Sequence poi ids are dense vocabulary indices.
struct Dataset {
  DatasetMeta meta;
  std::vector<PairSample> train;
  std::vector<PairSample> val;
  std::vector<PairSample> test;

  const std::vector<PairSample>& split(const std::string& name) const;
};

enum class DailySplitMode { None, PlatformA, PlatformB, Both };

struct PreprocessOptions {
  GridConfig grid{0.05, 0.0, 0.0};
  std::size_t min_len = 3;
  std::size_t max_len = 400;
  DailySplitMode daily_split = DailySplitMode::None;
  std::size_t neg_ratio = 2;
  std::array<double, 3> fractions = {0.7, 0.1, 0.2};
  std::uint64_t seed = 42;
};

/// Tokenize raw check-ins on the grid, assemble per-user sequences, partition
/// linked identities into train/val/test, then sample labeled pairs inside
/// each split at the configured negative ratio. Splitting identities before
/// negative sampling keeps the class ratio exact per split while guaranteeing
/// no identity leaks across splits.
Dataset preprocess(const std::vector<CheckinPoint>& checkins_a,
                   const std::vector<CheckinPoint>& checkins_b, const IdentityMap& identities,
                   const PreprocessOptions& opts);

/// JSON-lines dataset file: a meta record followed by one record per pair.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

std::vector<EncodedPair> encode_pairs(const std::vector<PairSample>& pairs);

}  // namespace mtlink

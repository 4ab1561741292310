#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtlink/errors.hpp"

namespace mtlink {

/// One check-in: user, UTC timestamp, and a location given either as raw
/// coordinates or as a pre-tokenized cell id.
struct CheckinPoint {
  std::string user_id;
  char platform = 'A';
  std::int64_t timestamp_utc = 0;
  std::optional<double> lat;
  std::optional<double> lon;
  std::optional<std::int64_t> poi_id;

  bool has_coords() const { return lat.has_value() && lon.has_value(); }
};

/// Time-ordered check-ins of one user on one platform.
struct SeqPoint {
  std::int64_t timestamp_utc = 0;
  std::int64_t poi_id = -1;
  std::optional<double> lat;
  std::optional<double> lon;
};

struct CheckinSequence {
  std::string user_id;
  char platform = 'A';
  std::vector<SeqPoint> points;

  std::size_t length() const { return points.size(); }
};

struct PairSample {
  CheckinSequence seq_a;
  CheckinSequence seq_b;
  int label = 0;
};

/// Equirectangular square grid anchored at `origin`. Cell indices wrap modulo
/// the number of rows/columns so ids stay non-negative for any valid
/// coordinate.
struct GridConfig {
  double cell_size_deg = 1.0;
  double origin_lat = 0.0;
  double origin_lon = 0.0;

  std::int64_t n_rows() const;
  std::int64_t n_cols() const;
};

/// Cross-platform ground truth: pairs of (user id on A, user id on B).
struct IdentityMap {
  std::vector<std::pair<std::string, std::string>> links;
};

/// Row-major cell index of the cell containing (lat, lon). Total on valid
/// coordinates, stable across calls, and injective per cell.
std::int64_t grid_tokenize(double lat, double lon, const GridConfig& cfg);
std::int64_t grid_tokenize(const CheckinPoint& p, const GridConfig& cfg);

/// Options for assembling sequences from loose points.
struct BuildOptions {
  std::size_t min_len = 1;
  std::size_t max_len = SIZE_MAX;
  /// Split each user's stream into one sequence per UTC day instead of one
  /// sequence per user.
  bool daily_split = false;
};

/// Group points by (user, platform), sort chronologically, optionally split by
/// UTC day, and drop sequences outside [min_len, max_len].
std::vector<CheckinSequence> build_sequences(const std::vector<CheckinPoint>& points,
                                             const BuildOptions& opts);

/// Positives: every cross-platform sequence pair with the same ground-truth
/// identity. Negatives: neg_ratio * |positives| distinct different-identity
/// pairs sampled uniformly without replacement. Deterministic under the seed.
std::vector<PairSample> sample_pairs(const std::vector<CheckinSequence>& seqs_a,
                                     const std::vector<CheckinSequence>& seqs_b,
                                     const IdentityMap& identities, std::size_t neg_ratio,
                                     std::uint64_t seed);

struct DatasetSplits {
  std::vector<PairSample> train;
  std::vector<PairSample> val;
  std::vector<PairSample> test;
};

/// Partition pairs into train/val/test so that no ground-truth identity spans
/// two splits. Identities connected by shared pairs stay together, so the
/// realized fractions are best-effort for dense pair graphs.
DatasetSplits split_dataset(const std::vector<PairSample>& pairs,
                            const std::array<double, 3>& fractions, std::uint64_t seed);

}  // namespace mtlink

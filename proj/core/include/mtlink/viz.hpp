#pragma once

#include <string>

#include "mtlink/correlation_attention.hpp"
#include "mtlink/data_model.hpp"
#include "mtlink/mat.hpp"

namespace mtlink {

/// Great-circle distance in meters (haversine, radius 6371 km).
double haversine_m(double lat1, double lon1, double lat2, double lon2);

/// Ground-truth co-occurrence affinity: pairwise haversine distances between
/// the two sequences' points, min-max normalized and inverted so 1 = closest.
/// All-equal distances give an all-ones matrix. Requires raw coordinates.
Mat cooccurrence_matrix(const CheckinSequence& seq_a, const CheckinSequence& seq_b);

struct HeatmapFiles {
  std::string map_ab_csv;
  std::string map_ba_csv;
  std::string cooccurrence_csv;
  std::string image_svg;
};

/// Write both attention maps and the co-occurrence matrix as CSV plus a
/// three-panel SVG rendering. `prefix` is the output path prefix; returns the
/// file names written. Byte output is deterministic for fixed input.
HeatmapFiles export_heatmaps(const AttentionMap& map_ab, const AttentionMap& map_ba,
                             const Mat& cooccurrence, const std::string& prefix);

/// Plain matrix CSV in the attention-map format.
void write_matrix_csv(const Mat& m, const std::string& path);

}  // namespace mtlink

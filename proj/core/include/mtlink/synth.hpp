#pragma once

#include <cstdint>

#include "mtlink/data_model.hpp"

namespace mtlink {

/// Synthetic cross-platform check-in generator. A global pool of venues is
/// scattered over the extent; each user gets a home region and a handful of
/// activity bursts and checks in at venues near home during those bursts.
/// Platform B copies a fraction of platform A's points (same venue, jittered
/// time) as spatio-temporal co-occurrence points, the rest are home-region
/// visits, and a share of every sequence is replaced by uniform
/// spatio-temporal noise.
struct SynthConfig {
  std::size_t n_users = 50;
  std::size_t seq_len_min_a = 30;
  std::size_t seq_len_max_a = 60;
  std::size_t seq_len_min_b = 30;
  std::size_t seq_len_max_b = 60;
  double cooccur_fraction = 0.6;  // share of B's points copied from A
  double noise_rate = 0.2;        // share of points replaced by uniform noise
  double jitter_seconds = 600.0;  // |time jitter| bound on copied points

  double extent_lat0 = 40.0;  // box [lat0, lat0+span] x [lon0, lon0+span]
  double extent_lon0 = 116.0;
  double extent_span_deg = 4.0;
  double home_sigma_deg = 0.08;
  std::size_t n_venues = 600;  // shared venue pool; home visits snap to these

  std::int64_t t_start = 1460995200;  // 2016-04-18T16:00:00Z
  double horizon_days = 14.0;
  std::size_t bursts_per_user = 4;
  double burst_len_hours = 3.0;

  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthOutput {
  std::vector<CheckinPoint> checkins_a;
  std::vector<CheckinPoint> checkins_b;
  IdentityMap identities;
};

SynthOutput generate(const SynthConfig& cfg);

/// Generate and write the three pipeline input files (checkins_a.csv,
/// checkins_b.csv, identity_map.csv) under `out_dir`.
void generate_to_files(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace mtlink

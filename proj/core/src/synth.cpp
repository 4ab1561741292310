#include "mtlink/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mtlink/ingest.hpp"
#include "mtlink/rng.hpp"

namespace mtlink {

void SynthConfig::validate() const {
  if (n_users < 2) throw ValidationError("synth: need at least 2 users");
  if (cooccur_fraction < 0.0 || cooccur_fraction > 1.0)
    throw ValidationError("synth: cooccur_fraction must be in [0, 1]");
  if (noise_rate < 0.0 || noise_rate > 1.0)
    throw ValidationError("synth: noise_rate must be in [0, 1]");
  if (seq_len_min_a == 0 || seq_len_min_a > seq_len_max_a || seq_len_min_b == 0 ||
      seq_len_min_b > seq_len_max_b)
    throw ValidationError("synth: bad sequence length range");
  if (extent_span_deg <= 0.0 || horizon_days <= 0.0 || bursts_per_user == 0)
    throw ValidationError("synth: extent, horizon and bursts must be positive");
  if (n_venues == 0) throw ValidationError("synth: need at least one venue");
}

namespace {

struct RawPoint {
  std::int64_t t;
  double lat, lon;
};

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

}  // namespace

SynthOutput generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthOutput out;
  Rng root(cfg.seed);
  const double horizon_s = cfg.horizon_days * 86400.0;
  const double lat_hi = cfg.extent_lat0 + cfg.extent_span_deg;
  const double lon_hi = cfg.extent_lon0 + cfg.extent_span_deg;

  // Shared venue pool: every user's home-region visits snap to these, so
  // different users (and the evaluation splits) check in at common places.
  Rng venue_rng = root.split(0xbeef);
  std::vector<RawPoint> venues(cfg.n_venues);
  for (RawPoint& v : venues) {
    v.t = 0;
    v.lat = venue_rng.uniform(cfg.extent_lat0, lat_hi);
    v.lon = venue_rng.uniform(cfg.extent_lon0, lon_hi);
  }
  auto nearest_venue = [&](double lat, double lon) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t i = 0; i < venues.size(); ++i) {
      const double dl = venues[i].lat - lat, dn = venues[i].lon - lon;
      const double d = dl * dl + dn * dn;
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  };

  char name[32];
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    Rng rng = root.split(u);

    const double margin = 3.0 * cfg.home_sigma_deg;
    const double home_lat =
        rng.uniform(cfg.extent_lat0 + margin, lat_hi - margin);
    const double home_lon =
        rng.uniform(cfg.extent_lon0 + margin, lon_hi - margin);

    std::vector<double> burst_starts(cfg.bursts_per_user);
    for (double& b : burst_starts)
      b = rng.uniform(0.0, std::max(1.0, horizon_s - cfg.burst_len_hours * 3600.0));

    auto home_visit = [&](Rng& r) {
      RawPoint p;
      const double burst =
          burst_starts[static_cast<std::size_t>(r.uniform_int(
              0, static_cast<std::int64_t>(cfg.bursts_per_user) - 1))];
      p.t = cfg.t_start + static_cast<std::int64_t>(burst +
                                                    r.uniform(0.0, cfg.burst_len_hours * 3600.0));
      const double lat = clamp(home_lat + r.normal(0.0, cfg.home_sigma_deg), cfg.extent_lat0, lat_hi);
      const double lon = clamp(home_lon + r.normal(0.0, cfg.home_sigma_deg), cfg.extent_lon0, lon_hi);
      const RawPoint& venue = venues[nearest_venue(lat, lon)];
      p.lat = venue.lat;
      p.lon = venue.lon;
      return p;
    };
    auto noise_visit = [&](Rng& r) {
      RawPoint p;
      p.t = cfg.t_start + static_cast<std::int64_t>(r.uniform(0.0, horizon_s));
      p.lat = r.uniform(cfg.extent_lat0, lat_hi);
      p.lon = r.uniform(cfg.extent_lon0, lon_hi);
      return p;
    };

    // Platform A: bursty home-region visits.
    const std::size_t len_a = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(cfg.seq_len_min_a),
                        static_cast<std::int64_t>(cfg.seq_len_max_a)));
    std::vector<RawPoint> pts_a;
    pts_a.reserve(len_a);
    for (std::size_t i = 0; i < len_a; ++i) pts_a.push_back(home_visit(rng));
    std::sort(pts_a.begin(), pts_a.end(),
              [](const RawPoint& x, const RawPoint& y) { return x.t < y.t; });

    // Platform B: a co-occurring subset of A plus its own home visits.
    const std::size_t len_b = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(cfg.seq_len_min_b),
                        static_cast<std::int64_t>(cfg.seq_len_max_b)));
    const std::size_t n_cooc = std::min(
        len_a, static_cast<std::size_t>(std::floor(cfg.cooccur_fraction *
                                                   static_cast<double>(len_b))));
    std::vector<std::size_t> a_idx(len_a);
    for (std::size_t i = 0; i < len_a; ++i) a_idx[i] = i;
    for (std::size_t i = 0; i < n_cooc; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(
                                    rng.uniform_int(0, static_cast<std::int64_t>(len_a - i) - 1));
      std::swap(a_idx[i], a_idx[j]);
    }
    std::vector<RawPoint> pts_b;
    pts_b.reserve(len_b);
    for (std::size_t i = 0; i < n_cooc; ++i) {
      RawPoint p = pts_a[a_idx[i]];
      if (cfg.jitter_seconds > 0.0)
        p.t += static_cast<std::int64_t>(rng.uniform(-cfg.jitter_seconds, cfg.jitter_seconds));
      pts_b.push_back(p);
    }
    for (std::size_t i = n_cooc; i < len_b; ++i) pts_b.push_back(home_visit(rng));

    // Uniform spatio-temporal noise replaces a share of each platform.
    auto add_noise = [&](std::vector<RawPoint>& pts) {
      const std::size_t n_noise = static_cast<std::size_t>(
          std::floor(cfg.noise_rate * static_cast<double>(pts.size())));
      std::vector<std::size_t> idx(pts.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (std::size_t i = 0; i < n_noise; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(
                                      0, static_cast<std::int64_t>(idx.size() - i) - 1));
        std::swap(idx[i], idx[j]);
        pts[idx[i]] = noise_visit(rng);
      }
      std::sort(pts.begin(), pts.end(),
                [](const RawPoint& x, const RawPoint& y) { return x.t < y.t; });
    };
    add_noise(pts_a);
    add_noise(pts_b);

    std::snprintf(name, sizeof name, "a%04zu", u);
    const std::string user_a = name;
    std::snprintf(name, sizeof name, "b%04zu", u);
    const std::string user_b = name;
    out.identities.links.push_back({user_a, user_b});

    for (const RawPoint& p : pts_a)
      out.checkins_a.push_back({user_a, 'A', p.t, p.lat, p.lon, std::nullopt});
    for (const RawPoint& p : pts_b)
      out.checkins_b.push_back({user_b, 'B', p.t, p.lat, p.lon, std::nullopt});
  }
  return out;
}

void generate_to_files(const SynthConfig& cfg, const std::string& out_dir) {
  const SynthOutput out = generate(cfg);
  write_checkins_csv(out.checkins_a, out_dir + "/checkins_a.csv");
  write_checkins_csv(out.checkins_b, out_dir + "/checkins_b.csv");
  write_identity_map(out.identities, out_dir + "/identity_map.csv");
}

}  // namespace mtlink

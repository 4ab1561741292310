#include "mtlink/embedding.hpp"

#include "mtlink/ingest.hpp"

namespace mtlink {

EmbeddingTables init_embedding_tables(std::size_t vocab, std::size_t d, Rng& rng) {
  if (d % 4 != 0) throw ValidationError("embedding: model dimension must be divisible by 4");
  if (vocab == 0) throw ValidationError("embedding: empty vocabulary");
  EmbeddingTables t;
  t.poi = Tensor::randn({vocab, d}, rng, 0.02, true);
  t.day = Tensor::randn({31, d / 4}, rng, 0.02, true);
  t.proj_w = Tensor::randn({d + d / 4, d}, rng, 0.02, true);
  t.proj_b = Tensor::zeros({d}, true);
  t.te_freq = Tensor::randn({d}, rng, 1.0, true);
  std::vector<double> phase(d);
  for (double& p : phase) p = rng.uniform(0.0, 6.283185307179586477);
  t.te_phase = Tensor::from({d}, std::move(phase), true);
  return t;
}

double normalize_time(std::int64_t timestamp_utc, std::int64_t t_ref) {
  return static_cast<double>(timestamp_utc - t_ref) / 3600.0;
}

std::vector<double> normalize_times(const CheckinSequence& seq, std::int64_t t_ref) {
  std::vector<double> out(seq.points.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = normalize_time(seq.points[i].timestamp_utc, t_ref);
  return out;
}

Tensor embed_sequence(const std::vector<std::int64_t>& poi_ids,
                      const std::vector<std::int64_t>& timestamps, const EmbeddingTables& tables) {
  if (poi_ids.size() != timestamps.size())
    throw ShapeError("embed_sequence: poi and timestamp counts differ");
  if (poi_ids.empty()) throw ContractError("embed_sequence: empty sequence");
  std::vector<std::int64_t> day_ids(timestamps.size());
  for (std::size_t i = 0; i < timestamps.size(); ++i)
    day_ids[i] = day_of_month_utc(timestamps[i]) - 1;
  auto ep = embedding_lookup(tables.poi, poi_ids);
  auto et = embedding_lookup(tables.day, day_ids);
  return add(matmul(concat_last(ep, et), tables.proj_w), tables.proj_b);
}

Tensor embed_sequence(const CheckinSequence& seq, const EmbeddingTables& tables) {
  std::vector<std::int64_t> pois(seq.points.size());
  std::vector<std::int64_t> ts(seq.points.size());
  for (std::size_t i = 0; i < seq.points.size(); ++i) {
    pois[i] = seq.points[i].poi_id;
    ts[i] = seq.points[i].timestamp_utc;
  }
  return embed_sequence(pois, ts, tables);
}

Tensor temporal_encode(double t_norm, const EmbeddingTables& tables) {
  auto te = temporal_encoding(tables.te_freq, tables.te_phase, {t_norm});
  return reshape(te, {te.dim(1)});
}

Tensor add_temporal(const Tensor& x, const std::vector<double>& t_norm,
                    const EmbeddingTables& tables) {
  if (x.rank() != 2 || x.dim(0) != t_norm.size())
    throw ShapeError("add_temporal: X rows must match timestamp count");
  return add(x, temporal_encoding(tables.te_freq, tables.te_phase, t_norm));
}

}  // namespace mtlink

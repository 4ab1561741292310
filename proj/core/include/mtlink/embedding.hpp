#pragma once

#include <vector>

#include "mtlink/data_model.hpp"
#include "mtlink/tensor.hpp"

namespace mtlink {

/// Learnable lookup tables and projection of the spatio-temporal embedding
/// layer. POI embeddings are d wide, day-of-month embeddings d/4 wide; their
/// concatenation is projected back to d.
struct EmbeddingTables {
  Tensor poi;        // [|P| × d]
  Tensor day;        // [31 × d/4]
  Tensor proj_w;     // [(d + d/4) × d]
  Tensor proj_b;     // [d]
  Tensor te_freq;    // [d]
  Tensor te_phase;   // [d]

  std::size_t model_dim() const { return poi.dim(1); }
  std::size_t vocab_size() const { return poi.dim(0); }
};

/// Initialize tables for a vocabulary of `vocab` cells and model width `d`
/// (divisible by 4). Embedding weights ~ N(0, 0.02^2); cosine frequencies
/// ~ N(0, 1); phases ~ U[0, 2*pi).
EmbeddingTables init_embedding_tables(std::size_t vocab, std::size_t d, Rng& rng);

/// Normalized model time: hours since the corpus reference timestamp.
double normalize_time(std::int64_t timestamp_utc, std::int64_t t_ref);
std::vector<double> normalize_times(const CheckinSequence& seq, std::int64_t t_ref);

/// Per-point embedding: project the concatenated POI and day-of-month
/// embeddings. Shape [k × d].
Tensor embed_sequence(const std::vector<std::int64_t>& poi_ids,
                      const std::vector<std::int64_t>& timestamps, const EmbeddingTables& tables);
Tensor embed_sequence(const CheckinSequence& seq, const EmbeddingTables& tables);

/// Learnable cosine time encoding of one timestamp; shape [d]. Thin wrapper
/// over the batched temporal_encoding op.
Tensor temporal_encode(double t_norm, const EmbeddingTables& tables);

/// Z = X + TE(t) row-wise.
Tensor add_temporal(const Tensor& x, const std::vector<double>& t_norm,
                    const EmbeddingTables& tables);

}  // namespace mtlink

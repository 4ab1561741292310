#include "mtlink/correlation_attention.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mtlink {

namespace {

CrossAttnDirection init_direction(std::size_t d, std::size_t layers, Rng& rng) {
  CrossAttnDirection dir;

  std::vector<double> eye(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  dir.q0_w = Tensor::from({d, d}, std::move(eye), true);
  dir.q0_b = Tensor::zeros({d}, true);

  // Shared draw for the key projection and every layer's query projection;
  // they are independent parameters afterwards.
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> shared(d * d);
  for (double& x : shared) x = rng.normal(0.0, sd);

  dir.k_w = Tensor::from({d, d}, std::vector<double>(shared), true);
  dir.k_b = Tensor::zeros({d}, true);
  dir.v_w = Tensor::randn({d, d}, rng, 0.02, true);
  dir.v_b = Tensor::zeros({d}, true);

  dir.layers.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    CrossAttnLayer layer;
    layer.q_w = Tensor::from({d, d}, std::vector<double>(shared), true);
    layer.q_b = Tensor::zeros({d}, true);
    layer.o_w = Tensor::randn({d, d}, rng, 0.02, true);
    layer.o_b = Tensor::zeros({d}, true);
    layer.ln_g = Tensor::full({d}, 1.0, true);
    layer.ln_b = Tensor::zeros({d}, true);
    dir.layers.push_back(std::move(layer));
  }
  return dir;
}

/// One direction of the stack: queries from `h_q`, fixed keys/values from
/// `h_kv`. Returns the final residual stream and the last layer's
/// head-averaged map.
std::pair<Tensor, Mat> run_direction(const CrossAttnDirection& dir, std::size_t heads,
                                     double dropout_rate, const Tensor& h_q, const Tensor& h_kv,
                                     const std::vector<std::uint8_t>& valid_q,
                                     const std::vector<std::uint8_t>& valid_kv, Rng* rng,
                                     bool training) {
  auto k = add(matmul(h_kv, dir.k_w), dir.k_b);
  auto v = add(matmul(h_kv, dir.v_w), dir.v_b);
  auto q = row_mask(add(matmul(h_q, dir.q0_w), dir.q0_b), valid_q);

  Mat avg;
  for (std::size_t l = 0; l < dir.layers.size(); ++l) {
    const CrossAttnLayer& layer = dir.layers[l];
    auto q_proj = add(matmul(q, layer.q_w), layer.q_b);
    AttnProbes probes;
    auto attn = scaled_dot_attention(q_proj, k, v, heads, valid_kv, dropout_rate, rng, training,
                                     &probes);
    auto attn_out = add(matmul(attn, layer.o_w), layer.o_b);
    q = row_mask(layer_norm(add(q, attn_out), layer.ln_g, layer.ln_b), valid_q);

    if (l + 1 == dir.layers.size()) {
      const std::size_t kq = h_q.dim(0), kk = h_kv.dim(0);
      avg = Mat(kq, kk, 0.0);
      for (const Mat& hp : probes.head_probs)
        for (std::size_t i = 0; i < avg.data.size(); ++i) avg.data[i] += hp.data[i];
      const double inv_h = 1.0 / static_cast<double>(heads);
      for (double& x : avg.data) x *= inv_h;
      for (std::size_t r = 0; r < kq; ++r)
        if (!valid_q[r])
          for (std::size_t c = 0; c < kk; ++c) avg.at(r, c) = 0.0;
    }
  }
  return {q, avg};
}

}  // namespace

CorrelationAttentionBlock init_correlation_attention(std::size_t d, std::size_t layers,
                                                     std::size_t heads, double dropout_rate,
                                                     Rng& rng) {
  if (layers == 0)
    throw ValidationError("correlation attention: layer count must be at least 1");
  if (heads == 0 || d % heads != 0)
    throw ValidationError("correlation attention: d must be divisible by the head count");
  CorrelationAttentionBlock cab;
  cab.heads = heads;
  cab.dropout_rate = dropout_rate;
  cab.a_to_b = init_direction(d, layers, rng);
  cab.b_to_a = init_direction(d, layers, rng);
  return cab;
}

CrossAttnResult cross_attend_stack(const CorrelationAttentionBlock& cab, const Tensor& h_a,
                                   const Tensor& h_b, const std::vector<std::uint8_t>& valid_a,
                                   const std::vector<std::uint8_t>& valid_b, Rng* rng,
                                   bool training) {
  if (cab.a_to_b.layers.empty() || cab.b_to_a.layers.empty())
    throw ValidationError("cross_attend_stack: zero-layer stack");
  auto has_valid = [](const std::vector<std::uint8_t>& m) {
    for (std::uint8_t v : m)
      if (v) return true;
    return false;
  };
  if (!has_valid(valid_a) || !has_valid(valid_b))
    throw DegenerateRowError("cross_attend_stack: a platform has no valid token");

  CrossAttnResult res;
  auto [qa, map_ab] = run_direction(cab.a_to_b, cab.heads, cab.dropout_rate, h_a, h_b, valid_a,
                                    valid_b, rng, training);
  auto [qb, map_ba] = run_direction(cab.b_to_a, cab.heads, cab.dropout_rate, h_b, h_a, valid_b,
                                    valid_a, rng, training);
  res.q_a_out = qa;
  res.q_b_out = qb;
  res.map_ab = {Direction::AtoB, std::move(map_ab)};
  res.map_ba = {Direction::BtoA, std::move(map_ba)};
  return res;
}

void write_attention_map_csv(const AttentionMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "query\\key";
  for (std::size_t c = 0; c < map.weights.cols; ++c) out << ',' << c;
  out << '\n';
  char buf[64];
  for (std::size_t r = 0; r < map.weights.rows; ++r) {
    out << r;
    for (std::size_t c = 0; c < map.weights.cols; ++c) {
      std::snprintf(buf, sizeof buf, ",%.17g", map.weights.at(r, c));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

Mat read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty matrix file: " + path);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      if (first) {
        first = false;  // row label
        continue;
      }
      row.push_back(std::stod(cell));
    }
    rows.push_back(std::move(row));
  }
  Mat m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) m.at(r, c) = rows[r][c];
  return m;
}

}  // namespace mtlink

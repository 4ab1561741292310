#include "mtlink/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_set>

namespace mtlink {

namespace {

using EigenRowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EigenRowMat>;
using ConstMatMap = Eigen::Map<const EigenRowMat>;

constexpr double kLayerNormEps = 1e-5;
constexpr double kBceClamp = 1e-7;

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> value) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts)
    if (t->requires_grad()) return true;
  return false;
}

/// Wire a result node to its inputs when gradient tracking is needed;
/// otherwise the result stays a constant leaf and the tape is not extended.
Tensor finish(std::shared_ptr<detail::Node> n, std::initializer_list<const Tensor*> inputs,
              std::function<void(detail::Node&, GradStore*)> backward_fn) {
  if (any_requires_grad(inputs)) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (const Tensor* t : inputs) n->parents.push_back(t->node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

void check_rank12(const Tensor& x, const char* op) {
  if (x.rank() != 1 && x.rank() != 2)
    throw ShapeError(std::string(op) + ": expected rank 1 or 2, got " + shape_str(x.shape()));
}

}  // namespace

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& grad_dest(Node& target, GradStore* sink) {
  if (sink != nullptr && target.is_param_leaf())
    return sink->buffer_for(&target, target.value.size());
  return target.grad_buf();
}

}  // namespace detail

// ---- Tensor basics ---------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = make_node(shape, std::vector<double>(shape_size(shape), 0.0));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto n = make_node(shape, std::vector<double>(shape_size(shape), v));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != data.size())
    throw ShapeError("Tensor::from: shape " + shape_str(shape) + " does not match data length " +
                     std::to_string(data.size()));
  auto n = make_node(std::move(shape), std::move(data));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor::from(Shape{}, {v}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double sd, bool requires_grad) {
  std::vector<double> data(shape_size(shape));
  for (double& x : data) x = rng.normal(0.0, sd);
  return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

std::span<const double> Tensor::grad() const {
  if (!has_grad())
    throw ContractError("Tensor::grad: gradient buffer not populated (run backward first)");
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("Tensor::item: tensor has " + std::to_string(size()) +
                                       " elements, expected 1");
  return node_->value[0];
}

Tensor Tensor::detach() const {
  auto n = make_node(node_->shape, node_->value);
  return Tensor(std::move(n));
}

void Tensor::backward() { backward_impl(nullptr); }
void Tensor::backward(GradStore& sink) { backward_impl(&sink); }

void Tensor::backward_impl(GradStore* sink) {
  if (!defined()) throw ContractError("backward: undefined tensor");
  if (size() != 1)
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(shape()));
  detail::Node* root = node_.get();
  if (!root->requires_grad)
    throw ContractError("backward: loss is detached from every trainable parameter");
  if (root->backward_ran)
    throw ContractError("backward: already ran for this loss; rebuild the graph before calling again");
  root->backward_ran = true;

  // Reverse topological order via iterative post-order DFS over the grad-
  // requiring subgraph.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  struct Frame {
    detail::Node* n;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  seen.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.n->parents.size()) {
      detail::Node* p = f.n->parents[f.next_parent++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  auto& g = root->grad_buf();
  g[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn) {
      n->grad_buf();
      n->backward_fn(*n, sink);
    }
  }
}

// ---- Operations ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: expected rank-2 operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));

  auto node = make_node({m, n}, std::vector<double>(m * n));
  {
    ConstMatMap ma(a.values().data(), m, k);
    ConstMatMap mb(b.values().data(), k, n);
    MatMap mc(node->value.data(), m, n);
    mc.noalias() = ma * mb;
  }
  return finish(std::move(node), {&a, &b}, [m, k, n](detail::Node& self, GradStore* sink) {
    detail::Node& pa = *self.parents[0];
    detail::Node& pb = *self.parents[1];
    ConstMatMap g(self.grad.data(), m, n);
    ConstMatMap va(pa.value.data(), m, k);
    ConstMatMap vb(pb.value.data(), k, n);
    if (pa.requires_grad) {
      MatMap da(detail::grad_dest(pa, sink).data(), m, k);
      da.noalias() += g * vb.transpose();
    }
    if (pb.requires_grad) {
      MatMap db(detail::grad_dest(pb, sink).data(), k, n);
      db.noalias() += va.transpose() * g;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  // Broadcast case: [k×d] + [d] (either order).
  if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0)) {
    const std::size_t k = a.dim(0), d = a.dim(1);
    std::vector<double> out(k * d);
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = av[i * d + j] + bv[j];
    auto node = make_node({k, d}, std::move(out));
    return finish(std::move(node), {&a, &b}, [k, d](detail::Node& self, GradStore* sink) {
      detail::Node& pa = *self.parents[0];
      detail::Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        auto& da = detail::grad_dest(pa, sink);
        for (std::size_t i = 0; i < k * d; ++i) da[i] += self.grad[i];
      }
      if (pb.requires_grad) {
        auto& db = detail::grad_dest(pb, sink);
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < d; ++j) db[j] += self.grad[i * d + j];
      }
    });
  }
  if (b.rank() == 2 && a.rank() == 1) return add(b, a);

  if (!same_shape(a.shape(), b.shape()))
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto node = make_node(a.shape(), std::move(out));
  return finish(std::move(node), {&a, &b}, [](detail::Node& self, GradStore* sink) {
    for (int p = 0; p < 2; ++p) {
      detail::Node& par = *self.parents[p];
      if (!par.requires_grad) continue;
      auto& dp = detail::grad_dest(par, sink);
      for (std::size_t i = 0; i < self.grad.size(); ++i) dp[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!same_shape(a.shape(), b.shape()))
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto node = make_node(a.shape(), std::move(out));
  return finish(std::move(node), {&a, &b}, [](detail::Node& self, GradStore* sink) {
    detail::Node& pa = *self.parents[0];
    detail::Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& da = detail::grad_dest(pa, sink);
      for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& db = detail::grad_dest(pb, sink);
      for (std::size_t i = 0; i < self.grad.size(); ++i) db[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * xv[i];
  auto node = make_node(x.shape(), std::move(out));
  return finish(std::move(node), {&x}, [c](detail::Node& self, GradStore* sink) {
    detail::Node& p = *self.parents[0];
    auto& dp = detail::grad_dest(p, sink);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dp[i] += c * self.grad[i];
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  auto node = make_node(x.shape(), std::move(out));
  return finish(std::move(node), {&x}, [](detail::Node& self, GradStore* sink) {
    detail::Node& p = *self.parents[0];
    auto& dp = detail::grad_dest(p, sink);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (p.value[i] > 0.0) dp[i] += self.grad[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  auto node = make_node(x.shape(), std::move(out));
  return finish(std::move(node), {&x}, [](detail::Node& self, GradStore* sink) {
    detail::Node& p = *self.parents[0];
    auto& dp = detail::grad_dest(p, sink);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      dp[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(x.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  const auto xv = x.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  auto node = make_node({n, m}, std::move(out));
  return finish(std::move(node), {&x}, [m, n](detail::Node& self, GradStore* sink) {
    detail::Node& p = *self.parents[0];
    auto& dp = detail::grad_dest(p, sink);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dp[i * n + j] += self.grad[j * m + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw ShapeError("reshape: new shape " + shape_str(shape) + " does not match size " +
                     std::to_string(x.size()));
  auto node = make_node(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()));
  return finish(std::move(node), {&x}, [](detail::Node& self, GradStore* sink) {
    detail::Node& p = *self.parents[0];
    auto& dp = detail::grad_dest(p, sink);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dp[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto node = make_node(Shape{}, {s});
  return finish(std::move(node), {&x}, [](detail::Node& self, GradStore* sink) {
    detail::Node& p = *self.parents[0];
    auto& dp = detail::grad_dest(p, sink);
    for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += self.grad[0];
  });
}

Tensor concat_last(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("concat_last: no inputs");
  check_rank12(xs[0], "concat_last");
  const std::size_t rank = xs[0].rank();
  const std::size_t rows = xs[0].rows();
  std::size_t total = 0;
  for (const Tensor& t : xs) {
    if (t.rank() != rank || t.rows() != rows)
      throw ShapeError("concat_last: incompatible input " + shape_str(t.shape()));
    total += t.cols();
  }
  std::vector<double> out(rows * total);
  std::size_t off = 0;
  for (const Tensor& t : xs) {
    const std::size_t w = t.cols();
    const auto tv = t.values();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) out[r * total + off + j] = tv[r * w + j];
    off += w;
  }
  Shape shape = rank == 1 ? Shape{total} : Shape{rows, total};
  auto node = make_node(std::move(shape), std::move(out));

  std::vector<std::size_t> widths(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) widths[i] = xs[i].cols();
  bool track = false;
  for (const Tensor& t : xs) track = track || t.requires_grad();
  if (!track) return Tensor(std::move(node));

  node->requires_grad = true;
  for (const Tensor& t : xs) node->parents.push_back(t.node());
  node->backward_fn = [rows, total, widths](detail::Node& self, GradStore* sink) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      detail::Node& p = *self.parents[i];
      const std::size_t w = widths[i];
      if (p.requires_grad) {
        auto& dp = detail::grad_dest(p, sink);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < w; ++j) dp[r * w + j] += self.grad[r * total + off + j];
      }
      off += w;
    }
  };
  return Tensor(std::move(node));
}

Tensor concat_last(const Tensor& a, const Tensor& b) { return concat_last(std::vector<Tensor>{a, b}); }

Tensor slice_last(const Tensor& x, std::size_t off, std::size_t len) {
  check_rank12(x, "slice_last");
  const std::size_t rows = x.rows(), w = x.cols();
  if (off + len > w)
    throw ShapeError("slice_last: range [" + std::to_string(off) + ", " + std::to_string(off + len) +
                     ") exceeds width " + std::to_string(w));
  std::vector<double> out(rows * len);
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < len; ++j) out[r * len + j] = xv[r * w + off + j];
  Shape shape = x.rank() == 1 ? Shape{len} : Shape{rows, len};
  auto node = make_node(std::move(shape), std::move(out));
  return finish(std::move(node), {&x}, [rows, w, off, len](detail::Node& self, GradStore* sink) {
    detail::Node& p = *self.parents[0];
    auto& dp = detail::grad_dest(p, sink);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < len; ++j) dp[r * w + off + j] += self.grad[r * len + j];
  });
}

Tensor softmax_masked(const Tensor& x, const std::vector<std::uint8_t>& valid) {
  check_rank12(x, "softmax_masked");
  const std::size_t rows = x.rows(), n = x.cols();
  if (valid.size() != n)
    throw ShapeError("softmax_masked: mask length " + std::to_string(valid.size()) +
                     " does not match last axis " + std::to_string(n));
  bool any_valid = false;
  for (std::uint8_t v : valid) any_valid = any_valid || v != 0;
  if (!any_valid) throw DegenerateRowError("softmax_masked: no valid position in the mask");

  std::vector<double> out(rows * n, 0.0);
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (valid[j] && row[j] > mx) mx = row[j];
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (valid[j]) {
        out[r * n + j] = std::exp(row[j] - mx);
        z += out[r * n + j];
      }
    for (std::size_t j = 0; j < n; ++j)
      if (valid[j]) out[r * n + j] /= z;
  }
  auto node = make_node(x.shape(), std::move(out));
  return finish(std::move(node), {&x}, [rows, n, valid](detail::Node& self, GradStore* sink) {
    detail::Node& p = *self.parents[0];
    auto& dp = detail::grad_dest(p, sink);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* prow = self.value.data() + r * n;
      const double* grow = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (valid[j]) dot += prow[j] * grow[j];
      for (std::size_t j = 0; j < n; ++j)
        if (valid[j]) dp[r * n + j] += prow[j] * (grow[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  check_rank12(x, "layer_norm");
  const std::size_t rows = x.rows(), d = x.cols();
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d)
    throw ShapeError("layer_norm: gain/bias must be rank-1 of size " + std::to_string(d));

  std::vector<double> out(rows * d);
  auto xhat = std::make_shared<std::vector<double>>(rows * d);
  auto istd = std::make_shared<std::vector<double>>(rows);
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    (*istd)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mean) * is;
      (*xhat)[r * d + j] = xh;
      out[r * d + j] = xh * gv[j] + bv[j];
    }
  }
  auto node = make_node(x.shape(), std::move(out));
  return finish(std::move(node), {&x, &gain, &bias},
                [rows, d, xhat, istd](detail::Node& self, GradStore* sink) {
                  detail::Node& px = *self.parents[0];
                  detail::Node& pg = *self.parents[1];
                  detail::Node& pb = *self.parents[2];
                  const double* gv = pg.value.data();
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double* grow = self.grad.data() + r * d;
                    const double* xh = xhat->data() + r * d;
                    if (px.requires_grad) {
                      auto& dx = detail::grad_dest(px, sink);
                      double m1 = 0.0, m2 = 0.0;
                      for (std::size_t j = 0; j < d; ++j) {
                        const double dh = grow[j] * gv[j];
                        m1 += dh;
                        m2 += dh * xh[j];
                      }
                      m1 /= static_cast<double>(d);
                      m2 /= static_cast<double>(d);
                      const double is = (*istd)[r];
                      for (std::size_t j = 0; j < d; ++j) {
                        const double dh = grow[j] * gv[j];
                        dx[r * d + j] += is * (dh - m1 - xh[j] * m2);
                      }
                    }
                    if (pg.requires_grad) {
                      auto& dg = detail::grad_dest(pg, sink);
                      for (std::size_t j = 0; j < d; ++j) dg[j] += grow[j] * xh[j];
                    }
                    if (pb.requires_grad) {
                      auto& db = detail::grad_dest(pb, sink);
                      for (std::size_t j = 0; j < d; ++j) db[j] += grow[j];
                    }
                  }
                });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0)
    throw ContractError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;

  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(x.size());
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    (*mask)[i] = m;
    out[i] = xv[i] * m;
  }
  auto node = make_node(x.shape(), std::move(out));
  return finish(std::move(node), {&x}, [mask](detail::Node& self, GradStore* sink) {
    detail::Node& p = *self.parents[0];
    auto& dp = detail::grad_dest(p, sink);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dp[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& ids) {
  if (table.rank() != 2) throw ShapeError("embedding_lookup: table must be rank-2");
  const std::size_t v = table.dim(0), d = table.dim(1), k = ids.size();
  for (std::int64_t id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= v)
      throw VocabularyError("embedding_lookup: id " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(v));
  std::vector<double> out(k * d);
  const auto tv = table.values();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = tv[static_cast<std::size_t>(ids[i]) * d + j];
  auto node = make_node({k, d}, std::move(out));
  auto ids_copy = std::make_shared<std::vector<std::int64_t>>(ids);
  return finish(std::move(node), {&table}, [d, ids_copy](detail::Node& self, GradStore* sink) {
    detail::Node& p = *self.parents[0];
    auto& dp = detail::grad_dest(p, sink);
    for (std::size_t i = 0; i < ids_copy->size(); ++i) {
      const std::size_t row = static_cast<std::size_t>((*ids_copy)[i]);
      for (std::size_t j = 0; j < d; ++j) dp[row * d + j] += self.grad[i * d + j];
    }
  });
}

Tensor masked_mean(const Tensor& x, const std::vector<std::uint8_t>& valid_rows) {
  if (x.rank() != 2) throw ShapeError("masked_mean: expected rank 2, got " + shape_str(x.shape()));
  const std::size_t k = x.dim(0), d = x.dim(1);
  if (valid_rows.size() != k) throw ShapeError("masked_mean: mask length does not match rows");
  std::size_t nv = 0;
  for (std::uint8_t m : valid_rows) nv += m != 0;
  if (nv == 0) throw DegenerateRowError("masked_mean: no valid row");

  std::vector<double> out(d, 0.0);
  const auto xv = x.values();
  for (std::size_t i = 0; i < k; ++i)
    if (valid_rows[i])
      for (std::size_t j = 0; j < d; ++j) out[j] += xv[i * d + j];
  for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(nv);
  auto node = make_node({d}, std::move(out));
  return finish(std::move(node), {&x}, [k, d, nv, valid_rows](detail::Node& self, GradStore* sink) {
    detail::Node& p = *self.parents[0];
    auto& dp = detail::grad_dest(p, sink);
    const double inv = 1.0 / static_cast<double>(nv);
    for (std::size_t i = 0; i < k; ++i)
      if (valid_rows[i])
        for (std::size_t j = 0; j < d; ++j) dp[i * d + j] += self.grad[j] * inv;
  });
}

Tensor row_mask(const Tensor& x, const std::vector<std::uint8_t>& valid_rows) {
  if (x.rank() != 2) throw ShapeError("row_mask: expected rank 2, got " + shape_str(x.shape()));
  const std::size_t k = x.dim(0), d = x.dim(1);
  if (valid_rows.size() != k) throw ShapeError("row_mask: mask length does not match rows");
  std::vector<double> out(k * d, 0.0);
  const auto xv = x.values();
  for (std::size_t i = 0; i < k; ++i)
    if (valid_rows[i])
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j];
  auto node = make_node(x.shape(), std::move(out));
  return finish(std::move(node), {&x}, [k, d, valid_rows](detail::Node& self, GradStore* sink) {
    detail::Node& p = *self.parents[0];
    auto& dp = detail::grad_dest(p, sink);
    for (std::size_t i = 0; i < k; ++i)
      if (valid_rows[i])
        for (std::size_t j = 0; j < d; ++j) dp[i * d + j] += self.grad[i * d + j];
  });
}

Tensor stack_scalars(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("stack_scalars: no inputs");
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != 1) throw ShapeError("stack_scalars: input " + std::to_string(i) + " is not scalar");
    out[i] = xs[i].values()[0];
  }
  auto node = make_node({xs.size()}, std::move(out));
  bool track = false;
  for (const Tensor& t : xs) track = track || t.requires_grad();
  if (!track) return Tensor(std::move(node));
  node->requires_grad = true;
  for (const Tensor& t : xs) node->parents.push_back(t.node());
  node->backward_fn = [](detail::Node& self, GradStore* sink) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      detail::Node& p = *self.parents[i];
      if (p.requires_grad) detail::grad_dest(p, sink)[0] += self.grad[i];
    }
  };
  return Tensor(std::move(node));
}

namespace {

double bce_point(double p, int label, double weight, double* dp) {
  if (std::isnan(p)) {
    // Let divergence surface as a NaN loss instead of being hidden by the
    // clamp.
    if (dp != nullptr) *dp = std::numeric_limits<double>::quiet_NaN();
    return std::numeric_limits<double>::quiet_NaN();
  }
  const double pc = std::min(1.0 - kBceClamp, std::max(kBceClamp, p));
  const bool clamped = p < kBceClamp || p > 1.0 - kBceClamp;
  const double term = label == 1 ? std::log(pc) : std::log(1.0 - pc);
  if (dp != nullptr)
    *dp = clamped ? 0.0 : -weight * (label == 1 ? 1.0 / pc : -1.0 / (1.0 - pc));
  return -weight * term;
}

}  // namespace

Tensor weighted_bce(const Tensor& probs, const std::vector<int>& labels, double w_pos, double w_neg) {
  if (probs.rank() != 1) throw ShapeError("weighted_bce: probabilities must be rank-1");
  const std::size_t n = probs.dim(0);
  if (n == 0) throw ContractError("weighted_bce: empty batch");
  if (labels.size() != n) throw ShapeError("weighted_bce: labels length does not match");
  if (w_pos <= 0.0 || w_neg <= 0.0) throw ContractError("weighted_bce: weights must be positive");

  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  const auto pv = probs.values();
  for (std::size_t i = 0; i < n; ++i)
    loss += inv_n * bce_point(pv[i], labels[i], labels[i] == 1 ? w_pos : w_neg, nullptr);
  auto node = make_node(Shape{}, {loss});
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return finish(std::move(node), {&probs},
                [n, inv_n, w_pos, w_neg, labels_copy](detail::Node& self, GradStore* sink) {
                  detail::Node& p = *self.parents[0];
                  auto& dp = detail::grad_dest(p, sink);
                  for (std::size_t i = 0; i < n; ++i) {
                    double d = 0.0;
                    const int y = (*labels_copy)[i];
                    bce_point(p.value[i], y, (y == 1 ? w_pos : w_neg) * inv_n, &d);
                    dp[i] += self.grad[0] * d;
                  }
                });
}

Tensor bce_term(const Tensor& prob, int label, double weight) {
  if (prob.size() != 1) throw ShapeError("bce_term: probability must be scalar");
  const double loss = bce_point(prob.values()[0], label, weight, nullptr);
  auto node = make_node(Shape{}, {loss});
  return finish(std::move(node), {&prob}, [label, weight](detail::Node& self, GradStore* sink) {
    detail::Node& p = *self.parents[0];
    double d = 0.0;
    bce_point(p.value[0], label, weight, &d);
    detail::grad_dest(p, sink)[0] += self.grad[0] * d;
  });
}

Tensor temporal_encoding(const Tensor& freq, const Tensor& phase, const std::vector<double>& t) {
  if (freq.rank() != 1 || phase.rank() != 1 || freq.dim(0) != phase.dim(0))
    throw ShapeError("temporal_encoding: freq and phase must be rank-1 of equal size");
  const std::size_t d = freq.dim(0), k = t.size();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> out(k * d);
  const auto wv = freq.values();
  const auto bv = phase.values();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = inv_sqrt_d * std::cos(wv[j] * t[i] + bv[j]);
  auto node = make_node({k, d}, std::move(out));
  auto ts = std::make_shared<std::vector<double>>(t);
  return finish(std::move(node), {&freq, &phase},
                [k, d, inv_sqrt_d, ts](detail::Node& self, GradStore* sink) {
                  detail::Node& pw = *self.parents[0];
                  detail::Node& pb = *self.parents[1];
                  std::vector<double>* dw =
                      pw.requires_grad ? &detail::grad_dest(pw, sink) : nullptr;
                  std::vector<double>* db =
                      pb.requires_grad ? &detail::grad_dest(pb, sink) : nullptr;
                  for (std::size_t i = 0; i < k; ++i) {
                    const double ti = (*ts)[i];
                    for (std::size_t j = 0; j < d; ++j) {
                      const double ds =
                          -inv_sqrt_d * std::sin(pw.value[j] * ti + pb.value[j]) * self.grad[i * d + j];
                      if (dw != nullptr) (*dw)[j] += ds * ti;
                      if (db != nullptr) (*db)[j] += ds;
                    }
                  }
                });
}

Tensor replace_rows(const Tensor& z, const std::vector<std::size_t>& rows, const Tensor& fill) {
  if (z.rank() != 2) throw ShapeError("replace_rows: expected rank-2 input");
  const std::size_t k = z.dim(0), d = z.dim(1);
  if (fill.rank() != 1 || fill.dim(0) != d)
    throw ShapeError("replace_rows: fill must be rank-1 of size " + std::to_string(d));
  std::vector<std::uint8_t> replaced(k, 0);
  for (std::size_t r : rows) {
    if (r >= k) throw ContractError("replace_rows: row " + std::to_string(r) + " out of range");
    replaced[r] = 1;
  }
  std::vector<double> out(z.values().begin(), z.values().end());
  const auto fv = fill.values();
  for (std::size_t i = 0; i < k; ++i)
    if (replaced[i])
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = fv[j];
  auto node = make_node(z.shape(), std::move(out));
  return finish(std::move(node), {&z, &fill}, [k, d, replaced](detail::Node& self, GradStore* sink) {
    detail::Node& pz = *self.parents[0];
    detail::Node& pf = *self.parents[1];
    if (pz.requires_grad) {
      auto& dz = detail::grad_dest(pz, sink);
      for (std::size_t i = 0; i < k; ++i)
        if (!replaced[i])
          for (std::size_t j = 0; j < d; ++j) dz[i * d + j] += self.grad[i * d + j];
    }
    if (pf.requires_grad) {
      auto& df = detail::grad_dest(pf, sink);
      for (std::size_t i = 0; i < k; ++i)
        if (replaced[i])
          for (std::size_t j = 0; j < d; ++j) df[j] += self.grad[i * d + j];
    }
  });
}

Tensor sinusoidal_position_encoding(std::size_t k, std::size_t d) {
  std::vector<double> out(k * d);
  for (std::size_t pos = 0; pos < k; ++pos)
    for (std::size_t j = 0; j < d; ++j) {
      const double expo = static_cast<double>(2 * (j / 2)) / static_cast<double>(d);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, expo);
      out[pos * d + j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return Tensor::from({k, d}, std::move(out));
}

}  // namespace mtlink

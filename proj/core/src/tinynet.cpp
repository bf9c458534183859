#include "sfot/tinynet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sfot/error.hpp"

namespace sfot::nn {

// ---------------------------------------------------------------------------
// Tensor2

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw InputError("Tensor2: data length does not match shape");
}

Tensor2::Tensor2(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw InputError("Tensor2: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor2 Tensor2::identity(std::size_t n) {
  Tensor2 t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor2 Tensor2::randn(std::size_t rows, std::size_t cols, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor2 t(rows, cols);
  for (auto& x : t.data_) x = dist(rng);
  return t;
}

Tensor2 Tensor2::uniform(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor2 t(rows, cols);
  for (auto& x : t.data_) x = dist(rng);
  return t;
}

bool Tensor2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows()) throw InputError("matmul: inner dimensions differ");
  Tensor2 c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

Tensor2 transpose(const Tensor2& a) {
  Tensor2 t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

namespace {

// a * b^T without materializing the transpose.
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.cols()) throw InputError("matmul_nt: widths differ");
  Tensor2 c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto br = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < ar.size(); ++k) s += ar[k] * br[k];
      c(i, j) = s;
    }
  }
  return c;
}

// a^T * b
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
  Tensor2 c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aki * b(k, j);
    }
  }
  return c;
}

void accumulate(Tensor2& dst, const Tensor2& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* op) {
  if (!a.same_shape(b)) throw InputError(std::string(op) + ": shape mismatch");
}

double row_logsumexp(std::span<const double> r) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : r) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : r) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

// ---------------------------------------------------------------------------
// ParamStore

ParamId ParamStore::add(std::string name, Tensor2 init) {
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return {values_.size() - 1};
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

// ---------------------------------------------------------------------------
// Graph

Var Graph::record(Tensor2 value, std::vector<std::size_t> inputs, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), Tensor2{}, std::move(inputs), std::move(backward)});
  return {this, nodes_.size() - 1};
}

Var Graph::constant(Tensor2 value) { return record(std::move(value), {}, nullptr); }

Var Graph::leaf(Tensor2 value) { return record(std::move(value), {}, nullptr); }

std::size_t Graph::check(Var v) const {
  if (v.graph != this || v.id >= nodes_.size()) throw InputError("variable was not recorded on this graph");
  return v.id;
}

const Tensor2& Graph::value(Var v) const { return nodes_[check(v)].value; }

const Tensor2& Graph::grad(Var v) const {
  const auto id = check(v);
  if (!has_grads_) throw InputError("backward() has not been run on this graph");
  return nodes_[id].grad;
}

void Graph::backward(Var loss, double seed) {
  if (nodes_.empty()) throw InputError("backward: graph not recorded");
  const auto root = check(loss);
  if (nodes_[root].value.rows() != 1 || nodes_[root].value.cols() != 1) {
    throw InputError("backward: loss must be a 1x1 tensor");
  }
  for (auto& n : nodes_) n.grad = Tensor2(n.value.rows(), n.value.cols());
  nodes_[root].grad(0, 0) = seed;
  for (std::size_t i = root + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
  has_grads_ = true;
}

Binding::Binding(Graph& g, const ParamStore& store) {
  vars_.reserve(store.size());
  for (const auto& v : store.values()) vars_.push_back(g.leaf(v));
}

std::vector<Tensor2> Binding::gradients(const Graph& g) const {
  std::vector<Tensor2> out;
  out.reserve(vars_.size());
  for (const auto& v : vars_) out.push_back(g.grad(v));
  return out;
}

// ---------------------------------------------------------------------------
// Ops

Var matmul(Graph& g, Var a, Var b) {
  const auto ia = g.check(a);
  const auto ib = g.check(b);
  return g.record(matmul(g.value_at(ia), g.value_at(ib)), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    const auto& dc = gr.grad_at(self);
    accumulate(gr.grad_mut(ia), matmul_nt(dc, gr.value_at(ib)));
    accumulate(gr.grad_mut(ib), matmul_tn(gr.value_at(ia), dc));
  });
}

Var matmul_nt(Graph& g, Var a, Var b) {
  const auto ia = g.check(a);
  const auto ib = g.check(b);
  return g.record(matmul_nt(g.value_at(ia), g.value_at(ib)), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    const auto& dc = gr.grad_at(self);
    accumulate(gr.grad_mut(ia), matmul(dc, gr.value_at(ib)));
    accumulate(gr.grad_mut(ib), matmul_tn(dc, gr.value_at(ia)));
  });
}

Var add(Graph& g, Var a, Var b) {
  const auto ia = g.check(a);
  const auto ib = g.check(b);
  require_same_shape(g.value_at(ia), g.value_at(ib), "add");
  Tensor2 out = g.value_at(ia);
  accumulate(out, g.value_at(ib));
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    accumulate(gr.grad_mut(ia), gr.grad_at(self));
    accumulate(gr.grad_mut(ib), gr.grad_at(self));
  });
}

Var sub(Graph& g, Var a, Var b) {
  const auto ia = g.check(a);
  const auto ib = g.check(b);
  require_same_shape(g.value_at(ia), g.value_at(ib), "sub");
  Tensor2 out = g.value_at(ia);
  auto o = out.data();
  auto bv = g.value_at(ib).data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    accumulate(gr.grad_mut(ia), gr.grad_at(self));
    auto db = gr.grad_mut(ib).data();
    auto dc = gr.grad_at(self).data();
    for (std::size_t i = 0; i < db.size(); ++i) db[i] -= dc[i];
  });
}

Var scale(Graph& g, Var a, double k) {
  const auto ia = g.check(a);
  Tensor2 out = g.value_at(ia);
  for (auto& x : out.data()) x *= k;
  return g.record(std::move(out), {ia}, [ia, k](Graph& gr, std::size_t self) {
    auto da = gr.grad_mut(ia).data();
    auto dc = gr.grad_at(self).data();
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += k * dc[i];
  });
}

Var add_row(Graph& g, Var a, Var row) {
  const auto ia = g.check(a);
  const auto ir = g.check(row);
  const auto& av = g.value_at(ia);
  const auto& rv = g.value_at(ir);
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw InputError("add_row: expected a 1 x cols row");
  Tensor2 out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv(0, j);
  }
  return g.record(std::move(out), {ia, ir}, [ia, ir](Graph& gr, std::size_t self) {
    const auto& dc = gr.grad_at(self);
    accumulate(gr.grad_mut(ia), dc);
    auto& dr = gr.grad_mut(ir);
    for (std::size_t i = 0; i < dc.rows(); ++i) {
      for (std::size_t j = 0; j < dc.cols(); ++j) dr(0, j) += dc(i, j);
    }
  });
}

Var add_col(Graph& g, Var a, Var col) {
  const auto ia = g.check(a);
  const auto ic = g.check(col);
  const auto& av = g.value_at(ia);
  const auto& cv = g.value_at(ic);
  if (cv.cols() != 1 || cv.rows() != av.rows()) throw InputError("add_col: expected a rows x 1 column");
  Tensor2 out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += cv(i, 0);
  }
  return g.record(std::move(out), {ia, ic}, [ia, ic](Graph& gr, std::size_t self) {
    const auto& dc = gr.grad_at(self);
    accumulate(gr.grad_mut(ia), dc);
    auto& dcol = gr.grad_mut(ic);
    for (std::size_t i = 0; i < dc.rows(); ++i) {
      for (std::size_t j = 0; j < dc.cols(); ++j) dcol(i, 0) += dc(i, j);
    }
  });
}

Var relu(Graph& g, Var a) {
  const auto ia = g.check(a);
  Tensor2 out = g.value_at(ia);
  for (auto& x : out.data()) x = x > 0.0 ? x : 0.0;
  return g.record(std::move(out), {ia}, [ia](Graph& gr, std::size_t self) {
    auto da = gr.grad_mut(ia).data();
    auto dc = gr.grad_at(self).data();
    auto x = gr.value_at(ia).data();
    for (std::size_t i = 0; i < da.size(); ++i) {
      if (x[i] > 0.0) da[i] += dc[i];
    }
  });
}

Var exp(Graph& g, Var a) {
  const auto ia = g.check(a);
  Tensor2 out = g.value_at(ia);
  for (auto& x : out.data()) x = std::exp(x);
  return g.record(std::move(out), {ia}, [ia](Graph& gr, std::size_t self) {
    auto da = gr.grad_mut(ia).data();
    auto dc = gr.grad_at(self).data();
    auto y = gr.value_at(self).data();
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += dc[i] * y[i];
  });
}

Var softmax_rows(Graph& g, Var a) {
  const auto ia = g.check(a);
  const auto& av = g.value_at(ia);
  Tensor2 out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    const double lse = row_logsumexp(av.row(i));
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = std::exp(av(i, j) - lse);
  }
  return g.record(std::move(out), {ia}, [ia](Graph& gr, std::size_t self) {
    const auto& y = gr.value_at(self);
    const auto& dc = gr.grad_at(self);
    auto& da = gr.grad_mut(ia);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double inner = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) inner += dc(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) da(i, j) += y(i, j) * (dc(i, j) - inner);
    }
  });
}

Var logsumexp_rows(Graph& g, Var a) {
  const auto ia = g.check(a);
  const auto& av = g.value_at(ia);
  Tensor2 out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) out(i, 0) = row_logsumexp(av.row(i));
  return g.record(std::move(out), {ia}, [ia](Graph& gr, std::size_t self) {
    const auto& x = gr.value_at(ia);
    const auto& y = gr.value_at(self);
    const auto& dc = gr.grad_at(self);
    auto& da = gr.grad_mut(ia);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) da(i, j) += dc(i, 0) * std::exp(x(i, j) - y(i, 0));
    }
  });
}

Var logsumexp_cols(Graph& g, Var a) {
  const auto ia = g.check(a);
  const auto& av = g.value_at(ia);
  Tensor2 out(1, av.cols());
  std::vector<double> column(av.rows());
  for (std::size_t j = 0; j < av.cols(); ++j) {
    for (std::size_t i = 0; i < av.rows(); ++i) column[i] = av(i, j);
    out(0, j) = row_logsumexp(column);
  }
  return g.record(std::move(out), {ia}, [ia](Graph& gr, std::size_t self) {
    const auto& x = gr.value_at(ia);
    const auto& y = gr.value_at(self);
    const auto& dc = gr.grad_at(self);
    auto& da = gr.grad_mut(ia);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) da(i, j) += dc(0, j) * std::exp(x(i, j) - y(0, j));
    }
  });
}

Var augment(Graph& g, Var a, Var fill) {
  const auto ia = g.check(a);
  const auto iff = g.check(fill);
  const auto& av = g.value_at(ia);
  const auto& fv = g.value_at(iff);
  if (fv.rows() != 1 || fv.cols() != 1) throw InputError("augment: fill must be 1x1");
  Tensor2 out(av.rows() + 1, av.cols() + 1, fv(0, 0));
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = av(i, j);
  }
  return g.record(std::move(out), {ia, iff}, [ia, iff](Graph& gr, std::size_t self) {
    const auto& dc = gr.grad_at(self);
    auto& da = gr.grad_mut(ia);
    double dfill = 0.0;
    for (std::size_t i = 0; i < dc.rows(); ++i) {
      for (std::size_t j = 0; j < dc.cols(); ++j) {
        if (i + 1 < dc.rows() && j + 1 < dc.cols()) {
          da(i, j) += dc(i, j);
        } else {
          dfill += dc(i, j);
        }
      }
    }
    gr.grad_mut(iff)(0, 0) += dfill;
  });
}

Var sum(Graph& g, Var a) {
  const auto ia = g.check(a);
  double s = 0.0;
  for (double x : g.value_at(ia).data()) s += x;
  return g.record(Tensor2(1, 1, s), {ia}, [ia](Graph& gr, std::size_t self) {
    const double dc = gr.grad_at(self)(0, 0);
    for (auto& d : gr.grad_mut(ia).data()) d += dc;
  });
}

Var dot_all(Graph& g, Var a, Var b) {
  const auto ia = g.check(a);
  const auto ib = g.check(b);
  require_same_shape(g.value_at(ia), g.value_at(ib), "dot_all");
  double s = 0.0;
  const auto av = g.value_at(ia).data();
  const auto bv = g.value_at(ib).data();
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return g.record(Tensor2(1, 1, s), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    const double dc = gr.grad_at(self)(0, 0);
    auto da = gr.grad_mut(ia).data();
    auto db = gr.grad_mut(ib).data();
    const auto av2 = gr.value_at(ia).data();
    const auto bv2 = gr.value_at(ib).data();
    for (std::size_t i = 0; i < da.size(); ++i) {
      da[i] += dc * bv2[i];
      db[i] += dc * av2[i];
    }
  });
}

Var neg_mean_at(Graph& g, Var a, const std::vector<Cell>& cells) {
  const auto ia = g.check(a);
  const auto& av = g.value_at(ia);
  double s = 0.0;
  for (const auto& c : cells) {
    if (c.row >= av.rows() || c.col >= av.cols()) throw InputError("neg_mean_at: cell out of range");
    s += av(c.row, c.col);
  }
  const double n = cells.empty() ? 1.0 : static_cast<double>(cells.size());
  return g.record(Tensor2(1, 1, cells.empty() ? 0.0 : -s / n), {ia}, [ia, cells, n](Graph& gr, std::size_t self) {
    const double dc = gr.grad_at(self)(0, 0);
    auto& da = gr.grad_mut(ia);
    for (const auto& c : cells) da(c.row, c.col) -= dc / n;
  });
}

// ---------------------------------------------------------------------------
// Layers

namespace {

Tensor2 glorot(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  return Tensor2::uniform(in, out, rng, -limit, limit);
}

}  // namespace

LinearParams LinearParams::create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                                  Rng& rng, bool with_bias) {
  LinearParams p;
  p.weight = store.add(prefix + ".weight", glorot(in, out, rng));
  if (with_bias) p.bias = store.add(prefix + ".bias", Tensor2::zeros(1, out));
  return p;
}

Var linear_forward(Graph& g, const Binding& b, const LinearParams& p, Var x) {
  const auto& w = g.value(b[p.weight]);
  if (g.value(x).cols() != w.rows()) throw InputError("linear: input width does not match weight rows");
  const Var y = matmul(g, x, b[p.weight]);
  return p.bias ? add_row(g, y, b[*p.bias]) : y;
}

MlpParams MlpParams::create(ParamStore& store, const std::string& prefix, std::vector<std::size_t> widths, Rng& rng) {
  if (widths.size() < 2) throw InputError("MlpParams: need at least input and output widths");
  MlpParams p;
  p.widths = widths;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto lin = LinearParams::create(store, prefix + ".layer" + std::to_string(l), widths[l], widths[l + 1], rng);
    p.weights.push_back(lin.weight);
    p.biases.push_back(*lin.bias);
  }
  return p;
}

Var mlp_forward(Graph& g, const Binding& b, const MlpParams& p, Var x) {
  if (g.value(x).cols() != p.input_width()) throw InputError("mlp_forward: input width mismatch");
  Var h = x;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    h = linear_forward(g, b, LinearParams{p.weights[l], p.biases[l]}, h);
    if (l + 1 < p.weights.size()) h = relu(g, h);
  }
  return h;
}

Tensor2 mlp_forward(const ParamStore& store, const MlpParams& p, const Tensor2& x) {
  Graph g;
  Binding b(g, store);
  return g.value(mlp_forward(g, b, p, g.constant(x)));
}

AttentionParams AttentionParams::create(ParamStore& store, const std::string& prefix, std::size_t width, Rng& rng) {
  AttentionParams p;
  p.width = width;
  p.query = LinearParams::create(store, prefix + ".query", width, width, rng);
  p.key = LinearParams::create(store, prefix + ".key", width, width, rng, false);
  p.value = LinearParams::create(store, prefix + ".value", width, width, rng);
  p.output = LinearParams::create(store, prefix + ".output", width, width, rng);
  return p;
}

namespace {

Var attention_probs(Graph& g, const Binding& b, const AttentionParams& p, Var queries_from, Var keys_values_from) {
  if (g.value(queries_from).cols() != p.width || g.value(keys_values_from).cols() != p.width) {
    throw InputError("attention_forward: input width mismatch");
  }
  const Var q = linear_forward(g, b, p.query, queries_from);
  const Var k = linear_forward(g, b, p.key, keys_values_from);
  return softmax_rows(g, scale(g, matmul_nt(g, q, k), 1.0 / std::sqrt(static_cast<double>(p.width))));
}

}  // namespace

Var attention_forward(Graph& g, const Binding& b, const AttentionParams& p, Var queries_from, Var keys_values_from) {
  const Var probs = attention_probs(g, b, p, queries_from, keys_values_from);
  const Var v = linear_forward(g, b, p.value, keys_values_from);
  return linear_forward(g, b, p.output, matmul(g, probs, v));
}

Tensor2 attention_forward(const ParamStore& store, const AttentionParams& p, const Tensor2& queries_from,
                          const Tensor2& keys_values_from) {
  Graph g;
  Binding b(g, store);
  return g.value(attention_forward(g, b, p, g.constant(queries_from), g.constant(keys_values_from)));
}

Tensor2 attention_weights(const ParamStore& store, const AttentionParams& p, const Tensor2& queries_from,
                          const Tensor2& keys_values_from) {
  Graph g;
  Binding b(g, store);
  return g.value(attention_probs(g, b, p, g.constant(queries_from), g.constant(keys_values_from)));
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::for_store(const ParamStore& store) {
  AdamState s;
  for (const auto& v : store.values()) {
    s.m.emplace_back(v.rows(), v.cols());
    s.v.emplace_back(v.rows(), v.cols());
  }
  return s;
}

void adam_step(ParamStore& params, const std::vector<Tensor2>& grads, AdamState& state, const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw InputError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params.at(i)) || !state.m[i].same_shape(params.at(i))) {
      throw InputError("adam_step: shape mismatch for " + params.name(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.at(i).data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckReport grad_check(const Objective& f, const ParamStore& params, double eps) {
  std::vector<Tensor2> analytic;
  f(params, &analytic);
  if (analytic.size() != params.size()) throw InputError("grad_check: objective returned wrong gradient count");

  GradCheckReport report;
  ParamStore probe = params;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    auto values = probe.at(p).data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double orig = values[k];
      values[k] = orig + eps;
      const double up = f(probe, nullptr);
      values[k] = orig - eps;
      const double down = f(probe, nullptr);
      values[k] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p].data()[k];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p;
        report.worst_index = k;
      }
      ++report.checked;
    }
  }
  return report;
}

}  // namespace sfot::nn

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sfot::nn {

using Rng = std::mt19937_64;

/// Dense row-major matrix of doubles.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);
  Tensor2(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor2 zeros(std::size_t rows, std::size_t cols) { return {rows, cols, 0.0}; }
  static Tensor2 identity(std::size_t n);
  static Tensor2 randn(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0);
  static Tensor2 uniform(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool all_finite() const;
  bool same_shape(const Tensor2& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 transpose(const Tensor2& a);

// ---------------------------------------------------------------------------
// Parameters

struct ParamId {
  std::size_t index = 0;
};

/// Flat, ordered, named parameter storage shared by a model, its optimizer
/// state and its checkpoint.
class ParamStore {
 public:
  ParamId add(std::string name, Tensor2 init);

  Tensor2& operator[](ParamId id) { return values_.at(id.index); }
  const Tensor2& operator[](ParamId id) const { return values_.at(id.index); }
  Tensor2& at(std::size_t i) { return values_.at(i); }
  const Tensor2& at(std::size_t i) const { return values_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }

  std::size_t size() const { return values_.size(); }
  std::size_t scalar_count() const;
  std::vector<Tensor2>& values() { return values_; }
  const std::vector<Tensor2>& values() const { return values_; }

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor2> values_;
};

// ---------------------------------------------------------------------------
// Reverse-mode tape

class Graph;

/// Handle to a node recorded on a Graph.
struct Var {
  const Graph* graph = nullptr;
  std::size_t id = 0;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor2 value);
  Var leaf(Tensor2 value);

  const Tensor2& value(Var v) const;
  /// Gradient accumulated by the last backward() call.
  const Tensor2& grad(Var v) const;

  /// Propagates seed * d(loss)/d(node) to every node. loss must be 1x1.
  void backward(Var loss, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;
  Var record(Tensor2 value, std::vector<std::size_t> inputs, BackwardFn backward);
  Tensor2& grad_mut(std::size_t id) { return nodes_[id].grad; }
  const Tensor2& value_at(std::size_t id) const { return nodes_[id].value; }
  const Tensor2& grad_at(std::size_t id) const { return nodes_[id].grad; }
  std::size_t check(Var v) const;

 private:
  struct Node {
    Tensor2 value;
    Tensor2 grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool has_grads_ = false;
};

/// Parameters of a store recorded as leaves of a graph.
class Binding {
 public:
  Binding(Graph& g, const ParamStore& store);
  Var operator[](ParamId id) const { return vars_.at(id.index); }
  /// Gradients for every parameter, in store order.
  std::vector<Tensor2> gradients(const Graph& g) const;

 private:
  std::vector<Var> vars_;
};

// Differentiable operations. Shape mismatches throw InputError.
Var matmul(Graph& g, Var a, Var b);
Var matmul_nt(Graph& g, Var a, Var b);  // a * b^T
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double k);
Var add_row(Graph& g, Var a, Var row);  // broadcast 1xC over rows
Var add_col(Graph& g, Var a, Var col);  // broadcast Rx1 over columns
Var relu(Graph& g, Var a);
Var exp(Graph& g, Var a);
Var softmax_rows(Graph& g, Var a);
Var logsumexp_rows(Graph& g, Var a);  // R x 1
Var logsumexp_cols(Graph& g, Var a);  // 1 x C
/// Appends a last row and column filled with the 1x1 scalar fill.
Var augment(Graph& g, Var a, Var fill);
Var sum(Graph& g, Var a);
Var dot_all(Graph& g, Var a, Var b);  // sum of elementwise products
struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
};
/// -mean(a[cells]); an empty cell list yields 0.
Var neg_mean_at(Graph& g, Var a, const std::vector<Cell>& cells);

// ---------------------------------------------------------------------------
// Layers

enum class Activation { relu };

/// Fully connected stack. Activation between layers, none after the last.
struct MlpParams {
  std::vector<ParamId> weights;  // in x out
  std::vector<ParamId> biases;   // 1 x out
  std::vector<std::size_t> widths;
  Activation activation = Activation::relu;

  static MlpParams create(ParamStore& store, const std::string& prefix, std::vector<std::size_t> widths, Rng& rng);
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
};

Var mlp_forward(Graph& g, const Binding& b, const MlpParams& p, Var x);
Tensor2 mlp_forward(const ParamStore& store, const MlpParams& p, const Tensor2& x);

struct LinearParams {
  ParamId weight;  // in x out
  std::optional<ParamId> bias;  // 1 x out

  static LinearParams create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                             bool with_bias = true);
};

Var linear_forward(Graph& g, const Binding& b, const LinearParams& p, Var x);

/// Single-head scaled dot-product attention with query/key/value and output
/// projections, all width x width. The key projection has no bias: softmax
/// is invariant to it, so it would never receive a gradient.
struct AttentionParams {
  LinearParams query;
  LinearParams key;
  LinearParams value;
  LinearParams output;
  std::size_t width = 0;

  static AttentionParams create(ParamStore& store, const std::string& prefix, std::size_t width, Rng& rng);
};

/// Rows of queries_from attend over rows of keys_values_from.
Var attention_forward(Graph& g, const Binding& b, const AttentionParams& p, Var queries_from, Var keys_values_from);
Tensor2 attention_forward(const ParamStore& store, const AttentionParams& p, const Tensor2& queries_from,
                          const Tensor2& keys_values_from);
/// The softmax weight matrix (rows sum to one) used by attention_forward.
Tensor2 attention_weights(const ParamStore& store, const AttentionParams& p, const Tensor2& queries_from,
                          const Tensor2& keys_values_from);

// ---------------------------------------------------------------------------
// Optimization and verification

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor2> m;
  std::vector<Tensor2> v;
  std::uint64_t step = 0;

  static AdamState for_store(const ParamStore& store);
};

void adam_step(ParamStore& params, const std::vector<Tensor2>& grads, AdamState& state, const AdamConfig& cfg);

/// Scalar objective over a parameter store; returns the loss value and, when
/// grads is non-null, fills analytic gradients in store order.
using Objective = std::function<double(const ParamStore& params, std::vector<Tensor2>* grads)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Central finite differences against the analytic gradient, over every
/// scalar of every parameter. Relative error per coordinate is
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
GradCheckReport grad_check(const Objective& f, const ParamStore& params, double eps = 1e-4);

}  // namespace sfot::nn

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctp {

enum class Precision { f32, f64 };

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of reals. Every value in the system is rank 2;
/// vectors are 1×n rows.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Tensor(std::size_t r, std::size_t c, std::vector<double> values);

  static Tensor row(std::vector<double> values);

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row_span(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row_span(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;
  std::string shape_str() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

void round_to_precision(Tensor& t, Precision p);

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
};

/// Reverse-mode recorder. One tape per computation; a tape is not shared
/// across threads.
class Tape {
 public:
  explicit Tape(Precision precision = Precision::f32, bool grad_enabled = true)
      : precision_(precision), grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t);
  Var leaf(Tensor t);

  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last backward pass; zeros for leaves the loss did not touch.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  Precision precision() const { return precision_; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  /// Records an op output. `name` is used in error messages; `parents`
  /// decide whether the output needs a gradient.
  Var record(const char* name, Tensor value, std::span<const Var> parents, BackwardFn fn);

  /// Adds `g` into the gradient buffer of `v` (allocating zeros on first use).
  void accumulate(Var v, const Tensor& g);
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Precision precision_;
  bool grad_enabled_;
  bool backward_done_ = false;
  std::vector<Node> nodes_;
};

// Forward ops. Each checks shapes and finiteness and records its backward.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var mean_rows(Var a);
Var max_rows(Var a);
Var sum_all(Var a);
Var mean_all(Var a);
Var sigmoid(Var a);
Var log_sigmoid(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var square(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var l2_normalize_rows(Var a, double eps = 1e-12);
Var cosine_sim(Var a, Var b, double eps = 1e-12);
Var dropout(Var a, double rate, std::uint64_t seed, bool training = true);
Var gather_rows(Var a, std::span<const std::size_t> idx);
Var scatter_sum(Var a, std::span<const std::size_t> dst, std::size_t out_rows);
Var scatter_mean(Var a, std::span<const std::size_t> src, std::span<const std::size_t> dst,
                 std::size_t out_rows);
Var segment_softmax(Var scores, std::span<const std::size_t> segment, std::size_t segments);
Var scale_rows(Var a, Var weights);
Var select_cols(Var a, std::span<const std::size_t> col_per_row);
Var rows_dot(Var a, Var b);

}  // namespace ctp

#include "ctp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace ctp {

Tensor::Tensor(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) {
    throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str());
  }
}

Tensor Tensor::row(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(1, n, std::move(values));
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

void round_to_precision(Tensor& t, Precision p) {
  if (p == Precision::f32) {
    for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
  }
}

const Tensor& Var::value() const { return tape->value(*this); }

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                              b.shape_str());
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw std::invalid_argument("op on an unbound Var");
  return *a.tape;
}

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("ops mix Vars from different tapes");
}

}  // namespace

Var Tape::constant(Tensor t) {
  round_to_precision(t, precision_);
  if (!t.all_finite()) throw NumericError("constant: non-finite input " + t.shape_str());
  nodes_.push_back(Node{std::move(t), {}, false, false, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor t) {
  round_to_precision(t, precision_);
  if (!t.all_finite()) throw NumericError("leaf: non-finite input " + t.shape_str());
  nodes_.push_back(Node{std::move(t), {}, grad_enabled_, false, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(const char* name, Tensor value, std::span<const Var> parents, BackwardFn fn) {
  round_to_precision(value, precision_);
  if (!value.all_finite()) {
    throw NumericError(std::string(name) + ": non-finite output " + value.shape_str());
  }
  bool needs = false;
  if (grad_enabled_) {
    for (const Var& p : parents) {
      check_same_tape(p, Var{this, 0});
      needs = needs || nodes_.at(p.id).requires_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(fn) : BackwardFn{}});
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (!n.has_grad) {
    n.grad = Tensor(n.value.rows, n.value.cols);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  if (!nodes_.at(v.id).requires_grad) return;
  Tensor& buf = grad_buffer(v);
  for (std::size_t i = 0; i < g.data.size(); ++i) buf.data[i] += g.data[i];
}

void Tape::backward(Var loss) {
  if (backward_done_) throw std::logic_error("backward: called twice on the same tape");
  const Node& root = nodes_.at(loss.id);
  if (root.value.rows != 1 || root.value.cols != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got " + root.value.shape_str());
  }
  if (!root.value.all_finite()) throw NumericError("backward: non-finite loss");
  backward_done_ = true;
  if (!root.requires_grad) return;
  grad_buffer(loss).data[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
  for (const Node& n : nodes_) {
    if (n.has_grad && !n.grad.all_finite()) throw NumericError("backward: NaN gradient");
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.has_grad) return n.grad;
  return Tensor(n.value.rows, n.value.cols);
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols != B.rows) shape_error("matmul", A, B);
  Tensor out(A.rows, B.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double* o = out.data.data() + i * out.cols;
    for (std::size_t k = 0; k < A.cols; ++k) {
      const double aik = A.data[i * A.cols + k];
      if (aik == 0.0) continue;
      const double* br = B.data.data() + k * B.cols;
      for (std::size_t j = 0; j < B.cols; ++j) o[j] += aik * br[j];
    }
  }
  const Var parents[] = {a, b};
  return tape_of(a).record("matmul", std::move(out), parents, [a, b](Tape& t, const Tensor& g) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a);  // g · Bᵀ
      for (std::size_t i = 0; i < A.rows; ++i) {
        for (std::size_t k = 0; k < A.cols; ++k) {
          double s = 0.0;
          const double* gr = g.data.data() + i * g.cols;
          const double* br = B.data.data() + k * B.cols;
          for (std::size_t j = 0; j < B.cols; ++j) s += gr[j] * br[j];
          ga.data[i * A.cols + k] += s;
        }
      }
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b);  // Aᵀ · g
      for (std::size_t i = 0; i < A.rows; ++i) {
        const double* gr = g.data.data() + i * g.cols;
        for (std::size_t k = 0; k < A.cols; ++k) {
          const double aik = A.data[i * A.cols + k];
          if (aik == 0.0) continue;
          double* o = gb.data.data() + k * gb.cols;
          for (std::size_t j = 0; j < B.cols; ++j) o[j] += aik * gr[j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  Tensor out(A.cols, A.rows);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) out.at(j, i) = A.at(i, j);
  const Var parents[] = {a};
  return tape_of(a).record("transpose", std::move(out), parents, [a](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < ga.rows; ++i)
      for (std::size_t j = 0; j < ga.cols; ++j) ga.at(i, j) += g.at(j, i);
  });
}

namespace {

template <typename Fwd, typename Da, typename Db>
Var binary_elementwise(const char* name, Var a, Var b, Fwd fwd, Da da, Db db) {
  check_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!A.same_shape(B)) shape_error(name, A, B);
  Tensor out(A.rows, A.cols);
  for (std::size_t i = 0; i < A.size(); ++i) out.data[i] = fwd(A.data[i], B.data[i]);
  const Var parents[] = {a, b};
  return tape_of(a).record(name, std::move(out), parents, [a, b, da, db](Tape& t, const Tensor& g) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < A.size(); ++i) ga.data[i] += g.data[i] * da(A.data[i], B.data[i]);
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < B.size(); ++i) gb.data[i] += g.data[i] * db(A.data[i], B.data[i]);
    }
  });
}

// `deriv` receives (input, output).
template <typename Fwd, typename Deriv>
Var unary_elementwise(const char* name, Var a, Fwd fwd, Deriv deriv) {
  const Tensor& A = a.value();
  Tensor out(A.rows, A.cols);
  for (std::size_t i = 0; i < A.size(); ++i) out.data[i] = fwd(A.data[i]);
  const Var parents[] = {a};
  Tape& tape = tape_of(a);
  const std::size_t out_id = tape.size();
  return tape.record(name, std::move(out), parents, [a, out_id, deriv](Tape& t, const Tensor& g) {
    const Tensor& A = t.value(a);
    const Tensor& Y = t.value(Var{&t, out_id});
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < A.size(); ++i) ga.data[i] += g.data[i] * deriv(A.data[i], Y.data[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var add_row(Var a, Var row) {
  check_same_tape(a, row);
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  if (R.rows != 1 || R.cols != A.cols) shape_error("add_row", A, R);
  Tensor out = A;
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) out.at(i, j) += R.data[j];
  const Var parents[] = {a, row};
  return tape_of(a).record("add_row", std::move(out), parents, [a, row](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) {
      Tensor& gr = t.grad_buffer(row);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) gr.data[j] += g.at(i, j);
    }
  });
}

Var scale(Var a, double s) {
  return unary_elementwise(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(P.data.data() + i * P.cols, P.cols, out.data.data() + i * cols + off);
    off += P.cols;
  }
  std::vector<Var> kept(parts.begin(), parts.end());
  return tape_of(parts[0]).record("concat_cols", std::move(out), parts,
                                  [kept](Tape& t, const Tensor& g) {
                                    std::size_t off = 0;
                                    for (const Var& p : kept) {
                                      const std::size_t c = t.value(p).cols;
                                      if (t.requires_grad(p)) {
                                        Tensor& gp = t.grad_buffer(p);
                                        for (std::size_t i = 0; i < g.rows; ++i)
                                          for (std::size_t j = 0; j < c; ++j)
                                            gp.at(i, j) += g.at(i, off + j);
                                      }
                                      off += c;
                                    }
                                  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    if (p.cols() != cols) shape_error("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    std::copy(P.data.begin(), P.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += P.size();
  }
  std::vector<Var> kept(parts.begin(), parts.end());
  return tape_of(parts[0]).record("concat_rows", std::move(out), parts,
                                  [kept](Tape& t, const Tensor& g) {
                                    std::size_t off = 0;
                                    for (const Var& p : kept) {
                                      const std::size_t n = t.value(p).size();
                                      if (t.requires_grad(p)) {
                                        Tensor& gp = t.grad_buffer(p);
                                        for (std::size_t i = 0; i < n; ++i)
                                          gp.data[i] += g.data[off + i];
                                      }
                                      off += n;
                                    }
                                  });
}

Var mean_rows(Var a) {
  const Tensor& A = a.value();
  if (A.rows == 0) throw std::invalid_argument("mean_rows: empty input");
  Tensor out(1, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) out.data[j] += A.at(i, j);
  for (double& v : out.data) v /= static_cast<double>(A.rows);
  const Var parents[] = {a};
  return tape_of(a).record("mean_rows", std::move(out), parents, [a](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    const double inv = 1.0 / static_cast<double>(ga.rows);
    for (std::size_t i = 0; i < ga.rows; ++i)
      for (std::size_t j = 0; j < ga.cols; ++j) ga.at(i, j) += g.data[j] * inv;
  });
}

Var max_rows(Var a) {
  const Tensor& A = a.value();
  if (A.rows == 0) throw std::invalid_argument("max_rows: empty input");
  Tensor out(1, A.cols);
  std::vector<std::size_t> arg(A.cols, 0);
  for (std::size_t j = 0; j < A.cols; ++j) {
    double best = A.at(0, j);
    for (std::size_t i = 1; i < A.rows; ++i) {
      if (A.at(i, j) > best) {
        best = A.at(i, j);
        arg[j] = i;
      }
    }
    out.data[j] = best;
  }
  const Var parents[] = {a};
  return tape_of(a).record("max_rows", std::move(out), parents,
                           [a, arg = std::move(arg)](Tape& t, const Tensor& g) {
                             Tensor& ga = t.grad_buffer(a);
                             for (std::size_t j = 0; j < ga.cols; ++j) ga.at(arg[j], j) += g.data[j];
                           });
}

Var sum_all(Var a) {
  const Tensor& A = a.value();
  double s = 0.0;
  for (double v : A.data) s += v;
  const Var parents[] = {a};
  return tape_of(a).record("sum_all", Tensor(1, 1, s), parents, [a](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (double& v : ga.data) v += g.data[0];
  });
}

Var mean_all(Var a) {
  const auto n = a.value().size();
  if (n == 0) throw std::invalid_argument("mean_all: empty input");
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var sigmoid(Var a) {
  return unary_elementwise(
      "sigmoid", a,
      [](double x) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double y) { return y * (1.0 - y); });
}

namespace {
double stable_log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}
double stable_sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
}  // namespace

Var log_sigmoid(Var a) {
  return unary_elementwise(
      "log_sigmoid", a, stable_log_sigmoid, [](double x, double) { return 1.0 - stable_sigmoid(x); });
}

Var relu(Var a) {
  return unary_elementwise(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
  return unary_elementwise(
      "leaky_relu", a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var square(Var a) {
  return unary_elementwise(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softmax_rows(Var a) {
  const Tensor& A = a.value();
  Tensor out(A.rows, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    const auto r = A.row_span(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) z += (out.at(i, j) = std::exp(r[j] - mx));
    for (std::size_t j = 0; j < A.cols; ++j) out.at(i, j) /= z;
  }
  const Var parents[] = {a};
  Tape& tape = tape_of(a);
  const std::size_t out_id = tape.size();
  return tape.record("softmax_rows", std::move(out), parents, [a, out_id](Tape& t, const Tensor& g) {
    const Tensor& Y = t.value(Var{&t, out_id});
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < Y.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < Y.cols; ++j) dot += g.at(i, j) * Y.at(i, j);
      for (std::size_t j = 0; j < Y.cols; ++j) ga.at(i, j) += Y.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  const Tensor& A = a.value();
  Tensor out(A.rows, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    const auto r = A.row_span(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < A.cols; ++j) out.at(i, j) = r[j] - lse;
  }
  const Var parents[] = {a};
  Tape& tape = tape_of(a);
  const std::size_t out_id = tape.size();
  return tape.record("log_softmax_rows", std::move(out), parents,
                     [a, out_id](Tape& t, const Tensor& g) {
                       const Tensor& Y = t.value(Var{&t, out_id});
                       Tensor& ga = t.grad_buffer(a);
                       for (std::size_t i = 0; i < Y.rows; ++i) {
                         double gs = 0.0;
                         for (std::size_t j = 0; j < Y.cols; ++j) gs += g.at(i, j);
                         for (std::size_t j = 0; j < Y.cols; ++j)
                           ga.at(i, j) += g.at(i, j) - std::exp(Y.at(i, j)) * gs;
                       }
                     });
}

Var l2_normalize_rows(Var a, double eps) {
  const Tensor& A = a.value();
  Tensor out(A.rows, A.cols);
  std::vector<double> norms(A.rows);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (double v : A.row_span(i)) s += v * v;
    norms[i] = std::sqrt(s);
    if (norms[i] > eps)
      for (std::size_t j = 0; j < A.cols; ++j) out.at(i, j) = A.at(i, j) / norms[i];
  }
  const Var parents[] = {a};
  return tape_of(a).record(
      "l2_normalize_rows", std::move(out), parents,
      [a, eps, norms = std::move(norms)](Tape& t, const Tensor& g) {
        const Tensor& A = t.value(a);
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < A.rows; ++i) {
          const double n = norms[i];
          if (n <= eps) continue;  // zero rows map to zero with zero gradient
          double dot = 0.0;
          for (std::size_t j = 0; j < A.cols; ++j) dot += g.at(i, j) * A.at(i, j);
          for (std::size_t j = 0; j < A.cols; ++j)
            ga.at(i, j) += g.at(i, j) / n - A.at(i, j) * dot / (n * n * n);
        }
      });
}

Var cosine_sim(Var a, Var b, double eps) {
  return matmul(l2_normalize_rows(a, eps), transpose(l2_normalize_rows(b, eps)));
}

Var dropout(Var a, double rate, std::uint64_t seed, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return a;
  const Tensor& A = a.value();
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor mask(A.rows, A.cols);
  for (double& m : mask.data) m = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return mul(a, a.tape->constant(std::move(mask)));
}

Var gather_rows(Var a, std::span<const std::size_t> idx) {
  const Tensor& A = a.value();
  Tensor out(idx.size(), A.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= A.rows) {
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[r]) + " out of " +
                              A.shape_str());
    }
    std::copy_n(A.data.data() + idx[r] * A.cols, A.cols, out.data.data() + r * A.cols);
  }
  const Var parents[] = {a};
  std::vector<std::size_t> kept(idx.begin(), idx.end());
  return tape_of(a).record("gather_rows", std::move(out), parents,
                           [a, kept = std::move(kept)](Tape& t, const Tensor& g) {
                             Tensor& ga = t.grad_buffer(a);
                             for (std::size_t r = 0; r < kept.size(); ++r)
                               for (std::size_t j = 0; j < ga.cols; ++j)
                                 ga.at(kept[r], j) += g.at(r, j);
                           });
}

Var scatter_sum(Var a, std::span<const std::size_t> dst, std::size_t out_rows) {
  const Tensor& A = a.value();
  if (dst.size() != A.rows) {
    throw std::invalid_argument("scatter_sum: " + std::to_string(dst.size()) +
                                " destinations for " + A.shape_str());
  }
  Tensor out(out_rows, A.cols);
  for (std::size_t r = 0; r < A.rows; ++r) {
    if (dst[r] >= out_rows) throw std::out_of_range("scatter_sum: destination out of range");
    for (std::size_t j = 0; j < A.cols; ++j) out.at(dst[r], j) += A.at(r, j);
  }
  const Var parents[] = {a};
  std::vector<std::size_t> kept(dst.begin(), dst.end());
  return tape_of(a).record("scatter_sum", std::move(out), parents,
                           [a, kept = std::move(kept)](Tape& t, const Tensor& g) {
                             Tensor& ga = t.grad_buffer(a);
                             for (std::size_t r = 0; r < kept.size(); ++r)
                               for (std::size_t j = 0; j < ga.cols; ++j)
                                 ga.at(r, j) += g.at(kept[r], j);
                           });
}

Var scatter_mean(Var a, std::span<const std::size_t> src, std::span<const std::size_t> dst,
                 std::size_t out_rows) {
  const Tensor& A = a.value();
  if (src.size() != dst.size()) throw std::invalid_argument("scatter_mean: src/dst length differ");
  std::vector<double> count(out_rows, 0.0);
  for (std::size_t e = 0; e < dst.size(); ++e) {
    if (dst[e] >= out_rows || src[e] >= A.rows)
      throw std::out_of_range("scatter_mean: index out of range");
    count[dst[e]] += 1.0;
  }
  Tensor out(out_rows, A.cols);
  for (std::size_t e = 0; e < dst.size(); ++e)
    for (std::size_t j = 0; j < A.cols; ++j) out.at(dst[e], j) += A.at(src[e], j) / count[dst[e]];
  const Var parents[] = {a};
  std::vector<std::size_t> s(src.begin(), src.end());
  std::vector<std::size_t> d(dst.begin(), dst.end());
  return tape_of(a).record(
      "scatter_mean", std::move(out), parents,
      [a, s = std::move(s), d = std::move(d), count = std::move(count)](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t e = 0; e < d.size(); ++e)
          for (std::size_t j = 0; j < ga.cols; ++j) ga.at(s[e], j) += g.at(d[e], j) / count[d[e]];
      });
}

Var segment_softmax(Var scores, std::span<const std::size_t> segment, std::size_t segments) {
  const Tensor& S = scores.value();
  if (S.cols != 1 || S.rows != segment.size())
    throw std::invalid_argument("segment_softmax: expected [E x 1] scores, got " + S.shape_str());
  std::vector<double> mx(segments, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < S.rows; ++e) {
    if (segment[e] >= segments) throw std::out_of_range("segment_softmax: segment out of range");
    mx[segment[e]] = std::max(mx[segment[e]], S.data[e]);
  }
  std::vector<double> z(segments, 0.0);
  Tensor out(S.rows, 1);
  for (std::size_t e = 0; e < S.rows; ++e) z[segment[e]] += (out.data[e] = std::exp(S.data[e] - mx[segment[e]]));
  for (std::size_t e = 0; e < S.rows; ++e) out.data[e] /= z[segment[e]];
  const Var parents[] = {scores};
  Tape& tape = tape_of(scores);
  const std::size_t out_id = tape.size();
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return tape.record("segment_softmax", std::move(out), parents,
                     [scores, out_id, segments, seg = std::move(seg)](Tape& t, const Tensor& g) {
                       const Tensor& Y = t.value(Var{&t, out_id});
                       std::vector<double> dot(segments, 0.0);
                       for (std::size_t e = 0; e < Y.rows; ++e) dot[seg[e]] += g.data[e] * Y.data[e];
                       Tensor& gs = t.grad_buffer(scores);
                       for (std::size_t e = 0; e < Y.rows; ++e)
                         gs.data[e] += Y.data[e] * (g.data[e] - dot[seg[e]]);
                     });
}

Var scale_rows(Var a, Var weights) {
  check_same_tape(a, weights);
  const Tensor& A = a.value();
  const Tensor& W = weights.value();
  if (W.cols != 1 || W.rows != A.rows) shape_error("scale_rows", A, W);
  Tensor out(A.rows, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) out.at(i, j) = A.at(i, j) * W.data[i];
  const Var parents[] = {a, weights};
  return tape_of(a).record("scale_rows", std::move(out), parents,
                           [a, weights](Tape& t, const Tensor& g) {
                             const Tensor& A = t.value(a);
                             const Tensor& W = t.value(weights);
                             if (t.requires_grad(a)) {
                               Tensor& ga = t.grad_buffer(a);
                               for (std::size_t i = 0; i < A.rows; ++i)
                                 for (std::size_t j = 0; j < A.cols; ++j)
                                   ga.at(i, j) += g.at(i, j) * W.data[i];
                             }
                             if (t.requires_grad(weights)) {
                               Tensor& gw = t.grad_buffer(weights);
                               for (std::size_t i = 0; i < A.rows; ++i)
                                 for (std::size_t j = 0; j < A.cols; ++j)
                                   gw.data[i] += g.at(i, j) * A.at(i, j);
                             }
                           });
}

Var select_cols(Var a, std::span<const std::size_t> col_per_row) {
  const Tensor& A = a.value();
  if (col_per_row.size() != A.rows)
    throw std::invalid_argument("select_cols: one column index per row required");
  Tensor out(A.rows, 1);
  for (std::size_t i = 0; i < A.rows; ++i) {
    if (col_per_row[i] >= A.cols) throw std::out_of_range("select_cols: column out of range");
    out.data[i] = A.at(i, col_per_row[i]);
  }
  const Var parents[] = {a};
  std::vector<std::size_t> kept(col_per_row.begin(), col_per_row.end());
  return tape_of(a).record("select_cols", std::move(out), parents,
                           [a, kept = std::move(kept)](Tape& t, const Tensor& g) {
                             Tensor& ga = t.grad_buffer(a);
                             for (std::size_t i = 0; i < kept.size(); ++i) ga.at(i, kept[i]) += g.data[i];
                           });
}

Var rows_dot(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!A.same_shape(B)) shape_error("rows_dot", A, B);
  Tensor out(A.rows, 1);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) s += A.at(i, j) * B.at(i, j);
    out.data[i] = s;
  }
  const Var parents[] = {a, b};
  return tape_of(a).record("rows_dot", std::move(out), parents, [a, b](Tape& t, const Tensor& g) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) ga.at(i, j) += g.data[i] * B.at(i, j);
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) gb.at(i, j) += g.data[i] * A.at(i, j);
    }
  });
}

}  // namespace ctp

#include "dgp/ops.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "dgp/errors.hpp"

namespace dgp {
namespace {

[[noreturn]] void shape_fail(const Tape& tape, std::string_view op,
                             const std::string& detail) {
  throw ShapeError(std::string(op) + " (node " + std::to_string(tape.size()) +
                   "): " + detail);
}

Tape& common_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw Error("operands live on different tapes");
  return a.tape();
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  auto d = dst->data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// How each operand of an elementwise binary op maps onto the output.
enum class Broadcast { Full, Scalar, Row };

struct BinaryShape {
  Broadcast a;
  Broadcast b;
  Shape out;
};

bool is_scalar_like(const Tensor& t) { return t.size() == 1 && t.rank() <= 1; }

BinaryShape binary_shape(const Tape& tape, std::string_view op,
                         const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return {Broadcast::Full, Broadcast::Full, a.shape()};
  if (is_scalar_like(a)) return {Broadcast::Scalar, Broadcast::Full, b.shape()};
  if (is_scalar_like(b)) return {Broadcast::Full, Broadcast::Scalar, a.shape()};
  if (a.rank() == 1 && b.rank() == 2 && a.shape()[0] == b.shape()[1]) {
    return {Broadcast::Row, Broadcast::Full, b.shape()};
  }
  if (b.rank() == 1 && a.rank() == 2 && b.shape()[0] == a.shape()[1]) {
    return {Broadcast::Full, Broadcast::Row, a.shape()};
  }
  shape_fail(tape, op,
             "cannot broadcast " + a.shape_string() + " with " + b.shape_string());
}

Tensor expand(const Tensor& t, Broadcast mode, const Shape& out) {
  if (mode == Broadcast::Full) return t;
  Tensor r(out);
  auto rd = r.data();
  if (mode == Broadcast::Scalar) {
    const double v = t[0];
    for (auto& x : rd) x = v;
    return r;
  }
  const std::size_t cols = t.size();
  for (std::size_t i = 0; i < rd.size(); ++i) rd[i] = t[i % cols];
  return r;
}

// Reduces a full-size adjoint onto an operand of the given broadcast mode.
void accumulate_reduced(Tensor* dst, const Tensor& full, Broadcast mode) {
  if (!dst) return;
  if (mode == Broadcast::Full) {
    accumulate(dst, full);
    return;
  }
  auto f = full.data();
  if (mode == Broadcast::Scalar) {
    double s = 0.0;
    for (double v : f) s += v;
    dst->data()[0] += s;
    return;
  }
  auto d = dst->data();
  const std::size_t cols = d.size();
  for (std::size_t i = 0; i < f.size(); ++i) d[i % cols] += f[i];
}

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor r(a.shape());
  auto ad = a.data();
  auto rd = r.data();
  for (std::size_t i = 0; i < ad.size(); ++i) rd[i] = f(ad[i]);
  return r;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor r(a.shape());
  auto ad = a.data();
  auto bd = b.data();
  auto rd = r.data();
  for (std::size_t i = 0; i < ad.size(); ++i) rd[i] = f(ad[i], bd[i]);
  return r;
}

void require_matrix(const Tape& tape, std::string_view op, const Tensor& t) {
  if (t.rank() != 2) {
    shape_fail(tape, op, "expected a matrix, got shape " + t.shape_string());
  }
}

void require_square(const Tape& tape, std::string_view op, const Tensor& t) {
  require_matrix(tape, op, t);
  if (t.rows() != t.cols()) {
    shape_fail(tape, op, "expected a square matrix, got " + t.shape_string());
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(tape, "matmul", av);
  require_matrix(tape, "matmul", bv);
  if (av.cols() != bv.rows()) {
    shape_fail(tape, "matmul", "incompatible shapes " + av.shape_string() +
                                   " x " + bv.shape_string());
  }
  Tensor out(Shape{av.rows(), bv.cols()});
  out.matrix().noalias() = av.matrix() * bv.matrix();
  const Tensor* ap = &av;
  const Tensor* bp = &bv;
  return tape.record(
      "matmul", {a, b}, std::move(out),
      [ap, bp](const Tensor&, const Tensor& adj, std::span<Tensor* const> g) {
        if (g[0]) g[0]->matrix().noalias() += adj.matrix() * bp->matrix().transpose();
        if (g[1]) g[1]->matrix().noalias() += ap->matrix().transpose() * adj.matrix();
      });
}

Var squared_distance(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(tape, "squared_distance", av);
  require_matrix(tape, "squared_distance", bv);
  if (av.cols() != bv.cols()) {
    shape_fail(tape, "squared_distance", "column mismatch " + av.shape_string() +
                                             " vs " + bv.shape_string());
  }
  const std::size_t n = av.rows(), m = bv.rows(), d = av.cols();
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double r2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = av(i, k) - bv(j, k);
        r2 += diff * diff;
      }
      out(i, j) = r2;
    }
  }
  const Tensor* ap = &av;
  const Tensor* bp = &bv;
  return tape.record(
      "squared_distance", {a, b}, std::move(out),
      [ap, bp, n, m, d](const Tensor&, const Tensor& adj, std::span<Tensor* const> g) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            const double w = 2.0 * adj(i, j);
            if (w == 0.0) continue;
            for (std::size_t k = 0; k < d; ++k) {
              const double diff = (*ap)(i, k) - (*bp)(j, k);
              if (g[0]) (*g[0])(i, k) += w * diff;
              if (g[1]) (*g[1])(j, k) -= w * diff;
            }
          }
        }
      });
}

Var transpose(const Var& a) {
  Tape& tape = a.tape();
  const Tensor& av = a.value();
  require_matrix(tape, "transpose", av);
  Tensor out(Shape{av.cols(), av.rows()});
  out.matrix() = av.matrix().transpose();
  return tape.record("transpose", {a}, std::move(out),
                     [](const Tensor&, const Tensor& adj,
                        std::span<Tensor* const> g) {
                       g[0]->matrix() += adj.matrix().transpose();
                     });
}

Var add(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const auto bs = binary_shape(tape, "add", a.value(), b.value());
  Tensor out = map_binary(expand(a.value(), bs.a, bs.out),
                          expand(b.value(), bs.b, bs.out),
                          [](double x, double y) { return x + y; });
  return tape.record("add", {a, b}, std::move(out),
                     [bs](const Tensor&, const Tensor& adj,
                          std::span<Tensor* const> g) {
                       accumulate_reduced(g[0], adj, bs.a);
                       accumulate_reduced(g[1], adj, bs.b);
                     });
}

Var sub(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const auto bs = binary_shape(tape, "sub", a.value(), b.value());
  Tensor out = map_binary(expand(a.value(), bs.a, bs.out),
                          expand(b.value(), bs.b, bs.out),
                          [](double x, double y) { return x - y; });
  return tape.record("sub", {a, b}, std::move(out),
                     [bs](const Tensor&, const Tensor& adj,
                          std::span<Tensor* const> g) {
                       accumulate_reduced(g[0], adj, bs.a);
                       if (g[1]) {
                         accumulate_reduced(
                             g[1], map_unary(adj, [](double x) { return -x; }),
                             bs.b);
                       }
                     });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const auto bs = binary_shape(tape, "mul", a.value(), b.value());
  const Tensor* ap = &a.value();
  const Tensor* bp = &b.value();
  Tensor out = map_binary(expand(*ap, bs.a, bs.out), expand(*bp, bs.b, bs.out),
                          [](double x, double y) { return x * y; });
  return tape.record(
      "mul", {a, b}, std::move(out),
      [bs, ap, bp](const Tensor&, const Tensor& adj, std::span<Tensor* const> g) {
        if (g[0]) {
          accumulate_reduced(g[0],
                             map_binary(adj, expand(*bp, bs.b, adj.shape()),
                                        [](double x, double y) { return x * y; }),
                             bs.a);
        }
        if (g[1]) {
          accumulate_reduced(g[1],
                             map_binary(adj, expand(*ap, bs.a, adj.shape()),
                                        [](double x, double y) { return x * y; }),
                             bs.b);
        }
      });
}

Var div(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const auto bs = binary_shape(tape, "div", a.value(), b.value());
  const Tensor* bp = &b.value();
  Tensor out = map_binary(expand(a.value(), bs.a, bs.out),
                          expand(*bp, bs.b, bs.out),
                          [](double x, double y) { return x / y; });
  return tape.record(
      "div", {a, b}, std::move(out),
      [bs, bp](const Tensor& out, const Tensor& adj, std::span<Tensor* const> g) {
        const Tensor bfull = expand(*bp, bs.b, adj.shape());
        if (g[0]) {
          accumulate_reduced(
              g[0], map_binary(adj, bfull, [](double x, double y) { return x / y; }),
              bs.a);
        }
        if (g[1]) {
          // d(a/b)/db = -(a/b)/b
          Tensor gb = map_binary(adj, out, [](double x, double q) { return -x * q; });
          accumulate_reduced(
              g[1], map_binary(gb, bfull, [](double x, double y) { return x / y; }),
              bs.b);
        }
      });
}

Var neg(const Var& a) {
  return a.tape().record(
      "neg", {a}, map_unary(a.value(), [](double x) { return -x; }),
      [](const Tensor&, const Tensor& adj, std::span<Tensor* const> g) {
        auto d = g[0]->data();
        auto s = adj.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
      });
}

Var exp(const Var& a) {
  return a.tape().record(
      "exp", {a}, map_unary(a.value(), [](double x) { return std::exp(x); }),
      [](const Tensor& out, const Tensor& adj, std::span<Tensor* const> g) {
        accumulate(g[0], map_binary(adj, out, [](double x, double y) { return x * y; }));
      });
}

Var log(const Var& a) {
  const Tensor* ap = &a.value();
  return a.tape().record(
      "log", {a}, map_unary(*ap, [](double x) { return std::log(x); }),
      [ap](const Tensor&, const Tensor& adj, std::span<Tensor* const> g) {
        accumulate(g[0], map_binary(adj, *ap, [](double x, double y) { return x / y; }));
      });
}

Var square(const Var& a) {
  const Tensor* ap = &a.value();
  return a.tape().record(
      "square", {a}, map_unary(*ap, [](double x) { return x * x; }),
      [ap](const Tensor&, const Tensor& adj, std::span<Tensor* const> g) {
        accumulate(g[0], map_binary(adj, *ap,
                                    [](double x, double y) { return 2.0 * x * y; }));
      });
}

Var sqrt(const Var& a) {
  return a.tape().record(
      "sqrt", {a}, map_unary(a.value(), [](double x) { return std::sqrt(x); }),
      [](const Tensor& out, const Tensor& adj, std::span<Tensor* const> g) {
        accumulate(g[0], map_binary(adj, out,
                                    [](double x, double y) { return 0.5 * x / y; }));
      });
}

Var tanh(const Var& a) {
  return a.tape().record(
      "tanh", {a}, map_unary(a.value(), [](double x) { return std::tanh(x); }),
      [](const Tensor& out, const Tensor& adj, std::span<Tensor* const> g) {
        accumulate(g[0], map_binary(adj, out, [](double x, double y) {
                     return x * (1.0 - y * y);
                   }));
      });
}

Var clamp_min(const Var& a, double floor) {
  const Tensor* ap = &a.value();
  return a.tape().record(
      "clamp_min", {a},
      map_unary(*ap, [floor](double x) { return x > floor ? x : floor; }),
      [ap, floor](const Tensor&, const Tensor& adj, std::span<Tensor* const> g) {
        accumulate(g[0], map_binary(adj, *ap, [floor](double x, double y) {
                     return y > floor ? x : 0.0;
                   }));
      });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().record(
      "sum", {a}, Tensor::scalar(s),
      [](const Tensor&, const Tensor& adj, std::span<Tensor* const> g) {
        const double v = adj[0];
        for (auto& x : g[0]->data()) x += v;
      });
}

Var sum(const Var& a, std::size_t axis) {
  Tape& tape = a.tape();
  const Tensor& av = a.value();
  require_matrix(tape, "sum", av);
  if (axis > 1) shape_fail(tape, "sum", "axis " + std::to_string(axis) + " out of range");
  Tensor out;
  if (axis == 0) {
    out = Tensor::vector_from_eigen(av.matrix().colwise().sum().transpose());
  } else {
    out = Tensor::vector_from_eigen(av.matrix().rowwise().sum());
  }
  return tape.record("sum", {a}, std::move(out),
                     [axis](const Tensor&, const Tensor& adj,
                            std::span<Tensor* const> g) {
                       auto gm = g[0]->matrix();
                       for (Eigen::Index r = 0; r < gm.rows(); ++r) {
                         for (Eigen::Index c = 0; c < gm.cols(); ++c) {
                           gm(r, c) += adj[axis == 0 ? c : r];
                         }
                       }
                     });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) shape_fail(a.tape(), "mean", "mean of an empty tensor");
  return sum(a) * (1.0 / static_cast<double>(n));
}

Var mean(const Var& a, std::size_t axis) {
  const Tensor& av = a.value();
  require_matrix(a.tape(), "mean", av);
  const std::size_t n = axis == 0 ? av.rows() : av.cols();
  if (n == 0) shape_fail(a.tape(), "mean", "mean over an empty axis");
  return sum(a, axis) * (1.0 / static_cast<double>(n));
}

Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& tape = a.tape();
  const Tensor& av = a.value();
  if (av.rank() == 0 || av.rank() > 2 || axis >= av.rank()) {
    shape_fail(tape, "slice", "axis " + std::to_string(axis) +
                                  " invalid for shape " + av.shape_string());
  }
  if (begin > end || end > av.shape()[axis]) {
    shape_fail(tape, "slice", "range [" + std::to_string(begin) + "," +
                                  std::to_string(end) + ") out of bounds for " +
                                  av.shape_string());
  }
  Shape shape = av.shape();
  shape[axis] = end - begin;
  Tensor out(shape);
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  const std::size_t r0 = axis == 0 ? begin : 0;
  const std::size_t c0 = axis == 1 ? begin : 0;
  const std::size_t orows = out.rows();
  const std::size_t ocols = out.cols();
  (void)rows;
  for (std::size_t r = 0; r < orows; ++r) {
    for (std::size_t c = 0; c < ocols; ++c) {
      out[r * ocols + c] = av[(r + r0) * cols + (c + c0)];
    }
  }
  return tape.record("slice", {a}, std::move(out),
                     [r0, c0, cols](const Tensor&, const Tensor& adj,
                                    std::span<Tensor* const> g) {
                       const std::size_t orows = adj.rows();
                       const std::size_t ocols = adj.cols();
                       for (std::size_t r = 0; r < orows; ++r) {
                         for (std::size_t c = 0; c < ocols; ++c) {
                           (*g[0])[(r + r0) * cols + (c + c0)] += adj[r * ocols + c];
                         }
                       }
                     });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Tape& tape = parts[0].tape();
  const Tensor& first = parts[0].value();
  const std::size_t rank = first.rank();
  if (rank == 0 || rank > 2 || axis >= rank) {
    shape_fail(tape, "concat", "axis " + std::to_string(axis) +
                                   " invalid for shape " + first.shape_string());
  }
  Shape shape = first.shape();
  shape[axis] = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (&p.tape() != &tape) throw Error("operands live on different tapes");
    const Tensor& v = p.value();
    bool ok = v.rank() == rank;
    for (std::size_t d = 0; ok && d < rank; ++d) {
      if (d != axis && v.shape()[d] != first.shape()[d]) ok = false;
    }
    if (!ok) {
      shape_fail(tape, "concat", "cannot join " + first.shape_string() +
                                     " and " + v.shape_string() + " on axis " +
                                     std::to_string(axis));
    }
    offsets.push_back(shape[axis]);
    shape[axis] += v.shape()[axis];
  }
  Tensor out(shape);
  const std::size_t ocols = out.cols();
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    const std::size_t r0 = axis == 0 ? offsets[k] : 0;
    const std::size_t c0 = axis == 1 ? offsets[k] : 0;
    for (std::size_t r = 0; r < v.rows(); ++r) {
      for (std::size_t c = 0; c < v.cols(); ++c) {
        out[(r + r0) * ocols + (c + c0)] = v[r * v.cols() + c];
      }
    }
  }
  return tape.record(
      "concat", std::vector<Var>(parts.begin(), parts.end()), std::move(out),
      [offsets, axis](const Tensor&, const Tensor& adj, std::span<Tensor* const> g) {
        const std::size_t ocols = adj.cols();
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (!g[k]) continue;
          Tensor& gk = *g[k];
          const std::size_t r0 = axis == 0 ? offsets[k] : 0;
          const std::size_t c0 = axis == 1 ? offsets[k] : 0;
          for (std::size_t r = 0; r < gk.rows(); ++r) {
            for (std::size_t c = 0; c < gk.cols(); ++c) {
              gk[r * gk.cols() + c] += adj[(r + r0) * ocols + (c + c0)];
            }
          }
        }
      });
}

Var reshape(const Var& a, Shape shape) {
  Tape& tape = a.tape();
  if (shape_size(shape) != a.value().size()) {
    shape_fail(tape, "reshape", "cannot reshape " + a.value().shape_string() +
                                    " to " + shape_string(shape));
  }
  return tape.record("reshape", {a}, a.value().reshaped(std::move(shape)),
                     [](const Tensor&, const Tensor& adj,
                        std::span<Tensor* const> g) { accumulate(g[0], adj); });
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows) {
  Tape& tape = a.tape();
  const Tensor& av = a.value();
  if (av.rank() != 1 && av.rank() != 2) {
    shape_fail(tape, "gather_rows", "expected a vector or matrix, got " +
                                        av.shape_string());
  }
  const std::size_t cols = av.cols();
  Shape shape = av.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= av.rows()) {
      shape_fail(tape, "gather_rows", "row index " + std::to_string(rows[i]) +
                                          " out of range for " + av.shape_string());
    }
    for (std::size_t c = 0; c < cols; ++c) out[i * cols + c] = av[rows[i] * cols + c];
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return tape.record("gather_rows", {a}, std::move(out),
                     [idx, cols](const Tensor&, const Tensor& adj,
                                 std::span<Tensor* const> g) {
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         for (std::size_t c = 0; c < cols; ++c) {
                           (*g[0])[idx[i] * cols + c] += adj[i * cols + c];
                         }
                       }
                     });
}

Var cholesky(const Var& a) {
  Tape& tape = a.tape();
  const Tensor& av = a.value();
  require_square(tape, "cholesky", av);
  const RowMatrix sym = 0.5 * (av.matrix() + av.matrix().transpose());
  Eigen::LLT<RowMatrix> llt(sym);
  const std::string where = "cholesky (node " + std::to_string(tape.size()) + ")";
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefiniteError(where + ": matrix not positive definite", {});
  }
  RowMatrix l = llt.matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) {
      throw NotPositiveDefiniteError(where + ": non-positive pivot", {});
    }
  }
  return tape.record(
      "cholesky", {a}, Tensor::from_eigen(l),
      [](const Tensor& out, const Tensor& adj, std::span<Tensor* const> g) {
        // P = Phi(L^T Lbar) with Phi = lower triangle, halved diagonal;
        // S = L^-T P L^-1; the input adjoint is the symmetric part of S.
        const auto l = out.matrix();
        RowMatrix lbar = adj.matrix().triangularView<Eigen::Lower>();
        RowMatrix p = (l.transpose() * lbar).triangularView<Eigen::Lower>();
        p.diagonal() *= 0.5;
        RowMatrix s = l.transpose().triangularView<Eigen::Upper>().solve(p);
        s = l.transpose().triangularView<Eigen::Upper>().solve(s.transpose().eval())
                .transpose();
        g[0]->matrix() += 0.5 * (s + s.transpose());
      });
}

Var triangular_solve(const Var& t, const Var& b, Triangle tri) {
  Tape& tape = common_tape(t, b);
  const Tensor& tv = t.value();
  const Tensor& bv = b.value();
  require_square(tape, "triangular_solve", tv);
  if ((bv.rank() != 1 && bv.rank() != 2) || bv.rows() != tv.rows()) {
    shape_fail(tape, "triangular_solve", "cannot solve " + tv.shape_string() +
                                             " against " + bv.shape_string());
  }
  for (std::size_t i = 0; i < tv.rows(); ++i) {
    if (tv(i, i) == 0.0) {
      throw NumericalError("triangular_solve (node " + std::to_string(tape.size()) +
                           "): singular triangular matrix");
    }
  }
  Tensor out(bv.shape());
  if (tri == Triangle::Lower) {
    out.matrix() = tv.matrix().triangularView<Eigen::Lower>().solve(bv.matrix());
  } else {
    out.matrix() = tv.matrix().triangularView<Eigen::Upper>().solve(bv.matrix());
  }
  const Tensor* tp = &tv;
  return tape.record(
      "triangular_solve", {t, b}, std::move(out),
      [tp, tri](const Tensor& x, const Tensor& adj, std::span<Tensor* const> g) {
        // X = T^-1 B:  Bbar = T^-T Xbar,  Tbar = -Bbar X^T restricted to T's triangle.
        RowMatrix bbar;
        if (tri == Triangle::Lower) {
          bbar = tp->matrix().transpose().triangularView<Eigen::Upper>().solve(adj.matrix());
        } else {
          bbar = tp->matrix().transpose().triangularView<Eigen::Lower>().solve(adj.matrix());
        }
        if (g[0]) {
          RowMatrix tbar = -bbar * x.matrix().transpose();
          if (tri == Triangle::Lower) {
            g[0]->matrix() += RowMatrix(tbar.triangularView<Eigen::Lower>());
          } else {
            g[0]->matrix() += RowMatrix(tbar.triangularView<Eigen::Upper>());
          }
        }
        if (g[1]) g[1]->matrix() += bbar;
      });
}

Var diag(const Var& a) {
  Tape& tape = a.tape();
  require_square(tape, "diag", a.value());
  return tape.record("diag", {a},
                     Tensor::vector_from_eigen(a.value().matrix().diagonal()),
                     [](const Tensor&, const Tensor& adj,
                        std::span<Tensor* const> g) {
                       const std::size_t n = adj.size();
                       for (std::size_t i = 0; i < n; ++i) (*g[0])(i, i) += adj[i];
                     });
}

Var trace(const Var& a) {
  Tape& tape = a.tape();
  require_square(tape, "trace", a.value());
  return tape.record("trace", {a}, Tensor::scalar(a.value().matrix().trace()),
                     [](const Tensor&, const Tensor& adj,
                        std::span<Tensor* const> g) {
                       const std::size_t n = g[0]->rows();
                       for (std::size_t i = 0; i < n; ++i) (*g[0])(i, i) += adj[0];
                     });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator/(const Var& a, const Var& b) { return div(a, b); }
Var operator-(const Var& a) { return neg(a); }

namespace {
Var scalar_const(const Var& like, double s) {
  return like.tape().constant(Tensor::scalar(s));
}
}  // namespace

Var operator+(const Var& a, double s) { return add(a, scalar_const(a, s)); }
Var operator+(double s, const Var& a) { return add(scalar_const(a, s), a); }
Var operator-(const Var& a, double s) { return sub(a, scalar_const(a, s)); }
Var operator-(double s, const Var& a) { return sub(scalar_const(a, s), a); }
Var operator*(const Var& a, double s) { return mul(a, scalar_const(a, s)); }
Var operator*(double s, const Var& a) { return mul(scalar_const(a, s), a); }
Var operator/(const Var& a, double s) { return div(a, scalar_const(a, s)); }
Var operator/(double s, const Var& a) { return div(scalar_const(a, s), a); }

}  // namespace dgp

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dgp/autodiff.hpp"

// Differentiable primitives recorded on a Tape.
//
// Elementwise binary ops broadcast in two ways only: a single-element tensor
// against anything, and a rank-1 vector of length C against an R x C matrix
// (the vector is repeated across rows).

namespace dgp {

enum class Triangle { Lower, Upper };

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// Pairwise squared Euclidean distances between the rows of a (N x D) and
/// b (M x D), summed from coordinate differences.
Var squared_distance(const Var& a, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var neg(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
Var tanh(const Var& a);
/// max(a, floor) elementwise; the gradient is zero where the floor is active.
Var clamp_min(const Var& a, double floor);

/// Sum of all entries (rank-0 result).
Var sum(const Var& a);
/// Sum over `axis` of a matrix (rank-1 result).
Var sum(const Var& a, std::size_t axis);
Var mean(const Var& a);
Var mean(const Var& a, std::size_t axis);

/// Entries [begin, end) along `axis`.
Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end);
Var concat(std::span<const Var> parts, std::size_t axis);
Var reshape(const Var& a, Shape shape);
/// Rows of a matrix picked by index (repeats allowed).
Var gather_rows(const Var& a, std::span<const std::size_t> rows);

/// Lower Cholesky factor of the symmetric part (A + A^T)/2.
Var cholesky(const Var& a);
/// Solves T X = B for X, T triangular. B may be a matrix or a vector.
Var triangular_solve(const Var& t, const Var& b, Triangle tri);
Var diag(const Var& a);
Var trace(const Var& a);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(const Var& a, double s);
Var operator-(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator*(double s, const Var& a);
Var operator/(const Var& a, double s);
Var operator/(double s, const Var& a);

}  // namespace dgp

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lcsim::attention {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  /// Rows [begin, end) as a new matrix.
  Matrix slice_rows(std::size_t begin, std::size_t end) const;
};

/// Online-softmax state of a query block against a subset of keys: the
/// unnormalized output in max-shifted exponent space plus per-row max and
/// denominator. Rows that saw no visible key have max = -inf, denominator 0.
struct PartialAttention {
  Matrix partial_output;
  std::vector<double> running_max;
  std::vector<double> running_denominator;
};

/// softmax(Q K^T / sqrt(d) + causal mask) V in one pass. Query row r may attend
/// key j iff j <= causal_offset + r; pass causal_offset >= K.rows for no mask.
/// Every query row must see at least one key.
Matrix reference_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                           std::int64_t causal_offset);

/// Same masking rule, with keys indexed locally in the shard; for a shard that
/// starts at absolute key position s, pass (global causal_offset - s).
PartialAttention partial_attention(const Matrix& q, const Matrix& k_shard, const Matrix& v_shard,
                                   std::int64_t causal_offset);

/// Combines two states over disjoint key sets.
PartialAttention merge_states(const PartialAttention& a, const PartialAttention& b);

/// Normalizes a state into attention output; rows with no visible key are 0.
Matrix finalize(const PartialAttention& part);

/// Exact attention over the union of the shards' keys.
Matrix merge_partials(std::span<const PartialAttention> parts);

}  // namespace lcsim::attention

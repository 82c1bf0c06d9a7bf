#include "lcsim/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lcsim/errors.hpp"

namespace lcsim::attention {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_shapes(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols != k.cols || k.rows != v.rows || v.cols != q.cols) {
    throw ConfigError("attention: dimension mismatch");
  }
  if (q.cols == 0) throw ConfigError("attention: head dimension must be >= 1");
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Number of keys (from index 0) query row r can see.
std::size_t visible_keys(std::int64_t causal_offset, std::size_t r, std::size_t n) {
  const std::int64_t last = causal_offset + static_cast<std::int64_t>(r);
  if (last < 0) return 0;
  return std::min<std::size_t>(n, static_cast<std::size_t>(last) + 1);
}

}  // namespace

Matrix Matrix::slice_rows(std::size_t begin, std::size_t end) const {
  Matrix out(end - begin, cols);
  std::copy(data.begin() + static_cast<std::ptrdiff_t>(begin * cols),
            data.begin() + static_cast<std::ptrdiff_t>(end * cols), out.data.begin());
  return out;
}

Matrix reference_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                           std::int64_t causal_offset) {
  check_shapes(q, k, v);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
  Matrix out(q.rows, v.cols);
  std::vector<double> logits;
  for (std::size_t r = 0; r < q.rows; ++r) {
    const std::size_t n = visible_keys(causal_offset, r, k.rows);
    if (n == 0) throw ConfigError("reference_attention: query row sees no key");
    logits.assign(n, 0.0);
    double mx = kNegInf;
    for (std::size_t j = 0; j < n; ++j) {
      logits[j] = dot(q.row(r), k.row(j)) * scale;
      mx = std::max(mx, logits[j]);
    }
    double denom = 0.0;
    for (auto& l : logits) {
      l = std::exp(l - mx);
      denom += l;
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double w = logits[j] / denom;
      for (std::size_t c = 0; c < v.cols; ++c) out(r, c) += w * v(j, c);
    }
  }
  return out;
}

PartialAttention partial_attention(const Matrix& q, const Matrix& k_shard, const Matrix& v_shard,
                                   std::int64_t causal_offset) {
  check_shapes(q, k_shard, v_shard);
  if (k_shard.rows == 0) throw ConfigError("partial_attention: empty shard");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
  PartialAttention part{Matrix(q.rows, v_shard.cols), std::vector<double>(q.rows, kNegInf),
                        std::vector<double>(q.rows, 0.0)};
  std::vector<double> logits;
  for (std::size_t r = 0; r < q.rows; ++r) {
    const std::size_t n = visible_keys(causal_offset, r, k_shard.rows);
    if (n == 0) continue;
    logits.assign(n, 0.0);
    double mx = kNegInf;
    for (std::size_t j = 0; j < n; ++j) {
      logits[j] = dot(q.row(r), k_shard.row(j)) * scale;
      mx = std::max(mx, logits[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double w = std::exp(logits[j] - mx);
      denom += w;
      for (std::size_t c = 0; c < v_shard.cols; ++c) part.partial_output(r, c) += w * v_shard(j, c);
    }
    part.running_max[r] = mx;
    part.running_denominator[r] = denom;
  }
  return part;
}

PartialAttention merge_states(const PartialAttention& a, const PartialAttention& b) {
  if (a.partial_output.rows != b.partial_output.rows ||
      a.partial_output.cols != b.partial_output.cols) {
    throw ConfigError("merge_states: shape mismatch");
  }
  PartialAttention out{Matrix(a.partial_output.rows, a.partial_output.cols),
                       std::vector<double>(a.running_max.size(), kNegInf),
                       std::vector<double>(a.running_max.size(), 0.0)};
  for (std::size_t r = 0; r < a.partial_output.rows; ++r) {
    const double m = std::max(a.running_max[r], b.running_max[r]);
    if (m == kNegInf) continue;
    const double wa = a.running_max[r] == kNegInf ? 0.0 : std::exp(a.running_max[r] - m);
    const double wb = b.running_max[r] == kNegInf ? 0.0 : std::exp(b.running_max[r] - m);
    out.running_max[r] = m;
    out.running_denominator[r] = wa * a.running_denominator[r] + wb * b.running_denominator[r];
    for (std::size_t c = 0; c < a.partial_output.cols; ++c) {
      out.partial_output(r, c) = wa * a.partial_output(r, c) + wb * b.partial_output(r, c);
    }
  }
  return out;
}

Matrix finalize(const PartialAttention& part) {
  Matrix out(part.partial_output.rows, part.partial_output.cols);
  for (std::size_t r = 0; r < out.rows; ++r) {
    const double denom = part.running_denominator[r];
    if (!(denom > 0)) continue;
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) = part.partial_output(r, c) / denom;
  }
  return out;
}

Matrix merge_partials(std::span<const PartialAttention> parts) {
  if (parts.empty()) throw ConfigError("merge_partials: no partial states");
  const auto rows = parts.front().partial_output.rows;
  const auto cols = parts.front().partial_output.cols;
  for (const auto& p : parts) {
    if (p.partial_output.rows != rows || p.partial_output.cols != cols ||
        p.running_max.size() != rows || p.running_denominator.size() != rows) {
      throw ConfigError("merge_partials: shape mismatch");
    }
  }
  // Global max per row first so every shard is rescaled exactly once.
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double m = kNegInf;
    for (const auto& p : parts) m = std::max(m, p.running_max[r]);
    if (m == kNegInf) continue;
    double denom = 0.0;
    for (const auto& p : parts) {
      if (p.running_max[r] == kNegInf) continue;
      const double w = std::exp(p.running_max[r] - m);
      denom += w * p.running_denominator[r];
      for (std::size_t c = 0; c < cols; ++c) out(r, c) += w * p.partial_output(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= denom;
  }
  return out;
}

}  // namespace lcsim::attention

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "lcsim/attention.hpp"
#include "lcsim/errors.hpp"

using namespace lcsim;
using namespace lcsim::attention;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(r, c);
  for (auto& x : m.data) x = g(rng);
  return m;
}

// Independent oracle: plain double loop, two passes, no shared helpers.
Matrix naive(const Matrix& q, const Matrix& k, const Matrix& v, long offset) {
  Matrix out(q.rows, v.cols);
  for (std::size_t i = 0; i < q.rows; ++i) {
    std::vector<double> w;
    for (std::size_t j = 0; j < k.rows; ++j) {
      if (static_cast<long>(j) > offset + static_cast<long>(i)) break;
      double s = 0;
      for (std::size_t t = 0; t < q.cols; ++t) s += q(i, t) * k(j, t);
      w.push_back(s / std::sqrt(static_cast<double>(q.cols)));
    }
    const double mx = *std::max_element(w.begin(), w.end());
    double z = 0;
    for (double& x : w) z += (x = std::exp(x - mx));
    for (std::size_t j = 0; j < w.size(); ++j)
      for (std::size_t t = 0; t < v.cols; ++t) out(i, t) += w[j] / z * v(j, t);
  }
  return out;
}

double rel_err(const Matrix& a, const Matrix& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    num = std::max(num, std::abs(a.data[i] - b.data[i]));
    den = std::max(den, std::abs(b.data[i]));
  }
  return den > 0 ? num / den : num;
}

std::vector<PartialAttention> shard(const Matrix& q, const Matrix& k, const Matrix& v, long offset,
                                    const std::vector<std::size_t>& cuts) {
  std::vector<PartialAttention> parts;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    parts.push_back(partial_attention(q, k.slice_rows(cuts[s], cuts[s + 1]),
                                      v.slice_rows(cuts[s], cuts[s + 1]),
                                      offset - static_cast<long>(cuts[s])));
  }
  return parts;
}

}  // namespace

TEST(ReferenceAttention, SingleKeyReturnsValueRow) {
  Matrix q(1, 3, 0.0), k(1, 3, 0.0), v(1, 3);
  v.data = {1.5, -2.0, 7.0};
  const auto out = reference_attention(q, k, v, 0);
  EXPECT_EQ(out.data, v.data);
}

TEST(ReferenceAttention, IdenticalKeysGiveMeanOfValues) {
  std::mt19937_64 rng(1);
  const Matrix q = random_matrix(3, 4, rng);
  Matrix k(5, 4);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t t = 0; t < 4; ++t) k(j, t) = 0.3 * t;
  const Matrix v = random_matrix(5, 4, rng);
  const auto out = reference_attention(q, k, v, 100);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t t = 0; t < 4; ++t) {
      double mean = 0;
      for (std::size_t j = 0; j < 5; ++j) mean += v(j, t) / 5;
      EXPECT_NEAR(out(i, t), mean, 1e-12);
    }
}

TEST(ReferenceAttention, MatchesNaiveOracle) {
  std::mt19937_64 rng(2);
  for (long offset : {60L, 0L, 200L}) {
    const Matrix q = random_matrix(4, 8, rng), k = random_matrix(64, 8, rng), v = random_matrix(64, 8, rng);
    EXPECT_LE(rel_err(reference_attention(q, k, v, offset), naive(q, k, v, offset)), 1e-12);
  }
}

TEST(ReferenceAttention, DimensionMismatch) {
  EXPECT_THROW(reference_attention(Matrix(2, 3), Matrix(4, 2), Matrix(4, 3), 10), ConfigError);
  EXPECT_THROW(reference_attention(Matrix(2, 3), Matrix(4, 3), Matrix(5, 3), 10), ConfigError);
  EXPECT_THROW(partial_attention(Matrix(2, 3), Matrix(0, 3), Matrix(0, 3), 0), ConfigError);
}

TEST(PartialAttention, SingleShardIsReference) {
  std::mt19937_64 rng(3);
  const Matrix q = random_matrix(4, 8, rng), k = random_matrix(32, 8, rng), v = random_matrix(32, 8, rng);
  const auto part = partial_attention(q, k, v, 28);
  EXPECT_LE(rel_err(finalize(part), reference_attention(q, k, v, 28)), 1e-14);
  const std::vector<PartialAttention> one{part};
  EXPECT_LE(rel_err(merge_partials(one), finalize(part)), 1e-15);
}

TEST(PartialAttention, OneKeyShard) {
  std::mt19937_64 rng(4);
  const Matrix q = random_matrix(2, 4, rng), k = random_matrix(1, 4, rng), v = random_matrix(1, 4, rng);
  const auto part = partial_attention(q, k, v, 5);
  for (std::size_t i = 0; i < 2; ++i) {
    double logit = 0;
    for (std::size_t t = 0; t < 4; ++t) logit += q(i, t) * k(0, t);
    EXPECT_NEAR(part.running_max[i], logit / 2.0, 1e-14);
    EXPECT_EQ(part.running_denominator[i], 1.0);
  }
}

TEST(PartialAttention, MaskedRowsHaveEmptyState) {
  std::mt19937_64 rng(5);
  const Matrix q = random_matrix(3, 4, rng), k = random_matrix(8, 4, rng), v = random_matrix(8, 4, rng);
  // Shard starts 1 position after row 0's last visible key.
  const auto part = partial_attention(q, k, v, -1);
  EXPECT_EQ(part.running_denominator[0], 0.0);
  EXPECT_TRUE(std::isinf(part.running_max[0]));
  EXPECT_GT(part.running_denominator[1], 0.0);
}

TEST(MergePartials, TwoDisjointShards) {
  std::mt19937_64 rng(6);
  const Matrix q = random_matrix(4, 8, rng), k = random_matrix(64, 8, rng), v = random_matrix(64, 8, rng);
  const auto parts = shard(q, k, v, 60, {0, 23, 64});
  EXPECT_LE(rel_err(merge_partials(parts), reference_attention(q, k, v, 60)), 1e-6);
}

TEST(MergePartials, RandomSplitsAgreeWithReference) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(8, 256)(rng);
    const std::size_t qn = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    const std::size_t d = std::uniform_int_distribution<std::size_t>(1, 32)(rng);
    const int p = std::array<int, 3>{2, 4, 8}[trial % 3];
    const long offset = static_cast<long>(n - qn);
    const Matrix q = random_matrix(qn, d, rng, 2.0), k = random_matrix(n, d, rng, 2.0), v = random_matrix(n, d, rng);
    std::vector<std::size_t> cuts{0, n};
    std::uniform_int_distribution<std::size_t> pos(1, n - 1);
    while (cuts.size() < static_cast<std::size_t>(p) + 1) {
      const auto c = pos(rng);
      if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
    }
    std::sort(cuts.begin(), cuts.end());
    const auto ref = reference_attention(q, k, v, offset);
    auto parts = shard(q, k, v, offset, cuts);
    const auto merged = merge_partials(parts);
    EXPECT_LE(rel_err(merged, ref), 1e-6);
    std::shuffle(parts.begin(), parts.end(), rng);
    EXPECT_LE(rel_err(merge_partials(parts), merged), 1e-9);
  }
}

TEST(MergePartials, PairwiseMergeIsAssociativeAndCommutative) {
  std::mt19937_64 rng(8);
  const Matrix q = random_matrix(3, 6, rng), k = random_matrix(48, 6, rng), v = random_matrix(48, 6, rng);
  const auto parts = shard(q, k, v, 45, {0, 10, 30, 48});
  const auto left = finalize(merge_states(merge_states(parts[0], parts[1]), parts[2]));
  const auto right = finalize(merge_states(parts[0], merge_states(parts[2], parts[1])));
  EXPECT_LE(rel_err(left, right), 1e-12);
  EXPECT_LE(rel_err(left, reference_attention(q, k, v, 45)), 1e-12);
}

TEST(MergePartials, OutputIsConvexCombinationOfValues) {
  std::mt19937_64 rng(9);
  const Matrix q = random_matrix(5, 4, rng, 3.0), k = random_matrix(40, 4, rng, 3.0), v = random_matrix(40, 4, rng);
  const auto out = merge_partials(shard(q, k, v, 35, {0, 7, 19, 40}));
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t visible = 35 + i + 1;
    for (std::size_t t = 0; t < 4; ++t) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t j = 0; j < visible; ++j) {
        lo = std::min(lo, v(j, t));
        hi = std::max(hi, v(j, t));
      }
      EXPECT_GE(out(i, t), lo - 1e-12);
      EXPECT_LE(out(i, t), hi + 1e-12);
    }
  }
}

TEST(MergePartials, Errors) {
  EXPECT_THROW(merge_partials(std::vector<PartialAttention>{}), ConfigError);
  std::mt19937_64 rng(10);
  const Matrix q = random_matrix(2, 4, rng), k = random_matrix(4, 4, rng), v = random_matrix(4, 4, rng);
  const Matrix q3 = random_matrix(3, 4, rng);
  const std::vector<PartialAttention> mixed{partial_attention(q, k, v, 10), partial_attention(q3, k, v, 10)};
  EXPECT_THROW(merge_partials(mixed), ConfigError);
}

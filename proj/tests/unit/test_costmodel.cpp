#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "lcsim/costmodel.hpp"
#include "lcsim/errors.hpp"
#include "lcsim/presets.hpp"
#include "support.hpp"

using namespace lcsim;
using lcsim::testing::ratio_hw;
using lcsim::testing::tiny_model;

namespace {

// Per-chunk walk of a whole prefill on one predictor, chunks of size c.
double prefill_by_chunks(const RuntimePredictor& p, std::int64_t n, std::int64_t c) {
  double t = 0.0;
  for (std::int64_t done = 0; done < n; done += c) {
    const std::int64_t cc = std::min(c, n - done);
    t += p.predict_chunk_time(done, cc, 0);
  }
  return t;
}

}  // namespace

TEST(AttentionFlops, ZeroAndDirectEvaluation) {
  EXPECT_EQ(attention_flops(0, model_preset("llama3-70b")), 0.0);
  EXPECT_EQ(attention_flops(2, tiny_model(2, 1, 4, 1)), 64.0);
}

TEST(AttentionFlops, Llama70bMillionTokensOrderOfExaflops) {
  const ModelConfig m = model_preset("llama3-70b");
  const double n = 1e6;
  // Layer-by-layer brute force: causal attention plus the linear aggregate.
  double attn = 0.0, total = 0.0;
  for (int layer = 0; layer < m.num_layers; ++layer) {
    const double a = 2.0 * n * n * 128.0 * 64.0;
    attn += a;
    total += a + n * m.mlp_flops_per_token;
  }
  EXPECT_NEAR(attention_flops(1'000'000, m) / attn, 1.0, 1e-12);
  EXPECT_NEAR(attn, 1.31e18, 0.01e18);
  // "Order of 2.4 exaFLOPs": within a factor of two.
  EXPECT_GE(total, 1.2e18);
  EXPECT_LE(total, 4.8e18);
}

TEST(AttentionFlops, ExactlyQuadratic) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::int64_t> n(0, 5'000'000);
  const ModelConfig m = model_preset("llama3-8b");
  for (int k = 0; k < 1000; ++k) {
    const auto x = n(rng);
    EXPECT_DOUBLE_EQ(attention_flops(2 * x, m), 4.0 * attention_flops(x, m));
  }
}

TEST(KvCacheBytes, SeventyBAtOneMillionAndUnitCase) {
  EXPECT_EQ(kv_cache_bytes(1'000'000, model_preset("llama3-70b")), 3.2768e11);
  EXPECT_EQ(kv_cache_bytes(1, tiny_model(1, 1, 1, 1)), 4.0);
  EXPECT_EQ(kv_cache_bytes(0, model_preset("llama3-70b")), 0.0);
  ModelConfig fp8 = model_preset("llama3-70b");
  fp8.bytes_per_element = 1.0;
  EXPECT_EQ(kv_cache_bytes(1'000'000, fp8), 3.2768e11 / 2);
}

TEST(KvCacheBytes, Linear) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::int64_t> n(0, 10'000'000);
  const ModelConfig m = model_preset("llama3-70b");
  for (int k = 0; k < 1000; ++k) {
    const auto a = n(rng), b = n(rng);
    EXPECT_NEAR(kv_cache_bytes(a + b, m), kv_cache_bytes(a, m) + kv_cache_bytes(b, m),
                1e-12 * kv_cache_bytes(a + b, m) + 1e-9);
  }
}

TEST(ChunkAttentionCost, Examples) {
  const ModelConfig m = tiny_model(32, 8, 128, 1);
  const auto c = chunk_attention_cost(3, 64, m);
  EXPECT_EQ(c.flops_per_layer, 4.0 * 3 * 64 * 64 * 128 * 32);
  EXPECT_EQ(c.read_bytes_per_layer, 4.0 * 3 * 64 * 128 * 8);
  EXPECT_EQ(c.arithmetic_intensity, 256.0);
  EXPECT_EQ(chunk_attention_cost(1, 40, tiny_model(8, 1, 128, 1)).arithmetic_intensity, 320.0);
  EXPECT_EQ(chunk_attention_cost(1, 1, tiny_model(4, 4, 8, 1)).arithmetic_intensity, 1.0);
  const ModelConfig m8 = model_preset("llama3-8b");
  EXPECT_EQ(chunk_attention_cost(2, 32, m8).flops, chunk_attention_cost(2, 32, m8).flops_per_layer * 32);
}

TEST(ChunkAttentionCost, RejectsZeroIndexOrChunk) {
  EXPECT_THROW(chunk_attention_cost(0, 32, tiny_model()), ConfigError);
  EXPECT_THROW(chunk_attention_cost(1, 0, tiny_model()), ConfigError);
}

TEST(ChunkAttentionCost, IntensityIndependentOfIndex) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::int64_t> idx(1, 100'000), chunk(1, 8192), kv(1, 16), grp(1, 8);
  for (int k = 0; k < 1000; ++k) {
    const auto hkv = kv(rng), g = grp(rng);
    const ModelConfig m = tiny_model(hkv * g, hkv, 128, 4);
    const auto c = chunk(rng);
    const auto cost = chunk_attention_cost(idx(rng), c, m);
    EXPECT_NEAR(cost.arithmetic_intensity, static_cast<double>(c * g), 1e-9 * c * g);
  }
}

TEST(ChunkAttentionCost, ChunkSumWithinDiscretizationBound) {
  const ModelConfig m = model_preset("llama3-8b");
  for (std::int64_t c : {32, 256, 4096}) {
    for (std::int64_t n : std::vector<std::int64_t>{c, 10 * c, 24576, 100000 / c * c}) {
      double sum = 0.0;
      for (std::int64_t i = 1; i <= n / c; ++i) sum += chunk_attention_cost(i, c, m).flops;
      const double bound = 2.0 * n * c * 128.0 * 32.0 * 32.0;
      EXPECT_LE(std::abs(sum - attention_flops(n, m)), bound * (1 + 1e-12)) << n << " " << c;
    }
  }
}

TEST(MinEfficientChunk, Examples) {
  // ratio 295, gqa 8 -> 36.9 -> 64
  EXPECT_EQ(min_efficient_chunk(tiny_model(8, 1, 128, 1), ratio_hw(295e12, 1e12)), 64);
  EXPECT_EQ(min_efficient_chunk(tiny_model(1, 1, 128, 1), ratio_hw(100e12, 1e12)), 128);
  EXPECT_EQ(min_efficient_chunk(tiny_model(8, 1, 128, 1), ratio_hw(8e12, 1e12)), 32);
  EXPECT_EQ(min_efficient_chunk(tiny_model(8, 1, 128, 1), ratio_hw(1e12, 1e12)), 32);
  // The result satisfies the inequality and one quantum less would not.
  const auto hw = hardware_preset("h100-80gb");
  const auto m = model_preset("llama3-70b");
  const auto c = min_efficient_chunk(m, hw);
  EXPECT_GE(c * m.gqa_ratio(), hw.peak_flops / hw.mem_bandwidth);
  EXPECT_LT((c - kChunkQuantum) * m.gqa_ratio(), hw.peak_flops / hw.mem_bandwidth);
}

TEST(QuantizeChunk, RoundsUpWithFloor) {
  EXPECT_EQ(quantize_chunk(0), 32);
  EXPECT_EQ(quantize_chunk(1), 32);
  EXPECT_EQ(quantize_chunk(32), 32);
  EXPECT_EQ(quantize_chunk(33), 64);
}

TEST(Utilization, Examples) {
  const auto hw = ratio_hw(1e15, 1e12);
  const auto u = utilization(50e12, 0.0, 0.1, 1, hw);
  EXPECT_DOUBLE_EQ(u.mfu, 0.5);
  EXPECT_EQ(u.mbu, 0.0);
  const auto z = utilization(0, 0, 1.0, 4, hw);
  EXPECT_EQ(z.mfu, 0.0);
  EXPECT_EQ(z.mbu, 0.0);
  // Not clamped.
  EXPECT_GT(utilization(2e15, 0, 1.0, 1, hw).mfu, 1.0);
  EXPECT_THROW(utilization(1, 1, 0.0, 1, hw), ConfigError);
}

TEST(Configs, Validation) {
  ModelConfig m = tiny_model(3, 2, 4, 1);
  EXPECT_THROW(m.validate(), ConfigError);
  m = tiny_model(2, 4, 4, 1);
  EXPECT_THROW(m.validate(), ConfigError);
  m = tiny_model();
  m.head_dim = 0;
  EXPECT_THROW(m.validate(), ConfigError);
  HardwareProfile hw = hardware_preset("h100-80gb");
  hw.fixed_step_overhead = -1;
  EXPECT_THROW(hw.validate(), ConfigError);
  const auto m8 = model_preset("llama3-8b");
  EXPECT_THROW((ParallelismConfig{3, 1, 1}.validate(m8)), InfeasibleConfig);
  EXPECT_NO_THROW((ParallelismConfig{16, 1, 1}.validate(m8)));
  EXPECT_THROW((ParallelismConfig{1, 0, 1}.validate(m8)), InfeasibleConfig);
  EXPECT_THROW(RuntimePredictor(m8, hardware_preset("h100-80gb"), {6, 1, 1}), InfeasibleConfig);
}

TEST(Predictor, OverheadFloorAndMonotone) {
  const RuntimePredictor p(model_preset("llama3-8b"), hardware_preset("h100-80gb"), {8, 1, 1});
  EXPECT_GE(p.predict_chunk_time(0, 0, 1), hardware_preset("h100-80gb").fixed_step_overhead);
  EXPECT_THROW(p.predict_chunk_time(0, 0, 0), ConfigError);
  const std::vector<std::int64_t> kvs = {0, 1000, 100'000, 1'000'000, 4'000'000};
  const std::vector<std::int64_t> cs = {0, 1, 32, 64, 512, 4096, 8192};
  const std::vector<std::int64_t> ds = {0, 1, 16, 256};
  for (auto kv : kvs) {
    for (std::size_t ci = 0; ci < cs.size(); ++ci) {
      for (std::size_t di = 0; di < ds.size(); ++di) {
        if (cs[ci] + ds[di] == 0) continue;
        const double t = p.predict_chunk_time(kv, cs[ci], ds[di], ds[di] * 1000);
        if (ci + 1 < cs.size()) EXPECT_LE(t, p.predict_chunk_time(kv, cs[ci + 1], ds[di], ds[di] * 1000));
        if (di + 1 < ds.size()) EXPECT_LE(t, p.predict_chunk_time(kv, cs[ci], ds[di + 1], ds[di + 1] * 1000));
        EXPECT_LE(t, p.predict_chunk_time(kv + 1000, cs[ci], ds[di], ds[di] * 1000));
      }
    }
  }
}

TEST(Predictor, DoublingChunkNeverFaster) {
  const RuntimePredictor p(model_preset("llama3-70b"), hardware_preset("a100-80gb"), {8, 2, 2});
  for (std::int64_t kv : {0, 50'000, 2'000'000}) {
    for (std::int64_t c = 1; c <= 8192; c *= 2) {
      EXPECT_LE(p.predict_chunk_time(kv, c, 3, 9000), p.predict_chunk_time(kv, 2 * c, 3, 9000));
    }
  }
}

TEST(Predictor, SmallChunkSlowdownMatchesCalibrationTarget) {
  // 1M-token prefill at chunk 32 vs 4096 on one 8-GPU server.
  const RuntimePredictor p(model_preset("llama3-8b"), hardware_preset("h100-80gb"), {8, 1, 1});
  const double ratio = prefill_by_chunks(p, 1'000'000, 32) / prefill_by_chunks(p, 1'000'000, 4096);
  EXPECT_NEAR(ratio, 1.75, 0.35);
}

TEST(Predictor, KvpSplitsAttentionOnly) {
  const auto m = model_preset("llama3-8b");
  const auto hw = hardware_preset("h100-80gb");
  const RuntimePredictor one(m, hw, {8, 1, 1});
  const RuntimePredictor four(m, hw, {8, 1, 4});
  StageWork a, b;
  one.add(a, {2'000'000, 1, 1, false});
  four.add(b, {2'000'000, 1, 4, false});
  EXPECT_NEAR(b.attention_time * 4, a.attention_time, 1e-12);
  EXPECT_EQ(one.cost(a).linear_time, four.cost(b).linear_time);
  EXPECT_GT(four.cost(b).kvp_comm_time, 0.0);
  EXPECT_EQ(one.cost(a).kvp_comm_time, 0.0);
}

TEST(Predictor, AttentionOnlySegmentsCarryNoLinearWork) {
  const RuntimePredictor p(model_preset("llama3-8b"), hardware_preset("h100-80gb"), {8, 1, 2});
  StageWork w;
  p.add(w, {1'000'000, 64, 2, true});
  EXPECT_FALSE(w.any_linear);
  EXPECT_EQ(w.model_flops, 0.0);
  const auto c = p.cost(w);
  EXPECT_EQ(c.linear_time, 0.0);
  EXPECT_GT(c.attention_time, 0.0);
}

TEST(Predictor, CalibrationFitsMedianRatio) {
  RuntimePredictor p(model_preset("llama3-8b"), hardware_preset("h100-80gb"), {8, 1, 1});
  std::vector<ProfileRow> rows;
  for (std::int64_t kv : {0, 10'000, 100'000}) {
    rows.push_back({kv, 512, 4, 1.5 * p.predict_chunk_time(kv, 512, 4)});
  }
  rows.push_back({0, 32, 0, 100.0});  // outlier, ignored by the median
  p.calibrate(rows);
  EXPECT_NEAR(p.calibration_scale(), 1.5, 1e-12);
  const double base = RuntimePredictor(model_preset("llama3-8b"), hardware_preset("h100-80gb"), {8, 1, 1})
                          .predict_chunk_time(5000, 256, 2);
  EXPECT_NEAR(p.predict_chunk_time(5000, 256, 2), 1.5 * base, 1e-12);
  EXPECT_THROW(p.set_calibration_scale(0.0), ConfigError);
}

TEST(ProfileTable, ParsesAndRejects) {
  const auto dir = std::filesystem::temp_directory_path() / "lcsim_profile_test";
  std::filesystem::create_directories(dir);
  const auto good = dir / "good.csv";
  std::ofstream(good) << "kv_len,chunk_tokens,decode_tokens,seconds\n0,512,4,0.01\n\n1000,32,0,0.002\n";
  const auto rows = load_profile_table(good);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].kv_len, 1000);
  EXPECT_EQ(rows[1].seconds, 0.002);

  const auto bad = dir / "bad.csv";
  std::ofstream(bad) << "kv_len,chunk_tokens,decode_tokens,seconds\n0,512,4,0.01\n5,x,1,1\n";
  try {
    load_profile_table(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  const auto header = dir / "header.csv";
  std::ofstream(header) << "a,b\n";
  EXPECT_THROW(load_profile_table(header), ParseError);
  EXPECT_THROW(load_profile_table(dir / "missing.csv"), ParseError);
}

TEST(Presets, KnownAndUnknown) {
  for (const auto& name : model_preset_names()) EXPECT_NO_THROW(model_preset(name).validate());
  for (const auto& name : hardware_preset_names()) EXPECT_NO_THROW(hardware_preset(name).validate());
  EXPECT_THROW(model_preset("gpt-5"), ConfigError);
  EXPECT_THROW(hardware_preset("tpu"), ConfigError);
}

#include <doctest.h>

#include <map>

#include "gramdyn/frameset.hpp"
#include "gramdyn/gram.hpp"
#include "gramdyn/parallel.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace gramdyn;
using gramdyn::testing::gram_stats_oracle;
using gramdyn::testing::tiny_frameset;

namespace {

RowMatrix<double> random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  SequentialRng rng(seed, 5);
  RowMatrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("gram of the identity is scaled by 1/sqrt(c)") {
  const RowMatrix<double> eye = RowMatrix<double>::Identity(2, 2);
  const auto g = gram_similarity(eye, eye, 2);
  CHECK(g(0, 0) == doctest::Approx(0.70710678).epsilon(1e-8));
  CHECK(g(1, 1) == doctest::Approx(0.70710678).epsilon(1e-8));
  CHECK(g(0, 1) == 0.0);
  CHECK(g(1, 0) == 0.0);
}

TEST_CASE("gram of zeros is zero") {
  const RowMatrix<double> zero = RowMatrix<double>::Zero(3, 4);
  CHECK(gram_similarity(zero, random_matrix(3, 4, 1), 4).isZero(0.0));
}

TEST_CASE("gram matches a triple loop") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = random_matrix(4, 3, seed);
    const auto b = random_matrix(4, 3, seed + 100);
    const auto g = gram_similarity(a, b, 3);
    for (int p = 0; p < 4; ++p) {
      for (int q = 0; q < 4; ++q) {
        double dot = 0;
        for (int k = 0; k < 3; ++k) dot += a(p, k) * b(q, k);
        CHECK(std::abs(g(p, q) - dot / std::sqrt(3.0)) < 1e-6);
      }
    }
  }
}

TEST_CASE("gram shape errors") {
  CHECK_THROWS_AS(gram_similarity(random_matrix(4, 3, 0), random_matrix(5, 3, 0), 3), SchemaError);
  CHECK_THROWS_AS(gram_similarity(random_matrix(4, 3, 0), random_matrix(4, 3, 0), 4), SchemaError);
}

TEST_CASE("window indices") {
  const WindowSpec w{3, 2};
  CHECK(window_indices(6, w, 24) == std::vector<std::size_t>{0, 2, 4, 8, 10, 12});
  CHECK(window_indices(0, w, 24) == std::vector<std::size_t>{2, 4, 6});
  CHECK(window_indices(0, w, 2) == std::vector<std::size_t>{1});
  CHECK(window_indices(23, w, 24) == std::vector<std::size_t>{17, 19, 21});
  // Strided set empty on both sides: nearest other frame.
  CHECK(window_indices(1, {1, 5}, 3) == std::vector<std::size_t>{0});
  CHECK_THROWS_AS((WindowSpec{0, 1}.validate()), ValidationError);
  CHECK_THROWS_AS((WindowSpec{1, 0}.validate()), ValidationError);
}

TEST_CASE("window property: ascending, excludes t, within range, never empty") {
  for (std::size_t F = 2; F < 12; ++F) {
    for (int n = 1; n < 4; ++n) {
      for (int stride = 1; stride < 5; ++stride) {
        for (std::size_t t = 0; t < F; ++t) {
          const auto idx = window_indices(t, {n, stride}, F);
          REQUIRE_FALSE(idx.empty());
          CHECK(std::is_sorted(idx.begin(), idx.end()));
          CHECK(std::find(idx.begin(), idx.end(), t) == idx.end());
          CHECK(idx.back() < F);
          CHECK(idx.size() <= static_cast<std::size_t>(2 * n));
        }
      }
    }
  }
}

TEST_CASE("streaming stats equal the full-matrix oracle") {
  const FrameSet fs = tiny_frameset(
      {.frames = 4, .height = 8, .width = 16, .patch = 4, .channels = 4, .layers = {1, 2, 3}, .seed = 7});
  REQUIRE(fs.info.tokens() == 8);
  for (StatKind kind : {StatKind::QQ, StatKind::QK, StatKind::KK}) {
    for (const WindowSpec w : {WindowSpec{3, 2}, WindowSpec{1, 1}, WindowSpec{2, 1}}) {
      const LayerGroup group{kind, {1, 3}};
      const auto fast = aggregate_stats(fs, group, w);
      const auto slow = gram_stats_oracle(fs, group, w);
      CHECK((fast.mean - slow.mean).cwiseAbs().maxCoeff() < 1e-5);
      CHECK((fast.variance - slow.variance).cwiseAbs().maxCoeff() < 1e-5);
      CHECK(fast.variance.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("identical frames have zero variance") {
  FrameSet fs = tiny_frameset({.frames = 5});
  auto q = fs.queries.at(1).as_f32();
  const std::size_t per_frame = fs.info.tokens() * fs.info.channels;
  for (std::size_t f = 1; f < 5; ++f) {
    std::copy_n(q.begin(), per_frame, q.begin() + static_cast<std::ptrdiff_t>(f * per_frame));
  }
  const auto stats = aggregate_stats(fs, {StatKind::QQ, {1}}, {3, 1});
  CHECK(stats.variance.isZero(0.0));
}

TEST_CASE("two frames have zero variance") {
  const FrameSet fs = tiny_frameset({.frames = 2});
  for (StatKind kind : {StatKind::QQ, StatKind::QK, StatKind::KK}) {
    CHECK(aggregate_stats(fs, {kind, {1, 4}}, {3, 2}).variance.isZero(0.0));
  }
}

TEST_CASE("constant features give the self-similarity row mean") {
  FrameSet fs = tiny_frameset({.frames = 3});
  const float value = 0.5f;
  for (float& v : fs.queries.at(4).as_f32()) v = value;
  const auto stats = aggregate_stats(fs, {StatKind::QQ, {4}}, {1, 1});
  const double expected = value * value * static_cast<double>(fs.info.channels) /
                          std::sqrt(static_cast<double>(fs.info.channels));
  CHECK((stats.mean.array() - expected).abs().maxCoeff() < 1e-6);
}

TEST_CASE("missing layer names the layer") {
  const FrameSet fs = tiny_frameset();
  try {
    aggregate_stats(fs, {StatKind::QQ, {1, 7}}, {});
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("layer 7") != std::string::npos);
  }
}

TEST_CASE("results do not depend on the thread count") {
  const FrameSet fs = tiny_frameset({.frames = 6, .height = 16, .width = 16, .patch = 2, .channels = 8});
  set_thread_count(1);
  const auto one = aggregate_stats(fs, {StatKind::QK, {1, 4}}, {});
  set_thread_count(4);
  const auto four = aggregate_stats(fs, {StatKind::QK, {1, 4}}, {});
  set_thread_count(1);
  CHECK(one.mean == four.mean);
  CHECK(one.variance == four.variance);
}

TEST_CASE("per-head option averages head-wise Gram statistics") {
  const FrameSet fs = tiny_frameset({.frames = 3, .channels = 6});
  const auto heads = aggregate_stats(fs, {StatKind::QQ, {1}}, {1, 1}, {.heads = 2});
  // Oracle: split channels into halves, build two frame sets, average.
  FrameMap expected = FrameMap::Zero(heads.mean.rows(), heads.mean.cols());
  for (int h = 0; h < 2; ++h) {
    FrameSetInfo info = fs.info;
    info.channels = 3;
    info.layer_ids = {1};
    FrameSet half = FrameSet::allocate(info);
    half.cameras = fs.cameras;
    const auto src = fs.queries.at(1).as_f32();
    auto dst = half.queries.at(1).as_f32();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = src[(i / 3) * 6 + static_cast<std::size_t>(h) * 3 + i % 3];
    }
    expected += aggregate_stats(half, {StatKind::QQ, {1}}, {1, 1}).mean / 2.0;
  }
  CHECK((heads.mean - expected).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_THROWS(aggregate_stats(fs, {StatKind::QQ, {1}}, {1, 1}, {.heads = 4}));
}

TEST_CASE("stat blob names and kind names") {
  CHECK(mean_blob_name({StatKind::QQ, {4, 5, 6, 7, 8}}) == "S_QQ_4-8.vg4t");
  CHECK(variance_blob_name({StatKind::KK, {1}}) == "V_KK_1-1.vg4t");
  for (StatKind k : {StatKind::QQ, StatKind::QK, StatKind::KK}) {
    CHECK(parse_stat_kind(stat_kind_name(k)) == k);
  }
  CHECK_THROWS_AS(parse_stat_kind("QV"), ValidationError);
}

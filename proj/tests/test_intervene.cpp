#include <doctest.h>

#include <fstream>
#include <json.hpp>

#include "gramdyn/error.hpp"
#include "gramdyn/intervene.hpp"
#include "gramdyn/random.hpp"
#include "test_support.hpp"

using namespace gramdyn;
using gramdyn::testing::TempDir;

namespace {

RowMatrix<double> random_matrix(Eigen::Index rows, Eigen::Index cols, SequentialRng& rng,
                                double scale = 1.0) {
  RowMatrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

/// Softmax over the surviving keys only, in long double.
RowMatrix<double> survivor_softmax(const RowMatrix<double>& Q, const RowMatrix<double>& K,
                                   const std::vector<std::uint8_t>& suppressed) {
  RowMatrix<double> w = RowMatrix<double>::Zero(Q.rows(), K.rows());
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    std::vector<long double> logit(static_cast<std::size_t>(K.rows()));
    long double peak = -1e300L;
    for (Eigen::Index j = 0; j < K.rows(); ++j) {
      long double dot = 0;
      for (Eigen::Index c = 0; c < Q.cols(); ++c) dot += (long double)Q(i, c) * K(j, c);
      logit[std::size_t(j)] = dot / std::sqrt((long double)Q.cols());
      if (!suppressed[std::size_t(j)]) peak = std::max(peak, logit[std::size_t(j)]);
    }
    long double total = 0;
    for (Eigen::Index j = 0; j < K.rows(); ++j) {
      if (!suppressed[std::size_t(j)]) total += std::exp(logit[std::size_t(j)] - peak);
    }
    for (Eigen::Index j = 0; j < K.rows(); ++j) {
      if (!suppressed[std::size_t(j)]) w(i, j) = double(std::exp(logit[std::size_t(j)] - peak) / total);
    }
  }
  return w;
}

DynamicMask patch_mask(std::size_t frames, std::size_t rows, std::size_t cols) {
  return DynamicMask::zeros(MaskResolution::Patch, frames, rows, cols);
}

}  // namespace

TEST_CASE("suppression blob examples") {
  auto mask = patch_mask(3, 2, 3);
  const auto empty = build_key_suppression(mask, kDefaultSuppressLayers);
  CHECK(empty.to_blob().dims() == std::vector<std::size_t>{5, 3, 6});
  CHECK(std::count(empty.mask.begin(), empty.mask.end(), 1) == 0);

  mask.at(1, 0, 2) = 1;
  const auto one = build_key_suppression(mask, {1, 2, 3, 4, 5});
  CHECK(std::count(one.mask.begin(), one.mask.end(), 1) == 5);
  for (std::size_t l = 0; l < 5; ++l) CHECK(one.at(l, 1, 2) == 1);
  CHECK(one.skipped.empty());

  CHECK(build_key_suppression(patch_mask(24, 37, 37), kDefaultSuppressLayers).to_blob().dims() ==
        std::vector<std::size_t>{5, 24, 1369});
}

TEST_CASE("suppression is order independent and idempotent over layers") {
  auto mask = patch_mask(2, 2, 2);
  mask.at(0, 1, 1) = mask.at(1, 0, 0) = 1;
  const auto a = build_key_suppression(mask, {5, 1, 3});
  const auto b = build_key_suppression(mask, {1, 3, 5, 3, 1});
  CHECK(a == b);
  CHECK(a.layers == std::vector<int>{1, 3, 5});
  CHECK(build_key_suppression(mask, a.layers) == a);
}

TEST_CASE("suppression input errors") {
  CHECK_THROWS_AS(build_key_suppression(patch_mask(2, 2, 2), {}), ValidationError);
  CHECK_THROWS_AS(build_key_suppression(DynamicMask::zeros(MaskResolution::Pixel, 2, 4, 4), {1}),
                  ValidationError);
  for (auto mode : {SuppressionMode::NegInfBias, SuppressionMode::ZeroKey}) {
    CHECK(parse_suppression_mode(suppression_mode_name(mode)) == mode);
  }
  CHECK_THROWS_AS(parse_suppression_mode("drop"), ValidationError);
}

TEST_CASE("fully dynamic frames are left unsuppressed and reported") {
  auto mask = patch_mask(3, 1, 2);
  mask.at(0, 0, 0) = 1;
  mask.at(2, 0, 0) = mask.at(2, 0, 1) = 1;
  const auto ks = build_key_suppression(mask, {2, 4});
  CHECK(ks.skipped == std::vector<std::pair<int, std::size_t>>{{2, 2}, {4, 2}});
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(ks.at(l, 0, 0) == 1);
    CHECK(ks.at(l, 2, 0) == 0);
    CHECK(ks.at(l, 2, 1) == 0);
  }
}

TEST_CASE("blob and sidecar on disk") {
  TempDir dir;
  auto mask = patch_mask(2, 2, 2);
  mask.at(1, 1, 0) = 1;
  const auto ks = build_key_suppression(mask, {1, 2}, SuppressionMode::ZeroKey);
  write_key_suppression(ks, dir / "key_mask.vg4t");
  CHECK(read_blob(dir / "key_mask.vg4t") == ks.to_blob());
  std::ifstream in(dir / "key_mask.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j["layers"] == nlohmann::json({1, 2}));
  CHECK(j["mode"] == "zero-key");
  CHECK(j["dims"] == nlohmann::json({2, 2, 4}));
  CHECK(j["skipped"].empty());
}

TEST_CASE("single surviving key takes all the weight") {
  RowMatrix<double> Q(1, 2), K(2, 2);
  Q << 0.3, -1.2;
  K << 2.0, 0.5, -4.0, 9.0;
  const std::vector<std::uint8_t> second = {0, 1};
  const auto w = masked_attention_weights(Q, K, second);
  CHECK(w(0, 0) == 1.0);
  CHECK(w(0, 1) == 0.0);
}

TEST_CASE("no suppression is bit-identical to plain attention") {
  SequentialRng rng(1, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto Q = random_matrix(8, 16, rng), K = random_matrix(12, 16, rng), V = random_matrix(12, 5, rng);
    const std::vector<std::uint8_t> none(12, 0);
    for (auto mode : {SuppressionMode::NegInfBias, SuppressionMode::ZeroKey}) {
      CHECK(masked_attention_reference(Q, K, V, none, mode) == plain_attention(Q, K, V));
    }
    const RowMatrix<float> Qf = Q.cast<float>(), Kf = K.cast<float>(), Vf = V.cast<float>();
    CHECK(masked_attention_reference(Qf, Kf, Vf, none) == plain_attention(Qf, Kf, Vf));
  }
}

TEST_CASE("suppressed keys carry no mass and survivors match a direct softmax") {
  SequentialRng rng(2, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto Q = random_matrix(8, 16, rng, 2.0), K = random_matrix(16, 16, rng, 2.0);
    const auto V = random_matrix(16, 4, rng);
    std::vector<std::uint8_t> suppressed(16, 0);
    for (int s = 0; s < 3; ++s) suppressed[rng.below(16)] = 1;
    const auto w = masked_attention_weights(Q, K, suppressed);
    double mass = 0;
    for (Eigen::Index j = 0; j < 16; ++j) {
      if (suppressed[std::size_t(j)]) mass += w.col(j).sum();
    }
    CHECK(mass < 1e-7);
    CHECK((w - survivor_softmax(Q, K, suppressed)).cwiseAbs().maxCoeff() < 1e-12);
    const auto out = masked_attention_reference(Q, K, V, suppressed);
    CHECK((out - survivor_softmax(Q, K, suppressed) * V).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("zero-key mode keeps a uniform logit for suppressed keys") {
  SequentialRng rng(3, 0);
  const auto Q = random_matrix(4, 8, rng), K = random_matrix(6, 8, rng);
  std::vector<std::uint8_t> suppressed = {0, 1, 0, 0, 1, 0};
  const auto w = masked_attention_weights(Q, K, suppressed, SuppressionMode::ZeroKey);
  RowMatrix<double> zeroed = K;
  zeroed.row(1).setZero();
  zeroed.row(4).setZero();
  CHECK((w - survivor_softmax(Q, zeroed, std::vector<std::uint8_t>(6, 0))).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(w(0, 1) == w(0, 4));
  CHECK(w(0, 1) > 0.0);
}

TEST_CASE("attention errors") {
  SequentialRng rng(4, 0);
  const auto Q = random_matrix(2, 4, rng), K = random_matrix(3, 4, rng), V = random_matrix(3, 2, rng);
  CHECK_THROWS_AS(masked_attention_reference(Q, K, V, std::vector<std::uint8_t>{1, 1, 1}),
                  DegenerateAttention);
  CHECK_THROWS_AS(masked_attention_reference(Q, K, V, std::vector<std::uint8_t>{0, 1}), SchemaError);
  CHECK_THROWS_AS(plain_attention(Q, random_matrix(3, 5, rng), V), SchemaError);
  CHECK_THROWS_AS(plain_attention(Q, K, random_matrix(2, 2, rng)), SchemaError);
}

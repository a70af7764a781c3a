#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cfqa/errors.hpp"
#include "cfqa/metrics.hpp"
#include "oracles.hpp"

using namespace cfqa;

namespace {

FeatureTensor tensor(const Eigen::MatrixXd& m, const std::string& id = "t") {
  std::vector<float> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[i * m.cols() + j] = static_cast<float>(m(i, j));
  return FeatureTensor(id, Task::Synthetic, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
                       std::move(v));
}

Eigen::MatrixXd as_double(const FeatureTensor& t) { return flatten_2d(t).cast<double>(); }

FeatureTensor filled(const Shape& s, float v) {
  return FeatureTensor("c", Task::Synthetic, s, std::vector<float>(element_count(s), v));
}

}  // namespace

TEST(Mse, AnalyticCases) {
  const auto f = synth_feature({8, 16}, 1);
  EXPECT_EQ(*mse(f, f).value, 0.0);
  EXPECT_EQ(*mse(filled({4, 4}, 0), filled({4, 4}, 1)).value, 1.0);
  EXPECT_THROW(mse(filled({4, 4}, 0), filled({2, 8}, 0)), ShapeError);
}

TEST(Mse, MatchesCompensatedSummationOracle) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = tensor(oracle::gaussian(37, 29, gen));
    const auto b = tensor(oracle::gaussian(37, 29, gen));
    // Kahan summation over the float payloads.
    double sum = 0, comp = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a.values()[i]) - b.values()[i];
      const double y = d * d - comp;
      const double t = sum + y;
      comp = (t - sum) - y;
      sum = t;
    }
    const double expected = sum / static_cast<double>(a.size());
    EXPECT_NEAR(*mse(a, b).value, expected, 1e-12 * expected);
  }
}

TEST(Mse, SymmetricAndQuadraticInScale) {
  std::mt19937_64 gen(4);
  const Eigen::MatrixXd x = oracle::gaussian(6, 10, gen), y = oracle::gaussian(6, 10, gen);
  const auto f = tensor(x), g = tensor(y);
  EXPECT_EQ(*mse(f, g).value, *mse(g, f).value);
  // Scaling by 2 is exact in binary floating point.
  EXPECT_DOUBLE_EQ(*mse(tensor(2 * x), tensor(2 * y)).value, 4 * *mse(f, g).value);
}

TEST(Cosine, AnalyticCases) {
  const auto f = synth_feature({8, 16}, 3);
  EXPECT_EQ(*cosine(f, f).value, 1.0);
  std::vector<float> neg(f.values().begin(), f.values().end());
  for (auto& v : neg) v = -v;
  EXPECT_EQ(*cosine(f, FeatureTensor("n", Task::Synthetic, f.shape(), neg)).value, -1.0);
  const FeatureTensor a("a", Task::Synthetic, {2}, {1, 0});
  const FeatureTensor b("b", Task::Synthetic, {2}, {1, 1});
  EXPECT_NEAR(*cosine(a, b).value, std::sqrt(0.5), 4 * std::numeric_limits<double>::epsilon());
}

TEST(Cosine, ScaleInvariantAndBounded) {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd x = oracle::gaussian(5, 7, gen), y = oracle::gaussian(5, 7, gen);
    const double c = *cosine(tensor(x), tensor(y)).value;
    EXPECT_NEAR(*cosine(tensor(4 * x), tensor(y)).value, c, 1e-12);
    EXPECT_LE(std::abs(c), 1.0);
  }
}

TEST(Cosine, ZeroNormIsDegenerate) {
  EXPECT_THROW(cosine(filled({3, 3}, 0), filled({3, 3}, 1)), DegenerateError);
}

TEST(Cosine, PerTokenVariantAveragesRows) {
  // Row 0 identical, row 1 orthogonal: mean 0.5.
  const FeatureTensor a("a", Task::Synthetic, {2, 2}, {1, 0, 1, 0});
  const FeatureTensor b("b", Task::Synthetic, {2, 2}, {1, 0, 0, 1});
  EXPECT_DOUBLE_EQ(*cosine(a, b, {.per_token = true}).value, 0.5);
  EXPECT_DOUBLE_EQ(*cosine(a, b).value, 0.5);
}

TEST(Cka, SelfSimilarityIsOne) {
  const auto f = synth_feature({64, 96}, 5);
  EXPECT_NEAR(*linear_cka(f, f).value, 1.0, 1e-9);
  const auto g = synth_feature({40, 24}, 5);
  EXPECT_NEAR(*linear_cka(g, g).value, 1.0, 1e-9);
}

TEST(Cka, MatchesHsicDoubleSumOracle) {
  std::mt19937_64 gen(7);
  const auto x = oracle::gaussian(8, 5, gen), y = oracle::gaussian(8, 5, gen);
  const double expected = oracle::cka(x, y);
  EXPECT_NEAR(linear_cka_feature_space(x, y), expected, 1e-8);
  EXPECT_NEAR(linear_cka_gram(x, y), expected, 1e-8);
  const auto fx = tensor(x), fy = tensor(y);
  EXPECT_NEAR(*linear_cka(fx, fy).value, oracle::cka(as_double(fx), as_double(fy)), 1e-8);
}

TEST(Cka, GramAndFeaturePathsAgree) {
  std::mt19937_64 gen(8);
  std::uniform_int_distribution<int> dim(2, 64);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = dim(gen), d = dim(gen);
    const auto x = oracle::gaussian(n, d, gen);
    const Eigen::MatrixXd y = x + 0.5 * oracle::gaussian(n, d, gen);
    EXPECT_NEAR(linear_cka_gram(x, y), linear_cka_feature_space(x, y), 1e-8) << n << "x" << d;
  }
}

TEST(Cka, OrthogonalAndIsotropicScaleInvariance) {
  std::mt19937_64 gen(9);
  std::uniform_int_distribution<int> dim(2, 64);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = dim(gen), d = dim(gen);
    const auto x = oracle::gaussian(n, d, gen);
    const auto y = oracle::gaussian(n, d, gen);
    const auto q = oracle::random_orthogonal(d, gen);
    const auto fx = tensor(x);
    EXPECT_NEAR(*linear_cka(fx, tensor(scale(gen) * x * q)).value, 1.0, 1e-6);
    const double base = *linear_cka(fx, tensor(y)).value;
    EXPECT_NEAR(*linear_cka(fx, tensor(scale(gen) * y * q)).value, base, 1e-6);
  }
}

TEST(Cka, SymmetricAndBounded) {
  std::mt19937_64 gen(10);
  for (int trial = 0; trial < 30; ++trial) {
    const auto f = tensor(oracle::gaussian(12, 20, gen)), g = tensor(oracle::gaussian(12, 20, gen));
    const double a = *linear_cka(f, g).value, b = *linear_cka(g, f).value;
    EXPECT_NEAR(a, b, 1e-12);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(Cka, DegenerateAndShapeErrors) {
  EXPECT_THROW(linear_cka(filled({4, 3}, 2), synth_feature({4, 3}, 1)), DegenerateError);
  EXPECT_THROW(linear_cka(filled({1, 3}, 2), filled({1, 3}, 1)), ShapeError);
}

TEST(Cka, UsesTokenRowsOfHigherRankTensors) {
  const auto f = synth_feature({2, 6, 10}, 1);
  const auto g = synth_feature({2, 6, 10}, 2);
  EXPECT_NEAR(*linear_cka(f, g).value, oracle::cka(as_double(f), as_double(g)), 1e-8);
}

TEST(ScoreAll, FixedOrderAndDegenerateContract) {
  const auto f = synth_feature({8, 8}, 1);
  const auto same = score_all(f, f);
  ASSERT_EQ(same.size(), 3u);
  EXPECT_EQ(same[0].metric, Metric::MSE);
  EXPECT_EQ(*same[0].value, 0.0);
  EXPECT_EQ(*same[1].value, 1.0);
  EXPECT_NEAR(*same[2].value, 1.0, 1e-9);

  const auto zeros = score_all(filled({4, 4}, 0), filled({4, 4}, 0));
  EXPECT_EQ(*zeros[0].value, 0.0);
  EXPECT_FALSE(zeros[1].defined());
  EXPECT_FALSE(zeros[2].defined());
  EXPECT_THROW(score_all(filled({4, 4}, 0), filled({2, 8}, 0)), ShapeError);
}

TEST(ScoreAll, OrientationPerMetric) {
  EXPECT_EQ(orientation_of(Metric::MSE), Orientation::LowerIsBetter);
  EXPECT_EQ(orientation_of(Metric::Cosine), Orientation::HigherIsBetter);
  EXPECT_EQ(orientation_of(Metric::CKA), Orientation::HigherIsBetter);
  EXPECT_EQ(parse_metric("Cosine"), Metric::Cosine);
}

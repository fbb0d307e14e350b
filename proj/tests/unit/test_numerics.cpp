#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "attnlab/checkpoint.hpp"
#include "attnlab/config.hpp"
#include "attnlab/errors.hpp"
#include "attnlab/gradcheck.hpp"
#include "attnlab/ops.hpp"
#include "attnlab/rng.hpp"
#include "attnlab/text.hpp"
#include "oracles.hpp"

using namespace attnlab;

namespace {

Matrix random_matrix(std::mt19937_64& gen, std::size_t r, std::size_t c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.values()) v = n(gen);
  return m;
}

}  // namespace

TEST(Matmul, IdentityAndZero) {
  const Matrix a = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}, {7, 8, 9.5}});
  EXPECT_EQ(matmul(Matrix::identity(3), a), a);
  EXPECT_EQ(matmul(a, Matrix(3, 3)), Matrix(3, 3));
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 gen(11);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix a = random_matrix(gen, 4, 5), b = random_matrix(gen, 5, 3);
    const Matrix c = matmul(a, b);
    ASSERT_EQ(c.rows(), 4u);
    ASSERT_EQ(c.cols(), 3u);
    EXPECT_LE(max_abs_diff(c, oracle::matmul(a, b)), 1e-14);
  }
}

TEST(Matmul, VariantsAgreeWithTranspose) {
  std::mt19937_64 gen(12);
  for (std::size_t n : {1u, 3u, 7u, 13u}) {
    const Matrix a = random_matrix(gen, n, 6), b = random_matrix(gen, n + 2, 6);
    const Matrix c = random_matrix(gen, n, 5);
    EXPECT_LE(max_abs_diff(matmul_nt(a, b), oracle::matmul(a, transpose(b))), 1e-13);
    EXPECT_LE(max_abs_diff(matmul_tn(a, c), oracle::matmul(transpose(a), c)), 1e-13);
    Matrix acc = Matrix::ones(6, 5);
    matmul_tn_acc(a, c, acc);
    EXPECT_LE(max_abs_diff(acc, add(oracle::matmul(transpose(a), c), Matrix::ones(6, 5))), 1e-13);
  }
}

TEST(Matmul, Associative) {
  std::mt19937_64 gen(13);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix a = random_matrix(gen, 3, 4), b = random_matrix(gen, 4, 5),
                 c = random_matrix(gen, 5, 2);
    const Matrix left = matmul(matmul(a, b), c), right = matmul(a, matmul(b, c));
    EXPECT_LE(max_abs_diff(left, right), 1e-9 * std::max(1.0, frobenius_norm(left)));
  }
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>(3)), ShapeError);
}

TEST(Softmax, Examples) {
  const auto a = softmax_row(std::vector<double>{0, 0});
  EXPECT_EQ(a[0], 0.5);
  EXPECT_EQ(a[1], 0.5);
  const auto b = softmax_row(std::vector<double>{1000, 1000});
  EXPECT_EQ(b[0], 0.5);
  EXPECT_EQ(b[1], 0.5);
  const auto c = softmax_row(std::vector<double>{1, 2, 3});
  const auto ref = oracle::softmax({1, 2, 3});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(c[i], static_cast<double>(ref[i]), 1e-15);
}

TEST(Softmax, Errors) {
  EXPECT_THROW(softmax_row(std::vector<double>{}), DomainError);
  EXPECT_THROW(softmax_row(std::vector<double>{1.0, NAN}), NumericError);
  EXPECT_THROW(softmax_row(std::vector<double>{INFINITY}), NumericError);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  std::mt19937_64 gen(14);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<double> v(1 + gen() % 40);
    for (double& x : v) x = n(gen);
    const auto p = softmax_row(v);
    double total = 0.0;
    for (double x : p) {
      EXPECT_GE(x, 0.0);
      total += x;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    const double shift = n(gen) * 100.0;
    std::vector<double> w = v;
    for (double& x : w) x += shift;
    const auto q = softmax_row(w);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(Activations, Examples) {
  EXPECT_EQ(leaky_relu(5, 0.2), 5);
  EXPECT_DOUBLE_EQ(leaky_relu(-1, 0.2), -0.2);
  EXPECT_EQ(relu(-3), 0);
  EXPECT_EQ(relu(0), 0);
  EXPECT_EQ(relu(2.5), 2.5);
}

TEST(FiniteDiff, Examples) {
  const auto sq = [](std::span<const double> x) { return x[0] * x[0]; };
  const auto g = finite_diff_grad(sq, std::vector<double>{3.0}, 1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-6);
  const auto k = finite_diff_grad([](std::span<const double>) { return 4.2; },
                                  std::vector<double>{1.0, -2.0, 3.0}, 1e-5);
  for (double v : k) EXPECT_EQ(v, 0.0);
}

TEST(FiniteDiff, NonFiniteThrows) {
  const auto bad = [](std::span<const double> x) { return std::log(x[0]); };
  EXPECT_THROW(finite_diff_grad(bad, std::vector<double>{0.0}, 1e-5), NumericError);
}

TEST(RelativeError, FloorAndZeros) {
  EXPECT_EQ(relative_error(std::vector<double>{0, 0}, std::vector<double>{0, 0}), 0.0);
  EXPECT_NEAR(relative_error(std::vector<double>{1, 0}, std::vector<double>{1.001, 0}),
              0.001 / 1.001, 1e-12);
  EXPECT_NEAR(relative_error(std::vector<double>{1e-9}, std::vector<double>{0}, 1e-3), 1e-6, 1e-15);
}

TEST(Rng, SameSeedSameSequence) {
  SeededRng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 10000; ++i) {
    const double x = a.uniform();
    ASSERT_EQ(x, b.uniform());
    differs = differs || x != c.uniform();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, SplitIgnoresDrawHistory) {
  SeededRng a(5), b(5);
  for (int i = 0; i < 17; ++i) a.normal();
  SeededRng sa = a.split("init"), sb = b.split("init");
  for (int i = 0; i < 100; ++i) ASSERT_EQ(sa.next_u64(), sb.next_u64());
  SeededRng other = b.split("shuffle");
  EXPECT_NE(b.split("init").next_u64(), other.next_u64());
}

TEST(Rng, RangesAndMoments) {
  SeededRng r(9);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(Base64, KnownVectors) {
  const auto enc = [](std::string s) {
    return base64_encode(std::vector<std::uint8_t>(s.begin(), s.end()));
  };
  EXPECT_EQ(enc(""), "");
  EXPECT_EQ(enc("M"), "TQ==");
  EXPECT_EQ(enc("Ma"), "TWE=");
  EXPECT_EQ(enc("Man"), "TWFu");
  EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
  const auto dec = base64_decode("Zm9vYg==");
  EXPECT_EQ(std::string(dec.begin(), dec.end()), "foob");
  EXPECT_THROW(base64_decode("Zm9v!"), ParseError);
}

TEST(Checkpoint, Float64RoundTrip) {
  const std::vector<double> v = {0.0, -0.0, 1.0, -2.5, 1e-300, 3.141592653589793, 1e308};
  const auto back = decode_f64_le(encode_f64_le(v));
  ASSERT_EQ(back.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(std::signbit(back[i]), std::signbit(v[i]));
    EXPECT_EQ(back[i], v[i]);
  }
  // 1.0 is 00 00 00 00 00 00 f0 3f little-endian.
  EXPECT_EQ(encode_f64_le(std::vector<double>{1.0}), "AAAAAAAA8D8=");
}

TEST(Checkpoint, ManifestRoundTripAndShapeCheck) {
  Matrix w = Matrix::from_rows({{1, 2}, {3, 4}}), b = Matrix::from_rows({{0.5, -0.5}});
  const ParamList params{{"w", &w}, {"b", &b}};
  const auto manifest = checkpoint_to_json(params, {{"note", "x"}});
  Matrix w2(2, 2), b2(1, 2);
  const auto meta = checkpoint_from_json(manifest, {{"w", &w2}, {"b", &b2}});
  EXPECT_EQ(meta.at("note"), "x");
  EXPECT_EQ(w2, w);
  EXPECT_EQ(b2, b);
  Matrix wrong(3, 2);
  EXPECT_THROW(checkpoint_from_json(manifest, {{"w", &wrong}, {"b", &b2}}), ParseError);
  Matrix extra(1, 1);
  EXPECT_THROW(checkpoint_from_json(manifest, {{"missing", &extra}}), ParseError);
}

TEST(Text, FormatDoubleRoundTrips) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1");
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n(0.0, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = n(gen);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(Config, ParsesCommentsQuotesAndOverrides) {
  auto kv = KeyValueConfig::parse(
      "# comment\nhidden_dim = 64\nvariant = \"self_attention\"  # trailing\n\nlearning_rate=1e-3\n");
  kv.apply_override("hidden_dim=32");
  const auto cfg = ExperimentConfig::from_config(kv);
  EXPECT_EQ(cfg.hidden_dim, 32u);
  EXPECT_EQ(cfg.variant, Variant::self_attention);
  EXPECT_EQ(cfg.learning_rate, 1e-3);
  EXPECT_EQ(cfg.epochs, 30u);
  EXPECT_EQ(cfg.batch_size, 24u);
  EXPECT_THROW(kv.apply_override("novalue"), UsageError);
}

TEST(Config, Defaults) {
  const ExperimentConfig e;
  EXPECT_EQ(e.hops, 2u);
  EXPECT_EQ(e.hidden_dim, 300u);
  EXPECT_EQ(e.learning_rate, 2e-4);
  EXPECT_EQ(e.leaky_slope, 0.2);
  EXPECT_EQ(e.adam_beta1, 0.9);
  EXPECT_EQ(e.adam_beta2, 0.999);
  EXPECT_EQ(e.adam_eps, 1e-8);
  EXPECT_NO_THROW(e.validate());
  EXPECT_NO_THROW(SyntheticTaskConfig{}.validate());
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(KeyValueConfig::parse("a b c\n"), ParseError);
  auto bad = KeyValueConfig::parse("hidden_dim = -3\n");
  EXPECT_ANY_THROW(ExperimentConfig::from_config(bad));
  auto rate = KeyValueConfig::parse("collision_rate = 1.5\n");
  EXPECT_ANY_THROW(SyntheticTaskConfig::from_config(rate));
  auto unknown = KeyValueConfig::parse("bogus = 1\n");
  EXPECT_THROW(unknown.require_known(known_config_keys()), UsageError);
  auto variant = KeyValueConfig::parse("variant = lstm\n");
  EXPECT_THROW(ExperimentConfig::from_config(variant), UsageError);
}

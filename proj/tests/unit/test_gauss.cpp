#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "dgp/errors.hpp"
#include "dgp/gauss.hpp"
#include "dgp/gradient_check.hpp"
#include "dgp/ops.hpp"
#include "dgp/random.hpp"
#include "test_support.hpp"

using namespace dgp;
using dgp::testing::Gen;
using Vars = std::map<std::string, Var>;

namespace {

double kl_whitened_value(const Tensor& m, const Tensor& l) {
  Tape tape;
  return kl_whitened({tape.constant(m), tape.constant(l)}).value().item();
}

double kl_general_value(const Tensor& m, const Tensor& l, const Tensor& k) {
  Tape tape;
  return kl_general({tape.constant(m), tape.constant(l)}, tape.constant(k)).value().item();
}

// Monte-Carlo KL(N(m, LL^T) || N(0, KK^T)) = E_q[log q - log p]; returns
// (estimate, standard error).
std::pair<double, double> mc_kl(const Eigen::VectorXd& m, const Eigen::MatrixXd& l,
                                const Eigen::MatrixXd& k, std::size_t n,
                                std::uint64_t seed) {
  const auto dim = m.size();
  auto logpdf = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                    const Eigen::MatrixXd& chol) {
    const Eigen::VectorXd z = chol.triangularView<Eigen::Lower>().solve(x - mu);
    return -0.5 * z.squaredNorm() - chol.diagonal().array().log().sum() -
           0.5 * static_cast<double>(dim) * std::log(2 * std::numbers::pi);
  };
  Gen gen(seed);
  double s = 0.0, s2 = 0.0;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(dim);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd eps(dim);
    for (Eigen::Index j = 0; j < dim; ++j) eps(j) = gen.normal();
    const Eigen::VectorXd x = m + l * eps;
    const double d = logpdf(x, m, l) - logpdf(x, zero, k);
    s += d;
    s2 += d * d;
  }
  const double mean = s / n;
  return {mean, std::sqrt((s2 / n - mean * mean) / n)};
}

}  // namespace

TEST(JitterPolicy, Validation) {
  JitterPolicy p;
  EXPECT_NO_THROW(p.validate());
  p.growth = 1.0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.initial = 0.1;
  p.max = 0.01;
  EXPECT_THROW(p.validate(), Error);
}

TEST(CholeskyWithJitter, IdentityGetsInitialJitter) {
  Tape tape;
  const auto r = cholesky_with_jitter(tape.constant(Tensor::identity(2)));
  EXPECT_EQ(r.jitter, 1e-6);
  const Tensor& l = r.factor.value();
  EXPECT_DOUBLE_EQ(l(0, 0), std::sqrt(1 + 1e-6));
  EXPECT_DOUBLE_EQ(l(1, 1), std::sqrt(1 + 1e-6));
  EXPECT_EQ(l(1, 0), 0.0);
}

TEST(CholeskyWithJitter, ReconstructsShiftedMatrix) {
  Tape tape;
  const Tensor a = Tensor::matrix(2, 2, {4, 2, 2, 3});
  const auto r = cholesky_with_jitter(tape.constant(a));
  const Eigen::MatrixXd l = dgp::testing::dense(r.factor.value());
  Eigen::MatrixXd expected = dgp::testing::dense(a) + 1e-6 * Eigen::MatrixXd::Identity(2, 2);
  EXPECT_LT(dgp::testing::max_abs_diff(l * l.transpose(), expected), 1e-14);
  // Published rounded values; the reconstruction above is the exact check.
  EXPECT_NEAR(l(0, 0), 2.0000002, 1e-6);
  EXPECT_NEAR(l(1, 0), 0.9999999, 1e-6);
  EXPECT_NEAR(l(1, 1), 1.4142137, 1e-6);
}

TEST(CholeskyWithJitter, ZeroMatrixIsJitteredToScaledIdentity) {
  Tape tape;
  const auto r = cholesky_with_jitter(tape.constant(Tensor(Shape{2, 2})));
  const Tensor& l = r.factor.value();
  EXPECT_NEAR(l(0, 0), 1e-3, 1e-18);
  EXPECT_NEAR(l(1, 1), 1e-3, 1e-18);
}

TEST(CholeskyWithJitter, ClimbsTheLadder) {
  Tape tape;
  // Eigenvalues 0 and -1e-5: needs jitter above 1e-5.
  const double e = -1e-5;
  const Tensor a = Tensor::matrix(2, 2, {e / 2, -e / 2, -e / 2, e / 2});
  const auto r = cholesky_with_jitter(tape.constant(a));
  EXPECT_NEAR(r.jitter, 1e-4, 1e-18);
}

TEST(CholeskyWithJitter, FailureCarriesTheLadder) {
  Tape tape;
  const Tensor a = Tensor::matrix(2, 2, {-1, 0, 0, -1});
  try {
    (void)cholesky_with_jitter(tape.constant(a));
    FAIL();
  } catch (const NotPositiveDefiniteError& e) {
    const std::vector<double> expected{1e-6, 1e-5, 1e-4, 1e-3, 1e-2};
    ASSERT_EQ(e.ladder().size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      EXPECT_NEAR(e.ladder()[i], expected[i], expected[i] * 1e-12);
    }
  }
}

TEST(CholeskyWithJitter, RejectsAsymmetricInput) {
  Tape tape;
  EXPECT_THROW((void)cholesky_with_jitter(tape.constant(Tensor::matrix(2, 2, {1, 0.5, 0, 1}))),
               Error);
}

TEST(KlWhitened, Examples) {
  EXPECT_EQ(kl_whitened_value(Tensor(Shape{3}), Tensor::identity(3)), 0.0);
  EXPECT_NEAR(kl_whitened_value(Tensor::vector({1, 0}), Tensor::identity(2)), 0.5, 1e-15);
  const Tensor l = Tensor::matrix(2, 2, {std::sqrt(2.0), 0, 0, std::sqrt(2.0)});
  EXPECT_NEAR(kl_whitened_value(Tensor(Shape{2}), l), 1 - std::log(2.0), 1e-14);
}

TEST(KlWhitened, MonteCarloOracle) {
  const Tensor l = Tensor::matrix(2, 2, {std::sqrt(2.0), 0, 0, std::sqrt(2.0)});
  const auto [est, se] =
      mc_kl(Eigen::VectorXd::Zero(2), dgp::testing::dense(l), Eigen::MatrixXd::Identity(2, 2),
            200000, 11);
  EXPECT_LT(std::abs(est - (1 - std::log(2.0))), 3 * se);
}

TEST(KlWhitened, NonPositiveDiagonalIsAnError) {
  Tape tape;
  const Tensor l = Tensor::matrix(2, 2, {1, 0, 0.5, 0});
  EXPECT_THROW((void)kl_whitened({tape.constant(Tensor(Shape{2})), tape.constant(l)}),
               NumericalError);
}

TEST(KlWhitened, NonNegativeAndZeroOnlyAtPrior) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Gen gen(seed);
    const std::size_t m = gen.index(1, 6);
    const double kl = kl_whitened_value(gen.normal_tensor({m}), gen.lower(m));
    EXPECT_GT(kl, 0.0);
  }
  EXPECT_LE(std::abs(kl_whitened_value(Tensor(Shape{4}), Tensor::identity(4))), 1e-12);
}

TEST(KlGeneral, IdentityPriorEqualsWhitened) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Gen gen(seed);
    const std::size_t m = gen.index(1, 6);
    const Tensor mu = gen.normal_tensor({m});
    const Tensor l = gen.lower(m);
    EXPECT_EQ(kl_general_value(mu, l, Tensor::identity(m)), kl_whitened_value(mu, l));
  }
}

TEST(KlGeneral, PriorMatchedPosteriorIsZero) {
  Gen gen(3);
  const Tensor k = gen.lower(4);
  EXPECT_LE(std::abs(kl_general_value(Tensor(Shape{4}), k, k)), 1e-12);
}

TEST(KlGeneral, MonteCarloOracle) {
  Gen gen(5);
  const Tensor mu = gen.normal_tensor({3});
  const Tensor l = gen.lower(3);
  const Tensor k = gen.lower(3);
  const double kl = kl_general_value(mu, l, k);
  const auto [est, se] = mc_kl(dgp::testing::dense(mu), dgp::testing::dense(l),
                               dgp::testing::dense(k), 200000, 17);
  EXPECT_LT(std::abs(est - kl), 3 * se);
}

TEST(KlGeneral, RotationInvariance) {
  // Rotating both q and the prior by R maps KL to itself; the rotated
  // cov-sqrts are re-triangularised through Cholesky.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Gen gen(seed);
    const std::size_t m = gen.index(2, 5);
    const Tensor mu = gen.normal_tensor({m});
    const Tensor l = gen.lower(m);
    const Tensor k = gen.lower(m);
    const Eigen::MatrixXd r = gen.rotation(m);
    const Eigen::MatrixXd dl = dgp::testing::dense(l), dk = dgp::testing::dense(k);
    const Eigen::MatrixXd s_rot = r * dl * dl.transpose() * r.transpose();
    const Eigen::MatrixXd k_rot = r * dk * dk.transpose() * r.transpose();
    const Tensor l_rot = Tensor::from_eigen(Eigen::MatrixXd(s_rot.llt().matrixL()));
    const Tensor k_chol = Tensor::from_eigen(Eigen::MatrixXd(k_rot.llt().matrixL()));
    const Tensor mu_rot = Tensor::vector_from_eigen(r * dgp::testing::dense(mu));
    EXPECT_NEAR(kl_general_value(mu_rot, l_rot, k_chol), kl_general_value(mu, l, k), 1e-10);
  }
}

TEST(Reparam, Examples) {
  Tape tape;
  const Tensor mean = Tensor::vector({1.5, -2});
  const auto zero = reparam_sample(tape.constant(mean), tape.constant(Tensor::vector({3, 4})),
                                   tape.constant(Tensor(Shape{2})));
  EXPECT_EQ(zero.value(), mean);
  const auto s = reparam_sample(tape.constant(Tensor::scalar(0)), tape.constant(Tensor::scalar(4)),
                                tape.constant(Tensor::scalar(1.5)));
  EXPECT_EQ(s.value().item(), 3.0);
  EXPECT_THROW((void)reparam_sample(tape.constant(Tensor::scalar(0)),
                                    tape.constant(Tensor::scalar(-1)),
                                    tape.constant(Tensor::scalar(1))),
               NumericalError);
}

TEST(Reparam, EmpiricalMoments) {
  RandomStream rng(42);
  const std::size_t n = 100000;
  Tape tape;
  const Var noise = tape.constant(rng.normal_tensor({n}));
  const Var s = reparam_sample(tape.constant(Tensor(Shape{n}, 1.3)),
                               tape.constant(Tensor(Shape{n}, 0.7)), noise);
  double m = 0, m2 = 0;
  for (double v : s.value().data()) {
    m += v;
    m2 += v * v;
  }
  m /= n;
  const double var = m2 / n - m * m;
  EXPECT_LT(std::abs(m - 1.3), 4 * std::sqrt(0.7 / n));
  EXPECT_LT(std::abs(var - 0.7), 4 * 0.7 * std::sqrt(2.0 / (n - 1)));
}

TEST(Reparam, FullCovariance) {
  Tape tape;
  const Tensor l = Tensor::matrix(2, 2, {2, 0, 1, 3});
  const auto s = reparam_sample_full(tape.constant(Tensor::vector({1, 1})), tape.constant(l),
                                     tape.constant(Tensor::vector({1, 2})));
  EXPECT_EQ(s.value(), Tensor::vector({3, 8}));
}

TEST(LogPdf, Examples) {
  EXPECT_NEAR(gaussian_logpdf(0, 0, 1), -0.91893853320467274, 1e-15);
  EXPECT_NEAR(gaussian_logpdf(1, 0, 1), -1.41893853320467274, 1e-15);
  EXPECT_NEAR(gaussian_logpdf(2, 0, 4), -0.5 * std::log(8 * std::numbers::pi) - 0.5, 1e-15);
  EXPECT_NEAR(gaussian_logpdf(2, 0, 4), -2.11208571376462, 1e-12);
  EXPECT_THROW((void)gaussian_logpdf(0, 0, 0), NumericalError);
}

TEST(VariationalExpectation, Examples) {
  EXPECT_NEAR(gaussian_variational_expectation(0.3, 0.3, 0, 1), -0.91893853320467274, 1e-15);
  EXPECT_NEAR(gaussian_variational_expectation(0, 1, 1, 1), -1.91893853320467274, 1e-15);
  EXPECT_THROW((void)gaussian_variational_expectation(0, 0, 1, 0), NumericalError);
}

TEST(VariationalExpectation, MonteCarloOracle) {
  const double y = 0.4, m = -0.2, v = 0.8, nv = 0.3;
  RandomStream rng(9);
  const std::size_t n = 200000;
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double l = gaussian_logpdf(y, m + std::sqrt(v) * rng.normal(), nv);
    s += l;
    s2 += l * l;
  }
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_LT(std::abs(mean - gaussian_variational_expectation(y, m, v, nv)), 3 * se);
}

TEST(VariationalExpectation, BoundedByLogPdf) {
  Gen gen(21);
  for (int i = 0; i < 200; ++i) {
    const double y = gen.normal(), m = gen.normal(), v = gen.uniform(0, 2),
                 nv = gen.uniform(0.05, 2);
    EXPECT_LE(gaussian_variational_expectation(y, m, v, nv), gaussian_logpdf(y, m, nv));
  }
  EXPECT_EQ(gaussian_variational_expectation(0.5, 0.1, 0, 0.7), gaussian_logpdf(0.5, 0.1, 0.7));
}

TEST(VariationalExpectation, TensorAndScalarFormsAgree) {
  Tape tape;
  const Var e = gaussian_variational_expectation(
      tape.constant(Tensor::vector({0.4, 1})), tape.constant(Tensor::vector({-0.2, 0})),
      tape.constant(Tensor::vector({0.8, 1})), tape.constant(Tensor::scalar(0.3)));
  EXPECT_DOUBLE_EQ(e.value()[0], gaussian_variational_expectation(0.4, -0.2, 0.8, 0.3));
  EXPECT_DOUBLE_EQ(e.value()[1], gaussian_variational_expectation(1, 0, 1, 0.3));
}

TEST(Gradients, AllGaussianOpsPassFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Gen gen(seed);
    const std::size_t m = gen.index(2, 4);
    Bindings b{{"mu", gen.normal_tensor({m})},
               {"L", gen.lower(m)},
               {"K", gen.lower(m)},
               {"A", gen.spd(m)},
               {"var", gen.uniform_tensor({m}, 0.5, 2)},
               {"noise", gen.normal_tensor({m})},
               {"y", gen.normal_tensor({m})},
               {"nv", Tensor::scalar(gen.uniform(0.5, 2))}};
    const auto f = [](Tape& tape, const Vars& v) {
      // Mask keeps the cov-sqrts triangular under per-entry perturbation.
      const std::size_t n = v.at("L").rows();
      Tensor mask(Shape{n, n});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) mask(i, j) = 1;
      const Var l = mul(v.at("L"), tape.constant(mask));
      const Var k = mul(v.at("K"), tape.constant(mask));
      Var total = kl_whitened({v.at("mu"), l});
      total = total + kl_general({v.at("mu"), l}, k);
      const Var a = 0.5 * (v.at("A") + transpose(v.at("A")));
      total = total + sum(cholesky_with_jitter(a).factor);
      total = total + sum(reparam_sample(v.at("mu"), v.at("var"), v.at("noise")));
      total = total + sum(reparam_sample_full(v.at("mu"), l, v.at("noise")));
      total = total + sum(gaussian_logpdf(v.at("y"), v.at("mu"), v.at("var")));
      total = total + sum(gaussian_variational_expectation(v.at("y"), v.at("mu"),
                                                           v.at("var"), v.at("nv")));
      return total;
    };
    GradientCheckOptions opts;
    opts.atol = 1e-9;
    const auto report = check_gradients(f, b, opts);
    EXPECT_LT(report.max_rel_error, 1e-6) << "seed " << seed;
  }
}

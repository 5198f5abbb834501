#include "nilmgp/errors.hpp"
#include "nilmgp/metrics.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace nilmgp;

namespace {

// tests/oracles/frozen_values.py
constexpr double kHalfLogTwoPi = 0.91893853320467274178;
constexpr double kHalfLogTwoPiPlusOne = 1.9189385332046727418;
constexpr double kZ95 = 1.9599639845400542355;

PredictiveDistribution gaussians(std::vector<double> mean, std::vector<double> variance) {
  PredictiveDistribution p;
  p.mean = std::move(mean);
  p.variance = std::move(variance);
  for (std::size_t i = 0; i < p.mean.size(); ++i) p.timestamps.push_back(60 * static_cast<std::int64_t>(i));
  return p;
}

// Calibrated sample: truths drawn from the predictive Gaussians themselves.
struct Sample {
  PredictiveDistribution pred;
  std::vector<double> truth;
};

Sample calibrated(std::size_t n, std::uint64_t seed, double sd_scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mu(-500.0, 500.0);
  std::uniform_real_distribution<double> sd(0.5, 80.0);
  std::normal_distribution<double> z;
  Sample s;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = mu(rng);
    const double sigma = sd(rng);
    s.pred.mean.push_back(m);
    s.pred.variance.push_back(sigma * sigma * sd_scale * sd_scale);
    s.pred.timestamps.push_back(static_cast<std::int64_t>(i));
    s.truth.push_back(m + sigma * z(rng));
  }
  return s;
}

}  // namespace

TEST_CASE("mae") {
  const auto p = gaussians({1, 2}, {1, 1});
  const std::vector<double> truth{2, 4};
  CHECK(mae(p, truth) == 1.5);
  CHECK(mae(p, p.mean) == 0.0);
  CHECK_THROWS_AS(mae(p, std::vector<double>{1}), InputError);
  CHECK_THROWS_AS(mae(gaussians({}, {}), std::vector<double>{}), InputError);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 100.0);
  std::vector<double> m(1000), t(1000);
  double sum = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = n(rng);
    t[i] = n(rng);
    sum += m[i] > t[i] ? m[i] - t[i] : t[i] - m[i];
  }
  const auto q = gaussians(m, std::vector<double>(m.size(), 1.0));
  CHECK(mae(q, t) == doctest::Approx(sum / 1000.0).epsilon(1e-12));

  // Shifting means and truths together changes nothing.
  std::vector<double> m2 = m, t2 = t;
  for (std::size_t i = 0; i < m.size(); ++i) {
    m2[i] += 1000.0;
    t2[i] += 1000.0;
  }
  CHECK(mae(gaussians(m2, std::vector<double>(m.size(), 1.0)), t2) ==
        doctest::Approx(mae(q, t)).epsilon(1e-9));
}

TEST_CASE("msll analytic values") {
  CHECK(std::abs(msll(gaussians({0}, {1}), std::vector<double>{0}) - kHalfLogTwoPi) < 1e-9);
  const double e2 = std::exp(2.0);
  CHECK(std::abs(msll(gaussians({0}, {e2}), std::vector<double>{0}) - kHalfLogTwoPiPlusOne) < 1e-9);

  // Quadratic growth in the standardized error.
  const double at3 = msll(gaussians({0}, {4}), std::vector<double>{6});
  const double at6 = msll(gaussians({0}, {4}), std::vector<double>{12});
  const double base = msll(gaussians({0}, {4}), std::vector<double>{0});
  CHECK((at6 - base) == doctest::Approx(4.0 * (at3 - base)));

  CHECK_THROWS_AS(msll(gaussians({0}, {0}), std::vector<double>{0}), InputError);
  CHECK_THROWS_AS(msll(gaussians({0}, {-1}), std::vector<double>{0}), InputError);
}

TEST_CASE("msll is unimodal in the variance at the squared error") {
  const double err = 3.0;
  double previous = std::numeric_limits<double>::infinity();
  for (double v = 0.5; v <= err * err; v += 0.25) {
    const double value = msll(gaussians({0}, {v}), std::vector<double>{err});
    CHECK(value < previous);
    previous = value;
  }
  for (double v = err * err + 0.25; v < 40.0; v += 0.25) {
    const double value = msll(gaussians({0}, {v}), std::vector<double>{err});
    CHECK(value > previous);
    previous = value;
  }
}

TEST_CASE("standardized msll subtracts the baseline loss") {
  const auto p = gaussians({0, 1}, {1, 2});
  const std::vector<double> truth{0.5, -1};
  const MsllBaseline baseline{0.2, 3.0};
  const auto b = gaussians({0.2, 0.2}, {3.0, 3.0});
  CHECK(msll(p, truth, baseline) == doctest::Approx(msll(p, truth) - msll(b, truth)).epsilon(1e-14));
  CHECK(msll(b, truth, baseline) == doctest::Approx(0.0));
}

TEST_CASE("central interval quantile") {
  CHECK(std::abs(central_interval_z(0.95) - kZ95) < 1e-12);
  CHECK_THROWS_AS(central_interval_z(0.0), InputError);
  CHECK_THROWS_AS(central_interval_z(1.0), InputError);
}

TEST_CASE("coverage error analytic cases") {
  const auto p = gaussians({1, 2, 3}, {4, 4, 4});
  CHECK(coverage_error(p, p.mean, 0.95) == doctest::Approx(0.05));
  const std::vector<double> far{21, 22, 23};  // mu + 10 sigma
  CHECK(coverage_error(p, far, 0.95) == doctest::Approx(0.95));
  const auto curve = reliability_curve(p, far, {0.5});
  REQUIRE(curve.nominal_levels.size() == 1);
  CHECK(std::abs(0.5 - curve.empirical_coverage[0]) == coverage_error(p, far, 0.5));
}

TEST_CASE("calibration errors vanish on calibrated samples") {
  const auto s = calibrated(100'000, 17);
  CHECK(coverage_error(s.pred, s.truth, 0.95) < 0.01);
  CHECK(ece(s.pred, s.truth) < 0.02);
  const auto curve = reliability_curve(s.pred, s.truth, ece_levels());
  for (std::size_t i = 0; i < curve.nominal_levels.size(); ++i) {
    CHECK(std::abs(curve.empirical_coverage[i] - curve.nominal_levels[i]) < 0.02);
  }
}

TEST_CASE("overconfident predictions fall below the diagonal") {
  const auto s = calibrated(100'000, 18, 0.5);
  const auto curve = reliability_curve(s.pred, s.truth, ece_levels());
  for (std::size_t i = 0; i < curve.nominal_levels.size(); ++i) {
    CHECK(curve.empirical_coverage[i] < curve.nominal_levels[i]);
  }
}

TEST_CASE("ece limits") {
  CHECK(ece_levels().size() == 19);
  CHECK(ece_levels().front() == doctest::Approx(0.05));
  CHECK(ece_levels().back() == doctest::Approx(0.95));

  // Tiny variance, truths far away: zero coverage everywhere.
  const auto tight = gaussians({0, 0, 0}, {1e-12, 1e-12, 1e-12});
  CHECK(ece(tight, std::vector<double>{1, -1, 2}) == doctest::Approx(0.5).epsilon(1e-12));
  // Truths at the means: full coverage everywhere.
  CHECK(ece(tight, tight.mean) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("reliability curves are monotone and metrics stay in range") {
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> scale(0.1, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = calibrated(500, 100 + trial, scale(rng));
    const auto curve = reliability_curve(s.pred, s.truth, ece_levels());
    for (std::size_t i = 1; i < curve.empirical_coverage.size(); ++i) {
      CHECK(curve.empirical_coverage[i] >= curve.empirical_coverage[i - 1]);
    }
    const auto report = evaluate(s.pred, s.truth);
    CHECK(report.mae >= 0.0);
    CHECK(report.ce95 >= 0.0);
    CHECK(report.ce95 <= 0.95);
    CHECK(report.ece >= 0.0);
    CHECK(report.ece <= 1.0);
    CHECK(report.n_points == 500);
  }
  const auto p = gaussians({0, 0}, {1, 1});
  CHECK_THROWS_AS(reliability_curve(p, std::vector<double>{0, 0}, {0.5, 0.4}), InputError);
  CHECK_THROWS_AS(reliability_curve(p, std::vector<double>{0, 0}, {0.0, 0.4}), InputError);
}

TEST_CASE("reliability csv") {
  const auto path = std::filesystem::temp_directory_path() / "nilmgp_reliability_test.csv";
  write_reliability_csv(path, ReliabilityCurve{{0.25, 0.5}, {0.2, 0.625}});
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text == "nominal,empirical\n0.25,0.2\n0.5,0.625\n");
  std::filesystem::remove(path);
}

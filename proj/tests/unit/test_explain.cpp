#include "retrofit/explain.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace retrofit;

namespace {

Matrix uniform(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0, 1);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

std::vector<double> row(const Matrix& m, Eigen::Index r) { return {m.row(r).data(), m.row(r).data() + m.cols()}; }

// Average marginal contribution over all orderings, computed independently of the library.
std::vector<double> permutation_oracle(const MLPModel& m, const std::vector<double>& x, const Matrix& bg, int label) {
    const int f = static_cast<int>(x.size());
    auto value = [&](unsigned s) {
        double acc = 0;
        for (Eigen::Index b = 0; b < bg.rows(); ++b) {
            std::vector<double> z(x.size());
            for (int i = 0; i < f; ++i) z[static_cast<std::size_t>(i)] = (s >> i & 1U) ? x[static_cast<std::size_t>(i)] : bg(b, i);
            acc += forward(m, z)[label];
        }
        return acc / static_cast<double>(bg.rows());
    };
    std::vector<int> perm(static_cast<std::size_t>(f));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> phi(x.size(), 0.0);
    double count = 0;
    do {
        unsigned s = 0;
        double prev = value(s);
        for (int i : perm) {
            s |= 1U << i;
            const double cur = value(s);
            phi[static_cast<std::size_t>(i)] += cur - prev;
            prev = cur;
        }
        ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (auto& p : phi) p /= count;
    return phi;
}

}  // namespace

TEST_CASE("value function endpoints") {
    std::mt19937_64 rng(1);
    const auto m = MLPModel::glorot(3, {5, 5}, kNumLabels, 2);
    const Matrix bg = uniform(4, 3, rng);
    const auto x = row(uniform(1, 3, rng), 0);
    CHECK(value_function(m, x, 0b111, bg, 1) == doctest::Approx(forward(m, x)[1]).epsilon(1e-12));
    CHECK(value_function(m, x, 0, bg, 1) == doctest::Approx(m.predict(bg).col(1).mean()).epsilon(1e-12));

    const Matrix one = bg.topRows(1);
    std::vector<double> composed = {x[0], one(0, 1), x[2]};
    CHECK(value_function(m, x, 0b101, one, 2) == doctest::Approx(forward(m, composed)[2]).epsilon(1e-12));
}

TEST_CASE("linear score head has analytic attributions") {
    MLPModel m;
    m.layers.push_back({Matrix(2, kNumLabels), RowVector::Zero(kNumLabels)});
    m.layers[0].weights.setZero();
    m.layers[0].weights(0, 0) = 2;
    m.layers[0].weights(1, 0) = 3;
    const Matrix bg = Matrix::Zero(1, 2);
    const std::vector<double> x = {0.7, -0.4};
    const auto a = shapley_exact(m, x, bg, 0, OutputScale::Score);
    CHECK(a.phi[0] == doctest::Approx(1.4));
    CHECK(a.phi[1] == doctest::Approx(-1.2));
    CHECK(a.base_value == doctest::Approx(0.0));
}

TEST_CASE("ignored feature receives zero attribution") {
    auto m = MLPModel::glorot(4, {6, 6}, kNumLabels, 3);
    m.layers[0].weights.row(2).setZero();
    std::mt19937_64 rng(4);
    const Matrix bg = uniform(6, 4, rng);
    const auto x = row(uniform(1, 4, rng), 0);
    for (const auto& a : shapley_exact_all(m, x, bg)) CHECK(std::abs(a.phi[2]) < 1e-15);
}

TEST_CASE("exact attributions match the permutation oracle") {
    std::mt19937_64 rng(5);
    const auto m = MLPModel::glorot(4, {8, 8}, kNumLabels, 6);
    const Matrix bg = uniform(5, 4, rng);
    const auto x = row(uniform(1, 4, rng), 0);
    for (int k = 0; k < kNumLabels; ++k) {
        const auto a = shapley_exact(m, x, bg, k);
        const auto o = permutation_oracle(m, x, bg, k);
        for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(a.phi[i] - o[i]) < 1e-9);
        const double total = a.base_value + std::accumulate(a.phi.begin(), a.phi.end(), 0.0);
        CHECK(std::abs(total - forward(m, x)[k]) < 1e-9);
    }
}

TEST_CASE("too many features for exact mode") {
    const auto m = MLPModel::glorot(17, {4, 4}, kNumLabels, 1);
    const Matrix bg = Matrix::Zero(1, 17);
    const std::vector<double> x(17, 0.5);
    CHECK_THROWS_AS(shapley_exact(m, x, bg, 0), ConfigError);
}

TEST_CASE("sampled attributions agree with exact ones") {
    std::mt19937_64 rng(7);
    auto m = MLPModel::glorot(6, {12, 12}, kNumLabels, 8);
    m.layers[0].weights.row(5).setZero();  // null player
    const Matrix bg = uniform(10, 6, rng);
    const auto x = row(uniform(1, 6, rng), 0);
    const auto exact = shapley_exact(m, x, bg, 0);
    const auto est = shapley_sampled(m, x, bg, 0, 5000, 11);
    CHECK_FALSE(est.exact);
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(est.phi[i] - exact.phi[i]) < 3 * est.standard_error[i] + 1e-12);
    CHECK(std::abs(est.phi[5]) < 3 * est.standard_error[5] + 1e-12);
    const double total = est.base_value + std::accumulate(est.phi.begin(), est.phi.end(), 0.0);
    CHECK(total == doctest::Approx(forward(m, x)[0]).epsilon(1e-9));
    CHECK_THROWS_AS(shapley_sampled(m, x, bg, 0, 10, 1), ConfigError);
}

TEST_CASE("sampled error shrinks with more permutations") {
    std::mt19937_64 rng(9);
    const auto m = MLPModel::glorot(6, {12, 12}, kNumLabels, 10);
    const Matrix bg = uniform(10, 6, rng);
    const auto x = row(uniform(1, 6, rng), 0);
    const auto exact = shapley_exact(m, x, bg, 1);
    auto mse = [&](int n, std::uint64_t seed) {
        const auto est = shapley_sampled(m, x, bg, 1, n, seed);
        double s = 0;
        for (std::size_t i = 0; i < 6; ++i) s += (est.phi[i] - exact.phi[i]) * (est.phi[i] - exact.phi[i]);
        return s / 6;
    };
    double small = 0, large = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        small += mse(200, seed);
        large += mse(400, 1000 + seed);
    }
    CHECK(large < small);
}

TEST_CASE("summary ordering and tie-break") {
    Attribution a;
    a.feature_names = {"b", "a", "c"};
    a.feature_values = {0.1, 0.2, 0.3};
    a.phi = {0.3, -0.3, 0.1};
    auto s = summarize({a});
    REQUIRE(s.labels.size() == 1);
    // |phi| ties between "b" and "a" resolve alphabetically.
    CHECK(s.labels[0].ordering == std::vector<std::size_t>{1, 0, 2});

    Attribution b = a, c = a;
    b.phi = {0.1, 0.0, -0.5};
    c.phi = {-0.2, 0.6, 0.2};
    s = summarize({a, b, c});
    CHECK(s.labels[0].mean_abs_phi[0] == doctest::Approx(0.2));
    CHECK(s.labels[0].mean_abs_phi[1] == doctest::Approx(0.3));
    CHECK(s.labels[0].mean_abs_phi[2] == doctest::Approx(0.8 / 3));
    CHECK(s.labels[0].ordering == std::vector<std::size_t>{1, 2, 0});
    CHECK(s.labels[0].scatter[0].size() == 3);
}

TEST_CASE("waterfall construction") {
    Attribution a;
    a.base_value = 0.5;
    a.feature_names = {"x1", "x2"};
    a.feature_values = {1, 2};
    a.phi = {0.2, -0.1};
    auto w = waterfall(a);
    REQUIRE(w.steps.size() == 2);
    CHECK(w.steps[0].feature == "x2");
    CHECK(w.steps[1].cumulative == doctest::Approx(0.6));
    CHECK(w.final_value == doctest::Approx(0.6));

    a.phi = {0, 0};
    w = waterfall(a);
    CHECK(w.steps.empty());
    CHECK(w.final_value == 0.5);

    std::mt19937_64 rng(12);
    const auto m = MLPModel::glorot(5, {7, 7}, kNumLabels, 13);
    const Matrix bg = uniform(4, 5, rng);
    const auto x = row(uniform(1, 5, rng), 0);
    for (const auto& e : shapley_exact_all(m, x, bg)) {
        const auto wf = waterfall(e);
        const double last = wf.steps.empty() ? wf.base_value : wf.steps.back().cumulative;
        CHECK(std::abs(last - forward(m, x)[e.label]) < 1e-6);
    }
    CHECK(waterfall_svg(waterfall(shapley_exact(m, x, bg, 0)), "t").rfind("<svg", 0) == 0);
}

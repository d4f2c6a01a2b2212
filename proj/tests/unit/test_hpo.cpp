#include "retrofit/hpo.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

using namespace retrofit;

namespace {

Trial completed(int id, double lr, double value) {
    Trial t;
    t.id = id;
    t.config.learning_rate = lr;
    t.status = TrialStatus::Complete;
    t.value = value;
    return t;
}

Trial with_step(int id, int step, double v, TrialStatus status) {
    Trial t;
    t.id = id;
    t.intermediate = {{step, v}};
    t.status = status;
    if (status == TrialStatus::Complete) t.value = v;
    return t;
}

void toy_data(std::uint64_t seed, std::size_t n, Matrix& x, Matrix& y) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    x.resize(static_cast<Eigen::Index>(n), 3);
    y.resize(static_cast<Eigen::Index>(n), kNumLabels);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        x.row(i) << u(rng), u(rng), u(rng);
        y.row(i) << (x(i, 0) > 0.5), (x(i, 1) > 0.3), (x(i, 0) + x(i, 2) > 1), (x(i, 2) < 0.2);
    }
}

}  // namespace

TEST_CASE("startup suggestions are valid members of the space") {
    const SearchSpace space;
    std::vector<Trial> history;
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto c = suggest(history, space, s);
        CHECK(space.contains(c));
        CHECK(c.layer_sizes.size() >= 2);
        CHECK(c.layer_sizes.size() <= 6);
    }
}

TEST_CASE("TPE concentrates on the learning rate of the good trials") {
    const SearchSpace space;
    std::vector<Trial> history;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> noise(0, 0.05);
    for (int i = 0; i < 30; ++i) {
        const double lr = space.learning_rates[static_cast<std::size_t>(i % 3)];
        history.push_back(completed(i, lr, (lr == 1e-3 ? 0.2 : 0.6) + noise(rng)));
    }
    std::map<double, int> counts;
    for (std::uint64_t s = 0; s < 500; ++s) {
        const auto c = suggest(history, space, 1000 + s);
        CHECK(space.contains(c));
        ++counts[c.learning_rate];
    }
    const auto mode = std::max_element(counts.begin(), counts.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    CHECK(mode->first == 1e-3);
}

TEST_CASE("median pruner") {
    std::vector<Trial> history;
    int id = 0;
    for (double v : {0.5, 0.6, 0.7, 0.8}) history.push_back(with_step(id++, 3, v, TrialStatus::Complete));
    CHECK_FALSE(should_prune(with_step(99, 3, 5.0, TrialStatus::Running), 3, history));

    history.push_back(with_step(id++, 3, 0.9, TrialStatus::Complete));
    CHECK(should_prune(with_step(99, 3, 0.85, TrialStatus::Running), 3, history));
    CHECK_FALSE(should_prune(with_step(99, 3, 0.7, TrialStatus::Running), 3, history));
    // Pruned trials do not count towards the warm-up.
    history.resize(4);
    history.push_back(with_step(id++, 3, 0.9, TrialStatus::Pruned));
    CHECK_FALSE(should_prune(with_step(99, 3, 0.85, TrialStatus::Running), 3, history));
}

TEST_CASE("optimize returns the argmin and is deterministic") {
    Matrix x, y, xv, yv;
    toy_data(1, 120, x, y);
    toy_data(2, 40, xv, yv);
    OptimizeOptions o;
    o.n_trials = 10;
    o.seed = 1;
    o.base.max_epochs = 15;
    const auto a = optimize(x, y, xv, yv, SearchSpace{}, o);
    REQUIRE(a.best_trial >= 0);
    const double best = *a.trials[static_cast<std::size_t>(a.best_trial)].value;
    for (const auto& t : a.trials)
        if (t.status == TrialStatus::Complete) CHECK(best <= *t.value);

    const auto b = optimize(x, y, xv, yv, SearchSpace{}, o);
    REQUIRE(a.trials.size() == b.trials.size());
    for (std::size_t i = 0; i < a.trials.size(); ++i) {
        CHECK(a.trials[i].config.layer_sizes == b.trials[i].config.layer_sizes);
        CHECK(a.trials[i].config.learning_rate == b.trials[i].config.learning_rate);
        CHECK(a.trials[i].status == b.trials[i].status);
        CHECK(a.trials[i].intermediate == b.trials[i].intermediate);
    }
}

TEST_CASE("a destructive learning rate is pruned more often") {
    Matrix x, y, xv, yv;
    toy_data(3, 80, x, y);
    toy_data(4, 30, xv, yv);
    SearchSpace space;
    space.learning_rates = {1e-3, 1e2};
    space.n_layers = {2};
    space.layer_sizes = {32};
    space.batch_sizes = {32};
    int bad = 0, bad_pruned = 0, good = 0, good_pruned = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        OptimizeOptions o;
        o.n_trials = 12;
        o.seed = seed;
        o.base.max_epochs = 8;
        o.base.patience = 8;
        o.tpe.n_startup = 12;  // uniform sampling keeps both arms populated
        OptimizeResult r;
        try {
            r = optimize(x, y, xv, yv, space, o);
        } catch (const TrainingError&) {
            continue;
        }
        for (const auto& t : r.trials) {
            const bool pruned = t.status == TrialStatus::Pruned;
            if (t.config.learning_rate > 1) {
                ++bad;
                bad_pruned += pruned;
            } else {
                ++good;
                good_pruned += pruned;
            }
        }
    }
    REQUIRE(bad > 0);
    REQUIRE(good > 0);
    CHECK(static_cast<double>(bad_pruned) / bad > static_cast<double>(good_pruned) / good);
}

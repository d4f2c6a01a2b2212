#include "fixture.hpp"
#include "retrofit/datagen.hpp"
#include "retrofit/quality.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

using namespace retrofit;

namespace {

std::vector<double> normal_sample(std::size_t n, double mean, double sd, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(mean, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

// One Gaussian feature and four label columns; the first label is balanced.
DatasetSchema toy_schema() {
    DatasetSchema s;
    s.id = "toy";
    s.columns = {{"x", ColumnKind::Numerical}};
    for (auto key : kCategoryKeys) s.columns.push_back({std::string(key), ColumnKind::Boolean, {}, ColumnRole::Label});
    return s;
}

std::vector<BuildingRecord> toy_rows(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> x(3.0, 1.0);
    std::bernoulli_distribution half(0.5), rare(0.2);
    std::vector<BuildingRecord> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({{Cell{x(rng)}, Cell{half(rng)}, Cell{rare(rng)}, Cell{rare(rng)}, Cell{rare(rng)}}});
    return out;
}

const Generator& toy_generator() {
    static const Generator g = [] {
        GanConfig c;
        c.epochs = 200;
        c.seed = 4;
        return train_gan(toy_schema(), toy_rows(200, 1), c);
    }();
    return g;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& n) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - n[i]) / std::max({std::abs(a[i]), std::abs(n[i]), 1e-6}));
    return worst;
}

// Central differences of `loss` over every parameter in `params`.
std::vector<double> numeric_grads(const std::vector<gan::Linear*>& params, const std::function<double()>& loss) {
    std::vector<double> out;
    const double h = 1e-6;
    for (auto* p : params)
        for (auto [data, size] : {std::pair{p->w.data(), p->w.size()}, std::pair{p->b.data(), p->b.size()}})
            for (Eigen::Index i = 0; i < size; ++i) {
                double& x = data[i];
                const double o = x;
                x = o + h;
                const double up = loss();
                x = o - h;
                const double down = loss();
                x = o;
                out.push_back((up - down) / (2 * h));
            }
    return out;
}

std::vector<double> flat(const std::vector<gan::Linear>& g) {
    std::vector<double> out;
    for (const auto& l : g) {
        out.insert(out.end(), l.w.data(), l.w.data() + l.w.size());
        out.insert(out.end(), l.b.data(), l.b.data() + l.b.size());
    }
    return out;
}

}  // namespace

TEST_CASE("normaliser finds one mode in a unimodal sample") {
    const auto n = fit_mode_normalizer(normal_sample(1000, 0, 1, 1));
    REQUIRE(n.active_modes() == 1);
    CHECK(std::abs(n.modes[0].mean) < 0.1);
}

TEST_CASE("normaliser separates two modes") {
    auto v = normal_sample(500, -5, 1, 2);
    const auto w = normal_sample(500, 5, 1, 3);
    v.insert(v.end(), w.begin(), w.end());
    const auto n = fit_mode_normalizer(v);
    REQUIRE(n.active_modes() == 2);
    CHECK(std::abs(n.modes[0].mean + 5) < 0.3);
    CHECK(std::abs(n.modes[1].mean - 5) < 0.3);
}

TEST_CASE("constant column") {
    const std::vector<double> v(50, 7.0);
    const auto n = fit_mode_normalizer(v);
    REQUIRE(n.active_modes() == 1);
    CHECK(n.modes[0].stddev > 0);
    std::mt19937_64 rng(1);
    CHECK(n.encode(7.0, rng).alpha == 0.0);
    CHECK_THROWS_AS(fit_mode_normalizer(std::vector<double>(5, 1.0)), DataError);
}

TEST_CASE("alpha is clipped far from every mode") {
    ModeNormalizer n;
    n.modes = {{0.0, 1.0, 1.0}};
    n.min = -100;
    n.max = 100;
    std::mt19937_64 rng(1);
    CHECK(n.encode(10.0, rng).alpha == 1.0);
    CHECK(n.encode(-10.0, rng).alpha == -1.0);
    CHECK(n.decode(0.5, 0) == doctest::Approx(2.0));
}

TEST_CASE("encoder round trip on fixture rows") {
    const auto s = testing::latvia_schema();
    auto rows = testing::latvia_fixture(s);
    rows.resize(100);
    const auto enc = TabularEncoder::fit(s, rows);
    std::mt19937_64 rng(3);
    const auto region = s.require_index("Region");
    for (const auto& r : rows) {
        const auto e = enc.encode_row(r, rng);
        REQUIRE(e.size() == enc.encoded_dim());
        const auto back = enc.decode_row(e);
        for (std::size_t c = 0; c < s.columns.size(); ++c) {
            if (c == region) {
                CHECK(is_null(back.values[c]));
            } else if (const auto* d = std::get_if<double>(&r.values[c])) {
                CHECK(std::abs(std::get<double>(back.values[c]) - *d) < 1e-6);
            } else {
                CHECK(back.values[c] == r.values[c]);
            }
        }
    }
}

TEST_CASE("discrete columns encode as one-hot blocks") {
    DatasetSchema s = toy_schema();
    s.columns.insert(s.columns.begin(), {"c", ColumnKind::Categorical});
    std::vector<BuildingRecord> rows;
    for (int i = 0; i < 30; ++i) {
        auto r = toy_rows(1, static_cast<std::uint64_t>(i))[0];
        r.values.insert(r.values.begin(), Cell{std::string(1, static_cast<char>('a' + i % 3))});
        rows.push_back(r);
    }
    const auto enc = TabularEncoder::fit(s, rows);
    const int d = enc.discrete_index("c");
    REQUIRE(d >= 0);
    CHECK(enc.discrete()[static_cast<std::size_t>(d)].categories.size() == 3);
    std::mt19937_64 rng(1);
    const auto e = enc.encode_row(rows[1], rng);
    const auto off = enc.discrete_data_offset(static_cast<std::size_t>(d));
    CHECK(e[off] == 0.0);
    CHECK(e[off + 1] == 1.0);
    CHECK(e[off + 2] == 0.0);
}

TEST_CASE("conditional vector sampling frequencies") {
    std::mt19937_64 rng(5);
    const int draws = 100000;
    int minority = 0;
    for (int i = 0; i < draws; ++i) minority += sample_cond_vector({{95, 5}}, rng).category == 1;
    CHECK(minority > draws * 5 / 100);

    for (int i = 0; i < 100; ++i) CHECK(sample_cond_vector({{12}}, rng).category == 0);

    int first = 0;
    for (int i = 0; i < draws; ++i) {
        const auto c = sample_cond_vector({{10, 10}, {1, 50}}, rng);
        first += c.column == 0;
        CHECK(c.onehot.size() == 4);
    }
    CHECK(std::abs(first / static_cast<double>(draws) - 0.5) < 0.02);
}

TEST_CASE("discriminator and gradient penalty gradients") {
    std::mt19937_64 rng(8);
    auto d = gan::make_discriminator(3, {6, 5}, 2, 0.2, rng);
    Matrix rows = Matrix::Random(4, 3);
    const Matrix weights = Matrix::Random(2, 1);

    auto grads = d.zero_grads();
    gan::DiscriminatorNet::Cache cache;
    d.forward(rows, &cache);
    const Matrix d_rows = d.backward(cache, weights, &grads);
    auto score_loss = [&] { return d.forward(rows, nullptr).cwiseProduct(weights).sum(); };
    CHECK(max_rel_error(flat(grads), numeric_grads(d.params(), score_loss)) < 1e-5);

    // Input gradient, element by element.
    for (Eigen::Index i = 0; i < rows.size(); ++i) {
        const double o = rows.data()[i];
        rows.data()[i] = o + 1e-6;
        const double up = score_loss();
        rows.data()[i] = o - 1e-6;
        const double down = score_loss();
        rows.data()[i] = o;
        CHECK(std::abs(d_rows.data()[i] - (up - down) / 2e-6) < 1e-6);
    }

    auto gp = d.zero_grads();
    d.gradient_penalty(rows, 10.0, &gp);
    auto penalty = [&] { return d.gradient_penalty(rows, 10.0, nullptr); };
    CHECK(max_rel_error(flat(gp), numeric_grads(d.params(), penalty)) < 1e-5);
}

TEST_CASE("gradients with dropout active") {
    std::mt19937_64 init(11);
    auto d = gan::make_discriminator(3, {6, 5}, 2, 0.2, init, 0.5);
    const Matrix rows = Matrix::Random(4, 3);
    const Matrix weights = Matrix::Random(2, 1);
    // Reseeding before every pass fixes the dropout masks across the finite differences.
    auto score_loss = [&] {
        std::mt19937_64 rng(5);
        return d.forward(rows, nullptr, &rng).cwiseProduct(weights).sum();
    };
    auto penalty = [&] {
        std::mt19937_64 rng(6);
        return d.gradient_penalty(rows, 10.0, nullptr, &rng);
    };
    auto grads = d.zero_grads();
    gan::DiscriminatorNet::Cache cache;
    std::mt19937_64 rng(5);
    d.forward(rows, &cache, &rng);
    d.backward(cache, weights, &grads);
    CHECK(max_rel_error(flat(grads), numeric_grads(d.params(), score_loss)) < 1e-5);

    auto gp = d.zero_grads();
    std::mt19937_64 rng_gp(6);
    d.gradient_penalty(rows, 10.0, &gp, &rng_gp);
    CHECK(max_rel_error(flat(gp), numeric_grads(d.params(), penalty)) < 1e-5);

    // Without a random source the network is deterministic and dropout is off.
    CHECK(d.forward(rows, nullptr)(0, 0) == d.forward(rows, nullptr)(0, 0));
}

TEST_CASE("generator gradients in training mode") {
    std::mt19937_64 rng(9);
    auto g = gan::make_generator(5, {7, 6}, 4, rng);
    for (auto& n : g.norms) {
        n.w = Matrix::Random(1, n.w.cols());
        n.b = RowVector::Random(n.b.size()) * 0.3;
    }
    const Matrix x = Matrix::Random(8, 5);
    const Matrix r = Matrix::Random(8, 4);
    gan::GeneratorNet::Cache cache;
    g.forward(x, &cache, true);
    const auto grads = g.backward(cache, r);
    auto loss = [&] {
        gan::GeneratorNet::Cache c;
        return g.forward(x, &c, true).cwiseProduct(r).sum();
    };
    CHECK(max_rel_error(flat(grads), numeric_grads(g.params(), loss)) < 1e-3);
}

TEST_CASE("toy GAN reproduces the marginal and honours conditions") {
    const auto& g = toy_generator();
    const auto real = toy_rows(200, 1);
    std::mt19937_64 rng(10);
    const int col = g.encoder().discrete_index("building_fabric");
    REQUIRE(col >= 0);
    const auto& spec = g.encoder().discrete()[static_cast<std::size_t>(col)];
    const int positive = spec.category_of(Cell{true});
    std::vector<BuildingRecord> synth;
    for (int c = 0; c < 2; ++c) {
        const auto part = g.sample_conditioned(col, c, 2000, rng);
        synth.insert(synth.end(), part.begin(), part.end());
    }
    const auto s = toy_schema();
    const auto rx = column_data(real, s, "x").numbers;
    const auto sx = column_data(synth, s, "x").numbers;
    CHECK(ks_complement(rx, sx) > 0.85);

    const auto pos = g.sample_conditioned(col, positive, 10000, rng);
    const auto honoured = std::count_if(pos.begin(), pos.end(), [](const BuildingRecord& r) { return std::get<bool>(r.values[1]); });
    CHECK(static_cast<double>(honoured) / 10000.0 > 0.95);
}

TEST_CASE("GAN training is deterministic per seed") {
    GanConfig c;
    c.epochs = 2;
    c.generator_dims = {16, 16};
    c.discriminator_dims = {16, 16};
    c.noise_dim = 8;
    c.seed = 3;
    const auto rows = toy_rows(120, 2);
    CHECK(train_gan(toy_schema(), rows, c).parameters() == train_gan(toy_schema(), rows, c).parameters());
    CHECK_THROWS_AS(train_gan(toy_schema(), toy_rows(50, 2), c), DataError);
}

TEST_CASE("rejection sampling delivers the requested rows") {
    const auto& g = toy_generator();
    const auto r = g.generate({{{3, true, 50}}}, 7);
    CHECK(r.records.size() == 50);
    for (const auto& row : r.records) CHECK(std::get<bool>(row.values[4]));
    CHECK(r.stats[0].delivered == 50);
    CHECK(r.stats[0].draws == r.stats[0].delivered + r.stats[0].rejected);
    CHECK(g.generate({}, 7).records.empty());
    CHECK(g.generate({{{3, true, 50}}}, 7).records == r.records);
}

TEST_CASE("balance plan on the published label rates") {
    const auto plan = make_balance_plan(std::vector<double>{0.86, 0.56, 0.05, 0.06}, 198, 800);
    CHECK(plan.total() == 800);
    std::size_t focus = 0;
    for (const auto& e : plan.entries)
        if ((e.label == 2 && e.value) || (e.label == 3 && e.value) || (e.label == 0 && !e.value)) focus += e.count;
    CHECK(focus > 400);
    CHECK(make_balance_plan(std::vector<double>{0.86, 0.56, 0.05, 0.06}, 198, 0).entries.empty());
}

TEST_CASE("balanced labels spread the budget evenly") {
    const auto plan = make_balance_plan(std::vector<double>{0.5, 0.5, 0.5, 0.5}, 200, 800);
    CHECK(plan.total() == 800);
    std::array<std::size_t, kNumLabels> per_label{};
    for (const auto& e : plan.entries) per_label[static_cast<std::size_t>(e.label)] += e.count;
    for (auto c : per_label) CHECK(c == 200);
}

TEST_CASE("fixture plan equalises expected label rates") {
    const auto s = testing::latvia_schema();
    const Matrix y = label_matrix(testing::latvia_fixture(s), s);
    const auto plan = make_balance_plan(y, 800);
    CHECK(plan.total() == 800);
    for (double r : expected_positive_rates(y, plan)) {
        CHECK(r >= 0.4);
        CHECK(r <= 0.6);
    }
}

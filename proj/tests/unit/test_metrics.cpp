#include "retrofit/metrics.hpp"

#include <doctest.h>

using namespace retrofit;

TEST_CASE("binarize boundary") {
    Matrix p(1, 2);
    p << 0.5, 0.49;
    const Matrix b = binarize(p, 0.5);
    CHECK(b(0, 0) == 1.0);
    CHECK(b(0, 1) == 0.0);
    CHECK_THROWS_AS(binarize(p, 1.0), ConfigError);
}

TEST_CASE("perfect predictions") {
    Matrix y(4, 2);
    y << 1, 0, 0, 1, 1, 1, 0, 0;
    const auto r = evaluate(y, y);
    CHECK(r.macro.accuracy == 1.0);
    CHECK(r.macro.precision == 1.0);
    CHECK(r.macro.recall == 1.0);
    CHECK(r.macro.f1 == 1.0);
}

TEST_CASE("hand confusion fixture") {
    // Label 1: TP=3, FP=1, FN=2, TN=2 over 8 samples.
    Matrix truth(8, 2), pred(8, 2);
    truth.col(0) << 1, 1, 1, 1, 1, 0, 0, 0;
    pred.col(0) << 1, 1, 1, 0, 0, 1, 0, 0;
    truth.col(1).setOnes();
    pred.col(1).setOnes();
    const auto r = evaluate(pred, truth);
    CHECK(r.counts[0].tp == 3);
    CHECK(r.counts[0].fp == 1);
    CHECK(r.counts[0].fn == 2);
    CHECK(r.counts[0].tn == 2);
    CHECK(r.per_label[0].precision == doctest::Approx(0.75));
    CHECK(r.per_label[0].recall == doctest::Approx(0.6));
    CHECK(r.per_label[0].f1 == doctest::Approx(2.0 / 3.0));
    CHECK(r.per_label[0].accuracy == doctest::Approx(0.625));
    CHECK(r.macro.recall == doctest::Approx(0.8));
}

TEST_CASE("no positive predictions") {
    Matrix truth(3, 1), pred = Matrix::Zero(3, 1);
    truth << 1, 0, 1;
    const auto m = evaluate(pred, truth).per_label[0];
    CHECK(m.precision == 0);
    CHECK(m.recall == 0);
    CHECK(m.f1 == 0);
}

TEST_CASE("metrics table layout") {
    Matrix y(2, 1);
    y << 1, 0;
    const auto t = format_metrics_table({{"Initial", "Initial", evaluate(y, y)}});
    for (const char* h : {"Train data", "Test data", "Accuracy", "Precision", "Recall", "F1 score"})
        CHECK(t.find(h) != std::string::npos);
    CHECK(t.find("1.000") != std::string::npos);
}

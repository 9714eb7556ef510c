#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "pelfa/metrics.hpp"
#include "pelfa/rng.hpp"

using namespace pelfa;

TEST_CASE("confusion counts: hand cases and the per-element counting oracle") {
    {
        auto c = confusion({1, 0}, {1, 0});
        CHECK(c.tp == 1);
        CHECK(c.tn == 1);
        CHECK(c.fp == 0);
        CHECK(c.fn == 0);
    }
    {
        auto c = confusion({0, 1, 0, 1}, {1, 0, 1, 0});
        CHECK(c.tp == 0);
        CHECK(c.tn == 0);
        CHECK(c.fp == 2);
        CHECK(c.fn == 2);
    }
    Rng rng = make_rng(90, "confusion");
    std::bernoulli_distribution coin(0.4);
    std::vector<int> preds, labels;
    for (int i = 0; i < 50; ++i) {
        preds.push_back(coin(rng));
        labels.push_back(coin(rng));
    }
    auto c = confusion(preds, labels);
    long tp = 0, fp = 0, tn = 0, fn = 0;
    for (int i = 0; i < 50; ++i) {
        if (preds[i] && labels[i]) ++tp;
        if (preds[i] && !labels[i]) ++fp;
        if (!preds[i] && !labels[i]) ++tn;
        if (!preds[i] && labels[i]) ++fn;
    }
    CHECK(c.tp == tp);
    CHECK(c.fp == fp);
    CHECK(c.tn == tn);
    CHECK(c.fn == fn);
    CHECK(c.total() == 50);
    CHECK_THROWS_AS(confusion({1}, {1, 0}), ContractViolation);
}

TEST_CASE("classification metrics: hand-evaluated formulas") {
    MetricReport r = classification_metrics({/*tp=*/9, /*fp=*/3, /*tn=*/7, /*fn=*/1});
    CHECK(r.accuracy == doctest::Approx(0.80));
    CHECK(r.precision == doctest::Approx(0.75));
    CHECK(r.recall == doctest::Approx(0.90));
    CHECK(r.specificity == doctest::Approx(0.70));
    CHECK(r.f1 == doctest::Approx(2.0 * 0.75 * 0.9 / (0.75 + 0.9)));
    CHECK(r.n_samples == 20);
    CHECK_FALSE(r.zero_denominator);

    MetricReport perfect = classification_metrics({5, 0, 5, 0});
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.specificity == 1.0);
    CHECK(perfect.f1 == 1.0);

    // tp=fp=0: precision falls back to 0 by the zero-denominator rule
    MetricReport degenerate = classification_metrics({0, 0, 5, 5});
    CHECK(degenerate.precision == 0.0);
    CHECK(degenerate.f1 == 0.0);
    CHECK(degenerate.zero_denominator);
}

TEST_CASE("classification metrics match hand formulas on random confusion matrices") {
    Rng rng = make_rng(91, "cls_random");
    std::uniform_int_distribution<long> count(0, 40);
    for (int trial = 0; trial < 100; ++trial) {
        ConfusionCounts c{count(rng), count(rng), count(rng), count(rng)};
        if (c.total() == 0) continue;
        MetricReport r = classification_metrics(c);
        auto safe = [](double num, double den) { return den == 0 ? 0.0 : num / den; };
        CHECK(r.accuracy ==
              doctest::Approx(safe(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()))));
        CHECK(r.precision == doctest::Approx(safe(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp))));
        CHECK(r.recall == doctest::Approx(safe(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn))));
        CHECK(r.specificity == doctest::Approx(safe(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fp))));
        const double denom = r.precision + r.recall;
        CHECK(r.f1 == doctest::Approx(denom == 0 ? 0.0 : 2 * r.precision * r.recall / denom));
        for (double m : {r.accuracy, r.precision, r.recall, r.specificity, r.f1}) {
            CHECK(m >= 0.0);
            CHECK(m <= 1.0);
        }
    }
}

TEST_CASE("auc: worked example, perfect separation, all ties") {
    CHECK(auc({0.9, 0.4, 0.6, 0.2}, {1, 1, 0, 0}) == doctest::Approx(0.75));
    CHECK(auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == doctest::Approx(1.0));
    CHECK(auc({0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(auc({0.3, 0.6}, {1, 1}), ContractViolation);
}

TEST_CASE("auc equals brute-force pair counting on random score sets") {
    Rng rng = make_rng(92, "auc_random");
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<int> quant(0, 9);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> scores;
        std::vector<int> labels;
        bool has_pos = false, has_neg = false;
        const int n = 5 + trial % 40;
        for (int i = 0; i < n; ++i) {
            // quantized scores so ties occur often
            scores.push_back(trial % 2 == 0 ? uni(rng) : quant(rng) / 10.0);
            labels.push_back(coin(rng));
            (labels.back() ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        CHECK(auc(scores, labels) == doctest::Approx(oracle::auc_pairs(scores, labels)).epsilon(1e-12));
    }
}

TEST_CASE("auc is invariant under strictly increasing score transforms") {
    Rng rng = make_rng(93, "auc_mono");
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
        scores.push_back(uni(rng));
        labels.push_back(i < 30 ? 1 : 0);
    }
    const double base = auc(scores, labels);
    std::vector<double> exp_scores = scores, affine_scores = scores;
    for (auto& s : exp_scores) s = std::exp(s);
    for (auto& s : affine_scores) s = 3.5 * s + 11.0;
    CHECK(auc(exp_scores, labels) == doctest::Approx(base).epsilon(1e-12));
    CHECK(auc(affine_scores, labels) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("dice and iou: hand cases") {
    Tensor a({1, 1, 2, 2}, 1.0);
    Tensor b = a;
    CHECK(dice_score(a, b) == 1.0);
    CHECK(iou(a, b) == 1.0);

    // |A|=|B|=4, overlap 2
    Tensor x({1, 1, 2, 3});
    Tensor y({1, 1, 2, 3});
    x[0] = x[1] = x[2] = x[3] = 1.0;
    y[2] = y[3] = y[4] = y[5] = 1.0;
    CHECK(dice_score(x, y) == doctest::Approx(0.5));
    CHECK(iou(x, y) == doctest::Approx(2.0 / 6.0));

    Tensor d1({1, 1, 1, 4}), d2({1, 1, 1, 4});
    d1[0] = 1.0;
    d2[3] = 1.0;
    CHECK(dice_score(d1, d2) == 0.0);
    CHECK(iou(d1, d2) == 0.0);

    Tensor e1({1, 1, 2, 2}), e2({1, 1, 2, 2});
    CHECK(dice_score(e1, e2) == 1.0);  // both empty
    CHECK(iou(e1, e2) == 1.0);

    Tensor bad({1, 1, 3, 3});
    CHECK_THROWS_AS(dice_score(e1, bad), ContractViolation);
}

TEST_CASE("dice >= iou over random mask pairs, equality only at 0 or 1") {
    Rng rng = make_rng(94, "dice_iou");
    std::bernoulli_distribution coin(0.3);
    for (int trial = 0; trial < 1000; ++trial) {
        Tensor a({1, 1, 4, 5}), b({1, 1, 4, 5});
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = coin(rng) ? 1.0 : 0.0;
            b[i] = coin(rng) ? 1.0 : 0.0;
        }
        const double d = dice_score(a, b), j = iou(a, b);
        CHECK(d >= j - 1e-15);
        if (std::fabs(d - j) < 1e-15) {
            const bool boundary = (d < 1e-15) || (std::fabs(d - 1.0) < 1e-15);
            CHECK(boundary);
        }
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        CHECK(j >= 0.0);
        CHECK(j <= 1.0);
    }
}

TEST_CASE("fold aggregation: mean, population variance, table layout") {
    MetricReport a;
    a.accuracy = 0.8;
    a.precision = 0.8;
    a.recall = 0.8;
    a.specificity = 0.8;
    a.f1 = 0.8;
    a.auc = 0.9;
    MetricReport b = a;
    b.accuracy = 0.9;

    auto rows = aggregate_folds({a, b});
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].metric == "accuracy");
    CHECK(rows[0].mean == doctest::Approx(0.85));
    CHECK(rows[0].variance == doctest::Approx(0.0025));
    CHECK(rows[0].stddev == doctest::Approx(0.05));
    CHECK(rows[0].sample_variance == doctest::Approx(0.005));
    CHECK(rows[1].metric == "precision");
    CHECK(rows[1].variance == doctest::Approx(0.0));
    CHECK(rows[5].metric == "auc");

    // identical reports -> zero variance
    auto rows2 = aggregate_folds({a, a, a});
    for (const auto& r : rows2) CHECK(r.variance == 0.0);

    CHECK_THROWS_AS(aggregate_folds({a}), ContractViolation);

    // column order in the rendered table mirrors the report layout
    const std::string md = render_table_markdown({{"VIS", rows}, {"INVIS", rows2}});
    CHECK(md.find("Accuracy (Variance)") < md.find("Precision (Variance)"));
    CHECK(md.find("Precision (Variance)") < md.find("Recall (Variance)"));
    CHECK(md.find("Recall (Variance)") < md.find("Specificity (Variance)"));
    CHECK(md.find("Specificity (Variance)") < md.find("F1 Score (Variance)"));
    CHECK(md.find("F1 Score (Variance)") < md.find("AUC (Variance)"));
    CHECK(md.find("| VIS |") != std::string::npos);
    CHECK(md.find("| INVIS |") != std::string::npos);
    CHECK(md.find("85.00% (0.25%)") != std::string::npos);

    const std::string csv = render_table_csv({{"VIS", rows}});
    CHECK(csv.find("VIS,") != std::string::npos);
}

TEST_CASE("metrics agree between a confusion matrix and its per-sample reconstruction") {
    Rng rng = make_rng(95, "reconstruct");
    std::uniform_int_distribution<long> count(1, 25);
    for (int trial = 0; trial < 20; ++trial) {
        ConfusionCounts c{count(rng), count(rng), count(rng), count(rng)};
        std::vector<int> preds, labels;
        for (long i = 0; i < c.tp; ++i) { preds.push_back(1); labels.push_back(1); }
        for (long i = 0; i < c.fp; ++i) { preds.push_back(1); labels.push_back(0); }
        for (long i = 0; i < c.tn; ++i) { preds.push_back(0); labels.push_back(0); }
        for (long i = 0; i < c.fn; ++i) { preds.push_back(0); labels.push_back(1); }
        MetricReport from_counts = classification_metrics(c);
        MetricReport from_samples = classification_metrics(confusion(preds, labels));
        CHECK(from_counts.accuracy == from_samples.accuracy);
        CHECK(from_counts.precision == from_samples.precision);
        CHECK(from_counts.recall == from_samples.recall);
        CHECK(from_counts.specificity == from_samples.specificity);
        CHECK(from_counts.f1 == from_samples.f1);
    }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "defectmet/matching.hpp"
#include "defectmet/synthetic.hpp"
#include "helpers.hpp"

using namespace defectmet;

namespace {

// Exact binomial tail arithmetic in log space, independent of any
// library RNG or distribution code.
double binomial_pmf(std::size_t n, std::size_t k, double p) {
    const double log_c = std::lgamma(static_cast<double>(n) + 1) -
                         std::lgamma(static_cast<double>(k) + 1) -
                         std::lgamma(static_cast<double>(n - k) + 1);
    return std::exp(log_c + static_cast<double>(k) * std::log(p) +
                    static_cast<double>(n - k) * std::log1p(-p));
}

/// Central interval [lo, hi] with at most alpha/2 probability in each tail.
std::pair<std::size_t, std::size_t> binomial_interval(std::size_t n, double p,
                                                      double alpha) {
    double cdf = 0.0;
    std::size_t lo = 0;
    for (std::size_t k = 0; k <= n; ++k) {
        cdf += binomial_pmf(n, k, p);
        if (cdf > alpha / 2) {
            lo = k;
            break;
        }
    }
    double upper = 0.0;
    std::size_t hi = n;
    for (std::size_t k = n; k-- > 0;) {
        upper += binomial_pmf(n, k + 1, p);
        if (upper > alpha / 2) {
            hi = k + 1;
            break;
        }
    }
    return {lo, hi};
}

std::size_t count_predictions(const PerturbResult& result) {
    std::size_t total = 0;
    for (const auto& [name, list] : *result.predictions.predictions) {
        total += list.size();
    }
    return total;
}

}  // namespace

TEST_CASE("spec validation") {
    PerturbationSpec spec;
    CHECK_NOTHROW(spec.validate());

    SUBCASE("drop probability out of range") {
        spec.drop_prob[DefectClass::BlackDot] = 1.3;
        CHECK_THROWS_AS(spec.validate(), RangeError);
    }
    SUBCASE("confusion rows must be stochastic") {
        spec.confusion[1] = {0.5, 0.4, 0.2};
        CHECK_THROWS_AS(spec.validate(), RangeError);
    }
    SUBCASE("negative jitter") {
        spec.jitter_px = -1.0;
        CHECK_THROWS_AS(spec.validate(), RangeError);
    }
}

TEST_CASE("spec JSON round trip and scalar drop shorthand") {
    PerturbationSpec spec;
    spec.drop_prob[DefectClass::Loop111] = 0.25;
    spec.spurious_rate = 1.5;
    spec.jitter_px = 0.5;
    spec.seed = 77;
    spec.confusion = {{{0.9, 0.05, 0.05}, {0.1, 0.8, 0.1}, {0.0, 0.2, 0.8}}};
    const PerturbationSpec reparsed = PerturbationSpec::from_json(spec.to_json());
    CHECK(reparsed.drop_prob == spec.drop_prob);
    CHECK(reparsed.confusion == spec.confusion);
    CHECK(reparsed.seed == 77);

    const PerturbationSpec scalar =
        PerturbationSpec::from_json(R"({"drop_prob": 0.2, "seed": 3})");
    for (DefectClass c : kAllClasses) CHECK(scalar.drop_prob.at(c) == 0.2);
}

TEST_CASE("zero perturbation reproduces the truths") {
    const Dataset dataset = testutil::grid_dataset(5, 30);
    PerturbationSpec spec;
    spec.seed = 1;
    const PerturbResult result = perturb(dataset, spec);

    REQUIRE(result.predictions.predictions.has_value());
    for (const auto& [name, truths] : dataset.truths) {
        const auto& preds = result.predictions.predictions->at(name);
        REQUIRE(preds.size() == truths.size());
        for (std::size_t i = 0; i < truths.size(); ++i) {
            CHECK(preds[i].polygon == truths[i].polygon);
            CHECK(preds[i].cls == truths[i].cls);
            CHECK(preds[i].score == 1.0);
        }
        // Every pair matches at IoU exactly 1.
        const MatchReport report = match_instances(truths, preds, 0.3, name);
        CHECK(report.pairs.size() == truths.size());
        for (const auto& pair : report.pairs) CHECK(pair.iou == 1.0);
        CHECK(find_scores(report).f1 == 1.0);
    }
    CHECK(result.expectations.expected_recall.at(DefectClass::BlackDot) == 1.0);
}

TEST_CASE("full drop empties the predictions") {
    const Dataset dataset = testutil::grid_dataset(3, 10);
    PerturbationSpec spec;
    for (DefectClass c : kAllClasses) spec.drop_prob[c] = 1.0;
    spec.seed = 2;
    const PerturbResult result = perturb(dataset, spec);
    CHECK(count_predictions(result) == 0);
}

TEST_CASE("determinism given the seed") {
    const Dataset dataset = testutil::grid_dataset(4, 25);
    PerturbationSpec spec;
    spec.drop_prob[DefectClass::BlackDot] = 0.3;
    spec.spurious_rate = 1.0;
    spec.jitter_px = 1.0;
    spec.seed = 9;
    const PerturbResult a = perturb(dataset, spec);
    const PerturbResult b = perturb(dataset, spec);
    CHECK(a.predictions == b.predictions);

    spec.seed = 10;
    CHECK(perturb(dataset, spec).predictions != a.predictions);
}

TEST_CASE("drop 0.2 lands in the exact binomial 99% interval") {
    // 1000 truths across 10 images.
    const Dataset dataset = testutil::grid_dataset(10, 100);
    PerturbationSpec spec;
    for (DefectClass c : kAllClasses) spec.drop_prob[c] = 0.2;
    spec.seed = 20260810;
    const PerturbResult result = perturb(dataset, spec);

    const std::size_t survivors = count_predictions(result);
    const auto [lo, hi] = binomial_interval(1000, 0.8, 0.01);
    CHECK(lo <= survivors);
    CHECK(survivors <= hi);
}

TEST_CASE("measured recall converges to 1 - drop_prob") {
    // 10^4 truths, drop 0.35: recall within 3 sigma.
    const std::size_t n = 10000;
    const Dataset dataset = testutil::grid_dataset(10, n / 10);
    PerturbationSpec spec;
    for (DefectClass c : kAllClasses) spec.drop_prob[c] = 0.35;
    spec.seed = 5;
    const PerturbResult result = perturb(dataset, spec);

    const double recall =
        static_cast<double>(count_predictions(result)) / static_cast<double>(n);
    const double sigma = std::sqrt(0.65 * 0.35 / static_cast<double>(n));
    CHECK(std::abs(recall - 0.65) <= 3.0 * sigma);
}

TEST_CASE("class flips follow the confusion matrix") {
    const std::size_t n = 10000;
    const Dataset dataset = testutil::grid_dataset(10, n / 10, DefectClass::BlackDot);
    PerturbationSpec spec;
    spec.confusion = {{{0.7, 0.2, 0.1}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
    spec.seed = 6;
    const PerturbResult result = perturb(dataset, spec);

    std::map<DefectClass, std::size_t> emitted;
    for (const auto& [name, list] : *result.predictions.predictions) {
        for (const auto& inst : list) emitted[inst.cls] += 1;
    }
    CHECK(std::abs(static_cast<double>(emitted[DefectClass::BlackDot]) / n - 0.7) <= 0.02);
    CHECK(std::abs(static_cast<double>(emitted[DefectClass::Loop111]) / n - 0.2) <= 0.02);
    CHECK(std::abs(static_cast<double>(emitted[DefectClass::Loop100]) / n - 0.1) <= 0.02);
}

TEST_CASE("spurious instances are guaranteed false positives") {
    const Dataset dataset = testutil::grid_dataset(6, 40);
    PerturbationSpec spec;
    spec.spurious_rate = 3.0;
    spec.seed = 8;
    const PerturbResult result = perturb(dataset, spec);

    std::size_t total_spurious = 0;
    for (const auto& image : dataset.images) {
        const auto& truths = dataset.truths.at(image.name);
        const auto& preds = result.predictions.predictions->at(image.name);
        REQUIRE(preds.size() >= truths.size());
        total_spurious += preds.size() - truths.size();

        const MatchReport report = match_instances(truths, preds, 0.3, image.name);
        // All truths matched at IoU 1, every spurious unmatched.
        CHECK(report.pairs.size() == truths.size());
        CHECK(report.unmatched_preds.size() == preds.size() - truths.size());
    }
    CHECK(total_spurious > 0);  // Poisson(3) over 6 images
}

TEST_CASE("small jitter keeps matches above the working threshold") {
    const Dataset dataset = testutil::grid_dataset(4, 50);
    PerturbationSpec spec;
    spec.jitter_px = 1.0;  // squares are 64 px^2, well above the breakpoint
    spec.seed = 13;
    const PerturbResult result = perturb(dataset, spec);

    for (const auto& image : dataset.images) {
        const auto& truths = dataset.truths.at(image.name);
        const auto& preds = result.predictions.predictions->at(image.name);
        const MatchReport report = match_instances(truths, preds, 0.3, image.name);
        CHECK(report.pairs.size() == truths.size());
    }
}

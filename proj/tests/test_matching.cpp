#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "defectmet/matching.hpp"
#include "helpers.hpp"

using namespace defectmet;
using testutil::square;

namespace {

/// Brute-force oracle: enumerate every one-to-one assignment with all
/// pairs at or above the threshold and keep the one whose descending-IoU
/// sequence is lexicographically largest (longer wins on equal prefix).
/// This is the matching the greedy rule is defined to produce.
struct BruteForce {
    const std::vector<IouCandidate>& candidates;
    std::size_t n_truths, n_preds;
    double threshold;

    std::vector<MatchPair> best;
    std::vector<double> best_key;

    std::vector<MatchPair> run() {
        best.clear();
        best_key.clear();
        std::vector<MatchPair> current;
        std::vector<bool> pred_used(n_preds, false);
        recurse(0, current, pred_used);
        std::sort(best.begin(), best.end(),
                  [](const MatchPair& a, const MatchPair& b) {
                      return a.truth_index < b.truth_index;
                  });
        return best;
    }

    double iou_of(std::size_t t, std::size_t p) const {
        for (const auto& c : candidates) {
            if (c.truth_index == t && c.pred_index == p) return c.iou;
        }
        return 0.0;
    }

    void consider(const std::vector<MatchPair>& current) {
        std::vector<double> key;
        for (const auto& pair : current) key.push_back(pair.iou);
        std::sort(key.rbegin(), key.rend());
        if (std::lexicographical_compare(best_key.begin(), best_key.end(),
                                         key.begin(), key.end())) {
            best_key = key;
            best = current;
        }
    }

    void recurse(std::size_t truth, std::vector<MatchPair>& current,
                 std::vector<bool>& pred_used) {
        if (truth == n_truths) {
            consider(current);
            return;
        }
        recurse(truth + 1, current, pred_used);  // leave this truth unmatched
        for (std::size_t p = 0; p < n_preds; ++p) {
            if (pred_used[p]) continue;
            const double iou = iou_of(truth, p);
            if (iou < threshold) continue;
            pred_used[p] = true;
            current.push_back({truth, p, iou});
            recurse(truth + 1, current, pred_used);
            current.pop_back();
            pred_used[p] = false;
        }
    }
};

std::vector<MatchPair> sorted_pairs(const MatchReport& report) {
    auto pairs = report.pairs;
    std::sort(pairs.begin(), pairs.end(), [](const MatchPair& a, const MatchPair& b) {
        return a.truth_index < b.truth_index;
    });
    return pairs;
}

}  // namespace

TEST_CASE("prf conventions") {
    const PrfScores all = prf_from_counts(10, 0, 0);
    CHECK(all.precision == 1.0);
    CHECK(all.recall == 1.0);
    CHECK(all.f1 == 1.0);

    const PrfScores none = prf_from_counts(0, 0, 0);
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);

    const PrfScores mixed = prf_from_counts(8, 2, 2);
    CHECK(mixed.precision == doctest::Approx(0.8));
    CHECK(mixed.recall == doctest::Approx(0.8));
    CHECK(mixed.f1 == doctest::Approx(0.8));
}

TEST_CASE("greedy matching on the prescribed 2x2 example") {
    // IoU(T1,P1)=0.9, IoU(T1,P2)=0.6, IoU(T2,P2)=0.5, IoU(T2,P1)=0.
    std::vector<IouCandidate> candidates = {
        {0, 0, 0.9}, {0, 1, 0.6}, {1, 1, 0.5}};
    const MatchReport report = match_from_candidates(candidates, 2, 2, 0.3);
    REQUIRE(report.pairs.size() == 2);
    CHECK(report.pairs[0] == MatchPair{0, 0, 0.9});
    CHECK(report.pairs[1] == MatchPair{1, 1, 0.5});
    CHECK(report.unmatched_truths.empty());
    CHECK(report.unmatched_preds.empty());

    BruteForce oracle{candidates, 2, 2, 0.3, {}, {}};
    CHECK(oracle.run() == sorted_pairs(report));
}

TEST_CASE("identity and degenerate scenes") {
    std::vector<DefectInstance> truths, preds;
    for (int i = 0; i < 5; ++i) {
        truths.push_back(testutil::instance(DefectClass::BlackDot,
                                            square(30.0 * i, 10, 12)));
        preds.push_back(testutil::instance(DefectClass::BlackDot,
                                           square(30.0 * i, 10, 12), "img", 1.0));
    }

    SUBCASE("preds identical to truths match at IoU 1") {
        const MatchReport report = match_instances(truths, preds, 0.3);
        CHECK(report.pairs.size() == 5);
        for (const auto& pair : report.pairs) CHECK(pair.iou == 1.0);
        CHECK(find_scores(report).f1 == 1.0);
    }

    SUBCASE("zero predictions leave all truths unmatched") {
        const MatchReport report = match_instances(truths, {}, 0.3);
        CHECK(report.pairs.empty());
        CHECK(report.unmatched_truths.size() == 5);
        CHECK(find_scores(report).f1 == 0.0);
    }

    SUBCASE("threshold bounds are enforced") {
        CHECK_THROWS_AS(match_instances(truths, preds, 0.0), RangeError);
        CHECK_THROWS_AS(match_instances(truths, preds, 1.5), RangeError);
    }
}

TEST_CASE("match report bookkeeping invariants on random scenes") {
    SplitMix64 rng(99);
    for (int scene = 0; scene < 300; ++scene) {
        const std::size_t n_truths = rng.next_below(7);
        const std::size_t n_preds = rng.next_below(7);
        std::vector<IouCandidate> candidates;
        for (std::size_t t = 0; t < n_truths; ++t) {
            for (std::size_t p = 0; p < n_preds; ++p) {
                if (rng.next_double() < 0.5) {
                    candidates.push_back({t, p, rng.next_double()});
                }
            }
        }
        const double threshold = 0.05 + rng.next_double() * 0.9;
        const MatchReport report =
            match_from_candidates(candidates, n_truths, n_preds, threshold);

        // One-to-one, with conservation on both sides.
        std::vector<bool> t_seen(n_truths, false), p_seen(n_preds, false);
        for (const auto& pair : report.pairs) {
            CHECK(pair.iou >= threshold);
            CHECK_FALSE(t_seen[pair.truth_index]);
            CHECK_FALSE(p_seen[pair.pred_index]);
            t_seen[pair.truth_index] = true;
            p_seen[pair.pred_index] = true;
        }
        CHECK(report.pairs.size() + report.unmatched_truths.size() == n_truths);
        CHECK(report.pairs.size() + report.unmatched_preds.size() == n_preds);

        // Greedy on its own terms: no skipped candidate had both members
        // free when its turn came; equivalently no candidate pair with
        // both members finally unmatched.
        for (const auto& c : candidates) {
            if (c.iou < threshold) continue;
            CHECK((t_seen[c.truth_index] || p_seen[c.pred_index]));
        }

        // Exhaustive-enumeration equivalence.
        BruteForce oracle{candidates, n_truths, n_preds, threshold, {}, {}};
        CHECK(oracle.run() == sorted_pairs(report));
    }
}

TEST_CASE("determinism of repeated matching") {
    SplitMix64 rng(5);
    std::vector<DefectInstance> truths, preds;
    for (int i = 0; i < 12; ++i) {
        const double cx = 20 + rng.next_double() * 200;
        const double cy = 20 + rng.next_double() * 200;
        truths.push_back(testutil::instance(
            DefectClass::Loop111, testutil::random_convex_polygon(rng, cx, cy, 5, 12)));
        preds.push_back(testutil::instance(
            DefectClass::Loop111,
            testutil::random_convex_polygon(rng, cx + 2, cy - 1, 5, 12), "img", 1.0));
    }
    const MatchReport a = match_instances(truths, preds, 0.3, "img");
    const MatchReport b = match_instances(truths, preds, 0.3, "img");
    CHECK(a == b);
    CHECK(match_report_to_json(a) == match_report_to_json(b));
}

TEST_CASE("type scores") {
    auto truth = [](DefectClass c, double x) {
        return testutil::instance(c, square(x, 0, 10));
    };
    auto pred = [](DefectClass c, double x) {
        return testutil::instance(c, square(x, 0, 10), "img", 1.0);
    };

    SUBCASE("all matched and agreeing gives F1 1 everywhere") {
        const std::vector<DefectInstance> truths = {
            truth(DefectClass::BlackDot, 0), truth(DefectClass::Loop111, 30),
            truth(DefectClass::Loop100, 60)};
        const std::vector<DefectInstance> preds = {
            pred(DefectClass::BlackDot, 0), pred(DefectClass::Loop111, 30),
            pred(DefectClass::Loop100, 60)};
        const MatchReport report = match_instances(truths, preds, 0.3);
        const TypeScores scores = type_scores(report, truths, preds);
        for (DefectClass c : kAllClasses) CHECK(scores.per_class.at(c).f1 == 1.0);
        CHECK(scores.overall_macro_f1 == 1.0);
        CHECK(scores.overall_micro_f1 == 1.0);
    }

    SUBCASE("a cross-class pair is fp for the predicted and fn for the true class") {
        const std::vector<DefectInstance> truths = {truth(DefectClass::Loop111, 0)};
        const std::vector<DefectInstance> preds = {pred(DefectClass::Loop100, 0)};
        const MatchReport report = match_instances(truths, preds, 0.3);
        REQUIRE(report.pairs.size() == 1);
        const TypeScores scores = type_scores(report, truths, preds);
        CHECK(scores.per_class.at(DefectClass::Loop100).fp == 1);
        CHECK(scores.per_class.at(DefectClass::Loop111).fn == 1);
        CHECK(scores.per_class.at(DefectClass::Loop111).tp == 0);
        CHECK(scores.per_class.at(DefectClass::BlackDot).tp == 0);
    }

    SUBCASE("overall macro is the unweighted mean of three per-class F1s") {
        const std::vector<DefectInstance> truths = {
            truth(DefectClass::BlackDot, 0), truth(DefectClass::BlackDot, 30),
            truth(DefectClass::Loop111, 60), truth(DefectClass::Loop100, 90)};
        const std::vector<DefectInstance> preds = {
            pred(DefectClass::BlackDot, 0), pred(DefectClass::Loop111, 30),
            pred(DefectClass::Loop111, 60), pred(DefectClass::Loop100, 90)};
        const MatchReport report = match_instances(truths, preds, 0.3);
        const TypeScores scores = type_scores(report, truths, preds);
        const double expected = (scores.per_class.at(DefectClass::BlackDot).f1 +
                                 scores.per_class.at(DefectClass::Loop111).f1 +
                                 scores.per_class.at(DefectClass::Loop100).f1) /
                                3.0;
        CHECK(scores.overall_macro_f1 == doctest::Approx(expected).epsilon(1e-12));

        // Find tp is never below the summed per-class type tps.
        const PrfScores find = find_scores(report);
        std::size_t type_tp = 0;
        for (DefectClass c : kAllClasses) type_tp += scores.per_class.at(c).tp;
        CHECK(find.tp >= type_tp);
    }
}

TEST_CASE("f1 vs iou sweep") {
    Dataset dataset = testutil::grid_dataset(3, 20);
    InstanceMap preds;
    for (const auto& [name, list] : dataset.truths) {
        auto copy = list;
        for (auto& inst : copy) inst.score = 1.0;
        preds[name] = std::move(copy);
    }
    dataset.predictions = preds;

    SUBCASE("identity predictions score 1 at every threshold") {
        const auto table = f1_vs_iou_sweep(dataset, {0.1, 0.3, 0.5, 0.9, 1.0});
        for (const auto& [threshold, scores] : table) {
            CHECK(scores.f1 == 1.0);
        }
    }

    SUBCASE("tp is monotone non-increasing in the threshold") {
        // Shift every prediction by 3 px so IoU is strictly between 0 and 1.
        for (auto& [name, list] : *dataset.predictions) {
            for (auto& inst : list) {
                for (auto& p : inst.polygon) p.x += 3.0;
            }
        }
        const auto table = f1_vs_iou_sweep(dataset, {0.1, 0.3, 0.5, 0.7, 0.9});
        std::size_t previous = std::numeric_limits<std::size_t>::max();
        for (const auto& [threshold, scores] : table) {
            CHECK(scores.tp <= previous);
            previous = scores.tp;
        }
        CHECK(table.at(0.1).tp > table.at(0.9).tp);
    }
}

TEST_CASE("match report JSON round trip") {
    std::vector<IouCandidate> candidates = {{0, 1, 0.8}, {1, 0, 0.6}, {2, 2, 0.4}};
    MatchReport report = match_from_candidates(candidates, 4, 3, 0.5);
    report.image_name = "img_x";
    const MatchReport reparsed = match_report_from_json(match_report_to_json(report));
    CHECK(reparsed == report);
}

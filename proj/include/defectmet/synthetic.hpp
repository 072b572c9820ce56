#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "defectmet/types.hpp"

namespace defectmet {

/// Controlled error injection: derive a prediction set from ground truth
/// by dropping, mislabeling and jittering instances and adding spurious
/// ones, so matching/metrology/hardening can be tested closed-loop
/// against analytically known expectations.
struct PerturbationSpec {
    std::map<DefectClass, double> drop_prob = {
        {DefectClass::BlackDot, 0.0},
        {DefectClass::Loop111, 0.0},
        {DefectClass::Loop100, 0.0},
    };
    double spurious_rate = 0.0;  // expected spurious instances per image
    // Row-stochastic class-flip matrix, row = true class, column =
    // emitted class, indexed by DefectClass order.
    std::array<std::array<double, 3>, 3> confusion = {{
        {1.0, 0.0, 0.0},
        {0.0, 1.0, 0.0},
        {0.0, 0.0, 1.0},
    }};
    double jitter_px = 0.0;  // max per-vertex displacement per axis
    std::uint64_t seed = 0;

    void validate() const;  // throws RangeError

    static PerturbationSpec from_json(const std::string& bytes);
    std::string to_json() const;
};

/// Analytic expectations implied by a spec, for closing the loop in
/// property tests.
struct ExpectationRecord {
    std::map<DefectClass, double> expected_recall;  // 1 - drop_prob
    double expected_spurious_per_image = 0.0;
    std::array<std::array<double, 3>, 3> confusion{};
    std::map<DefectClass, std::size_t> truth_counts;
    std::size_t n_images = 0;

    std::string to_json() const;
};

struct PerturbResult {
    Dataset predictions;  // same images, predictions filled
    ExpectationRecord expectations;
};

/// Each truth is dropped with its class's probability; survivors get the
/// class resampled from the confusion row and vertices jittered uniformly
/// in a square (re-drawn if the jitter would self-intersect the polygon).
/// Spurious small polygons are rejection-sampled into truth-free regions
/// so they are false positives by construction, Poisson(spurious_rate)
/// per image. Deterministic given the seed; each image consumes its own
/// derived seed.
PerturbResult perturb(const Dataset& dataset, const PerturbationSpec& spec);

}  // namespace defectmet

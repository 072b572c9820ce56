#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "defectmet/types.hpp"

namespace defectmet {

struct SplitMethod {
    enum class Kind { Random, Percent, Group };
    Kind kind = Kind::Random;
    double fraction = 0.0;   // percent splits
    int run = 0;             // percent splits, 1-based
    std::string tag_key;     // group splits
    std::string held_value;  // group splits

    bool operator==(const SplitMethod&) const = default;
};

/// A serialized train/test partition. Train and test are disjoint,
/// name-sorted, and (for random/percent methods) cover the full image
/// set; per-class defect counts are recomputable from the dataset.
struct SplitManifest {
    std::string name;
    SplitMethod method;
    std::uint64_t seed = 0;
    std::vector<std::string> train_images;
    std::vector<std::string> test_images;
    std::map<DefectClass, std::size_t> train_counts;
    std::map<DefectClass, std::size_t> test_counts;

    bool operator==(const SplitManifest&) const = default;
};

/// Uniform sample of n_test_images held out, drawn without replacement by
/// a seeded Fisher-Yates pass over the name-sorted image list. Same seed,
/// same manifest.
SplitManifest random_split(const Dataset& dataset, std::size_t n_test_images,
                           std::uint64_t seed, const std::string& name = {});

/// Leave-out-percent splits. The retained (train) size is the half-up
/// rounding of (1 - fraction) * n_images; each run draws from its own
/// derived seed.
std::vector<SplitManifest> percent_splits(const Dataset& dataset,
                                          double leave_out_fraction,
                                          std::size_t n_runs, std::uint64_t seed);

/// Targeted grouped split: test = images whose tag equals held_out_value;
/// train = the complement, or only the images matching train_value when
/// given (grouped tests may shrink the train side to a subset).
SplitManifest group_split(const Dataset& dataset, const std::string& tag_key,
                          const std::string& held_out_value,
                          const std::optional<std::string>& train_value = std::nullopt);

/// Evaluation outcome joined against its manifest for learning curves.
struct EvaluationSummary {
    std::string manifest_name;
    std::map<DefectClass, double> per_class_f1;
    double overall_f1 = 0.0;
};

struct LearningCurveRow {
    std::string manifest_name;
    std::string split_kind;  // "random" | "percent" | "group"
    std::size_t train_defects_total = 0;
    std::map<DefectClass, std::size_t> train_defects;
    std::map<DefectClass, double> per_class_f1;
    double overall_f1 = 0.0;
};

/// Joins manifests with their evaluation summaries; rows sorted by total
/// training defect count, then manifest name. Every manifest must have a
/// result and vice versa (MissingResultError lists the absent pairs).
std::vector<LearningCurveRow> learning_curve_rows(
    const std::vector<SplitManifest>& manifests,
    const std::vector<EvaluationSummary>& results);

std::string manifest_to_json(const SplitManifest& manifest);
SplitManifest manifest_from_json(const std::string& bytes);

/// Recounts per-class totals from the dataset and verifies the partition
/// property; throws RangeError on any mismatch (run on load).
void verify_manifest(const SplitManifest& manifest, const Dataset& dataset);

}  // namespace defectmet

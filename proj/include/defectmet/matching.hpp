#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "defectmet/types.hpp"

namespace defectmet {

struct MatchPair {
    std::size_t truth_index;
    std::size_t pred_index;
    double iou;

    bool operator==(const MatchPair&) const = default;
};

/// Outcome of IoU matching for one image. One-to-one: each truth and each
/// prediction appears in at most one pair.
struct MatchReport {
    std::string image_name;
    double iou_threshold = 0.0;
    std::vector<MatchPair> pairs;
    std::vector<std::size_t> unmatched_truths;
    std::vector<std::size_t> unmatched_preds;

    bool operator==(const MatchReport&) const = default;
};

struct PrfScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

/// P/R/F1 from raw counts, with the 0/0 -> 0 convention so degenerate
/// images never produce NaN.
PrfScores prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

struct IouCandidate {
    std::size_t truth_index;
    std::size_t pred_index;
    double iou;
};

/// All (truth, pred) pairs with nonzero IoU. Rasterizes each polygon once.
std::vector<IouCandidate> compute_iou_candidates(
    const std::vector<DefectInstance>& truths,
    const std::vector<DefectInstance>& preds);

/// Core matcher: sort candidates by IoU descending (ties by
/// (truth_index, pred_index) ascending) and accept a pair iff neither
/// member is matched yet. Candidates below the threshold are ignored.
MatchReport match_from_candidates(std::vector<IouCandidate> candidates,
                                  std::size_t n_truths, std::size_t n_preds,
                                  double iou_threshold);

/// Class-agnostic greedy matching of one image's truths and predictions.
/// Requires 0 < iou_threshold <= 1.
MatchReport match_instances(const std::vector<DefectInstance>& truths,
                            const std::vector<DefectInstance>& preds,
                            double iou_threshold,
                            const std::string& image_name = {});

/// Defect-find scores: was a defect found at the correct position,
/// regardless of class. tp = matched pairs, fp = unmatched predictions,
/// fn = unmatched truths.
PrfScores find_scores(const MatchReport& report);

/// Micro aggregation: sums tp/fp/fn over reports before computing P/R/F1.
PrfScores aggregate_find_scores(const std::vector<MatchReport>& reports);

enum class TypeAverage { Macro, Micro };

/// Defect-type scores over the matched structure. A matched pair whose
/// classes disagree counts as fp for the predicted class and fn for the
/// true class. Overall is the unweighted mean of the three per-class F1
/// values (macro); the micro alternative is also carried.
struct TypeScores {
    std::map<DefectClass, PrfScores> per_class;
    double overall_macro_f1 = 0.0;
    double overall_micro_f1 = 0.0;

    double overall(TypeAverage avg = TypeAverage::Macro) const {
        return avg == TypeAverage::Macro ? overall_macro_f1 : overall_micro_f1;
    }
};

TypeScores type_scores(const MatchReport& report,
                       const std::vector<DefectInstance>& truths,
                       const std::vector<DefectInstance>& preds);

/// Sums per-class counts across images, then recomputes the scores.
TypeScores aggregate_type_scores(const std::vector<TypeScores>& parts);

/// Find scores pooled over the whole dataset at each threshold.
std::map<double, PrfScores> f1_vs_iou_sweep(const Dataset& dataset,
                                            const std::vector<double>& thresholds);

/// JSON audit serialization of a report (schema mirrors the fields).
std::string match_report_to_json(const MatchReport& report);
MatchReport match_report_from_json(const std::string& bytes);

}  // namespace defectmet

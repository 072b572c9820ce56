#include "defectmet/matching.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "defectmet/errors.hpp"
#include "defectmet/geometry.hpp"

namespace defectmet {

using ordered_json = nlohmann::ordered_json;

PrfScores prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    PrfScores s;
    s.tp = tp;
    s.fp = fp;
    s.fn = fn;
    s.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    s.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double pr = s.precision + s.recall;
    s.f1 = pr > 0.0 ? 2.0 * s.precision * s.recall / pr : 0.0;
    return s;
}

MatchReport match_from_candidates(std::vector<IouCandidate> candidates,
                                  std::size_t n_truths, std::size_t n_preds,
                                  double iou_threshold) {
    if (iou_threshold <= 0.0 || iou_threshold > 1.0) {
        throw RangeError("iou_threshold must lie in (0,1]");
    }
    std::erase_if(candidates, [iou_threshold](const IouCandidate& c) {
        return c.iou < iou_threshold;
    });
    std::sort(candidates.begin(), candidates.end(),
              [](const IouCandidate& a, const IouCandidate& b) {
                  if (a.iou != b.iou) return a.iou > b.iou;
                  if (a.truth_index != b.truth_index) return a.truth_index < b.truth_index;
                  return a.pred_index < b.pred_index;
              });

    MatchReport report;
    report.iou_threshold = iou_threshold;
    std::vector<bool> truth_taken(n_truths, false);
    std::vector<bool> pred_taken(n_preds, false);
    for (const IouCandidate& c : candidates) {
        if (truth_taken[c.truth_index] || pred_taken[c.pred_index]) continue;
        truth_taken[c.truth_index] = true;
        pred_taken[c.pred_index] = true;
        report.pairs.push_back({c.truth_index, c.pred_index, c.iou});
    }
    for (std::size_t i = 0; i < n_truths; ++i) {
        if (!truth_taken[i]) report.unmatched_truths.push_back(i);
    }
    for (std::size_t i = 0; i < n_preds; ++i) {
        if (!pred_taken[i]) report.unmatched_preds.push_back(i);
    }
    return report;
}

std::vector<IouCandidate> compute_iou_candidates(
    const std::vector<DefectInstance>& truths,
    const std::vector<DefectInstance>& preds) {
    std::vector<PolygonRaster> truth_rasters;
    truth_rasters.reserve(truths.size());
    for (const auto& t : truths) {
        truth_rasters.push_back(PolygonRaster::from_polygon(t.polygon));
    }
    std::vector<PolygonRaster> pred_rasters;
    pred_rasters.reserve(preds.size());
    for (const auto& p : preds) {
        pred_rasters.push_back(PolygonRaster::from_polygon(p.polygon));
    }

    std::vector<IouCandidate> candidates;
    for (std::size_t t = 0; t < truths.size(); ++t) {
        for (std::size_t p = 0; p < preds.size(); ++p) {
            if (!truth_rasters[t].bbox_overlaps(pred_rasters[p])) continue;
            const double iou = raster_iou(truth_rasters[t], pred_rasters[p]);
            if (iou > 0.0) candidates.push_back({t, p, iou});
        }
    }
    return candidates;
}

MatchReport match_instances(const std::vector<DefectInstance>& truths,
                            const std::vector<DefectInstance>& preds,
                            double iou_threshold, const std::string& image_name) {
    MatchReport report = match_from_candidates(compute_iou_candidates(truths, preds),
                                               truths.size(), preds.size(), iou_threshold);
    report.image_name = image_name;
    return report;
}

PrfScores find_scores(const MatchReport& report) {
    return prf_from_counts(report.pairs.size(), report.unmatched_preds.size(),
                           report.unmatched_truths.size());
}

PrfScores aggregate_find_scores(const std::vector<MatchReport>& reports) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& r : reports) {
        tp += r.pairs.size();
        fp += r.unmatched_preds.size();
        fn += r.unmatched_truths.size();
    }
    return prf_from_counts(tp, fp, fn);
}

namespace {

TypeScores type_scores_from_counts(
    const std::map<DefectClass, std::array<std::size_t, 3>>& counts) {
    TypeScores scores;
    double f1_sum = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (DefectClass c : kAllClasses) {
        const auto& [c_tp, c_fp, c_fn] = counts.at(c);
        scores.per_class[c] = prf_from_counts(c_tp, c_fp, c_fn);
        f1_sum += scores.per_class[c].f1;
        tp += c_tp;
        fp += c_fp;
        fn += c_fn;
    }
    scores.overall_macro_f1 = f1_sum / static_cast<double>(kAllClasses.size());
    scores.overall_micro_f1 = prf_from_counts(tp, fp, fn).f1;
    return scores;
}

}  // namespace

TypeScores type_scores(const MatchReport& report,
                       const std::vector<DefectInstance>& truths,
                       const std::vector<DefectInstance>& preds) {
    std::map<DefectClass, std::array<std::size_t, 3>> counts;  // tp, fp, fn
    for (DefectClass c : kAllClasses) counts[c] = {0, 0, 0};

    for (const MatchPair& pair : report.pairs) {
        const DefectClass tc = truths.at(pair.truth_index).cls;
        const DefectClass pc = preds.at(pair.pred_index).cls;
        if (tc == pc) {
            counts[tc][0] += 1;
        } else {
            counts[pc][1] += 1;  // predicted class got a wrong hit
            counts[tc][2] += 1;  // true class went unrecognized
        }
    }
    for (std::size_t i : report.unmatched_preds) counts[preds.at(i).cls][1] += 1;
    for (std::size_t i : report.unmatched_truths) counts[truths.at(i).cls][2] += 1;

    return type_scores_from_counts(counts);
}

TypeScores aggregate_type_scores(const std::vector<TypeScores>& parts) {
    std::map<DefectClass, std::array<std::size_t, 3>> counts;
    for (DefectClass c : kAllClasses) counts[c] = {0, 0, 0};
    for (const auto& part : parts) {
        for (DefectClass c : kAllClasses) {
            const auto it = part.per_class.find(c);
            if (it == part.per_class.end()) continue;
            counts[c][0] += it->second.tp;
            counts[c][1] += it->second.fp;
            counts[c][2] += it->second.fn;
        }
    }
    return type_scores_from_counts(counts);
}

std::map<double, PrfScores> f1_vs_iou_sweep(const Dataset& dataset,
                                            const std::vector<double>& thresholds) {
    if (!dataset.predictions) {
        throw Error("f1_vs_iou_sweep requires a dataset with predictions");
    }
    std::map<double, PrfScores> table;
    static const std::vector<DefectInstance> kNone;
    for (double threshold : thresholds) {
        std::vector<MatchReport> reports;
        for (const auto& image : dataset.images) {
            const auto t = dataset.truths.find(image.name);
            const auto p = dataset.predictions->find(image.name);
            const auto& truths = t != dataset.truths.end() ? t->second : kNone;
            const auto& preds = p != dataset.predictions->end() ? p->second : kNone;
            reports.push_back(match_instances(truths, preds, threshold, image.name));
        }
        table[threshold] = aggregate_find_scores(reports);
    }
    return table;
}

std::string match_report_to_json(const MatchReport& report) {
    ordered_json doc;
    doc["image_name"] = report.image_name;
    doc["iou_threshold"] = report.iou_threshold;
    ordered_json pairs = ordered_json::array();
    for (const MatchPair& p : report.pairs) {
        pairs.push_back({{"truth_index", p.truth_index},
                         {"pred_index", p.pred_index},
                         {"iou", p.iou}});
    }
    doc["pairs"] = std::move(pairs);
    doc["unmatched_truths"] = report.unmatched_truths;
    doc["unmatched_preds"] = report.unmatched_preds;
    return doc.dump(2) + "\n";
}

MatchReport match_report_from_json(const std::string& bytes) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("malformed match report JSON: " + std::string(e.what()), e.byte);
    }
    MatchReport report;
    report.image_name = doc.at("image_name").get<std::string>();
    report.iou_threshold = doc.at("iou_threshold").get<double>();
    for (const auto& p : doc.at("pairs")) {
        report.pairs.push_back({p.at("truth_index").get<std::size_t>(),
                                p.at("pred_index").get<std::size_t>(),
                                p.at("iou").get<double>()});
    }
    report.unmatched_truths = doc.at("unmatched_truths").get<std::vector<std::size_t>>();
    report.unmatched_preds = doc.at("unmatched_preds").get<std::vector<std::size_t>>();
    return report;
}

}  // namespace defectmet

#include "defectmet/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "defectmet/errors.hpp"
#include "defectmet/geometry.hpp"
#include "defectmet/rng.hpp"

namespace defectmet {

using ordered_json = nlohmann::ordered_json;

void PerturbationSpec::validate() const {
    for (DefectClass c : kAllClasses) {
        const auto it = drop_prob.find(c);
        if (it == drop_prob.end() || it->second < 0.0 || it->second > 1.0) {
            throw RangeError("drop_prob for \"" + class_token(c) +
                             "\" must be present and in [0,1]");
        }
    }
    if (spurious_rate < 0.0) throw RangeError("spurious_rate must be nonnegative");
    if (jitter_px < 0.0) throw RangeError("jitter_px must be nonnegative");
    for (const auto& row : confusion) {
        double sum = 0.0;
        for (double p : row) {
            if (p < 0.0 || p > 1.0) throw RangeError("confusion entries must be in [0,1]");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12) {
            throw RangeError("confusion rows must sum to 1");
        }
    }
}

PerturbationSpec PerturbationSpec::from_json(const std::string& bytes) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("malformed perturbation spec JSON: " + std::string(e.what()),
                         e.byte);
    }
    PerturbationSpec spec;
    if (doc.contains("drop_prob")) {
        const auto& dp = doc.at("drop_prob");
        if (dp.is_number()) {
            for (DefectClass c : kAllClasses) spec.drop_prob[c] = dp.get<double>();
        } else {
            for (const auto& [token, value] : dp.items()) {
                spec.drop_prob[class_from_token(token)] = value.get<double>();
            }
        }
    }
    spec.spurious_rate = doc.value("spurious_rate", 0.0);
    spec.jitter_px = doc.value("jitter_px", 0.0);
    spec.seed = doc.value("seed", std::uint64_t{0});
    if (doc.contains("confusion")) {
        const auto& m = doc.at("confusion");
        if (!m.is_array() || m.size() != 3) {
            throw ParseError("confusion must be a 3x3 array");
        }
        for (std::size_t i = 0; i < 3; ++i) {
            if (!m[i].is_array() || m[i].size() != 3) {
                throw ParseError("confusion must be a 3x3 array");
            }
            for (std::size_t j = 0; j < 3; ++j) {
                spec.confusion[i][j] = m[i][j].get<double>();
            }
        }
    }
    spec.validate();
    return spec;
}

std::string PerturbationSpec::to_json() const {
    ordered_json doc;
    ordered_json dp;
    for (DefectClass c : kAllClasses) dp[class_token(c)] = drop_prob.at(c);
    doc["drop_prob"] = std::move(dp);
    doc["spurious_rate"] = spurious_rate;
    doc["confusion"] = confusion;
    doc["jitter_px"] = jitter_px;
    doc["seed"] = seed;
    return doc.dump(2) + "\n";
}

std::string ExpectationRecord::to_json() const {
    ordered_json doc;
    ordered_json recall, counts;
    for (DefectClass c : kAllClasses) {
        recall[class_token(c)] = expected_recall.at(c);
        counts[class_token(c)] = truth_counts.count(c) ? truth_counts.at(c) : 0;
    }
    doc["expected_recall"] = std::move(recall);
    doc["expected_spurious_per_image"] = expected_spurious_per_image;
    doc["confusion"] = confusion;
    doc["truth_counts"] = std::move(counts);
    doc["n_images"] = n_images;
    return doc.dump(2) + "\n";
}

namespace {

std::size_t poisson_draw(SplitMix64& rng, double lambda) {
    if (lambda <= 0.0) return 0;
    const double limit = std::exp(-lambda);
    std::size_t k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= rng.next_double();
    } while (p > limit);
    return k - 1;
}

bool polygon_ok(const std::vector<Point>& polygon) {
    std::vector<Point> cleaned;
    for (const Point& p : polygon) {
        if (cleaned.empty() || !(cleaned.back() == p)) cleaned.push_back(p);
    }
    while (cleaned.size() > 1 && cleaned.back() == cleaned.front()) cleaned.pop_back();
    if (cleaned.size() < 3) return false;
    return !is_self_intersecting(cleaned);
}

DefectClass resample_class(SplitMix64& rng, DefectClass true_class,
                           const std::array<std::array<double, 3>, 3>& confusion) {
    const auto& row = confusion[static_cast<std::size_t>(true_class)];
    const double u = rng.next_double();
    double cumulative = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
        cumulative += row[j];
        if (u < cumulative) return static_cast<DefectClass>(j);
    }
    return static_cast<DefectClass>(2);  // guard against rounding at u ~ 1
}

struct BBox {
    double x0, y0, x1, y1;
    bool overlaps(const BBox& o) const {
        return x0 <= o.x1 && o.x0 <= x1 && y0 <= o.y1 && o.y0 <= y1;
    }
};

BBox bbox_of(const std::vector<Point>& polygon) {
    BBox box{polygon[0].x, polygon[0].y, polygon[0].x, polygon[0].y};
    for (const Point& p : polygon) {
        box.x0 = std::min(box.x0, p.x);
        box.y0 = std::min(box.y0, p.y);
        box.x1 = std::max(box.x1, p.x);
        box.y1 = std::max(box.y1, p.y);
    }
    return box;
}

}  // namespace

PerturbResult perturb(const Dataset& dataset, const PerturbationSpec& spec) {
    spec.validate();

    PerturbResult result;
    result.predictions.images = dataset.images;
    InstanceMap predictions;

    ExpectationRecord& expect = result.expectations;
    for (DefectClass c : kAllClasses) {
        expect.expected_recall[c] = 1.0 - spec.drop_prob.at(c);
        expect.truth_counts[c] = 0;
    }
    expect.expected_spurious_per_image = spec.spurious_rate;
    expect.confusion = spec.confusion;
    expect.n_images = dataset.images.size();

    // Per-image seeds derived up front so generation order per image is
    // independent of any scheduling.
    SplitMix64 seeder(spec.seed);
    std::vector<std::uint64_t> image_seeds(dataset.images.size());
    for (auto& s : image_seeds) s = seeder.next();

    for (std::size_t idx = 0; idx < dataset.images.size(); ++idx) {
        const ImageRecord& image = dataset.images[idx];
        SplitMix64 rng(image_seeds[idx]);
        std::vector<DefectInstance> preds;

        const auto truth_it = dataset.truths.find(image.name);
        const std::vector<DefectInstance>* truths =
            truth_it != dataset.truths.end() ? &truth_it->second : nullptr;

        std::vector<BBox> truth_boxes;
        if (truths != nullptr) {
            for (const auto& t : *truths) {
                expect.truth_counts[t.cls] += 1;
                truth_boxes.push_back(bbox_of(t.polygon));
            }
            for (const auto& t : *truths) {
                if (rng.next_double() < spec.drop_prob.at(t.cls)) continue;

                DefectInstance pred;
                pred.source_image = image.name;
                pred.score = 1.0;
                pred.cls = resample_class(rng, t.cls, spec.confusion);
                pred.polygon = t.polygon;
                if (spec.jitter_px > 0.0) {
                    for (int attempt = 0; attempt < 10; ++attempt) {
                        std::vector<Point> jittered = t.polygon;
                        for (Point& p : jittered) {
                            p.x = std::clamp(
                                p.x + (2.0 * rng.next_double() - 1.0) * spec.jitter_px,
                                0.0, image.width);
                            p.y = std::clamp(
                                p.y + (2.0 * rng.next_double() - 1.0) * spec.jitter_px,
                                0.0, image.height);
                        }
                        if (polygon_ok(jittered)) {
                            pred.polygon = std::move(jittered);
                            break;
                        }
                    }
                }
                preds.push_back(std::move(pred));
            }
        }

        // Spurious instances: small squares rejection-sampled into
        // truth-free space, guaranteed false positives.
        const double side = 4.0;
        const std::size_t n_spurious = poisson_draw(rng, spec.spurious_rate);
        for (std::size_t s = 0; s < n_spurious; ++s) {
            if (image.width <= side || image.height <= side) break;
            for (int attempt = 0; attempt < 100; ++attempt) {
                const double cx =
                    side / 2 + rng.next_double() * (image.width - side);
                const double cy =
                    side / 2 + rng.next_double() * (image.height - side);
                const std::vector<Point> square = {{cx - side / 2, cy - side / 2},
                                                   {cx + side / 2, cy - side / 2},
                                                   {cx + side / 2, cy + side / 2},
                                                   {cx - side / 2, cy + side / 2}};
                const BBox box = bbox_of(square);
                const bool clear =
                    std::none_of(truth_boxes.begin(), truth_boxes.end(),
                                 [&box](const BBox& t) { return box.overlaps(t); });
                if (!clear) continue;
                DefectInstance spurious;
                spurious.source_image = image.name;
                spurious.score = 1.0;
                spurious.cls = static_cast<DefectClass>(rng.next_below(3));
                spurious.polygon = square;
                preds.push_back(std::move(spurious));
                break;
            }
        }

        predictions[image.name] = std::move(preds);
    }

    result.predictions.predictions = std::move(predictions);
    return result;
}

}  // namespace defectmet

#include "defectmet/hardening.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>

#include <nlohmann/json.hpp>

#include "defectmet/errors.hpp"

namespace defectmet {

using ordered_json = nlohmann::ordered_json;

void HardeningConstants::validate() const {
    if (taylor_M <= 0 || shear_mu_MPa <= 0 || burgers_b_nm <= 0) {
        throw RangeError("hardening constants must all be positive");
    }
    for (DefectClass c : kAllClasses) {
        const auto it = alpha.find(c);
        if (it == alpha.end() || it->second <= 0) {
            throw RangeError("alpha for class \"" + class_token(c) +
                             "\" is missing or nonpositive");
        }
    }
}

HardeningConstants HardeningConstants::from_json(const std::string& bytes) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("malformed constants JSON: " + std::string(e.what()), e.byte);
    }
    HardeningConstants c;
    c.taylor_M = doc.value("taylor_M", c.taylor_M);
    c.shear_mu_MPa = doc.value("shear_mu_MPa", c.shear_mu_MPa);
    c.burgers_b_nm = doc.value("burgers_b_nm", c.burgers_b_nm);
    if (doc.contains("alpha")) {
        for (const auto& [token, value] : doc.at("alpha").items()) {
            c.alpha[class_from_token(token)] = value.get<double>();
        }
    }
    c.validate();
    return c;
}

std::string HardeningConstants::to_json() const {
    ordered_json doc;
    doc["taylor_M"] = taylor_M;
    doc["shear_mu_MPa"] = shear_mu_MPa;
    doc["burgers_b_nm"] = burgers_b_nm;
    ordered_json a;
    for (DefectClass c : kAllClasses) a[class_token(c)] = alpha.at(c);
    doc["alpha"] = std::move(a);
    return doc.dump(2) + "\n";
}

double volume_density(std::size_t count, const ImageRecord& image) {
    if (image.width <= 0 || image.height <= 0 || image.px_to_nm <= 0 ||
        image.thickness_nm <= 0) {
        throw RangeError("image \"" + image.name + "\" has nonpositive metadata");
    }
    const double volume_nm3 = image.width * image.px_to_nm * image.height *
                              image.px_to_nm * image.thickness_nm;
    return static_cast<double>(count) / volume_nm3;
}

double dbh_term(const HardeningConstants& constants, DefectClass cls,
                double rho_per_nm3, double d_nm) {
    if (rho_per_nm3 < 0) throw RangeError("volume density must be nonnegative");
    if (d_nm <= 0) throw RangeError("defect size must be positive");
    return constants.taylor_M * constants.alpha.at(cls) * constants.shear_mu_MPa *
           constants.burgers_b_nm * std::sqrt(rho_per_nm3 * d_nm);
}

HardeningTotals combine_terms(const std::vector<double>& terms_MPa) {
    HardeningTotals totals;
    double sq = 0.0;
    for (double t : terms_MPa) {
        totals.linear_MPa += t;
        sq += t * t;
    }
    totals.quadrature_MPa = std::sqrt(sq);
    return totals;
}

HardeningResult image_hardening(const std::vector<DefectInstance>& instances,
                                const ImageRecord& image,
                                const HardeningConstants& constants,
                                double size_bin_width_nm, BinSizeMode d_mode) {
    constants.validate();
    if (size_bin_width_nm <= 0) throw RangeError("size bin width must be positive");

    // (class, size bin) -> count and size sum; bins anchored at 0.
    struct BinData {
        std::size_t count = 0;
        double size_sum = 0.0;
    };
    std::map<std::pair<DefectClass, std::int64_t>, BinData> bins;
    for (const auto& inst : instances) {
        const DefectGeometry g = defect_geometry(inst, image);
        const auto bin = static_cast<std::int64_t>(std::floor(g.size_nm / size_bin_width_nm));
        BinData& data = bins[{inst.cls, bin}];
        data.count += 1;
        data.size_sum += g.size_nm;
    }

    HardeningResult result;
    result.image_name = image.name;
    std::vector<double> terms;
    for (const auto& [key, data] : bins) {
        const auto& [cls, bin] = key;
        const double center = (static_cast<double>(bin) + 0.5) * size_bin_width_nm;
        const double d = d_mode == BinSizeMode::BinCenter
                             ? center
                             : data.size_sum / static_cast<double>(data.count);
        const double rho = volume_density(data.count, image);
        const double sigma = dbh_term(constants, cls, rho, d);
        result.terms.push_back({cls, center, data.count, rho, sigma});
        terms.push_back(sigma);
    }
    const HardeningTotals totals = combine_terms(terms);
    result.total_linear_MPa = totals.linear_MPa;
    result.total_quadrature_MPa = totals.quadrature_MPa;
    return result;
}

std::map<SummationMode, HardeningErrorSummary> hardening_error(
    const std::vector<HardeningResult>& truth_results,
    const std::vector<HardeningResult>& pred_results) {
    std::map<std::string, const HardeningResult*> preds;
    for (const auto& r : pred_results) preds[r.image_name] = &r;
    std::set<std::string> truth_names;
    for (const auto& r : truth_results) truth_names.insert(r.image_name);
    if (truth_names.size() != truth_results.size() ||
        preds.size() != pred_results.size() || preds.size() != truth_names.size()) {
        throw MismatchedImageSetError("truth and prediction hardening results must "
                                      "cover the same image set exactly once");
    }

    std::map<SummationMode, HardeningErrorSummary> out;
    for (SummationMode mode : {SummationMode::Linear, SummationMode::Quadrature}) {
        double abs_sum = 0.0, pct_sum = 0.0;
        std::size_t pct_n = 0;
        for (const auto& t : truth_results) {
            const auto it = preds.find(t.image_name);
            if (it == preds.end()) {
                throw MismatchedImageSetError("no prediction-side hardening for image \"" +
                                              t.image_name + "\"");
            }
            const double tv = mode == SummationMode::Linear ? t.total_linear_MPa
                                                            : t.total_quadrature_MPa;
            const double pv = mode == SummationMode::Linear
                                  ? it->second->total_linear_MPa
                                  : it->second->total_quadrature_MPa;
            abs_sum += std::abs(tv - pv);
            if (tv > 0.0) {
                pct_sum += 100.0 * std::abs(tv - pv) / tv;
                ++pct_n;
            }
        }
        HardeningErrorSummary summary;
        summary.n_images = truth_results.size();
        summary.mae_MPa = truth_results.empty()
                              ? 0.0
                              : abs_sum / static_cast<double>(truth_results.size());
        summary.mape_percent = pct_n == 0 ? 0.0 : pct_sum / static_cast<double>(pct_n);
        out[mode] = summary;
    }
    return out;
}

}  // namespace defectmet

#include "defectmet/metrology.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace defectmet {

namespace {

double mean(const std::vector<double>& values) {
    return std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
}

double image_area_nm2(const ImageRecord& image) {
    return image.width * image.px_to_nm * image.height * image.px_to_nm;
}

const std::vector<DefectInstance> kNoInstances;

const std::vector<DefectInstance>& instances_or_empty(const InstanceMap& map,
                                                      const std::string& name) {
    const auto it = map.find(name);
    return it != map.end() ? it->second : kNoInstances;
}

/// Size and Heywood series per class for one side of one image.
struct Population {
    ValuesByClass sizes;
    ValuesByClass heywoods;
    std::map<DefectClass, std::size_t> counts;

    void add(const DefectInstance& inst, const ImageRecord& image) {
        const DefectGeometry g = defect_geometry(inst, image);
        sizes[inst.cls].push_back(g.size_nm);
        heywoods[inst.cls].push_back(g.heywood);
        counts[inst.cls] += 1;
    }
};

struct ImagePopulations {
    const ImageRecord* image = nullptr;
    Population truth;
    Population pred;
};

std::vector<ImagePopulations> build_populations(const Dataset& dataset) {
    std::vector<ImagePopulations> result;
    for (const auto& image : dataset.images) {
        ImagePopulations pops;
        pops.image = &image;
        for (DefectClass c : kAllClasses) {
            pops.truth.counts[c] = 0;
            pops.pred.counts[c] = 0;
        }
        for (const auto& inst : instances_or_empty(dataset.truths, image.name)) {
            pops.truth.add(inst, image);
        }
        if (dataset.predictions) {
            for (const auto& inst : instances_or_empty(*dataset.predictions, image.name)) {
                pops.pred.add(inst, image);
            }
        }
        result.push_back(std::move(pops));
    }
    return result;
}

std::optional<double> pct_error(const std::vector<double>& t,
                                const std::vector<double>& p) {
    if (t.empty() || p.empty()) return std::nullopt;
    return percent_error_of_means(t, p);
}

std::optional<double> pct_error_scalar(double true_value, double pred_value) {
    if (true_value == 0.0) return std::nullopt;
    return 100.0 * std::abs(pred_value - true_value) / true_value;
}

std::optional<double> mean_of_present(const std::vector<std::optional<double>>& values) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : values) {
        if (v) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

ErrorValues overall_of(const std::map<DefectClass, ErrorValues>& per_class) {
    std::vector<std::optional<double>> size, shape, density;
    for (const auto& [cls, v] : per_class) {
        size.push_back(v.size_pct_err);
        shape.push_back(v.shape_pct_err);
        density.push_back(v.density_pct_err);
    }
    ErrorValues overall;
    overall.size_pct_err = mean_of_present(size);
    overall.shape_pct_err = mean_of_present(shape);
    overall.density_pct_err = mean_of_present(density);
    return overall;
}

const std::vector<double>& series_or_empty(const ValuesByClass& values, DefectClass c) {
    static const std::vector<double> kEmpty;
    const auto it = values.find(c);
    return it != values.end() ? it->second : kEmpty;
}

void append(std::vector<double>& out, const std::vector<double>& in) {
    out.insert(out.end(), in.begin(), in.end());
}

}  // namespace

std::map<DefectClass, ClassStats> class_stats(
    const std::vector<DefectInstance>& instances, const ImageRecord& image) {
    const double area = image_area_nm2(image);
    if (area <= 0.0) {
        throw RangeError("image \"" + image.name + "\" has nonpositive area");
    }
    Population pop;
    for (DefectClass c : kAllClasses) pop.counts[c] = 0;
    for (const auto& inst : instances) pop.add(inst, image);

    std::map<DefectClass, ClassStats> stats;
    for (DefectClass c : kAllClasses) {
        ClassStats s;
        s.cls = c;
        s.count = pop.counts[c];
        if (s.count > 0) {
            s.mean_size_nm = mean(pop.sizes[c]);
            s.mean_heywood = mean(pop.heywoods[c]);
        }
        s.areal_density_per_nm2 = static_cast<double>(s.count) / area;
        stats[c] = s;
    }
    return stats;
}

double percent_error_of_means(const std::vector<double>& true_values,
                              const std::vector<double>& pred_values) {
    if (true_values.empty() || pred_values.empty()) {
        throw EmptySeriesError("percent_error_of_means needs non-empty series");
    }
    const double t = mean(true_values);
    if (t == 0.0) throw ZeroBaselineError("true mean is zero");
    return 100.0 * std::abs(mean(pred_values) - t) / t;
}

namespace {

/// Matched-pair series (truth side and prediction side), grouped by the
/// truth instance's class.
struct FoundSeries {
    ValuesByClass t_sizes, p_sizes, t_heywoods, p_heywoods;
};

FoundSeries found_series(const Dataset& dataset, const ImageRecord& image,
                         const MatchReport& report) {
    FoundSeries out;
    const auto& truths = instances_or_empty(dataset.truths, image.name);
    const auto& preds =
        dataset.predictions ? instances_or_empty(*dataset.predictions, image.name)
                            : kNoInstances;
    for (const MatchPair& pair : report.pairs) {
        const DefectInstance& t = truths.at(pair.truth_index);
        const DefectInstance& p = preds.at(pair.pred_index);
        const DefectGeometry tg = defect_geometry(t, image);
        const DefectGeometry pg = defect_geometry(p, image);
        out.t_sizes[t.cls].push_back(tg.size_nm);
        out.p_sizes[t.cls].push_back(pg.size_nm);
        out.t_heywoods[t.cls].push_back(tg.heywood);
        out.p_heywoods[t.cls].push_back(pg.heywood);
    }
    return out;
}

}  // namespace

ErrorReportBundle error_report(const Dataset& dataset,
                               const std::map<std::string, MatchReport>& match_reports,
                               Variant variant) {
    if (!dataset.predictions) {
        throw Error("error_report requires a dataset with predictions");
    }
    ErrorReportBundle bundle;
    bundle.variant = variant;

    // Pooled accumulators.
    ValuesByClass pooled_t_sizes, pooled_p_sizes, pooled_t_heywoods, pooled_p_heywoods;
    std::map<DefectClass, std::size_t> pooled_t_counts, pooled_p_counts;
    double pooled_area = 0.0;
    std::vector<double> size_abs_errors;     // per (image, class) parity points
    std::vector<double> density_abs_errors;  // per (image, class)

    const auto populations = build_populations(dataset);
    for (const auto& pops : populations) {
        const ImageRecord& image = *pops.image;
        const double area = image_area_nm2(image);

        ErrorReport row;
        row.scope = Scope::PerImage;
        row.variant = variant;
        row.image_name = image.name;

        ValuesByClass t_sizes, p_sizes, t_heywoods, p_heywoods;
        if (variant == Variant::AllDefects) {
            t_sizes = pops.truth.sizes;
            p_sizes = pops.pred.sizes;
            t_heywoods = pops.truth.heywoods;
            p_heywoods = pops.pred.heywoods;
        } else {
            const auto it = match_reports.find(image.name);
            if (it == match_reports.end()) {
                throw Error("found-only error report needs a match report for image \"" +
                            image.name + "\"");
            }
            FoundSeries f = found_series(dataset, image, it->second);
            t_sizes = std::move(f.t_sizes);
            p_sizes = std::move(f.p_sizes);
            t_heywoods = std::move(f.t_heywoods);
            p_heywoods = std::move(f.p_heywoods);
        }

        std::vector<double> image_size_errs, image_density_errs;
        for (DefectClass c : kAllClasses) {
            ErrorValues v;
            const auto& ts = series_or_empty(t_sizes, c);
            const auto& ps = series_or_empty(p_sizes, c);
            v.size_pct_err = pct_error(ts, ps);
            v.shape_pct_err =
                pct_error(series_or_empty(t_heywoods, c), series_or_empty(p_heywoods, c));
            if (variant == Variant::AllDefects) {
                const double rho_t =
                    static_cast<double>(pops.truth.counts.at(c)) / area;
                const double rho_p = static_cast<double>(pops.pred.counts.at(c)) / area;
                v.density_pct_err = pct_error_scalar(rho_t, rho_p);
                const double d_err = std::abs(rho_t - rho_p);
                image_density_errs.push_back(d_err);
                density_abs_errors.push_back(d_err);
            }
            if (!ts.empty() && !ps.empty()) {
                const double s_err = std::abs(mean(ts) - mean(ps));
                image_size_errs.push_back(s_err);
                if (variant == Variant::AllDefects) size_abs_errors.push_back(s_err);
            }
            row.per_class[c] = v;

            append(pooled_t_sizes[c], ts);
            append(pooled_p_sizes[c], ps);
            append(pooled_t_heywoods[c], series_or_empty(t_heywoods, c));
            append(pooled_p_heywoods[c], series_or_empty(p_heywoods, c));
        }
        row.overall = overall_of(row.per_class);
        if (!image_size_errs.empty()) row.size_mae_nm = mean(image_size_errs);
        if (!image_density_errs.empty()) row.density_mae_per_nm2 = mean(image_density_errs);
        bundle.per_image.push_back(std::move(row));

        for (DefectClass c : kAllClasses) {
            pooled_t_counts[c] += pops.truth.counts.at(c);
            pooled_p_counts[c] += pops.pred.counts.at(c);
        }
        pooled_area += area;
    }

    ErrorReport pooled;
    pooled.scope = Scope::Pooled;
    pooled.variant = variant;
    for (DefectClass c : kAllClasses) {
        ErrorValues v;
        v.size_pct_err =
            pct_error(series_or_empty(pooled_t_sizes, c), series_or_empty(pooled_p_sizes, c));
        v.shape_pct_err = pct_error(series_or_empty(pooled_t_heywoods, c),
                                    series_or_empty(pooled_p_heywoods, c));
        if (variant == Variant::AllDefects && pooled_area > 0.0) {
            const double rho_t = static_cast<double>(pooled_t_counts[c]) / pooled_area;
            const double rho_p = static_cast<double>(pooled_p_counts[c]) / pooled_area;
            v.density_pct_err = pct_error_scalar(rho_t, rho_p);
        }
        pooled.per_class[c] = v;
    }
    pooled.overall = overall_of(pooled.per_class);
    if (!size_abs_errors.empty()) pooled.size_mae_nm = mean(size_abs_errors);
    if (!density_abs_errors.empty()) pooled.density_mae_per_nm2 = mean(density_abs_errors);
    bundle.pooled = std::move(pooled);
    return bundle;
}

HistogramTable histogram_from_values(Quantity quantity, const ValuesByClass& true_values,
                                     const ValuesByClass& pred_values, double bin_width,
                                     bool per_class) {
    if (bin_width <= 0.0) throw RangeError("histogram bin width must be positive");

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    std::size_t total = 0;
    auto scan = [&](const ValuesByClass& values) {
        for (const auto& [cls, list] : values) {
            for (double v : list) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
                ++total;
            }
        }
    };
    scan(true_values);
    scan(pred_values);

    HistogramTable table;
    table.quantity = quantity;
    if (total == 0) return table;  // no bins for no data

    // Values map by floor(v/width); a value sitting exactly on an edge
    // opens the next bin (1.9 and 2.0 at width 2 land in [0,2) and [2,4)).
    const auto first = static_cast<std::int64_t>(std::floor(lo / bin_width));
    const auto last = static_cast<std::int64_t>(std::floor(hi / bin_width));
    const std::size_t n_bins = static_cast<std::size_t>(last - first + 1);
    for (std::size_t i = 0; i <= n_bins; ++i) {
        table.bin_edges.push_back(static_cast<double>(first + static_cast<std::int64_t>(i)) *
                                  bin_width);
    }

    auto bin_of = [&](double v) -> std::size_t {
        auto idx = static_cast<std::int64_t>(std::floor(v / bin_width)) - first;
        if (idx >= static_cast<std::int64_t>(n_bins)) idx = static_cast<std::int64_t>(n_bins) - 1;
        if (idx < 0) idx = 0;
        return static_cast<std::size_t>(idx);
    };

    table.all.true_counts.assign(n_bins, 0);
    table.all.pred_counts.assign(n_bins, 0);
    if (per_class) {
        for (DefectClass c : kAllClasses) {
            table.per_class[c].true_counts.assign(n_bins, 0);
            table.per_class[c].pred_counts.assign(n_bins, 0);
        }
    }
    for (const auto& [cls, list] : true_values) {
        for (double v : list) {
            table.all.true_counts[bin_of(v)] += 1;
            if (per_class) table.per_class[cls].true_counts[bin_of(v)] += 1;
        }
    }
    for (const auto& [cls, list] : pred_values) {
        for (double v : list) {
            table.all.pred_counts[bin_of(v)] += 1;
            if (per_class) table.per_class[cls].pred_counts[bin_of(v)] += 1;
        }
    }
    return table;
}

namespace {

ValuesByClass gather(const Dataset& dataset, const InstanceMap& map, Quantity quantity) {
    ValuesByClass out;
    for (const auto& image : dataset.images) {
        for (const auto& inst : instances_or_empty(map, image.name)) {
            const DefectGeometry g = defect_geometry(inst, image);
            out[inst.cls].push_back(quantity == Quantity::SizeNm ? g.size_nm : g.heywood);
        }
    }
    return out;
}

}  // namespace

HistogramTable histogram(const Dataset& dataset, Quantity quantity, double bin_width,
                         bool per_class) {
    const ValuesByClass t = gather(dataset, dataset.truths, quantity);
    const ValuesByClass p = dataset.predictions
                                ? gather(dataset, *dataset.predictions, quantity)
                                : ValuesByClass{};
    return histogram_from_values(quantity, t, p, bin_width, per_class);
}

HistogramTable found_histogram(const Dataset& dataset,
                               const std::map<std::string, MatchReport>& match_reports,
                               Quantity quantity, double bin_width, bool per_class) {
    ValuesByClass t, p;
    for (const auto& image : dataset.images) {
        const auto it = match_reports.find(image.name);
        if (it == match_reports.end()) continue;
        const FoundSeries f = found_series(dataset, image, it->second);
        const auto& ts = quantity == Quantity::SizeNm ? f.t_sizes : f.t_heywoods;
        const auto& ps = quantity == Quantity::SizeNm ? f.p_sizes : f.p_heywoods;
        for (const auto& [cls, list] : ts) append(t[cls], list);
        for (const auto& [cls, list] : ps) append(p[cls], list);
    }
    return histogram_from_values(quantity, t, p, bin_width, per_class);
}

std::vector<ParityRow> parity_table(const Dataset& dataset) {
    if (!dataset.predictions) {
        throw Error("parity_table requires a dataset with predictions");
    }
    std::vector<ParityRow> rows;
    for (const auto& pops : build_populations(dataset)) {
        const ImageRecord& image = *pops.image;
        const double area = image_area_nm2(image);
        for (DefectClass c : kAllClasses) {
            const auto& ts = series_or_empty(pops.truth.sizes, c);
            const auto& ps = series_or_empty(pops.pred.sizes, c);
            const auto& th = series_or_empty(pops.truth.heywoods, c);
            const auto& ph = series_or_empty(pops.pred.heywoods, c);
            const std::size_t tc = pops.truth.counts.at(c);
            const std::size_t pc = pops.pred.counts.at(c);

            ParityRow base;
            base.image = image.name;
            base.cls = c;
            base.true_count = tc;
            base.pred_count = pc;
            base.image_area_nm2 = area;

            if (tc > 0 || pc > 0) {
                ParityRow size = base;
                size.quantity = ParityQuantity::Size;
                if (!ts.empty()) size.true_value = mean(ts);
                if (!ps.empty()) size.pred_value = mean(ps);
                rows.push_back(size);

                ParityRow shape = base;
                shape.quantity = ParityQuantity::Shape;
                if (!th.empty()) shape.true_value = mean(th);
                if (!ph.empty()) shape.pred_value = mean(ph);
                rows.push_back(shape);
            }

            ParityRow density = base;
            density.quantity = ParityQuantity::Density;
            density.true_value = static_cast<double>(tc) / area;
            density.pred_value = static_cast<double>(pc) / area;
            rows.push_back(density);
        }
    }
    return rows;
}

std::vector<ParityRow> filter_density_outliers(const std::vector<ParityRow>& rows,
                                               double cutoff_display,
                                               double display_scale) {
    std::vector<ParityRow> out;
    for (const auto& row : rows) {
        if (row.quantity != ParityQuantity::Density) continue;
        if (row.true_value && *row.true_value * display_scale < cutoff_display) {
            out.push_back(row);
        }
    }
    return out;
}

}  // namespace defectmet

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "defectmet/geometry.hpp"
#include "defectmet/matching.hpp"
#include "defectmet/types.hpp"

namespace defectmet {

/// Per-class summary for one image. Mean fields are absent when the class
/// has no instances; areal density is count over the image area in nm².
struct ClassStats {
    DefectClass cls = DefectClass::BlackDot;
    std::size_t count = 0;
    std::optional<double> mean_size_nm;
    std::optional<double> mean_heywood;
    double areal_density_per_nm2 = 0.0;
};

std::map<DefectClass, ClassStats> class_stats(
    const std::vector<DefectInstance>& instances, const ImageRecord& image);

/// 100 * |mean(pred) - mean(true)| / mean(true). Throws EmptySeriesError
/// when either series is empty and ZeroBaselineError when the true mean
/// is 0.
double percent_error_of_means(const std::vector<double>& true_values,
                              const std::vector<double>& pred_values);

enum class Scope { PerImage, Pooled };
enum class Variant { AllDefects, FoundOnly };

/// Absolute percent errors of means per statistic; absent when a side has
/// no values (empty series are reported, not fatal).
struct ErrorValues {
    std::optional<double> size_pct_err;
    std::optional<double> shape_pct_err;
    std::optional<double> density_pct_err;  // all-defects variant only
};

struct ErrorReport {
    Scope scope = Scope::PerImage;
    Variant variant = Variant::AllDefects;
    std::string image_name;  // empty for pooled scope
    std::map<DefectClass, ErrorValues> per_class;
    ErrorValues overall;  // unweighted mean of the available per-class errors
    // Mean absolute errors over (image, class) parity points; on a
    // per-image row these are that image's own absolute errors.
    std::optional<double> size_mae_nm;
    std::optional<double> density_mae_per_nm2;
};

struct ErrorReportBundle {
    Variant variant = Variant::AllDefects;
    std::vector<ErrorReport> per_image;  // name-sorted
    ErrorReport pooled;                  // over concatenated distributions
};

/// match_reports (keyed by image name) are required for the found-only
/// variant and ignored otherwise. Matched pairs are grouped by the truth
/// instance's class.
ErrorReportBundle error_report(const Dataset& dataset,
                               const std::map<std::string, MatchReport>& match_reports,
                               Variant variant);

enum class Quantity { SizeNm, Heywood };

/// Shared left-closed right-open bins (last bin closed), edges anchored
/// at multiples of the bin width and spanning the pooled min/max of both
/// series.
struct HistogramSeries {
    std::vector<std::size_t> true_counts;
    std::vector<std::size_t> pred_counts;
};

struct HistogramTable {
    Quantity quantity = Quantity::SizeNm;
    std::vector<double> bin_edges;  // nbins + 1
    HistogramSeries all;
    std::map<DefectClass, HistogramSeries> per_class;  // when requested
};

using ValuesByClass = std::map<DefectClass, std::vector<double>>;

HistogramTable histogram_from_values(Quantity quantity,
                                     const ValuesByClass& true_values,
                                     const ValuesByClass& pred_values,
                                     double bin_width, bool per_class);

/// All-defects histogram over the full truth and prediction populations.
HistogramTable histogram(const Dataset& dataset, Quantity quantity,
                         double bin_width, bool per_class);

/// Found-only histogram over matched pairs (truth side vs prediction
/// side), pairs grouped by the truth class.
HistogramTable found_histogram(const Dataset& dataset,
                               const std::map<std::string, MatchReport>& match_reports,
                               Quantity quantity, double bin_width, bool per_class);

enum class ParityQuantity { Size, Shape, Density };

/// One parity point per (image, class): the per-image class statistic on
/// both sides. Counts and the image area make pooled statistics exactly
/// recomputable from the rows alone.
struct ParityRow {
    ParityQuantity quantity = ParityQuantity::Size;
    std::string image;
    DefectClass cls = DefectClass::BlackDot;
    std::optional<double> true_value;
    std::optional<double> pred_value;
    std::size_t true_count = 0;
    std::size_t pred_count = 0;
    double image_area_nm2 = 0.0;
};

std::vector<ParityRow> parity_table(const Dataset& dataset);

/// The dashed-box view: density rows whose true density is below the
/// cutoff (cutoff given in display units, raw density times the scale).
std::vector<ParityRow> filter_density_outliers(const std::vector<ParityRow>& rows,
                                               double cutoff_display,
                                               double display_scale);

}  // namespace defectmet

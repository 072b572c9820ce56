#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "defectmet/geometry.hpp"
#include "defectmet/types.hpp"

namespace defectmet {

/// Materials constants of the dispersed-barrier hardening model. The
/// shear modulus is stored in MPa so the hardening terms come out in MPa
/// with no hidden conversion.
struct HardeningConstants {
    double taylor_M = 3.06;
    double shear_mu_MPa = 82000.0;  // 82 GPa
    double burgers_b_nm = 0.249;
    std::map<DefectClass, double> alpha = {
        {DefectClass::BlackDot, 0.10},
        {DefectClass::Loop111, 0.11},
        {DefectClass::Loop100, 0.32},
    };

    void validate() const;  // throws RangeError

    static HardeningConstants from_json(const std::string& bytes);
    std::string to_json() const;
};

enum class BinSizeMode { BinCenter, BinMean };

struct HardeningTerm {
    DefectClass cls = DefectClass::BlackDot;
    double bin_center_nm = 0.0;
    std::size_t count = 0;
    double rho_per_nm3 = 0.0;
    double delta_sigma_MPa = 0.0;
};

struct HardeningResult {
    std::string image_name;
    std::vector<HardeningTerm> terms;
    double total_linear_MPa = 0.0;      // sum of terms
    double total_quadrature_MPa = 0.0;  // sqrt of sum of squared terms
};

/// Volume number density: count / (image area in nm² * thickness in nm).
double volume_density(std::size_t count, const ImageRecord& image);

/// One hardening contribution: M * alpha(class) * mu * b * sqrt(rho * d).
double dbh_term(const HardeningConstants& constants, DefectClass cls,
                double rho_per_nm3, double d_nm);

/// Linear and quadrature totals of a term list.
struct HardeningTotals {
    double linear_MPa = 0.0;
    double quadrature_MPa = 0.0;
};
HardeningTotals combine_terms(const std::vector<double>& terms_MPa);

/// Bins each class's defects by equivalent-circle size (bin width in nm,
/// bins anchored at 0), converts bin counts to volume densities and sums
/// one hardening term per (class, bin).
HardeningResult image_hardening(const std::vector<DefectInstance>& instances,
                                const ImageRecord& image,
                                const HardeningConstants& constants,
                                double size_bin_width_nm,
                                BinSizeMode d_mode = BinSizeMode::BinCenter);

enum class SummationMode { Linear, Quadrature };

struct HardeningErrorSummary {
    double mae_MPa = 0.0;
    double mape_percent = 0.0;  // mean of per-image |err|/true, true > 0 only
    std::size_t n_images = 0;
};

/// Per-image absolute differences between truth-derived and
/// prediction-derived totals. Both sides must cover the same image set.
std::map<SummationMode, HardeningErrorSummary> hardening_error(
    const std::vector<HardeningResult>& truth_results,
    const std::vector<HardeningResult>& pred_results);

}  // namespace defectmet

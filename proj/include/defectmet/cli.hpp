#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "defectmet/hardening.hpp"
#include "defectmet/matching.hpp"
#include "defectmet/synthetic.hpp"

namespace defectmet::cli {

/// Fully resolved run configuration. Echoed verbatim into every output
/// bundle so a run can be replayed from its own artifacts.
struct RunConfig {
    std::string truths_path;
    std::string preds_path;
    std::string metadata_path;
    std::string labels_path;     // optional
    std::string constants_path;  // optional
    std::string manifest_path;   // optional; tags the evaluation for learning curves
    std::string out_dir;

    std::vector<double> iou_thresholds = {0.3};  // first one drives reports
    double bin_size_nm = 2.0;
    double bin_heywood = 0.05;
    double hardening_bin_nm = 2.0;
    double density_display_scale = 1e4;
    double parity_outlier_cutoff = 10.0;  // display units
    TypeAverage type_average = TypeAverage::Macro;
    SummationMode summation_mode = SummationMode::Linear;  // reported first
    std::uint64_t seed = 0;

    // split subcommand
    std::string split_method;  // "random" | "percent" | "group"
    std::size_t n_test_images = 0;
    double leave_out_fraction = 0.0;
    std::size_t n_runs = 1;
    std::string group_tag;
    std::string group_held_value;   // optional; default enumerates all values
    std::string group_train_value;  // optional explicit train rule

    // learning-curve subcommand
    std::string results_dir;

    // synth subcommand
    std::string spec_path;

    void validate_common() const;
};

/// Exit codes: 0 success, 1 input/validation error, 2 internal invariant
/// violation. All bundles are staged in a temp directory and renamed into
/// place, so an interrupted run never leaves a partial bundle behind.
int cmd_evaluate(const RunConfig& config);
int cmd_split(const RunConfig& config);
int cmd_hardening(const RunConfig& config);
int cmd_learning_curve(const RunConfig& config);
int cmd_synth(const RunConfig& config);

/// Worker count: DEFECTMET_THREADS when set (minimum 1), otherwise the
/// hardware concurrency.
unsigned thread_count();

}  // namespace defectmet::cli

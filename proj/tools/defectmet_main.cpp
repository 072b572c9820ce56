#include <string>

#include "CLI11.hpp"

#include "defectmet/cli.hpp"

using defectmet::SummationMode;
using defectmet::TypeAverage;
using defectmet::cli::RunConfig;

int main(int argc, char** argv) {
    CLI::App app{"defectmet: defect segmentation metrology toolkit"};
    app.require_subcommand(1);

    RunConfig config;
    std::string type_average = "macro";
    std::string summation = "linear";

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--metadata", config.metadata_path, "image metadata CSV");
        cmd->add_option("--truths", config.truths_path,
                        "ground-truth annotations (VIA or native JSON)");
        cmd->add_option("--labels", config.labels_path, "label map JSON");
        cmd->add_option("--out", config.out_dir, "output directory")->required();
        cmd->add_option("--seed", config.seed, "RNG seed");
    };

    CLI::App* evaluate = app.add_subcommand(
        "evaluate", "score predictions against ground truth");
    add_common(evaluate);
    evaluate->add_option("--preds", config.preds_path, "prediction JSON")->required();
    evaluate->add_option("--constants", config.constants_path, "hardening constants JSON");
    evaluate->add_option("--manifest", config.manifest_path,
                         "split manifest to tag this evaluation with");
    evaluate->add_option("--iou", config.iou_thresholds,
                         "IoU threshold(s); the first drives the detailed reports");
    evaluate->add_option("--bin-size-nm", config.bin_size_nm, "size histogram bin width");
    evaluate->add_option("--bin-heywood", config.bin_heywood,
                         "Heywood histogram bin width");
    evaluate->add_option("--density-scale", config.density_display_scale,
                         "display multiplier for densities");
    evaluate->add_option("--outlier-cutoff", config.parity_outlier_cutoff,
                         "parity density filter cutoff, display units");
    evaluate->add_option("--type-average", type_average, "overall type F1: macro|micro")
        ->check(CLI::IsMember({"macro", "micro"}));

    CLI::App* split = app.add_subcommand("split", "generate train/test split manifests");
    add_common(split);
    split->add_option("--method", config.split_method, "random|percent|group")->required();
    split->add_option("--n-test", config.n_test_images, "test images (random method)");
    split->add_option("--fraction", config.leave_out_fraction,
                      "leave-out fraction (percent method)");
    split->add_option("--runs", config.n_runs, "number of runs (percent method)");
    split->add_option("--tag", config.group_tag, "group tag key (group method)");
    split->add_option("--held", config.group_held_value,
                      "held-out tag value (group method; default: each value in turn)");
    split->add_option("--train-value", config.group_train_value,
                      "restrict the train side to this tag value");

    CLI::App* hardening = app.add_subcommand(
        "hardening", "dispersed-barrier hardening from defect populations");
    add_common(hardening);
    hardening->add_option("--preds", config.preds_path, "prediction JSON (optional)");
    hardening->add_option("--constants", config.constants_path,
                          "hardening constants JSON");
    hardening->add_option("--bin-size-nm", config.hardening_bin_nm,
                          "hardening size bin width (nm)");
    hardening->add_option("--summation", summation, "linear|quadrature first in reports")
        ->check(CLI::IsMember({"linear", "quadrature"}));

    CLI::App* curve = app.add_subcommand(
        "learning-curve", "join manifests with evaluation summaries");
    curve->add_option("--results", config.results_dir, "directory of manifest and summary JSON files")
        ->required();
    curve->add_option("--out", config.out_dir, "output directory")->required();

    CLI::App* synth = app.add_subcommand(
        "synth", "derive perturbed predictions with known expectations");
    add_common(synth);
    synth->add_option("--spec", config.spec_path, "perturbation spec JSON");

    CLI11_PARSE(app, argc, argv);

    config.type_average =
        type_average == "macro" ? TypeAverage::Macro : TypeAverage::Micro;
    config.summation_mode =
        summation == "linear" ? SummationMode::Linear : SummationMode::Quadrature;

    if (evaluate->parsed()) return defectmet::cli::cmd_evaluate(config);
    if (split->parsed()) return defectmet::cli::cmd_split(config);
    if (hardening->parsed()) return defectmet::cli::cmd_hardening(config);
    if (curve->parsed()) return defectmet::cli::cmd_learning_curve(config);
    if (synth->parsed()) return defectmet::cli::cmd_synth(config);
    return 1;
}

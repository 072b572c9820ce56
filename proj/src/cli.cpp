#include "defectmet/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "defectmet/annotation_io.hpp"
#include "defectmet/csv.hpp"
#include "defectmet/errors.hpp"
#include "defectmet/metrology.hpp"
#include "defectmet/splitter.hpp"

namespace defectmet::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

unsigned thread_count() {
    if (const char* env = std::getenv("DEFECTMET_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<unsigned>(n);
        return 1;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

namespace {

/// Runs fn(i) for i in [0, n) on up to thread_count() workers. Results
/// must be written to per-index slots so the schedule cannot matter.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const unsigned workers = std::min<unsigned>(thread_count(),
                                                static_cast<unsigned>(std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Collects the whole bundle in memory, then writes it into a staging
/// directory next to the target and renames it into place, so consumers
/// never observe a half-written bundle.
class OutputBundle {
public:
    explicit OutputBundle(fs::path out_dir) : out_dir_(std::move(out_dir)) {}

    void add(const std::string& filename, std::string content) {
        files_.emplace_back(filename, std::move(content));
    }

    void commit() {
        const fs::path staging =
            out_dir_.string() + ".staging-" + std::to_string(::getpid());
        fs::remove_all(staging);
        fs::create_directories(staging);
        for (const auto& [name, content] : files_) {
            std::ofstream out(staging / name, std::ios::binary);
            if (!out) throw Error("cannot write " + (staging / name).string());
            out << content;
        }
        fs::remove_all(out_dir_);
        if (out_dir_.has_parent_path()) fs::create_directories(out_dir_.parent_path());
        fs::rename(staging, out_dir_);
    }

private:
    fs::path out_dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

std::string error_kind(const Error& e) {
    if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
    if (dynamic_cast<const MissingMetadataError*>(&e)) return "MissingMetadataError";
    if (dynamic_cast<const DuplicateImageError*>(&e)) return "DuplicateImageError";
    if (dynamic_cast<const RangeError*>(&e)) return "RangeError";
    if (dynamic_cast<const DegenerateGeometryError*>(&e)) return "DegenerateGeometryError";
    if (dynamic_cast<const EmptySeriesError*>(&e)) return "EmptySeriesError";
    if (dynamic_cast<const ZeroBaselineError*>(&e)) return "ZeroBaselineError";
    if (dynamic_cast<const MismatchedImageSetError*>(&e)) return "MismatchedImageSetError";
    if (dynamic_cast<const UnknownTagError*>(&e)) return "UnknownTagError";
    if (dynamic_cast<const EmptySideError*>(&e)) return "EmptySideError";
    if (dynamic_cast<const MissingResultError*>(&e)) return "MissingResultError";
    return "Error";
}

int report_error(const Error& e) {
    ordered_json doc;
    doc["error"] = error_kind(e);
    doc["message"] = e.what();
    std::cerr << doc.dump() << "\n";
    return 1;
}

int report_internal(const std::exception& e) {
    ordered_json doc;
    doc["error"] = "InternalError";
    doc["message"] = e.what();
    std::cerr << doc.dump() << "\n";
    return 2;
}

std::string opt_field(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

ordered_json opt_json(const std::optional<double>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

LabelMap load_labels(const RunConfig& config) {
    if (config.labels_path.empty()) return LabelMap::defaults();
    return LabelMap::from_json(read_file(config.labels_path));
}

bool looks_like_native(const std::string& bytes) {
    const auto pos = bytes.find_first_not_of(" \t\r\n");
    if (pos == std::string::npos || bytes[pos] != '{') return false;
    // Cheap probe: native files put "images" first-level; VIA exports
    // never have that key.
    const auto doc = nlohmann::json::parse(bytes, nullptr, false);
    return doc.is_object() && doc.contains("images") && doc.at("images").is_array();
}

Dataset load_truth_dataset(const RunConfig& config,
                           const std::vector<ImageRecord>& registry,
                           WarningList* warnings) {
    const std::string bytes = read_file(config.truths_path);
    if (looks_like_native(bytes)) {
        return parse_native_truths(bytes, registry, warnings);
    }
    return parse_vgg_annotations(bytes, registry, load_labels(config), warnings);
}

void merge_predictions(Dataset& dataset, Dataset preds) {
    for (const auto& image : preds.images) {
        if (!dataset.has_image(image.name)) {
            dataset.images.push_back(image);
            dataset.truths.emplace(image.name, std::vector<DefectInstance>{});
        }
    }
    std::sort(dataset.images.begin(), dataset.images.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.name < b.name; });
    dataset.predictions = std::move(preds.predictions);
}

ordered_json prf_json(const PrfScores& s) {
    ordered_json doc;
    doc["precision"] = s.precision;
    doc["recall"] = s.recall;
    doc["f1"] = s.f1;
    doc["tp"] = s.tp;
    doc["fp"] = s.fp;
    doc["fn"] = s.fn;
    return doc;
}

ordered_json error_values_json(const ErrorValues& v) {
    ordered_json doc;
    doc["size_pct_err"] = opt_json(v.size_pct_err);
    doc["shape_pct_err"] = opt_json(v.shape_pct_err);
    doc["density_pct_err"] = opt_json(v.density_pct_err);
    return doc;
}

ordered_json error_report_json(const ErrorReport& r) {
    ordered_json doc;
    ordered_json per_class;
    for (DefectClass c : kAllClasses) {
        per_class[class_token(c)] = error_values_json(r.per_class.at(c));
    }
    doc["per_class"] = std::move(per_class);
    doc["overall"] = error_values_json(r.overall);
    doc["size_mae_nm"] = opt_json(r.size_mae_nm);
    doc["density_mae_per_nm2"] = opt_json(r.density_mae_per_nm2);
    return doc;
}

ordered_json config_json(const RunConfig& config) {
    ordered_json doc;
    doc["truths"] = config.truths_path;
    doc["preds"] = config.preds_path;
    doc["metadata"] = config.metadata_path;
    doc["labels"] = config.labels_path;
    doc["constants"] = config.constants_path;
    doc["manifest"] = config.manifest_path;
    doc["out"] = config.out_dir;
    doc["iou_thresholds"] = config.iou_thresholds;
    doc["bin_size_nm"] = config.bin_size_nm;
    doc["bin_heywood"] = config.bin_heywood;
    doc["hardening_bin_nm"] = config.hardening_bin_nm;
    doc["density_display_scale"] = config.density_display_scale;
    doc["parity_outlier_cutoff"] = config.parity_outlier_cutoff;
    doc["type_average"] =
        config.type_average == TypeAverage::Macro ? "macro" : "micro";
    doc["summation_mode"] =
        config.summation_mode == SummationMode::Linear ? "linear" : "quadrature";
    doc["seed"] = config.seed;
    doc["split_method"] = config.split_method;
    doc["n_test_images"] = config.n_test_images;
    doc["leave_out_fraction"] = config.leave_out_fraction;
    doc["n_runs"] = config.n_runs;
    doc["group_tag"] = config.group_tag;
    doc["group_train_value"] = config.group_train_value;
    doc["results_dir"] = config.results_dir;
    doc["spec"] = config.spec_path;
    return doc;
}

std::string error_report_csv(const ErrorReportBundle& bundle) {
    CsvTable table;
    table.header = {"scope",          "image",          "class",
                    "size_pct_err",   "shape_pct_err",  "density_pct_err",
                    "size_mae_nm",    "density_mae_per_nm2"};
    auto add_report = [&table](const ErrorReport& r, const std::string& scope) {
        for (DefectClass c : kAllClasses) {
            const ErrorValues& v = r.per_class.at(c);
            table.rows.push_back({scope, r.image_name, class_token(c),
                                  opt_field(v.size_pct_err), opt_field(v.shape_pct_err),
                                  opt_field(v.density_pct_err), "", ""});
        }
        table.rows.push_back({scope, r.image_name, "overall",
                              opt_field(r.overall.size_pct_err),
                              opt_field(r.overall.shape_pct_err),
                              opt_field(r.overall.density_pct_err),
                              opt_field(r.size_mae_nm),
                              opt_field(r.density_mae_per_nm2)});
    };
    for (const auto& r : bundle.per_image) add_report(r, "per_image");
    add_report(bundle.pooled, "pooled");

    // Summary view: mean of the per-image rows, per class and overall.
    struct Acc {
        double sum = 0.0;
        std::size_t n = 0;
        void add(const std::optional<double>& v) {
            if (v) {
                sum += *v;
                ++n;
            }
        }
        std::string mean() const {
            return n == 0 ? std::string() : format_double(sum / static_cast<double>(n));
        }
    };
    std::map<std::string, std::array<Acc, 3>> acc;
    for (const auto& r : bundle.per_image) {
        for (DefectClass c : kAllClasses) {
            auto& a = acc[class_token(c)];
            a[0].add(r.per_class.at(c).size_pct_err);
            a[1].add(r.per_class.at(c).shape_pct_err);
            a[2].add(r.per_class.at(c).density_pct_err);
        }
        auto& a = acc["overall"];
        a[0].add(r.overall.size_pct_err);
        a[1].add(r.overall.shape_pct_err);
        a[2].add(r.overall.density_pct_err);
    }
    for (DefectClass c : kAllClasses) {
        const auto& a = acc[class_token(c)];
        table.rows.push_back({"per_image_mean", "", class_token(c), a[0].mean(),
                              a[1].mean(), a[2].mean(), "", ""});
    }
    const auto& a = acc["overall"];
    table.rows.push_back(
        {"per_image_mean", "", "overall", a[0].mean(), a[1].mean(), a[2].mean(), "", ""});
    return write_csv(table);
}

std::string histogram_csv(const HistogramTable& table) {
    CsvTable csv;
    csv.header = {"bin_lo", "bin_hi", "true_all", "pred_all"};
    for (DefectClass c : kAllClasses) {
        csv.header.push_back("true_" + class_token(c));
        csv.header.push_back("pred_" + class_token(c));
    }
    const std::size_t n_bins =
        table.bin_edges.empty() ? 0 : table.bin_edges.size() - 1;
    for (std::size_t i = 0; i < n_bins; ++i) {
        std::vector<std::string> row = {
            format_double(table.bin_edges[i]), format_double(table.bin_edges[i + 1]),
            std::to_string(table.all.true_counts[i]),
            std::to_string(table.all.pred_counts[i])};
        for (DefectClass c : kAllClasses) {
            if (table.per_class.count(c)) {
                row.push_back(std::to_string(table.per_class.at(c).true_counts[i]));
                row.push_back(std::to_string(table.per_class.at(c).pred_counts[i]));
            } else {
                row.push_back("");
                row.push_back("");
            }
        }
        csv.rows.push_back(std::move(row));
    }
    return write_csv(csv);
}

std::string quantity_name(ParityQuantity q) {
    switch (q) {
        case ParityQuantity::Size: return "size";
        case ParityQuantity::Shape: return "shape";
        case ParityQuantity::Density: return "density";
    }
    return "?";
}

std::string parity_csv(const std::vector<ParityRow>& rows, double display_scale) {
    CsvTable table;
    table.header = {"quantity",   "image",      "class",
                    "true_value", "pred_value", "true_value_display",
                    "pred_value_display", "true_count", "pred_count",
                    "image_area_nm2"};
    for (const auto& row : rows) {
        const bool density = row.quantity == ParityQuantity::Density;
        auto display = [&](const std::optional<double>& v) {
            return (density && v) ? format_double(*v * display_scale) : std::string();
        };
        table.rows.push_back({quantity_name(row.quantity), row.image,
                              class_token(row.cls), opt_field(row.true_value),
                              opt_field(row.pred_value), display(row.true_value),
                              display(row.pred_value), std::to_string(row.true_count),
                              std::to_string(row.pred_count),
                              format_double(row.image_area_nm2)});
    }
    return write_csv(table);
}

struct ManifestTag {
    std::string name;
    std::string split_kind;
    std::map<DefectClass, std::size_t> train_counts;
};

std::optional<ManifestTag> load_manifest_tag(const RunConfig& config) {
    if (config.manifest_path.empty()) return std::nullopt;
    const SplitManifest manifest = manifest_from_json(read_file(config.manifest_path));
    ManifestTag tag;
    tag.name = manifest.name;
    switch (manifest.method.kind) {
        case SplitMethod::Kind::Random: tag.split_kind = "random"; break;
        case SplitMethod::Kind::Percent: tag.split_kind = "percent"; break;
        case SplitMethod::Kind::Group: tag.split_kind = "group"; break;
    }
    tag.train_counts = manifest.train_counts;
    return tag;
}

}  // namespace

void RunConfig::validate_common() const {
    if (out_dir.empty()) throw RangeError("--out is required");
    if (iou_thresholds.empty()) throw RangeError("at least one --iou is required");
    for (double t : iou_thresholds) {
        if (t <= 0.0 || t > 1.0) throw RangeError("--iou must lie in (0,1]");
    }
    if (bin_size_nm <= 0 || bin_heywood <= 0 || hardening_bin_nm <= 0) {
        throw RangeError("bin widths must be positive");
    }
    if (density_display_scale <= 0) throw RangeError("density scale must be positive");
}

int cmd_evaluate(const RunConfig& config) {
    try {
        config.validate_common();
        if (config.truths_path.empty() || config.preds_path.empty() ||
            config.metadata_path.empty()) {
            throw RangeError("evaluate needs --truths, --preds and --metadata");
        }
        WarningList warnings;
        const auto registry = parse_metadata(read_file(config.metadata_path));
        Dataset dataset = load_truth_dataset(config, registry, &warnings);
        merge_predictions(dataset,
                          parse_predictions(read_file(config.preds_path), registry,
                                            &warnings));
        const auto manifest_tag = load_manifest_tag(config);

        static const std::vector<DefectInstance> kNone;
        const std::size_t n_images = dataset.images.size();

        // Rasterize and score pairs once per image, in parallel; every
        // threshold then reuses the candidate lists.
        std::vector<std::vector<IouCandidate>> candidates(n_images);
        parallel_for(n_images, [&](std::size_t i) {
            const auto& image = dataset.images[i];
            const auto t = dataset.truths.find(image.name);
            const auto p = dataset.predictions->find(image.name);
            candidates[i] = compute_iou_candidates(
                t != dataset.truths.end() ? t->second : kNone,
                p != dataset.predictions->end() ? p->second : kNone);
        });

        auto match_all = [&](double threshold) {
            std::vector<MatchReport> reports(n_images);
            for (std::size_t i = 0; i < n_images; ++i) {
                const auto& image = dataset.images[i];
                const auto t = dataset.truths.find(image.name);
                const auto p = dataset.predictions->find(image.name);
                reports[i] = match_from_candidates(
                    candidates[i],
                    t != dataset.truths.end() ? t->second.size() : 0,
                    p != dataset.predictions->end() ? p->second.size() : 0, threshold);
                reports[i].image_name = image.name;
            }
            return reports;
        };

        const double primary = config.iou_thresholds.front();
        const std::vector<MatchReport> primary_reports = match_all(primary);
        std::map<std::string, MatchReport> reports_by_name;
        for (const auto& r : primary_reports) reports_by_name[r.image_name] = r;

        // Find-score sweep over all requested thresholds.
        CsvTable find_table;
        find_table.header = {"iou_threshold", "precision", "recall", "f1",
                             "tp", "fp", "fn"};
        ordered_json find_json = ordered_json::array();
        for (double threshold : config.iou_thresholds) {
            const auto reports =
                threshold == primary ? primary_reports : match_all(threshold);
            const PrfScores s = aggregate_find_scores(reports);
            find_table.rows.push_back({format_double(threshold),
                                       format_double(s.precision),
                                       format_double(s.recall), format_double(s.f1),
                                       std::to_string(s.tp), std::to_string(s.fp),
                                       std::to_string(s.fn)});
            ordered_json entry = prf_json(s);
            entry["iou_threshold"] = threshold;
            find_json.push_back(std::move(entry));
        }

        // Type scores at the primary threshold.
        std::vector<TypeScores> per_image_types;
        for (std::size_t i = 0; i < n_images; ++i) {
            const auto& image = dataset.images[i];
            const auto t = dataset.truths.find(image.name);
            const auto p = dataset.predictions->find(image.name);
            per_image_types.push_back(
                type_scores(primary_reports[i],
                            t != dataset.truths.end() ? t->second : kNone,
                            p != dataset.predictions->end() ? p->second : kNone));
        }
        const TypeScores types = aggregate_type_scores(per_image_types);

        CsvTable type_table;
        type_table.header = {"class", "precision", "recall", "f1", "tp", "fp", "fn"};
        for (DefectClass c : kAllClasses) {
            const PrfScores& s = types.per_class.at(c);
            type_table.rows.push_back({class_token(c), format_double(s.precision),
                                       format_double(s.recall), format_double(s.f1),
                                       std::to_string(s.tp), std::to_string(s.fp),
                                       std::to_string(s.fn)});
        }
        type_table.rows.push_back({"overall_macro", "", "",
                                   format_double(types.overall_macro_f1), "", "", ""});
        type_table.rows.push_back({"overall_micro", "", "",
                                   format_double(types.overall_micro_f1), "", "", ""});

        // Per-image find scores at the primary threshold.
        CsvTable per_image_find;
        per_image_find.header = {"image", "precision", "recall", "f1", "tp", "fp", "fn"};
        for (const auto& r : primary_reports) {
            const PrfScores s = find_scores(r);
            per_image_find.rows.push_back({r.image_name, format_double(s.precision),
                                           format_double(s.recall), format_double(s.f1),
                                           std::to_string(s.tp), std::to_string(s.fp),
                                           std::to_string(s.fn)});
        }

        const ErrorReportBundle all_errors =
            error_report(dataset, reports_by_name, Variant::AllDefects);
        const ErrorReportBundle found_errors =
            error_report(dataset, reports_by_name, Variant::FoundOnly);

        // Per-image percent-error bars, one row per (image, class).
        CsvTable bars;
        bars.header = {"image", "class", "size_pct_err", "shape_pct_err",
                       "density_pct_err"};
        for (const auto& r : all_errors.per_image) {
            for (DefectClass c : kAllClasses) {
                const ErrorValues& v = r.per_class.at(c);
                bars.rows.push_back({r.image_name, class_token(c),
                                     opt_field(v.size_pct_err), opt_field(v.shape_pct_err),
                                     opt_field(v.density_pct_err)});
            }
        }

        const auto parity = parity_table(dataset);
        const auto parity_filtered = filter_density_outliers(
            parity, config.parity_outlier_cutoff, config.density_display_scale);

        ordered_json matches = ordered_json::array();
        for (const auto& r : primary_reports) {
            matches.push_back(ordered_json::parse(match_report_to_json(r)));
        }

        ordered_json summary;
        summary["config"] = config_json(config);
        summary["n_images"] = n_images;
        if (manifest_tag) {
            summary["manifest_name"] = manifest_tag->name;
            summary["split_kind"] = manifest_tag->split_kind;
            ordered_json counts;
            for (DefectClass c : kAllClasses) {
                counts[class_token(c)] = manifest_tag->train_counts.count(c)
                                             ? manifest_tag->train_counts.at(c)
                                             : 0;
            }
            summary["train_counts"] = std::move(counts);
        }
        summary["find_scores"] = std::move(find_json);
        {
            ordered_json t;
            t["iou_threshold"] = primary;
            ordered_json per_class;
            for (DefectClass c : kAllClasses) {
                per_class[class_token(c)] = prf_json(types.per_class.at(c));
            }
            t["per_class"] = std::move(per_class);
            t["overall_macro_f1"] = types.overall_macro_f1;
            t["overall_micro_f1"] = types.overall_micro_f1;
            t["overall_f1"] = types.overall(config.type_average);
            summary["type_scores"] = std::move(t);
        }
        summary["errors_all_defects"] = error_report_json(all_errors.pooled);
        summary["errors_found_only"] = error_report_json(found_errors.pooled);
        summary["warnings"] = warnings;

        OutputBundle bundle(config.out_dir);
        bundle.add("config.json", config_json(config).dump(2) + "\n");
        bundle.add("summary.json", summary.dump(2) + "\n");
        bundle.add("find_scores.csv", write_csv(find_table));
        bundle.add("type_scores.csv", write_csv(type_table));
        bundle.add("per_image_find.csv", write_csv(per_image_find));
        bundle.add("error_report_all.csv", error_report_csv(all_errors));
        bundle.add("error_report_found.csv", error_report_csv(found_errors));
        bundle.add("per_image_pct_error.csv", write_csv(bars));
        bundle.add("histogram_size_all.csv",
                   histogram_csv(histogram(dataset, Quantity::SizeNm,
                                           config.bin_size_nm, true)));
        bundle.add("histogram_heywood_all.csv",
                   histogram_csv(histogram(dataset, Quantity::Heywood,
                                           config.bin_heywood, true)));
        bundle.add("histogram_size_found.csv",
                   histogram_csv(found_histogram(dataset, reports_by_name,
                                                 Quantity::SizeNm, config.bin_size_nm,
                                                 true)));
        bundle.add("histogram_heywood_found.csv",
                   histogram_csv(found_histogram(dataset, reports_by_name,
                                                 Quantity::Heywood, config.bin_heywood,
                                                 true)));
        bundle.add("parity.csv", parity_csv(parity, config.density_display_scale));
        bundle.add("parity_density_filtered.csv",
                   parity_csv(parity_filtered, config.density_display_scale));
        bundle.add("matches.json", matches.dump(2) + "\n");
        bundle.commit();
        return 0;
    } catch (const Error& e) {
        return report_error(e);
    } catch (const std::exception& e) {
        return report_internal(e);
    }
}

int cmd_split(const RunConfig& config) {
    try {
        config.validate_common();
        if (config.metadata_path.empty()) throw RangeError("split needs --metadata");
        const auto registry = parse_metadata(read_file(config.metadata_path));

        Dataset dataset;
        for (const auto& rec : registry) {
            if (rec.is_pattern()) {
                throw RangeError("split needs concrete image rows, but \"" + rec.name +
                                 "\" is a pattern");
            }
            dataset.images.push_back(rec);
        }
        std::sort(dataset.images.begin(), dataset.images.end(),
                  [](const ImageRecord& a, const ImageRecord& b) { return a.name < b.name; });
        if (!config.truths_path.empty()) {
            WarningList warnings;
            Dataset truth_ds = load_truth_dataset(config, registry, &warnings);
            dataset.truths = std::move(truth_ds.truths);
        }

        std::vector<SplitManifest> manifests;
        if (config.split_method == "random") {
            manifests.push_back(random_split(dataset, config.n_test_images, config.seed));
        } else if (config.split_method == "percent") {
            manifests = percent_splits(dataset, config.leave_out_fraction, config.n_runs,
                                       config.seed);
        } else if (config.split_method == "group") {
            if (config.group_tag.empty()) throw RangeError("group split needs --tag");
            std::optional<std::string> train_value;
            if (!config.group_train_value.empty()) {
                train_value = config.group_train_value;
            }
            if (!config.group_held_value.empty()) {
                manifests.push_back(group_split(dataset, config.group_tag,
                                                config.group_held_value, train_value));
            } else {
                // One manifest per distinct held-out value, in value order.
                std::set<std::string> values;
                for (const auto& image : dataset.images) {
                    const auto it = image.group_tags.find(config.group_tag);
                    if (it == image.group_tags.end()) {
                        throw UnknownTagError("image \"" + image.name +
                                              "\" carries no tag \"" + config.group_tag +
                                              "\"");
                    }
                    values.insert(it->second);
                }
                if (values.size() < 2) {
                    throw EmptySideError("tag \"" + config.group_tag +
                                         "\" has a single value; nothing to hold out");
                }
                for (const auto& value : values) {
                    manifests.push_back(
                        group_split(dataset, config.group_tag, value, train_value));
                }
            }
        } else {
            throw RangeError("unknown split method \"" + config.split_method + "\"");
        }

        OutputBundle bundle(config.out_dir);
        bundle.add("config.json", config_json(config).dump(2) + "\n");
        for (const auto& m : manifests) {
            verify_manifest(m, dataset);
            bundle.add(m.name + ".manifest.json", manifest_to_json(m));
        }
        bundle.commit();
        return 0;
    } catch (const Error& e) {
        return report_error(e);
    } catch (const std::exception& e) {
        return report_internal(e);
    }
}

int cmd_hardening(const RunConfig& config) {
    try {
        config.validate_common();
        if (config.truths_path.empty() || config.metadata_path.empty()) {
            throw RangeError("hardening needs --truths and --metadata");
        }
        const auto registry = parse_metadata(read_file(config.metadata_path));
        WarningList warnings;
        Dataset dataset = load_truth_dataset(config, registry, &warnings);
        if (!config.preds_path.empty()) {
            merge_predictions(dataset, parse_predictions(read_file(config.preds_path),
                                                         registry, &warnings));
        }
        HardeningConstants constants;
        if (!config.constants_path.empty()) {
            constants = HardeningConstants::from_json(read_file(config.constants_path));
        }
        constants.validate();

        auto run_side = [&](const InstanceMap& map) {
            std::vector<HardeningResult> results;
            for (const auto& image : dataset.images) {
                const auto it = map.find(image.name);
                static const std::vector<DefectInstance> kNone;
                results.push_back(image_hardening(it != map.end() ? it->second : kNone,
                                                  image, constants,
                                                  config.hardening_bin_nm));
            }
            return results;
        };
        const auto truth_results = run_side(dataset.truths);

        const std::vector<std::string> constants_header = {
            "M=" + format_double(constants.taylor_M) +
            " mu_MPa=" + format_double(constants.shear_mu_MPa) +
            " b_nm=" + format_double(constants.burgers_b_nm) +
            " alpha_bdot=" + format_double(constants.alpha.at(DefectClass::BlackDot)) +
            " alpha_111=" + format_double(constants.alpha.at(DefectClass::Loop111)) +
            " alpha_100=" + format_double(constants.alpha.at(DefectClass::Loop100))};

        auto totals_csv = [&](const std::vector<HardeningResult>& results) {
            CsvTable table;
            table.header = {"image", "mode", "delta_sigma_MPa"};
            for (const auto& r : results) {
                table.rows.push_back({r.image_name, "linear",
                                      format_double(r.total_linear_MPa)});
                table.rows.push_back({r.image_name, "quadrature",
                                      format_double(r.total_quadrature_MPa)});
            }
            return write_csv(table, constants_header);
        };
        auto terms_csv = [&](const std::vector<HardeningResult>& results) {
            CsvTable table;
            table.header = {"image", "class", "bin_center_nm", "count",
                            "rho_per_nm3", "delta_sigma_MPa"};
            for (const auto& r : results) {
                for (const auto& t : r.terms) {
                    table.rows.push_back({r.image_name, class_token(t.cls),
                                          format_double(t.bin_center_nm),
                                          std::to_string(t.count),
                                          format_double(t.rho_per_nm3),
                                          format_double(t.delta_sigma_MPa)});
                }
            }
            return write_csv(table, constants_header);
        };

        OutputBundle bundle(config.out_dir);
        bundle.add("config.json", config_json(config).dump(2) + "\n");
        bundle.add("constants.json", constants.to_json());
        bundle.add("hardening_truth.csv", totals_csv(truth_results));
        bundle.add("hardening_truth_terms.csv", terms_csv(truth_results));

        ordered_json summary;
        summary["config"] = config_json(config);
        summary["constants"] = ordered_json::parse(constants.to_json());
        summary["n_images"] = dataset.images.size();

        if (dataset.predictions) {
            const auto pred_results = run_side(*dataset.predictions);
            bundle.add("hardening_pred.csv", totals_csv(pred_results));
            bundle.add("hardening_pred_terms.csv", terms_csv(pred_results));
            const auto errors = hardening_error(truth_results, pred_results);
            ordered_json err;
            for (const auto& [mode, summary_values] : errors) {
                ordered_json entry;
                entry["mae_MPa"] = summary_values.mae_MPa;
                entry["mape_percent"] = summary_values.mape_percent;
                entry["n_images"] = summary_values.n_images;
                err[mode == SummationMode::Linear ? "linear" : "quadrature"] =
                    std::move(entry);
            }
            summary["error"] = std::move(err);
        }
        bundle.add("summary.json", summary.dump(2) + "\n");
        bundle.commit();
        return 0;
    } catch (const Error& e) {
        return report_error(e);
    } catch (const std::exception& e) {
        return report_internal(e);
    }
}

int cmd_learning_curve(const RunConfig& config) {
    try {
        config.validate_common();
        if (config.results_dir.empty()) throw RangeError("learning-curve needs --results");
        if (!fs::is_directory(config.results_dir)) {
            throw MissingResultError("results directory \"" + config.results_dir +
                                     "\" does not exist");
        }

        std::vector<SplitManifest> manifests;
        std::vector<EvaluationSummary> results;
        std::vector<fs::path> paths;
        for (const auto& entry : fs::directory_iterator(config.results_dir)) {
            if (entry.path().extension() == ".json") paths.push_back(entry.path());
        }
        std::sort(paths.begin(), paths.end());
        for (const auto& path : paths) {
            const std::string bytes = read_file(path.string());
            const auto doc = nlohmann::json::parse(bytes, nullptr, false);
            if (!doc.is_object()) continue;
            if (doc.contains("method") && doc.contains("train")) {
                manifests.push_back(manifest_from_json(bytes));
            } else if (doc.contains("manifest_name") && doc.contains("type_scores")) {
                EvaluationSummary summary;
                summary.manifest_name = doc.at("manifest_name").get<std::string>();
                const auto& types = doc.at("type_scores");
                for (DefectClass c : kAllClasses) {
                    summary.per_class_f1[c] =
                        types.at("per_class").at(class_token(c)).at("f1").get<double>();
                }
                summary.overall_f1 = types.at("overall_f1").get<double>();
                results.push_back(std::move(summary));
            }
        }
        if (manifests.empty() && results.empty()) {
            throw MissingResultError("no manifests or evaluation summaries in \"" +
                                     config.results_dir + "\"");
        }
        const auto rows = learning_curve_rows(manifests, results);

        CsvTable table;
        table.header = {"manifest", "split_kind", "train_total"};
        for (DefectClass c : kAllClasses) table.header.push_back("train_" + class_token(c));
        for (DefectClass c : kAllClasses) table.header.push_back("f1_" + class_token(c));
        table.header.push_back("overall_f1");
        for (const auto& row : rows) {
            std::vector<std::string> fields = {row.manifest_name, row.split_kind,
                                               std::to_string(row.train_defects_total)};
            for (DefectClass c : kAllClasses) {
                fields.push_back(std::to_string(
                    row.train_defects.count(c) ? row.train_defects.at(c) : 0));
            }
            for (DefectClass c : kAllClasses) {
                fields.push_back(row.per_class_f1.count(c)
                                     ? format_double(row.per_class_f1.at(c))
                                     : std::string());
            }
            fields.push_back(format_double(row.overall_f1));
            table.rows.push_back(std::move(fields));
        }

        OutputBundle bundle(config.out_dir);
        bundle.add("config.json", config_json(config).dump(2) + "\n");
        bundle.add("learning_curve.csv", write_csv(table));
        bundle.commit();
        return 0;
    } catch (const Error& e) {
        return report_error(e);
    } catch (const std::exception& e) {
        return report_internal(e);
    }
}

int cmd_synth(const RunConfig& config) {
    try {
        config.validate_common();
        if (config.truths_path.empty() || config.metadata_path.empty()) {
            throw RangeError("synth needs --truths and --metadata");
        }
        const auto registry = parse_metadata(read_file(config.metadata_path));
        WarningList warnings;
        Dataset dataset = load_truth_dataset(config, registry, &warnings);

        PerturbationSpec spec;
        if (!config.spec_path.empty()) {
            spec = PerturbationSpec::from_json(read_file(config.spec_path));
        }
        if (config.seed != 0) spec.seed = config.seed;
        spec.validate();

        const PerturbResult result = perturb(dataset, spec);

        OutputBundle bundle(config.out_dir);
        bundle.add("config.json", config_json(config).dump(2) + "\n");
        bundle.add("spec.json", spec.to_json());
        bundle.add("predictions.json", write_native_json(*result.predictions.predictions));
        bundle.add("expectations.json", result.expectations.to_json());
        bundle.commit();
        return 0;
    } catch (const Error& e) {
        return report_error(e);
    } catch (const std::exception& e) {
        return report_internal(e);
    }
}

}  // namespace defectmet::cli

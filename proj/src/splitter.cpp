#include "defectmet/splitter.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "defectmet/csv.hpp"
#include "defectmet/rng.hpp"

namespace defectmet {

using ordered_json = nlohmann::ordered_json;

namespace {

std::vector<std::string> sorted_image_names(const Dataset& dataset) {
    std::vector<std::string> names;
    names.reserve(dataset.images.size());
    for (const auto& image : dataset.images) names.push_back(image.name);
    std::sort(names.begin(), names.end());
    return names;
}

std::map<DefectClass, std::size_t> count_side(const Dataset& dataset,
                                              const std::vector<std::string>& names) {
    std::map<DefectClass, std::size_t> counts;
    for (DefectClass c : kAllClasses) counts[c] = 0;
    for (const auto& name : names) {
        const auto it = dataset.truths.find(name);
        if (it == dataset.truths.end()) continue;
        for (const auto& inst : it->second) counts[inst.cls] += 1;
    }
    return counts;
}

void finalize(SplitManifest& manifest, const Dataset& dataset) {
    std::sort(manifest.train_images.begin(), manifest.train_images.end());
    std::sort(manifest.test_images.begin(), manifest.test_images.end());
    manifest.train_counts = count_side(dataset, manifest.train_images);
    manifest.test_counts = count_side(dataset, manifest.test_images);
}

}  // namespace

SplitManifest random_split(const Dataset& dataset, std::size_t n_test_images,
                           std::uint64_t seed, const std::string& name) {
    std::vector<std::string> names = sorted_image_names(dataset);
    if (n_test_images == 0 || n_test_images >= names.size()) {
        throw RangeError("n_test_images must lie strictly between 0 and the image count");
    }
    // Partial Fisher-Yates: the first n_test slots become the test set.
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < n_test_images; ++i) {
        const std::size_t j =
            i + static_cast<std::size_t>(rng.next_below(names.size() - i));
        std::swap(names[i], names[j]);
    }
    SplitManifest manifest;
    manifest.name = name.empty() ? "random_" + std::to_string(seed) : name;
    manifest.method.kind = SplitMethod::Kind::Random;
    manifest.seed = seed;
    manifest.test_images.assign(names.begin(),
                                names.begin() + static_cast<std::ptrdiff_t>(n_test_images));
    manifest.train_images.assign(names.begin() + static_cast<std::ptrdiff_t>(n_test_images),
                                 names.end());
    finalize(manifest, dataset);
    return manifest;
}

std::vector<SplitManifest> percent_splits(const Dataset& dataset,
                                          double leave_out_fraction, std::size_t n_runs,
                                          std::uint64_t seed) {
    if (leave_out_fraction <= 0.0 || leave_out_fraction >= 1.0) {
        throw RangeError("leave_out_fraction must lie strictly between 0 and 1");
    }
    if (n_runs == 0) throw RangeError("n_runs must be at least 1");

    const std::size_t n = dataset.images.size();
    // Keep the train side at the half-up rounding of the retained
    // fraction; the test side takes the remainder.
    const auto n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * (1.0 - leave_out_fraction) + 0.5));
    const std::size_t n_test = n - n_train;
    if (n_test == 0 || n_train == 0) {
        throw RangeError("leave_out_fraction leaves an empty train or test side");
    }

    SplitMix64 seeder(seed);
    std::vector<SplitManifest> manifests;
    for (std::size_t run = 1; run <= n_runs; ++run) {
        const std::uint64_t run_seed = seeder.next();
        SplitManifest manifest = random_split(
            dataset, n_test, run_seed,
            "percent_" + format_double(leave_out_fraction) + "_run" + std::to_string(run));
        manifest.method.kind = SplitMethod::Kind::Percent;
        manifest.method.fraction = leave_out_fraction;
        manifest.method.run = static_cast<int>(run);
        manifests.push_back(std::move(manifest));
    }
    return manifests;
}

SplitManifest group_split(const Dataset& dataset, const std::string& tag_key,
                          const std::string& held_out_value,
                          const std::optional<std::string>& train_value) {
    SplitManifest manifest;
    manifest.name = "group_" + tag_key + "_" + held_out_value;
    manifest.method.kind = SplitMethod::Kind::Group;
    manifest.method.tag_key = tag_key;
    manifest.method.held_value = held_out_value;

    for (const auto& image : dataset.images) {
        const auto it = image.group_tags.find(tag_key);
        if (it == image.group_tags.end()) {
            throw UnknownTagError("image \"" + image.name + "\" carries no tag \"" +
                                  tag_key + "\"");
        }
        if (it->second == held_out_value) {
            manifest.test_images.push_back(image.name);
        } else if (!train_value || it->second == *train_value) {
            manifest.train_images.push_back(image.name);
        }
    }
    if (manifest.test_images.empty()) {
        throw EmptySideError("no image matches held-out " + tag_key + "=" + held_out_value);
    }
    if (manifest.train_images.empty()) {
        throw EmptySideError("group split " + tag_key + "=" + held_out_value +
                             " leaves an empty train side");
    }
    finalize(manifest, dataset);
    return manifest;
}

std::vector<LearningCurveRow> learning_curve_rows(
    const std::vector<SplitManifest>& manifests,
    const std::vector<EvaluationSummary>& results) {
    std::map<std::string, const SplitManifest*> by_name;
    for (const auto& m : manifests) {
        if (!by_name.emplace(m.name, &m).second) {
            throw MissingResultError("duplicate manifest name \"" + m.name + "\"");
        }
    }
    std::map<std::string, const EvaluationSummary*> result_by_name;
    for (const auto& r : results) {
        if (!result_by_name.emplace(r.manifest_name, &r).second) {
            throw MissingResultError("duplicate evaluation result for manifest \"" +
                                     r.manifest_name + "\"");
        }
    }

    std::string missing;
    for (const auto& [name, m] : by_name) {
        if (result_by_name.count(name) == 0) missing += " " + name;
    }
    for (const auto& [name, r] : result_by_name) {
        if (by_name.count(name) == 0) missing += " " + name;
    }
    if (!missing.empty()) {
        throw MissingResultError("unpaired manifests/results:" + missing);
    }

    std::vector<LearningCurveRow> rows;
    for (const auto& [name, m] : by_name) {
        const EvaluationSummary& r = *result_by_name.at(name);
        LearningCurveRow row;
        row.manifest_name = name;
        switch (m->method.kind) {
            case SplitMethod::Kind::Random: row.split_kind = "random"; break;
            case SplitMethod::Kind::Percent: row.split_kind = "percent"; break;
            case SplitMethod::Kind::Group: row.split_kind = "group"; break;
        }
        row.train_defects = m->train_counts;
        row.train_defects_total = total_count(m->train_counts);
        row.per_class_f1 = r.per_class_f1;
        row.overall_f1 = r.overall_f1;
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(),
              [](const LearningCurveRow& a, const LearningCurveRow& b) {
                  if (a.train_defects_total != b.train_defects_total) {
                      return a.train_defects_total < b.train_defects_total;
                  }
                  return a.manifest_name < b.manifest_name;
              });
    return rows;
}

std::string manifest_to_json(const SplitManifest& manifest) {
    ordered_json method;
    switch (manifest.method.kind) {
        case SplitMethod::Kind::Random:
            method["kind"] = "random";
            break;
        case SplitMethod::Kind::Percent:
            method["kind"] = "percent";
            method["fraction"] = manifest.method.fraction;
            method["run"] = manifest.method.run;
            break;
        case SplitMethod::Kind::Group:
            method["kind"] = "group";
            method["tag_key"] = manifest.method.tag_key;
            method["held_value"] = manifest.method.held_value;
            break;
    }
    ordered_json counts;
    ordered_json train_counts, test_counts;
    for (DefectClass c : kAllClasses) {
        train_counts[class_token(c)] = manifest.train_counts.count(c)
                                           ? manifest.train_counts.at(c)
                                           : 0;
        test_counts[class_token(c)] =
            manifest.test_counts.count(c) ? manifest.test_counts.at(c) : 0;
    }
    counts["train"] = std::move(train_counts);
    counts["test"] = std::move(test_counts);

    ordered_json doc;
    doc["name"] = manifest.name;
    doc["method"] = std::move(method);
    doc["seed"] = manifest.seed;
    doc["train"] = manifest.train_images;
    doc["test"] = manifest.test_images;
    doc["counts"] = std::move(counts);
    return doc.dump(2) + "\n";
}

SplitManifest manifest_from_json(const std::string& bytes) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("malformed manifest JSON: " + std::string(e.what()), e.byte);
    }
    SplitManifest manifest;
    manifest.name = doc.at("name").get<std::string>();
    const std::string kind = doc.at("method").at("kind").get<std::string>();
    if (kind == "random") {
        manifest.method.kind = SplitMethod::Kind::Random;
    } else if (kind == "percent") {
        manifest.method.kind = SplitMethod::Kind::Percent;
        manifest.method.fraction = doc.at("method").at("fraction").get<double>();
        manifest.method.run = doc.at("method").at("run").get<int>();
    } else if (kind == "group") {
        manifest.method.kind = SplitMethod::Kind::Group;
        manifest.method.tag_key = doc.at("method").at("tag_key").get<std::string>();
        manifest.method.held_value = doc.at("method").at("held_value").get<std::string>();
    } else {
        throw ParseError("unknown split method kind \"" + kind + "\"");
    }
    manifest.seed = doc.at("seed").get<std::uint64_t>();
    manifest.train_images = doc.at("train").get<std::vector<std::string>>();
    manifest.test_images = doc.at("test").get<std::vector<std::string>>();
    for (DefectClass c : kAllClasses) {
        manifest.train_counts[c] =
            doc.at("counts").at("train").at(class_token(c)).get<std::size_t>();
        manifest.test_counts[c] =
            doc.at("counts").at("test").at(class_token(c)).get<std::size_t>();
    }
    return manifest;
}

void verify_manifest(const SplitManifest& manifest, const Dataset& dataset) {
    std::set<std::string> train(manifest.train_images.begin(), manifest.train_images.end());
    std::set<std::string> test(manifest.test_images.begin(), manifest.test_images.end());
    if (train.size() != manifest.train_images.size() ||
        test.size() != manifest.test_images.size()) {
        throw RangeError("manifest \"" + manifest.name + "\" repeats an image");
    }
    for (const auto& name : test) {
        if (train.count(name) != 0) {
            throw RangeError("manifest \"" + manifest.name + "\": image \"" + name +
                             "\" is in both train and test");
        }
    }
    for (const auto& name : manifest.train_images) dataset.image(name);
    for (const auto& name : manifest.test_images) dataset.image(name);
    if (count_side(dataset, manifest.train_images) != manifest.train_counts ||
        count_side(dataset, manifest.test_images) != manifest.test_counts) {
        throw RangeError("manifest \"" + manifest.name +
                         "\" counts disagree with the dataset");
    }
}

}  // namespace defectmet

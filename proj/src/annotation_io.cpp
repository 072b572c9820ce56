#include "defectmet/annotation_io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "defectmet/csv.hpp"
#include "defectmet/geometry.hpp"

namespace defectmet {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string normalize_label(std::string s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    s = s.substr(begin, end - begin + 1);
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

json parse_json(const std::string& bytes) {
    try {
        return json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw ParseError("malformed JSON: " + std::string(e.what()), e.byte);
    }
}

void warn(WarningList* warnings, const std::string& message) {
    if (warnings != nullptr) warnings->push_back(message);
}

}  // namespace

LabelMap LabelMap::defaults() {
    LabelMap m;
    m.entries = {
        {"111", DefectClass::Loop111},
        {"100", DefectClass::Loop100},
        {"bdot", DefectClass::BlackDot},
        {"black dot", DefectClass::BlackDot},
    };
    return m;
}

LabelMap LabelMap::from_json(const std::string& bytes) {
    const json doc = parse_json(bytes);
    if (!doc.is_object()) {
        throw ParseError("label map must be a JSON object of label -> class token");
    }
    LabelMap m;
    for (const auto& [key, value] : doc.items()) {
        if (!value.is_string()) {
            throw ParseError("label map entry \"" + key + "\" must map to a string");
        }
        m.entries[normalize_label(key)] = class_from_token(value.get<std::string>());
    }
    if (m.entries.empty()) throw ParseError("label map is empty");
    return m;
}

DefectInstance validate_instance(DefectInstance instance, const ImageRecord& image,
                                 const std::string& where, WarningList* warnings) {
    std::size_t clamped = 0;
    for (Point& p : instance.polygon) {
        const double x = std::clamp(p.x, 0.0, image.width);
        const double y = std::clamp(p.y, 0.0, image.height);
        if (x != p.x || y != p.y) ++clamped;
        p.x = x;
        p.y = y;
    }
    if (clamped > 0) {
        warn(warnings, where + ": clamped " + std::to_string(clamped) +
                           " vertex/vertices to the image bounds");
    }

    // Drop consecutive duplicates, including a trailing repeat of the
    // first vertex (the chain is implicitly closed).
    std::vector<Point> cleaned;
    cleaned.reserve(instance.polygon.size());
    for (const Point& p : instance.polygon) {
        if (cleaned.empty() || !(cleaned.back() == p)) cleaned.push_back(p);
    }
    while (cleaned.size() > 1 && cleaned.back() == cleaned.front()) cleaned.pop_back();
    instance.polygon = std::move(cleaned);

    std::set<std::pair<double, double>> distinct;
    for (const Point& p : instance.polygon) distinct.insert({p.x, p.y});
    if (distinct.size() < 3) {
        throw ParseError(where + ": polygon has fewer than 3 distinct vertices");
    }
    if (is_self_intersecting(instance.polygon)) {
        throw ParseError(where + ": polygon is self-intersecting");
    }
    if (instance.score && (*instance.score < 0.0 || *instance.score > 1.0)) {
        throw ParseError(where + ": score " + format_double(*instance.score) +
                         " outside [0,1]");
    }
    return instance;
}

namespace {

std::optional<DefectClass> lookup_label(const LabelMap& labels, const std::string& raw) {
    const auto it = labels.entries.find(normalize_label(raw));
    if (it == labels.entries.end()) return std::nullopt;
    return it->second;
}

DefectClass region_class(const json& region_attributes, const LabelMap& labels,
                         const std::string& where) {
    std::vector<std::string> candidates;
    for (const auto& [key, value] : region_attributes.items()) {
        if (value.is_string()) {
            candidates.push_back(value.get<std::string>());
        } else if (value.is_object()) {
            // VIA checkbox attributes: {"label": {"111": true}}
            for (const auto& [sub, flag] : value.items()) {
                if (!flag.is_boolean() || flag.get<bool>()) candidates.push_back(sub);
            }
        }
    }
    if (candidates.empty()) {
        throw ParseError(where + ": region has no class label attribute");
    }
    std::set<DefectClass> resolved;
    for (const auto& c : candidates) {
        if (auto cls = lookup_label(labels, c)) resolved.insert(*cls);
    }
    if (resolved.empty()) {
        std::string all;
        for (const auto& c : candidates) all += (all.empty() ? "\"" : ", \"") + c + "\"";
        throw ParseError(where + ": unknown class label " + all);
    }
    if (resolved.size() > 1) {
        throw ParseError(where + ": region attributes resolve to more than one class");
    }
    return *resolved.begin();
}

DefectInstance parse_via_region(const json& region, const ImageRecord& image,
                                const LabelMap& labels, const std::string& where,
                                WarningList* warnings) {
    if (!region.contains("shape_attributes")) {
        throw ParseError(where + ": region has no shape_attributes");
    }
    const json& shape = region.at("shape_attributes");
    const std::string shape_name = shape.value("name", std::string("<missing>"));
    if (shape_name != "polygon" && shape_name != "polyline") {
        throw ParseError(where + ": region shape is \"" + shape_name +
                         "\", only polygons are supported");
    }
    if (!shape.contains("all_points_x") || !shape.contains("all_points_y")) {
        throw ParseError(where + ": polygon region lacks all_points_x/all_points_y");
    }
    const json& xs = shape.at("all_points_x");
    const json& ys = shape.at("all_points_y");
    if (!xs.is_array() || !ys.is_array() || xs.size() != ys.size()) {
        throw ParseError(where + ": all_points_x/all_points_y must be arrays of equal length");
    }
    DefectInstance inst;
    inst.source_image = image.name;
    inst.polygon.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!xs[i].is_number() || !ys[i].is_number()) {
            throw ParseError(where + ": polygon vertices must be numbers");
        }
        inst.polygon.push_back({xs[i].get<double>(), ys[i].get<double>()});
    }
    inst.cls = region_class(region.value("region_attributes", json::object()), labels,
                            where);
    return validate_instance(std::move(inst), image, where, warnings);
}

}  // namespace

Dataset parse_vgg_annotations(const std::string& bytes,
                              const std::vector<ImageRecord>& registry,
                              const LabelMap& labels, WarningList* warnings) {
    json doc = parse_json(bytes);
    if (!doc.is_object()) {
        throw ParseError("VIA export must be a JSON object keyed by image");
    }
    if (doc.contains("_via_img_metadata")) {  // project export wrapper
        doc = doc.at("_via_img_metadata");
        if (!doc.is_object()) {
            throw ParseError("_via_img_metadata must be a JSON object");
        }
    }

    Dataset dataset;
    for (const auto& [key, entry] : doc.items()) {
        if (key.rfind("_via_", 0) == 0) continue;  // project settings blocks
        if (!entry.is_object() || !entry.contains("filename")) {
            throw ParseError("VIA entry \"" + key + "\" has no filename field");
        }
        const std::string filename = entry.at("filename").get<std::string>();
        const ImageRecord image = resolve_image(registry, filename);

        std::vector<DefectInstance> instances;
        if (entry.contains("regions")) {
            const json& regions = entry.at("regions");
            std::size_t index = 0;
            auto handle = [&](const json& region) {
                const std::string where =
                    "image \"" + filename + "\" region " + std::to_string(index);
                instances.push_back(
                    parse_via_region(region, image, labels, where, warnings));
                ++index;
            };
            if (regions.is_array()) {
                for (const auto& region : regions) handle(region);
            } else if (regions.is_object()) {  // VIA 1.x style, keyed regions
                for (const auto& [rk, region] : regions.items()) handle(region);
            } else if (!regions.is_null()) {
                throw ParseError("image \"" + filename +
                                 "\": regions must be an array or object");
            }
        }
        if (dataset.truths.count(filename) != 0) {
            throw DuplicateImageError("image \"" + filename +
                                      "\" appears more than once in the annotation file");
        }
        dataset.truths[filename] = std::move(instances);
        dataset.images.push_back(image);
    }
    std::sort(dataset.images.begin(), dataset.images.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.name < b.name; });
    return dataset;
}

namespace {

Dataset parse_native(const std::string& bytes, const std::vector<ImageRecord>& registry,
                     bool require_scores, WarningList* warnings) {
    const json doc = parse_json(bytes);
    if (!doc.is_object() || !doc.contains("images") || !doc.at("images").is_array()) {
        throw ParseError("native file must be an object with an \"images\" array");
    }
    InstanceMap instances;
    std::vector<ImageRecord> images;
    for (const auto& entry : doc.at("images")) {
        if (!entry.contains("name")) {
            throw ParseError("native image entry lacks a name");
        }
        const std::string name = entry.at("name").get<std::string>();
        if (instances.count(name) != 0) {
            throw DuplicateImageError("image \"" + name +
                                      "\" appears more than once in the native file");
        }
        const ImageRecord image = resolve_image(registry, name);
        std::vector<DefectInstance> list;
        std::size_t index = 0;
        for (const auto& item : entry.value("instances", json::array())) {
            const std::string where =
                "image \"" + name + "\" instance " + std::to_string(index);
            DefectInstance inst;
            inst.source_image = name;
            if (!item.contains("class")) {
                throw ParseError(where + ": missing class");
            }
            inst.cls = class_from_token(item.at("class").get<std::string>());
            if (!item.contains("polygon") || !item.at("polygon").is_array()) {
                throw ParseError(where + ": missing polygon array");
            }
            for (const auto& vertex : item.at("polygon")) {
                if (!vertex.is_array() || vertex.size() != 2) {
                    throw ParseError(where + ": polygon vertices must be [x,y] pairs");
                }
                inst.polygon.push_back(
                    {vertex[0].get<double>(), vertex[1].get<double>()});
            }
            if (item.contains("score") && !item.at("score").is_null()) {
                inst.score = item.at("score").get<double>();
            } else if (require_scores) {
                throw ParseError(where + ": predictions must carry a score");
            }
            list.push_back(validate_instance(std::move(inst), image, where, warnings));
            ++index;
        }
        instances[name] = std::move(list);
        images.push_back(image);
    }
    std::sort(images.begin(), images.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.name < b.name; });

    Dataset dataset;
    dataset.images = std::move(images);
    if (require_scores) {
        dataset.predictions = std::move(instances);
    } else {
        dataset.truths = std::move(instances);
    }
    return dataset;
}

}  // namespace

Dataset parse_predictions(const std::string& bytes,
                          const std::vector<ImageRecord>& registry,
                          WarningList* warnings) {
    return parse_native(bytes, registry, /*require_scores=*/true, warnings);
}

Dataset parse_native_truths(const std::string& bytes,
                            const std::vector<ImageRecord>& registry,
                            WarningList* warnings) {
    return parse_native(bytes, registry, /*require_scores=*/false, warnings);
}

std::string write_native_json(const InstanceMap& instances) {
    ordered_json images = ordered_json::array();
    for (const auto& [name, list] : instances) {  // std::map: name-sorted
        ordered_json entry;
        entry["name"] = name;
        ordered_json items = ordered_json::array();
        for (const auto& inst : list) {
            ordered_json item;
            item["class"] = class_token(inst.cls);
            ordered_json polygon = ordered_json::array();
            for (const Point& p : inst.polygon) {
                polygon.push_back(ordered_json::array({p.x, p.y}));
            }
            item["polygon"] = std::move(polygon);
            if (inst.score) {
                item["score"] = *inst.score;
            } else {
                item["score"] = nullptr;
            }
            items.push_back(std::move(item));
        }
        entry["instances"] = std::move(items);
        images.push_back(std::move(entry));
    }
    ordered_json doc;
    doc["images"] = std::move(images);
    return doc.dump(2) + "\n";
}

std::vector<ImageRecord> parse_metadata(const std::string& bytes) {
    const CsvTable table = read_csv(bytes);
    const std::vector<std::string> expected = {
        "name", "width", "height", "px_to_nm", "thickness_nm",
        "alloy", "irradiation", "microscope_sample"};
    std::map<std::string, std::size_t> columns;
    for (std::size_t i = 0; i < table.header.size(); ++i) columns[table.header[i]] = i;
    for (const auto& col : expected) {
        if (columns.count(col) == 0) {
            throw ParseError("metadata CSV is missing column \"" + col + "\"");
        }
    }

    std::vector<ImageRecord> registry;
    std::set<std::string> seen;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() < table.header.size()) {
            throw ParseError("metadata row " + std::to_string(r + 1) +
                             " has too few fields");
        }
        auto field = [&](const std::string& col) -> const std::string& {
            return row[columns.at(col)];
        };
        ImageRecord rec;
        rec.name = field("name");
        if (!seen.insert(rec.name).second) {
            throw DuplicateImageError("duplicate metadata row for \"" + rec.name + "\"");
        }
        rec.width = parse_double(field("width"), "width of " + rec.name);
        rec.height = parse_double(field("height"), "height of " + rec.name);
        rec.px_to_nm = parse_double(field("px_to_nm"), "px_to_nm of " + rec.name);
        const std::string& thickness = field("thickness_nm");
        rec.thickness_nm = thickness == "unreported"
                               ? 100.0
                               : parse_double(thickness, "thickness of " + rec.name);
        if (rec.width <= 0 || rec.height <= 0 || rec.px_to_nm <= 0 ||
            rec.thickness_nm <= 0) {
            throw RangeError("metadata for \"" + rec.name +
                             "\" has a nonpositive numeric field");
        }
        rec.group_tags["alloy"] = field("alloy");
        rec.group_tags["irradiation"] = field("irradiation");
        rec.group_tags["microscope_sample"] = field("microscope_sample");
        registry.push_back(std::move(rec));
    }
    return registry;
}

std::string write_metadata_csv(const std::vector<ImageRecord>& registry) {
    CsvTable table;
    table.header = {"name", "width", "height", "px_to_nm", "thickness_nm",
                    "alloy", "irradiation", "microscope_sample"};
    for (const auto& rec : registry) {
        table.rows.push_back({rec.name, format_double(rec.width),
                              format_double(rec.height), format_double(rec.px_to_nm),
                              format_double(rec.thickness_nm),
                              rec.group_tags.count("alloy") ? rec.group_tags.at("alloy") : "",
                              rec.group_tags.count("irradiation")
                                  ? rec.group_tags.at("irradiation")
                                  : "",
                              rec.group_tags.count("microscope_sample")
                                  ? rec.group_tags.at("microscope_sample")
                                  : ""});
    }
    return write_csv(table);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace defectmet

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "defectmet/errors.hpp"

namespace defectmet {

/// The three defect categories annotated in the image database. Unknown
/// label strings are a parse error, never coerced to one of these.
enum class DefectClass : int { BlackDot = 0, Loop111 = 1, Loop100 = 2 };

inline constexpr std::array<DefectClass, 3> kAllClasses = {
    DefectClass::BlackDot, DefectClass::Loop111, DefectClass::Loop100};

/// Canonical short token used in all file formats ("bdot", "111", "100").
std::string class_token(DefectClass c);

/// Human-readable name for report headers ("black dot", "<111> loop", ...).
std::string class_display_name(DefectClass c);

/// Inverse of class_token; throws ParseError for anything else.
DefectClass class_from_token(const std::string& token);

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

/// One annotated or predicted defect. The polygon is an ordered vertex
/// chain in pixel coordinates, implicitly closed (last vertex connects
/// back to the first). Predictions carry a confidence score in [0,1].
struct DefectInstance {
    DefectClass cls = DefectClass::BlackDot;
    std::vector<Point> polygon;
    std::optional<double> score;
    std::string source_image;

    bool operator==(const DefectInstance&) const = default;
};

/// Per-image metadata: pixel dimensions, pixel-to-nm scale, foil
/// thickness and the group tags used by the targeted split generator.
/// The name may contain '*' wildcards when the record describes a family
/// of images (metadata tables group images by name pattern).
struct ImageRecord {
    std::string name;
    double width = 0.0;   // pixels
    double height = 0.0;  // pixels
    double px_to_nm = 0.0;
    double thickness_nm = 0.0;
    std::map<std::string, std::string> group_tags;

    bool operator==(const ImageRecord&) const = default;

    bool is_pattern() const { return name.find('*') != std::string::npos; }
};

using InstanceMap = std::map<std::string, std::vector<DefectInstance>>;

struct Dataset {
    std::vector<ImageRecord> images;
    InstanceMap truths;
    std::optional<InstanceMap> predictions;

    bool operator==(const Dataset&) const = default;

    const ImageRecord& image(const std::string& name) const;
    bool has_image(const std::string& name) const;
};

/// True if `name` matches `pattern`, where '*' matches any (possibly
/// empty) substring. A pattern without '*' is an exact comparison.
bool glob_match(const std::string& pattern, const std::string& name);

/// Resolves a concrete image name against a registry that may contain
/// pattern records. Exact names win over patterns; among patterns the one
/// with the most literal characters wins, first-in-file breaking ties.
/// The returned record carries the concrete name. Throws
/// MissingMetadataError when nothing matches.
ImageRecord resolve_image(const std::vector<ImageRecord>& registry,
                          const std::string& name);

/// Per-class instance totals over a truth or prediction map.
std::map<DefectClass, std::size_t> class_counts(const InstanceMap& instances);

std::size_t total_count(const std::map<DefectClass, std::size_t>& counts);

}  // namespace defectmet

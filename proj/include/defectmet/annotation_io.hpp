#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "defectmet/types.hpp"

namespace defectmet {

/// Maps annotation label strings (trimmed, lowercased) to defect classes.
/// The attribute key VIA stored the label under varies between projects,
/// so parsing scans all region attributes and requires exactly one of
/// them to resolve through this map.
struct LabelMap {
    std::map<std::string, DefectClass> entries;

    /// "111"->Loop111, "100"->Loop100, "bdot"/"black dot"->BlackDot.
    static LabelMap defaults();

    /// Load from a JSON object {"label string": "bdot"|"111"|"100", ...}.
    static LabelMap from_json(const std::string& bytes);
};

/// Sink for non-fatal parse diagnostics (border-vertex clamping and the
/// like). Pass nullptr to discard.
using WarningList = std::vector<std::string>;

/// Parse a VGG Image Annotator export (annotation or project export; the
/// project wrapper's _via_img_metadata is unwrapped automatically) into a
/// truth Dataset. Regions must be polygons; every filename must resolve
/// against the registry.
Dataset parse_vgg_annotations(const std::string& bytes,
                              const std::vector<ImageRecord>& registry,
                              const LabelMap& labels = LabelMap::defaults(),
                              WarningList* warnings = nullptr);

/// Parse the toolkit's native interchange JSON as predictions. Scores are
/// required and must lie in [0,1].
Dataset parse_predictions(const std::string& bytes,
                          const std::vector<ImageRecord>& registry,
                          WarningList* warnings = nullptr);

/// Parse the native interchange JSON as ground truth (scores optional).
Dataset parse_native_truths(const std::string& bytes,
                            const std::vector<ImageRecord>& registry,
                            WarningList* warnings = nullptr);

/// Serialize instances to the native interchange JSON:
/// {"images":[{"name":..., "instances":[{"class":..., "polygon":[[x,y],...],
/// "score":...}]}]} with images in name order.
std::string write_native_json(const InstanceMap& instances);

/// Parse the image-metadata CSV (header: name,width,height,px_to_nm,
/// thickness_nm,alloy,irradiation,microscope_sample). Rows may be
/// concrete names or '*' patterns covering an image family. A
/// thickness_nm of "unreported" is replaced by the 100 nm default.
std::vector<ImageRecord> parse_metadata(const std::string& bytes);

std::string write_metadata_csv(const std::vector<ImageRecord>& registry);

/// Shared instance validation, applied by every parser: clamps vertices
/// into [0,width]x[0,height] (with a warning), drops consecutive
/// duplicate vertices, rejects polygons with fewer than 3 distinct
/// vertices or self-intersections. `where` names the instance in errors.
DefectInstance validate_instance(DefectInstance instance,
                                 const ImageRecord& image,
                                 const std::string& where,
                                 WarningList* warnings);

std::string read_file(const std::string& path);

}  // namespace defectmet

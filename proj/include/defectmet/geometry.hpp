#pragma once

#include <cstdint>
#include <vector>

#include "defectmet/types.hpp"

namespace defectmet {

/// Geometric statistics of one defect in physical units.
/// size_nm is the equivalent-circle diameter 2*sqrt(area/pi); heywood is
/// perimeter divided by the circumference of the equal-area circle (1 for
/// a circle, larger for elongated shapes).
struct DefectGeometry {
    double area_px2 = 0.0;
    double area_nm2 = 0.0;
    double size_nm = 0.0;
    double perimeter_nm = 0.0;
    double heywood = 0.0;
};

enum class SizeMode {
    EquivalentCircleDiameter,  // 2*sqrt(A/pi), the default
    MaxFeretDiameter,          // largest vertex-to-vertex distance
};

/// Shoelace area, |signed sum|/2. Orientation independent. Throws
/// DegenerateGeometryError for fewer than 3 distinct vertices; collinear
/// chains return 0.
double polygon_area(const std::vector<Point>& polygon);

/// Length of the closed vertex chain (includes the closing segment).
double polygon_perimeter(const std::vector<Point>& polygon);

/// True if any two non-adjacent edges properly cross or overlap along a
/// segment. Touching at a single shared point is allowed.
bool is_self_intersecting(const std::vector<Point>& polygon);

DefectGeometry defect_geometry(const DefectInstance& instance,
                               const ImageRecord& image,
                               SizeMode mode = SizeMode::EquivalentCircleDiameter);

/// Pixel coverage of a polygon on the native integer grid: a pixel (x, y)
/// is covered when its center (x+0.5, y+0.5) is inside under the even-odd
/// rule. Stored as row spans so pairwise intersection is cheap.
class PolygonRaster {
public:
    static PolygonRaster from_polygon(const std::vector<Point>& polygon);

    std::int64_t pixel_count() const { return pixel_count_; }

    struct Span {
        std::int64_t y;
        std::int64_t x_begin;  // inclusive
        std::int64_t x_end;    // exclusive
    };
    const std::vector<Span>& spans() const { return spans_; }

    /// Number of pixels covered by both rasters.
    std::int64_t intersection_count(const PolygonRaster& other) const;

    bool bbox_overlaps(const PolygonRaster& other) const;

private:
    std::vector<Span> spans_;  // sorted by (y, x_begin)
    std::int64_t pixel_count_ = 0;
    std::int64_t y_min_ = 0, y_max_ = 0;  // inclusive bounds of covered rows
    std::int64_t x_min_ = 0, x_max_ = 0;
};

/// Intersection-over-union of two polygons on the shared pixel-center
/// raster. Symmetric; 1.0 for identical polygons, 0.0 for disjoint ones.
double polygon_iou(const std::vector<Point>& a, const std::vector<Point>& b);

/// Same, over precomputed rasters (used by the matcher to avoid repeated
/// rasterization).
double raster_iou(const PolygonRaster& a, const PolygonRaster& b);

}  // namespace defectmet

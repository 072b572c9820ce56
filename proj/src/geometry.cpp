#include "defectmet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace defectmet {

namespace {

std::size_t distinct_vertex_count(const std::vector<Point>& polygon) {
    std::vector<Point> sorted = polygon;
    std::sort(sorted.begin(), sorted.end(), [](const Point& a, const Point& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    return sorted.size();
}

void require_valid(const std::vector<Point>& polygon) {
    if (polygon.size() < 3 || distinct_vertex_count(polygon) < 3) {
        throw DegenerateGeometryError("polygon needs at least 3 distinct vertices");
    }
}

double orient(const Point& a, const Point& b, const Point& c) {
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// Proper crossing, or collinear overlap of positive length. Touching at a
// single point is not an intersection here.
bool segments_conflict(const Point& p1, const Point& p2, const Point& p3,
                       const Point& p4) {
    const double d1 = orient(p3, p4, p1);
    const double d2 = orient(p3, p4, p2);
    const double d3 = orient(p1, p2, p3);
    const double d4 = orient(p1, p2, p4);

    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
        ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
        return true;
    }
    if (d1 == 0 && d2 == 0 && d3 == 0 && d4 == 0) {
        // All four points collinear; project on the dominant axis.
        const bool use_x = std::abs(p2.x - p1.x) + std::abs(p4.x - p3.x) >=
                           std::abs(p2.y - p1.y) + std::abs(p4.y - p3.y);
        auto coord = [use_x](const Point& p) { return use_x ? p.x : p.y; };
        const double a_lo = std::min(coord(p1), coord(p2));
        const double a_hi = std::max(coord(p1), coord(p2));
        const double b_lo = std::min(coord(p3), coord(p4));
        const double b_hi = std::max(coord(p3), coord(p4));
        return std::min(a_hi, b_hi) > std::max(a_lo, b_lo);
    }
    return false;
}

}  // namespace

double polygon_area(const std::vector<Point>& polygon) {
    require_valid(polygon);
    double sum = 0.0;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = polygon[i];
        const Point& b = polygon[(i + 1) % n];
        sum += a.x * b.y - b.x * a.y;
    }
    return std::abs(sum) / 2.0;
}

double polygon_perimeter(const std::vector<Point>& polygon) {
    require_valid(polygon);
    double length = 0.0;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = polygon[i];
        const Point& b = polygon[(i + 1) % n];
        length += std::hypot(b.x - a.x, b.y - a.y);
    }
    return length;
}

bool is_self_intersecting(const std::vector<Point>& polygon) {
    const std::size_t n = polygon.size();
    if (n < 4) return false;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;  // closing edge is adjacent
            if (segments_conflict(polygon[i], polygon[(i + 1) % n], polygon[j],
                                  polygon[(j + 1) % n])) {
                return true;
            }
        }
    }
    return false;
}

DefectGeometry defect_geometry(const DefectInstance& instance,
                               const ImageRecord& image, SizeMode mode) {
    if (image.px_to_nm <= 0.0) {
        throw RangeError("px_to_nm must be positive for image \"" + image.name + "\"");
    }
    DefectGeometry g;
    g.area_px2 = polygon_area(instance.polygon);
    if (g.area_px2 <= 0.0) {
        throw DegenerateGeometryError("polygon in image \"" + image.name +
                                      "\" has zero area");
    }
    const double scale = image.px_to_nm;
    g.area_nm2 = g.area_px2 * scale * scale;
    g.perimeter_nm = polygon_perimeter(instance.polygon) * scale;
    g.heywood = g.perimeter_nm / (2.0 * std::sqrt(std::numbers::pi * g.area_nm2));
    if (mode == SizeMode::EquivalentCircleDiameter) {
        g.size_nm = 2.0 * std::sqrt(g.area_nm2 / std::numbers::pi);
    } else {
        double max_sq = 0.0;
        for (std::size_t i = 0; i < instance.polygon.size(); ++i) {
            for (std::size_t j = i + 1; j < instance.polygon.size(); ++j) {
                const double dx = instance.polygon[i].x - instance.polygon[j].x;
                const double dy = instance.polygon[i].y - instance.polygon[j].y;
                max_sq = std::max(max_sq, dx * dx + dy * dy);
            }
        }
        g.size_nm = std::sqrt(max_sq) * scale;
    }
    return g;
}

PolygonRaster PolygonRaster::from_polygon(const std::vector<Point>& polygon) {
    require_valid(polygon);
    PolygonRaster raster;

    double min_y = polygon[0].y, max_y = polygon[0].y;
    for (const Point& p : polygon) {
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    const auto row_begin = static_cast<std::int64_t>(std::ceil(min_y - 0.5));
    const auto row_end = static_cast<std::int64_t>(std::floor(max_y - 0.5));

    const std::size_t n = polygon.size();
    std::vector<double> crossings;
    for (std::int64_t row = row_begin; row <= row_end; ++row) {
        const double yc = static_cast<double>(row) + 0.5;
        crossings.clear();
        for (std::size_t i = 0; i < n; ++i) {
            const Point& a = polygon[i];
            const Point& b = polygon[(i + 1) % n];
            if ((a.y > yc) == (b.y > yc)) continue;
            crossings.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
        }
        std::sort(crossings.begin(), crossings.end());
        for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
            const auto x_begin =
                static_cast<std::int64_t>(std::ceil(crossings[k] - 0.5));
            const auto x_end =
                static_cast<std::int64_t>(std::ceil(crossings[k + 1] - 0.5));
            if (x_end <= x_begin) continue;
            if (raster.spans_.empty()) {
                raster.y_min_ = raster.y_max_ = row;
                raster.x_min_ = x_begin;
                raster.x_max_ = x_end - 1;
            } else {
                raster.y_min_ = std::min(raster.y_min_, row);
                raster.y_max_ = std::max(raster.y_max_, row);
                raster.x_min_ = std::min(raster.x_min_, x_begin);
                raster.x_max_ = std::max(raster.x_max_, x_end - 1);
            }
            raster.spans_.push_back({row, x_begin, x_end});
            raster.pixel_count_ += x_end - x_begin;
        }
    }
    return raster;
}

bool PolygonRaster::bbox_overlaps(const PolygonRaster& other) const {
    if (pixel_count_ == 0 || other.pixel_count_ == 0) return false;
    return x_min_ <= other.x_max_ && other.x_min_ <= x_max_ &&
           y_min_ <= other.y_max_ && other.y_min_ <= y_max_;
}

std::int64_t PolygonRaster::intersection_count(const PolygonRaster& other) const {
    if (!bbox_overlaps(other)) return 0;
    std::int64_t total = 0;
    std::size_t i = 0, j = 0;
    while (i < spans_.size() && j < other.spans_.size()) {
        const Span& a = spans_[i];
        const Span& b = other.spans_[j];
        if (a.y < b.y) {
            ++i;
        } else if (b.y < a.y) {
            ++j;
        } else {
            const std::int64_t lo = std::max(a.x_begin, b.x_begin);
            const std::int64_t hi = std::min(a.x_end, b.x_end);
            if (hi > lo) total += hi - lo;
            if (a.x_end < b.x_end) {
                ++i;
            } else {
                ++j;
            }
        }
    }
    return total;
}

double raster_iou(const PolygonRaster& a, const PolygonRaster& b) {
    const std::int64_t inter = a.intersection_count(b);
    const std::int64_t uni = a.pixel_count() + b.pixel_count() - inter;
    if (uni <= 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double polygon_iou(const std::vector<Point>& a, const std::vector<Point>& b) {
    return raster_iou(PolygonRaster::from_polygon(a), PolygonRaster::from_polygon(b));
}

}  // namespace defectmet

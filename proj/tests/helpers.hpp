#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "defectmet/rng.hpp"
#include "defectmet/types.hpp"

namespace testutil {

using defectmet::DefectClass;
using defectmet::DefectInstance;
using defectmet::ImageRecord;
using defectmet::Point;

inline std::vector<Point> square(double x0, double y0, double side) {
    return {{x0, y0}, {x0 + side, y0}, {x0 + side, y0 + side}, {x0, y0 + side}};
}

inline std::vector<Point> regular_polygon(double cx, double cy, double radius,
                                          std::size_t n) {
    std::vector<Point> poly;
    poly.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(i) /
                         static_cast<double>(n);
        poly.push_back({cx + radius * std::cos(a), cy + radius * std::sin(a)});
    }
    return poly;
}

inline ImageRecord image_record(const std::string& name, double w = 1024,
                                double h = 1024, double px_to_nm = 1.0,
                                double thickness = 100.0) {
    ImageRecord rec;
    rec.name = name;
    rec.width = w;
    rec.height = h;
    rec.px_to_nm = px_to_nm;
    rec.thickness_nm = thickness;
    rec.group_tags = {{"alloy", "A"}, {"irradiation", "I"}, {"microscope_sample", "M"}};
    return rec;
}

inline DefectInstance instance(DefectClass cls, std::vector<Point> polygon,
                               const std::string& image = "img",
                               std::optional<double> score = std::nullopt) {
    DefectInstance inst;
    inst.cls = cls;
    inst.polygon = std::move(polygon);
    inst.score = score;
    inst.source_image = image;
    return inst;
}

/// Convex polygon with vertices on a circle of random radius, at sorted
/// random angles. Always simple.
inline std::vector<Point> random_convex_polygon(defectmet::SplitMix64& rng, double cx,
                                                double cy, double min_r, double max_r) {
    const std::size_t n = 3 + rng.next_below(6);
    std::vector<double> angles(n);
    for (auto& a : angles) a = rng.next_double() * 2.0 * std::numbers::pi;
    std::sort(angles.begin(), angles.end());
    const double r = min_r + rng.next_double() * (max_r - min_r);
    std::vector<Point> poly;
    poly.reserve(n);
    for (double a : angles) {
        poly.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
    }
    return poly;
}

/// A dataset of identical grid-placed squares, n_per_image per image, for
/// closed-loop statistics tests. Squares are 8 px, 24 px apart.
inline defectmet::Dataset grid_dataset(std::size_t n_images, std::size_t n_per_image,
                                       DefectClass cls = DefectClass::BlackDot) {
    defectmet::Dataset dataset;
    const std::size_t per_row = 40;  // fits in 1024 px at 24 px spacing
    for (std::size_t i = 0; i < n_images; ++i) {
        const std::string name = "grid_" + std::to_string(i);
        dataset.images.push_back(image_record(name));
        std::vector<DefectInstance> truths;
        for (std::size_t k = 0; k < n_per_image; ++k) {
            const double x = 8.0 + 24.0 * static_cast<double>(k % per_row);
            const double y = 8.0 + 24.0 * static_cast<double>(k / per_row);
            truths.push_back(instance(cls, square(x, y, 8.0), name));
        }
        dataset.truths[name] = std::move(truths);
    }
    return dataset;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("defectmet_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

}  // namespace testutil

#include "defectmet/types.hpp"

#include <algorithm>

namespace defectmet {

std::string class_token(DefectClass c) {
    switch (c) {
        case DefectClass::BlackDot: return "bdot";
        case DefectClass::Loop111: return "111";
        case DefectClass::Loop100: return "100";
    }
    throw Error("invalid DefectClass value");
}

std::string class_display_name(DefectClass c) {
    switch (c) {
        case DefectClass::BlackDot: return "black dot";
        case DefectClass::Loop111: return "<111> loop";
        case DefectClass::Loop100: return "<100> loop";
    }
    throw Error("invalid DefectClass value");
}

DefectClass class_from_token(const std::string& token) {
    if (token == "bdot") return DefectClass::BlackDot;
    if (token == "111") return DefectClass::Loop111;
    if (token == "100") return DefectClass::Loop100;
    throw ParseError("unknown defect class token \"" + token + "\"");
}

const ImageRecord& Dataset::image(const std::string& name) const {
    for (const auto& rec : images) {
        if (rec.name == name) return rec;
    }
    throw MissingMetadataError("no image record named \"" + name + "\"");
}

bool Dataset::has_image(const std::string& name) const {
    return std::any_of(images.begin(), images.end(),
                       [&](const ImageRecord& rec) { return rec.name == name; });
}

bool glob_match(const std::string& pattern, const std::string& name) {
    std::size_t p = 0, n = 0;
    std::size_t star = std::string::npos, star_n = 0;
    while (n < name.size()) {
        if (p < pattern.size() && (pattern[p] == name[n])) {
            ++p;
            ++n;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            star_n = n;
        } else if (star != std::string::npos) {
            p = star + 1;
            n = ++star_n;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

ImageRecord resolve_image(const std::vector<ImageRecord>& registry,
                          const std::string& name) {
    const ImageRecord* best = nullptr;
    std::size_t best_literals = 0;
    for (const auto& rec : registry) {
        if (!rec.is_pattern()) {
            if (rec.name == name) return rec;
            continue;
        }
        if (!glob_match(rec.name, name)) continue;
        const std::size_t literals =
            rec.name.size() - std::count(rec.name.begin(), rec.name.end(), '*');
        if (best == nullptr || literals > best_literals) {
            best = &rec;
            best_literals = literals;
        }
    }
    if (best == nullptr) {
        throw MissingMetadataError("image \"" + name +
                                   "\" is not covered by the metadata registry");
    }
    ImageRecord concrete = *best;
    concrete.name = name;
    return concrete;
}

std::map<DefectClass, std::size_t> class_counts(const InstanceMap& instances) {
    std::map<DefectClass, std::size_t> counts;
    for (DefectClass c : kAllClasses) counts[c] = 0;
    for (const auto& [name, list] : instances) {
        for (const auto& inst : list) counts[inst.cls] += 1;
    }
    return counts;
}

std::size_t total_count(const std::map<DefectClass, std::size_t>& counts) {
    std::size_t total = 0;
    for (const auto& [cls, n] : counts) total += n;
    return total;
}

}  // namespace defectmet

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "defectmet/annotation_io.hpp"
#include "defectmet/types.hpp"
#include "helpers.hpp"

using namespace defectmet;

namespace {

std::vector<ImageRecord> small_registry() {
    return {testutil::image_record("img1", 100, 100, 1.0),
            testutil::image_record("img2", 200, 150, 0.5)};
}

const char* kTwoImageVia = R"({
  "img1-1234": {
    "filename": "img1",
    "size": 1234,
    "regions": [
      {
        "shape_attributes": {"name": "polygon",
          "all_points_x": [0, 10, 10, 0], "all_points_y": [0, 0, 10, 10]},
        "region_attributes": {"label": "bdot"}
      },
      {
        "shape_attributes": {"name": "polygon",
          "all_points_x": [20, 30, 25], "all_points_y": [20, 20, 30]},
        "region_attributes": {"label": "111"}
      }
    ]
  },
  "img2-77": {
    "filename": "img2",
    "regions": []
  }
})";

void canonicalize(Dataset& dataset) {
    for (auto& [name, list] : dataset.truths) {
        std::sort(list.begin(), list.end(),
                  [](const DefectInstance& a, const DefectInstance& b) {
                      if (a.cls != b.cls) return a.cls < b.cls;
                      return a.polygon.front().x < b.polygon.front().x;
                  });
    }
}

}  // namespace

TEST_CASE("VIA parsing basics") {
    const auto registry = small_registry();
    const Dataset dataset = parse_vgg_annotations(kTwoImageVia, registry);

    CHECK(dataset.images.size() == 2);
    CHECK(dataset.truths.at("img1").size() == 2);
    CHECK(dataset.truths.at("img2").empty());

    const DefectInstance& dot = dataset.truths.at("img1")[0];
    CHECK(dot.cls == DefectClass::BlackDot);
    CHECK(dot.polygon.size() == 4);
    CHECK(dot.polygon[1] == Point{10, 0});
    CHECK_FALSE(dot.score.has_value());

    CHECK(dataset.truths.at("img1")[1].cls == DefectClass::Loop111);
}

TEST_CASE("VIA project export wrapper and keyed regions") {
    const char* project = R"({
      "_via_settings": {"ui": {}},
      "_via_img_metadata": {
        "img1-1": {
          "filename": "img1",
          "regions": {
            "0": {
              "shape_attributes": {"name": "polygon",
                "all_points_x": [1, 9, 9, 1], "all_points_y": [1, 1, 9, 9]},
              "region_attributes": {"type": "black dot"}
            }
          }
        }
      },
      "_via_attributes": {}
    })";
    const Dataset dataset = parse_vgg_annotations(project, small_registry());
    REQUIRE(dataset.truths.at("img1").size() == 1);
    CHECK(dataset.truths.at("img1")[0].cls == DefectClass::BlackDot);
}

TEST_CASE("VIA parse errors") {
    const auto registry = small_registry();

    SUBCASE("malformed JSON reports a byte offset") {
        try {
            parse_vgg_annotations("{\"a\": ", registry);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.byte_offset() > 0);
        }
    }

    SUBCASE("non-polygon region names the region") {
        const char* rect = R"({"img1-1": {"filename": "img1", "regions": [
          {"shape_attributes": {"name": "rect", "x": 1, "y": 1, "width": 5, "height": 5},
           "region_attributes": {"label": "bdot"}}]}})";
        CHECK_THROWS_WITH_AS(parse_vgg_annotations(rect, registry),
                             doctest::Contains("region 0"), ParseError);
    }

    SUBCASE("unknown class label names the label") {
        const char* bad = R"({"img1-1": {"filename": "img1", "regions": [
          {"shape_attributes": {"name": "polygon",
            "all_points_x": [0,5,5], "all_points_y": [0,0,5]},
           "region_attributes": {"label": "void"}}]}})";
        CHECK_THROWS_WITH_AS(parse_vgg_annotations(bad, registry),
                             doctest::Contains("void"), ParseError);
    }

    SUBCASE("image missing from the registry") {
        const char* orphan = R"({"x-1": {"filename": "unknown_image", "regions": []}})";
        CHECK_THROWS_AS(parse_vgg_annotations(orphan, registry), MissingMetadataError);
    }

    SUBCASE("self-intersecting polygon names the instance") {
        const char* bowtie = R"({"img1-1": {"filename": "img1", "regions": [
          {"shape_attributes": {"name": "polygon",
            "all_points_x": [0,10,10,0], "all_points_y": [0,10,0,10]},
           "region_attributes": {"label": "bdot"}}]}})";
        CHECK_THROWS_WITH_AS(parse_vgg_annotations(bowtie, registry),
                             doctest::Contains("img1"), ParseError);
    }
}

TEST_CASE("label map configuration") {
    const LabelMap custom = LabelMap::from_json(
        R"({"loop_a": "111", "loop_b": "100", "dot": "bdot"})");
    const char* via = R"({"img1-1": {"filename": "img1", "regions": [
      {"shape_attributes": {"name": "polygon",
        "all_points_x": [0,5,5], "all_points_y": [0,0,5]},
       "region_attributes": {"defect": "Loop_B"}}]}})";
    const Dataset dataset = parse_vgg_annotations(via, small_registry(), custom);
    CHECK(dataset.truths.at("img1")[0].cls == DefectClass::Loop100);

    CHECK_THROWS_AS(LabelMap::from_json(R"({"x": "unknown-class"})"), ParseError);
    CHECK_THROWS_AS(LabelMap::from_json("{}"), ParseError);
}

TEST_CASE("vertex clamping and duplicate removal") {
    const auto registry = small_registry();
    const char* via = R"({"img1-1": {"filename": "img1", "regions": [
      {"shape_attributes": {"name": "polygon",
        "all_points_x": [-3, 50, 50, 50, -3], "all_points_y": [0, 0, 0, 60, 60]},
       "region_attributes": {"label": "bdot"}}]}})";
    WarningList warnings;
    const Dataset dataset = parse_vgg_annotations(via, registry, LabelMap::defaults(),
                                                  &warnings);
    const auto& poly = dataset.truths.at("img1")[0].polygon;
    // (-3,0) clamps to (0,0); the duplicated (50,0) collapses.
    CHECK(poly.size() == 4);
    CHECK(poly[0] == Point{0, 0});
    CHECK(std::all_of(poly.begin(), poly.end(), [](const Point& p) {
        return p.x >= 0 && p.x <= 100 && p.y >= 0 && p.y <= 100;
    }));
    CHECK_FALSE(warnings.empty());
}

TEST_CASE("native round trip preserves the dataset") {
    const auto registry = small_registry();
    Dataset dataset = parse_vgg_annotations(kTwoImageVia, registry);

    const std::string native = write_native_json(dataset.truths);
    const Dataset reparsed = parse_native_truths(native, registry);
    CHECK(reparsed == dataset);

    // And the emitted text is stable under a second round trip.
    CHECK(write_native_json(reparsed.truths) == native);
}

TEST_CASE("parsing is order independent up to canonical order") {
    const auto registry = small_registry();
    const char* permuted = R"({
      "img2-77": {"filename": "img2", "regions": []},
      "img1-1234": {
        "filename": "img1",
        "regions": [
          {"shape_attributes": {"name": "polygon",
            "all_points_x": [20, 30, 25], "all_points_y": [20, 20, 30]},
           "region_attributes": {"label": "111"}},
          {"shape_attributes": {"name": "polygon",
            "all_points_x": [0, 10, 10, 0], "all_points_y": [0, 0, 10, 10]},
           "region_attributes": {"label": "bdot"}}
        ]
      }
    })";
    Dataset a = parse_vgg_annotations(kTwoImageVia, registry);
    Dataset b = parse_vgg_annotations(permuted, registry);
    CHECK(a.images == b.images);
    canonicalize(a);
    canonicalize(b);
    CHECK(a == b);
}

TEST_CASE("prediction parsing") {
    const auto registry = small_registry();

    SUBCASE("identity with scores") {
        const char* preds = R"({"images": [{"name": "img1", "instances": [
          {"class": "bdot", "polygon": [[0,0],[10,0],[10,10],[0,10]], "score": 1.0}]}]})";
        const Dataset dataset = parse_predictions(preds, registry);
        REQUIRE(dataset.predictions.has_value());
        CHECK(dataset.predictions->at("img1").size() == 1);
        CHECK(dataset.predictions->at("img1")[0].score == 1.0);
    }

    SUBCASE("empty prediction lists are valid") {
        const char* preds = R"({"images": [{"name": "img1", "instances": []}]})";
        const Dataset dataset = parse_predictions(preds, registry);
        CHECK(dataset.predictions->at("img1").empty());
    }

    SUBCASE("score out of range") {
        const char* preds = R"({"images": [{"name": "img1", "instances": [
          {"class": "bdot", "polygon": [[0,0],[10,0],[10,10],[0,10]], "score": 1.2}]}]})";
        CHECK_THROWS_AS(parse_predictions(preds, registry), ParseError);
    }

    SUBCASE("missing score") {
        const char* preds = R"({"images": [{"name": "img1", "instances": [
          {"class": "bdot", "polygon": [[0,0],[10,0],[10,10],[0,10]], "score": null}]}]})";
        CHECK_THROWS_AS(parse_predictions(preds, registry), ParseError);
    }
}

TEST_CASE("metadata CSV") {
    const std::string csv =
        "name,width,height,px_to_nm,thickness_nm,alloy,irradiation,microscope_sample\n"
        "2501_300kx_1nm_clhaadf3,1024,1024,0.478516,77.8,FC9,n1,CM200_KF\n"
        "dalong,1024,1024,0.283203,unreported,T91,i2,Talos_DZ\n"
        "map*_70kx,1024,1024,0.880523,87.5,FC6,n2,CM200_KF\n"
        "map*_70kx_onzap_CL4100,1024,1024,0.880523,111.7,FC6,n2,CM200_KF\n";
    const auto registry = parse_metadata(csv);
    REQUIRE(registry.size() == 4);

    CHECK(registry[0].name == "2501_300kx_1nm_clhaadf3");
    CHECK(registry[0].thickness_nm == 77.8);
    CHECK(registry[0].px_to_nm == 0.478516);
    CHECK(registry[0].group_tags.at("alloy") == "FC9");

    CHECK(registry[1].thickness_nm == 100.0);  // "unreported" sentinel

    SUBCASE("pattern resolution prefers the most specific match") {
        const ImageRecord a = resolve_image(registry, "map3_70kx");
        CHECK(a.thickness_nm == 87.5);
        CHECK(a.name == "map3_70kx");
        const ImageRecord b = resolve_image(registry, "map12_70kx_onzap_CL4100");
        CHECK(b.thickness_nm == 111.7);
        CHECK_THROWS_AS(resolve_image(registry, "unrelated"), MissingMetadataError);
    }

    SUBCASE("round trip through the writer") {
        CHECK(parse_metadata(write_metadata_csv(registry)) == registry);
    }

    SUBCASE("nonpositive numeric field") {
        const std::string bad =
            "name,width,height,px_to_nm,thickness_nm,alloy,irradiation,microscope_sample\n"
            "x,1024,1024,0,100,a,i,m\n";
        CHECK_THROWS_AS(parse_metadata(bad), RangeError);
    }

    SUBCASE("duplicate name") {
        const std::string dup =
            "name,width,height,px_to_nm,thickness_nm,alloy,irradiation,microscope_sample\n"
            "x,1024,1024,1,100,a,i,m\nx,512,512,1,100,a,i,m\n";
        CHECK_THROWS_AS(parse_metadata(dup), DuplicateImageError);
    }
}

TEST_CASE("glob matching") {
    CHECK(glob_match("map*_70kx", "map3_70kx"));
    CHECK(glob_match("map*_70kx", "map12_70kx"));
    CHECK_FALSE(glob_match("map*_70kx", "map12_70kx_onzap"));
    CHECK(glob_match("literal", "literal"));
    CHECK_FALSE(glob_match("literal", "literal2"));
    CHECK(glob_match("*", "anything"));
    CHECK(glob_match("a*b*c", "a__b__c"));
    CHECK_FALSE(glob_match("a*b*c", "a__c__b"));
}

TEST_CASE("per-image totals equal per-class sums") {
    const Dataset dataset = parse_vgg_annotations(kTwoImageVia, small_registry());
    const auto counts = class_counts(dataset.truths);
    std::size_t total = 0;
    for (const auto& [name, list] : dataset.truths) total += list.size();
    CHECK(total_count(counts) == total);
}

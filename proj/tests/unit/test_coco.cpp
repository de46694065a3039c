#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "scalpel/coco.hpp"
#include "scalpel/geometry.hpp"
#include "scalpel/synth.hpp"

using namespace scalpel;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "scalpel_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// One 4x4 image and a document template around it.
fs::path one_image_dir(const std::string& name) {
  const fs::path dir = fresh_dir(name);
  fs::create_directories(dir / "images");
  write_ppm(dir / "images" / "a.ppm", Image(4, 4, 0.5f));
  return dir;
}

std::string doc(const std::string& annotations) {
  return R"({"images":[{"id":1,"file_name":"a.ppm","height":4,"width":4}],"categories":[{"id":1,"name":"grape"}],)"
         R"("annotations":[)" + annotations + "]}";
}

const std::string kGood =
    R"({"id":7,"image_id":1,"category_id":1,"segmentation":[[0,0,3,0,3,3]],"bbox":[0,0,3,3],"area":4.5})";

}  // namespace

TEST_SUITE("coco") {

TEST_CASE("rasterizer matches the per-pixel oracle") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 2000; ++trial) {
    const Polygon p = oracle::random_grid_polygon(rng, 10);
    INFO("trial " << trial);
    CHECK(rasterize(p, 10, 10) == oracle::reference_rasterize(p, 10, 10));
  }
}

TEST_CASE("rasterization edge cases") {
  CHECK(rasterize({{20, 20}, {30, 20}, {30, 30}}, 8, 8).count() == 0);  // outside the image
  CHECK(rasterize({{1, 1}, {5, 5}, {3, 3}}, 8, 8).count() == 0);  // collinear: nothing enclosed
  // A bowtie's signed halves cancel, yet it encloses two triangles.
  const Polygon bowtie{{0, 0}, {6, 6}, {6, 0}, {0, 6}};
  CHECK(polygon_area(bowtie) == 0.0);
  CHECK(rasterize(bowtie, 6, 6) == oracle::reference_rasterize(bowtie, 6, 6));
  CHECK(rasterize(bowtie, 6, 6).count() > 0);
  CHECK(rasterize({{0, 0}, {2, 0}, {2, 2}, {0, 2}}, 4, 4).count() == 4);  // centres 0.5 and 1.5
  CHECK(count_centres_inside({{0, 0}, {4, 0}, {4, 4}, {0, 4}}) == 16);
  CHECK(polygon_area({{0, 0}, {4, 0}, {4, 4}, {0, 4}}) == 16.0);
}

TEST_CASE("rasterization commutes with mirroring") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 500; ++trial) {
    Polygon p = oracle::random_grid_polygon(rng, 10);
    Polygon q = p;
    for (Point& v : q) v.x = 10 - v.x;
    CHECK(rasterize(q, 10, 10) == mirror_horizontal(rasterize(p, 10, 10)));
  }
}

TEST_CASE("tracing a mask and rasterizing the outline reproduces it") {
  std::mt19937_64 rng(23);
  std::bernoulli_distribution bit(0.45);
  for (int trial = 0; trial < 300; ++trial) {
    Mask m(9, 11);
    for (auto& b : m.bits) b = bit(rng);
    const Polygon outline = trace_mask(m, 100000);
    INFO("trial " << trial);
    CHECK(rasterize(outline, 9, 11) == m);
  }
  CHECK(trace_mask(Mask(4, 4), 64).empty());
}

TEST_CASE("vertex budget is honoured with few mismatches on blobs") {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    const Scene s = render_scene(source_style(64), 100 + trial, trial);
    for (const Mask& sil : s.silhouettes) {
      const Polygon outline = trace_mask(sil, 24);
      CHECK(outline.size() <= 24);
      CHECK(oracle::reference_iou(rasterize(outline, 64, 64), sil) > 0.8);
    }
  }
}

TEST_CASE("dataset round trip through disk") {
  Dataset d = generate(3, {1, 3}, 32, {});
  d.name = "roundtrip";
  d.shift_tags = {"natural"};
  for (Sample& s : d.samples) quantize_8bit(s.image);
  const fs::path dir = fresh_dir("roundtrip");
  save_dataset(d, dir);
  const Dataset back = load_dataset(dir);
  CHECK(back.name == "roundtrip");
  CHECK(back.shift_tags == d.shift_tags);
  REQUIRE(back.samples.size() == d.samples.size());
  for (size_t i = 0; i < d.samples.size(); ++i) {
    CHECK(back.samples[i].image == d.samples[i].image);
    CHECK(back.samples[i].instances == d.samples[i].instances);
    CHECK(back.samples[i].attributes == d.samples[i].attributes);
  }
  CHECK(back.manifest().instance_count == d.instance_count());
}

TEST_CASE("empty annotation list is a valid dataset") {
  const fs::path dir = one_image_dir("empty");
  const Dataset d = parse_coco(doc(""), dir / "images");
  CHECK(d.samples.size() == 1);
  CHECK(d.manifest().instance_count == 0);
}

TEST_CASE("malformed documents are rejected with the reason") {
  const fs::path dir = one_image_dir("bad");
  const fs::path root = dir / "images";
  CHECK(parse_coco(doc(kGood), root).instance_count() == 1);
  CHECK_THROWS_WITH(parse_coco("{not json", root), doctest::Contains("not valid JSON"));
  CHECK_THROWS_WITH(parse_coco(R"({"images":[],"annotations":[]})", root), doctest::Contains("categories"));
  std::string odd = kGood;
  odd.replace(odd.find("[[0,0,3,0,3,3]]"), 15, "[[0,0,3,0,3]]");
  CHECK_THROWS_WITH(parse_coco(doc(odd), root), doctest::Contains("odd coordinate count"));
  std::string rle = kGood;
  rle.replace(rle.find("[[0,0,3,0,3,3]]"), 15, R"({"counts":[1]})");
  CHECK_THROWS_WITH(parse_coco(doc(rle), root), doctest::Contains("RLE"));
  std::string orphan = kGood;
  orphan.replace(orphan.find("\"image_id\":1"), 12, "\"image_id\":9");
  CHECK_THROWS_WITH(parse_coco(doc(orphan), root), doctest::Contains("unknown image ids: 9"));
  std::string zero = kGood;
  zero.replace(zero.find("4.5"), 3, "0.0");
  CHECK_THROWS_WITH(parse_coco(doc(zero), root), doctest::Contains("area"));
  std::string loose = kGood;
  loose.replace(loose.find("[0,0,3,3]"), 9, "[1,1,1,1]");
  CHECK_THROWS_WITH(parse_coco(doc(loose), root), doctest::Contains("bbox"));
  fs::remove(root / "a.ppm");
  CHECK_THROWS_WITH(parse_coco(doc(""), root), doctest::Contains("missing for image ids: 1"));
}

TEST_CASE("split is stratified and disjoint") {
  Dataset d;
  d.name = "set";
  for (int i = 0; i < 50; ++i) {
    Sample s;
    s.id = i;
    s.attributes["variety"] = i < 40 ? "a" : "b";
    d.samples.push_back(s);
  }
  const auto [train, val] = split(d, 0.2, "variety", 3);
  CHECK(train.name == "set-train");
  CHECK(val.samples.size() == 10);
  int val_a = 0;
  std::set<int64_t> ids;
  for (const Sample& s : val.samples) {
    val_a += s.attributes.at("variety") == "a";
    ids.insert(s.id);
  }
  CHECK(val_a == 8);
  for (const Sample& s : train.samples) CHECK(ids.count(s.id) == 0);
  CHECK(split(d, 0.2, "variety", 3).second.samples.front().id == val.samples.front().id);
  CHECK_THROWS(split(d, 1.0, "variety", 3));
}

TEST_CASE("manifest CSV layout") {
  const std::vector<DatasetManifest> m{{"R", 10, 100, {"input-level"}}, {"C", 12, 138, {"input-level", "feature-level"}}};
  std::ostringstream os;
  write_manifest_csv(os, m);
  CHECK(os.str() == "name,image_count,instance_count,shift_tags\nR,10,100,input-level\nC,12,138,input-level|feature-level\n");
}

}  // TEST_SUITE

#include "scalpel/coco.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "scalpel/log.hpp"

namespace scalpel {

using nlohmann::json;

InstanceAnnotation make_annotation(int64_t id, int64_t image_id, std::vector<Polygon> polygons) {
  InstanceAnnotation ann;
  ann.id = id;
  ann.image_id = image_id;
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
  double area = 0;
  for (const Polygon& poly : polygons) {
    for (const Point& p : poly) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    area += polygon_area(poly);
  }
  if (polygons.empty()) x0 = y0 = x1 = y1 = 0;
  ann.bbox = {x0, y0, x1 - x0, y1 - y0};
  ann.area = area;
  ann.segmentation = std::move(polygons);
  return ann;
}

int64_t Dataset::instance_count() const {
  int64_t n = 0;
  for (const Sample& s : samples) n += static_cast<int64_t>(s.instances.size());
  return n;
}

DatasetManifest Dataset::manifest() const {
  return {name, static_cast<int64_t>(samples.size()), instance_count(), shift_tags};
}

void validate_annotation(const InstanceAnnotation& ann, size_t index) {
  auto fail = [&](const std::string& why) {
    throw std::runtime_error("annotation #" + std::to_string(index) + " (id " +
                             std::to_string(ann.id) + "): " + why);
  };
  if (ann.segmentation.empty()) fail("no polygons");
  const double eps = 1e-6;
  for (size_t k = 0; k < ann.segmentation.size(); ++k) {
    const Polygon& poly = ann.segmentation[k];
    if (poly.size() < 3) fail("polygon " + std::to_string(k) + " has fewer than 3 vertices");
    for (const Point& p : poly) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) fail("non-finite vertex");
      if (p.x < ann.bbox[0] - eps || p.y < ann.bbox[1] - eps ||
          p.x > ann.bbox[0] + ann.bbox[2] + eps || p.y > ann.bbox[1] + ann.bbox[3] + eps) {
        fail("bbox does not enclose polygon " + std::to_string(k));
      }
    }
  }
  if (!(ann.area > 0)) fail("area must be positive");
}

std::string dump_coco(const Dataset& dataset) {
  json doc;
  doc["info"] = {{"name", dataset.name}, {"shift_tags", dataset.shift_tags}};
  doc["categories"] = json::array({{{"id", kGrapeCategoryId}, {"name", "grape"}}});
  json images = json::array();
  json anns = json::array();
  for (const Sample& s : dataset.samples) {
    json img = {{"id", s.id},
                {"file_name", s.file_name},
                {"height", s.image.height},
                {"width", s.image.width}};
    for (const auto& [k, v] : s.attributes) img[k] = v;
    images.push_back(std::move(img));
    for (const InstanceAnnotation& a : s.instances) {
      json seg = json::array();
      for (const Polygon& poly : a.segmentation) {
        json flat = json::array();
        for (const Point& p : poly) {
          flat.push_back(p.x);
          flat.push_back(p.y);
        }
        seg.push_back(std::move(flat));
      }
      anns.push_back({{"id", a.id},
                      {"image_id", a.image_id},
                      {"category_id", a.category_id},
                      {"segmentation", std::move(seg)},
                      {"bbox", a.bbox},
                      {"area", a.area},
                      {"iscrowd", 0}});
    }
  }
  doc["images"] = std::move(images);
  doc["annotations"] = std::move(anns);
  return doc.dump(1);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  for (const Sample& s : dataset.samples) write_ppm(dir / "images" / s.file_name, s.image);
  std::ofstream os(dir / "annotations.json");
  if (!os) throw std::runtime_error("cannot write " + (dir / "annotations.json").string());
  os << dump_coco(dataset) << '\n';
}

Dataset parse_coco(const std::string& json_text, const std::filesystem::path& image_root) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("annotation file is not valid JSON: ") + e.what());
  }
  for (const char* key : {"images", "annotations", "categories"}) {
    if (!doc.contains(key) || !doc[key].is_array()) {
      throw std::runtime_error(std::string("annotation file lacks a \"") + key + "\" array");
    }
  }
  Dataset ds;
  if (doc.contains("info")) {
    ds.name = doc["info"].value("name", "");
    ds.shift_tags = doc["info"].value("shift_tags", std::vector<std::string>{});
  }

  std::map<int64_t, size_t> index_of;
  std::vector<int64_t> missing_files;
  for (const json& img : doc["images"]) {
    Sample s;
    s.id = img.at("id").get<int64_t>();
    s.file_name = img.at("file_name").get<std::string>();
    for (const auto& [k, v] : img.items()) {
      if (k != "id" && k != "file_name" && k != "height" && k != "width" && v.is_string()) {
        s.attributes[k] = v.get<std::string>();
      }
    }
    const auto file = image_root / s.file_name;
    if (!std::filesystem::exists(file)) {
      missing_files.push_back(s.id);
    } else {
      s.image = read_ppm(file);
      if (s.image.height != img.value("height", s.image.height) ||
          s.image.width != img.value("width", s.image.width)) {
        throw std::runtime_error("image " + std::to_string(s.id) +
                                 " size disagrees with its annotation record");
      }
    }
    if (!index_of.emplace(s.id, ds.samples.size()).second) {
      throw std::runtime_error("duplicate image id " + std::to_string(s.id));
    }
    ds.samples.push_back(std::move(s));
  }

  std::set<int64_t> unknown_images;
  size_t index = 0;
  for (const json& a : doc["annotations"]) {
    InstanceAnnotation ann;
    ann.id = a.at("id").get<int64_t>();
    ann.image_id = a.at("image_id").get<int64_t>();
    ann.category_id = a.value("category_id", kGrapeCategoryId);
    const json& seg = a.at("segmentation");
    if (!seg.is_array()) {
      throw std::runtime_error("annotation #" + std::to_string(index) +
                               ": segmentation must be a polygon list (RLE unsupported)");
    }
    for (const json& flat : seg) {
      if (!flat.is_array() || flat.size() % 2 != 0) {
        throw std::runtime_error("annotation #" + std::to_string(index) +
                                 ": malformed polygon (odd coordinate count)");
      }
      Polygon poly;
      for (size_t i = 0; i < flat.size(); i += 2) {
        poly.push_back({flat[i].get<double>(), flat[i + 1].get<double>()});
      }
      ann.segmentation.push_back(std::move(poly));
    }
    const auto bbox = a.at("bbox").get<std::vector<double>>();
    if (bbox.size() != 4) {
      throw std::runtime_error("annotation #" + std::to_string(index) + ": bbox needs 4 values");
    }
    std::copy(bbox.begin(), bbox.end(), ann.bbox.begin());
    ann.area = a.at("area").get<double>();
    validate_annotation(ann, index);
    auto it = index_of.find(ann.image_id);
    if (it == index_of.end()) {
      unknown_images.insert(ann.image_id);
    } else {
      ds.samples[it->second].instances.push_back(std::move(ann));
    }
    ++index;
  }

  auto join = [](const auto& ids) {
    std::ostringstream os;
    bool first = true;
    for (int64_t id : ids) {
      os << (first ? "" : ", ") << id;
      first = false;
    }
    return os.str();
  };
  if (!unknown_images.empty()) {
    throw std::runtime_error("annotations reference unknown image ids: " + join(unknown_images));
  }
  if (!missing_files.empty()) {
    throw std::runtime_error("image files missing for image ids: " + join(missing_files));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto file = dir / "annotations.json";
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  std::stringstream buf;
  buf << is.rdbuf();
  Dataset ds = parse_coco(buf.str(), dir / "images");
  if (ds.name.empty()) ds.name = dir.filename().string();
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double val_fraction,
                                  const std::string& stratify_key, uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("split: val_fraction must lie in (0, 1)");
  }
  std::map<std::string, std::vector<size_t>> strata;
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    auto it = dataset.samples[i].attributes.find(stratify_key);
    strata[it == dataset.samples[i].attributes.end() ? std::string() : it->second].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<char> to_val(dataset.samples.size(), 0);
  for (auto& [key, members] : strata) {
    if (members.size() < 2) {
      log_warning("split: stratum '" + key + "' has fewer than 2 images; kept in train");
      continue;
    }
    for (size_t i = members.size() - 1; i > 0; --i) {
      std::swap(members[i], members[rng() % (i + 1)]);
    }
    const auto n_val = static_cast<size_t>(std::llround(static_cast<double>(members.size()) * val_fraction));
    for (size_t k = 0; k < n_val; ++k) to_val[members[k]] = 1;
  }
  Dataset train{dataset.name + "-train", dataset.shift_tags, {}};
  Dataset val{dataset.name + "-val", dataset.shift_tags, {}};
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    (to_val[i] ? val : train).samples.push_back(dataset.samples[i]);
  }
  return {std::move(train), std::move(val)};
}

void write_manifest_csv(std::ostream& os, std::span<const DatasetManifest> manifests) {
  os << "name,image_count,instance_count,shift_tags\n";
  for (const auto& m : manifests) {
    os << m.name << ',' << m.image_count << ',' << m.instance_count << ',';
    for (size_t i = 0; i < m.shift_tags.size(); ++i) os << (i ? "|" : "") << m.shift_tags[i];
    os << '\n';
  }
}

}  // namespace scalpel

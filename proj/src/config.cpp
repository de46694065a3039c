#include "scalpel/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace scalpel {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& v) {
  size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw std::invalid_argument("expected a number, got '" + v + "'");
  return d;
}

long long to_int(const std::string& v) {
  long long n = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw std::invalid_argument("expected an integer, got '" + v + "'");
  return n;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

template <typename T, size_t N>
std::array<T, N> to_array(const std::string& v) {
  const auto items = split_list(v);
  if (items.size() != N)
    throw std::invalid_argument("expected " + std::to_string(N) + " comma-separated values, got '" + v + "'");
  std::array<T, N> out{};
  for (size_t i = 0; i < N; ++i) {
    if constexpr (std::is_integral_v<T>) out[i] = static_cast<T>(to_int(items[i]));
    else out[i] = static_cast<T>(to_double(items[i]));
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

template <typename A>
std::string join(const A& a) {
  std::string s;
  for (size_t i = 0; i < a.size(); ++i) s += (i ? ", " : "") + num(static_cast<double>(a[i]));
  return s;
}

struct Field {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

// "section.key" -> accessor, in printing order.
std::vector<std::pair<std::string, Field>> fields(ExperimentConfig& c) {
  std::vector<std::pair<std::string, Field>> f;
  auto add = [&f](std::string key, std::function<void(const std::string&)> set, std::function<std::string()> get) {
    f.emplace_back(std::move(key), Field{std::move(set), std::move(get)});
  };
#define SCALPEL_INT(sec, obj, name)                                                                \
  add(#sec "." #name, [&c](const std::string& v) { c.obj.name = static_cast<decltype(c.obj.name)>(to_int(v)); }, \
      [&c] { return std::to_string(c.obj.name); })
#define SCALPEL_REAL(sec, obj, name)                                                                 \
  add(#sec "." #name, [&c](const std::string& v) { c.obj.name = static_cast<decltype(c.obj.name)>(to_double(v)); }, \
      [&c] { return num(c.obj.name); })
#define SCALPEL_ARRAY(sec, obj, name, T, N)                                               \
  add(#sec "." #name, [&c](const std::string& v) { c.obj.name = to_array<T, N>(v); }, \
      [&c] { return join(c.obj.name); })

  SCALPEL_INT(arch, arch, stem_channels);
  SCALPEL_INT(arch, arch, stem_kernel);
  SCALPEL_ARRAY(arch, arch, stage_channels, int, 4);
  SCALPEL_ARRAY(arch, arch, blocks_per_stage, int, 4);
  add("arch.block_type",
      [&c](const std::string& v) {
        if (v == "basic") c.arch.block_type = BlockType::kBasic;
        else if (v == "bottleneck") c.arch.block_type = BlockType::kBottleneck;
        else throw std::invalid_argument("expected basic or bottleneck, got '" + v + "'");
      },
      [&c] { return std::string(c.arch.block_type == BlockType::kBasic ? "basic" : "bottleneck"); });
  SCALPEL_INT(arch, arch, bottleneck_ratio);
  SCALPEL_INT(arch, arch, gn_groups);
  SCALPEL_INT(arch, arch, pyramid_channels);
  SCALPEL_INT(arch, arch, anchors_per_location);
  SCALPEL_ARRAY(arch, arch, anchor_sizes, float, 4);
  SCALPEL_INT(arch, arch, roi_resolution);
  SCALPEL_INT(arch, arch, mask_resolution);
  SCALPEL_INT(arch, arch, box_head_convs);
  SCALPEL_INT(arch, arch, box_head_fcs);
  SCALPEL_INT(arch, arch, box_head_dim);
  SCALPEL_INT(arch, arch, mask_head_convs);
  SCALPEL_INT(arch, arch, mask_head_dim);
  SCALPEL_INT(arch, arch, num_classes);
  SCALPEL_INT(arch, arch, rpn_batch_per_image);
  SCALPEL_INT(arch, arch, rpn_pre_nms_topk);
  SCALPEL_INT(arch, arch, rpn_post_nms_topk);
  SCALPEL_REAL(arch, arch, rpn_nms_threshold);
  SCALPEL_INT(arch, arch, roi_batch_per_image);
  SCALPEL_REAL(arch, arch, roi_positive_fraction);
  SCALPEL_REAL(arch, arch, detection_nms_threshold);
  SCALPEL_INT(arch, arch, detections_per_image);
  SCALPEL_REAL(arch, arch, roi_canonical_size);
  SCALPEL_INT(arch, arch, roi_canonical_level);

  SCALPEL_INT(train, train, batch_size);
  SCALPEL_REAL(train, train, learning_rate);
  SCALPEL_INT(train, train, eval_interval);
  SCALPEL_INT(train, train, patience);
  SCALPEL_INT(train, train, max_iters);
  SCALPEL_INT(train, train, warmup_iters);
  SCALPEL_INT(train, train, max_val_images);
  add("train.augment", [&c](const std::string& v) { c.train.augment = to_bool(v); },
      [&c] { return std::string(c.train.augment ? "true" : "false"); });
  add("train.seed", [&c](const std::string& v) { c.train.seed = static_cast<uint64_t>(to_int(v)); },
      [&c] { return std::to_string(c.train.seed); });
  add("train.recipe", [&c](const std::string& v) { c.recipe = v; }, [&c] { return c.recipe; });

  SCALPEL_ARRAY(augment, augment, blur_sigma, double, 2);
  SCALPEL_ARRAY(augment, augment, noise_std, double, 2);
  SCALPEL_ARRAY(augment, augment, brightness, double, 2);
  SCALPEL_ARRAY(augment, augment, contrast, double, 2);
  SCALPEL_ARRAY(augment, augment, saturation, double, 2);
  SCALPEL_REAL(augment, augment, pixel_dropout_prob);
  SCALPEL_REAL(augment, augment, flip_prob);
  add("augment.seed", [&c](const std::string& v) { c.augment.seed = static_cast<uint64_t>(to_int(v)); },
      [&c] { return std::to_string(c.augment.seed); });

  SCALPEL_REAL(eval, eval, score_floor);
  SCALPEL_REAL(eval, eval, iou_step);
#undef SCALPEL_INT
#undef SCALPEL_REAL
#undef SCALPEL_ARRAY
  return f;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::string& source, const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  auto table = fields(cfg);
  std::map<std::string, Field*> by_key;
  for (auto& [k, f] : table) by_key[k] = &f;
  std::map<std::string, int> line_of;  // "section.key" -> line

  auto fail = [&source](int line, const std::string& msg) -> ConfigError {
    return ConfigError(source + ":" + std::to_string(line) + ": " + msg);
  };

  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  std::vector<std::pair<std::string, std::pair<std::string, int>>> assignments;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find_first_of("#;");
    std::string s = trim(std::string_view(raw).substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw fail(line, "malformed section header '" + s + "'");
      section = trim(std::string_view(s).substr(1, s.size() - 2));
      if (section != "arch" && section != "train" && section != "augment" && section != "eval")
        throw fail(line, "unknown section [" + section + "] (expected arch, train, augment, eval)");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw fail(line, "expected 'key = value', got '" + s + "'");
    if (section.empty()) throw fail(line, "setting outside of any section");
    const std::string key = section + "." + trim(std::string_view(s).substr(0, eq));
    const std::string value = trim(std::string_view(s).substr(eq + 1));
    if (key == "arch.preset") {
      if (value == "mini") cfg.arch = ArchConfig::mini();
      else if (value == "full") cfg.arch = ArchConfig::full_scale();
      else throw fail(line, "arch.preset: expected mini or full, got '" + value + "'");
      cfg.preset = value;
      line_of[key] = line;
      // A preset resets the architecture, so it must come before other arch keys.
      for (const auto& [k, v] : assignments)
        if (k.rfind("arch.", 0) == 0) throw fail(line, "arch.preset must precede other [arch] settings");
      continue;
    }
    if (!by_key.count(key)) throw fail(line, "unknown setting '" + key + "'");
    assignments.push_back({key, {value, line}});
    try {
      by_key[key]->set(value);
    } catch (const std::invalid_argument& e) {
      throw fail(line, key + ": " + e.what());
    }
    line_of[key] = line;
  }

  // Validation messages start with "<section>.<field>"; point at its line.
  auto validated = [&](const std::function<void()>& check) {
    try {
      check();
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      const std::string key = msg.substr(0, msg.find_first_of(" ("));
      auto it = line_of.find(key);
      if (it != line_of.end()) throw fail(it->second, msg);
      throw ConfigError(source + ": " + msg + " (value from defaults)");
    }
  };
  validated([&] { cfg.arch.validate(); });
  validated([&] { cfg.train.validate(); });
  validated([&] { cfg.augment.validate(); });
  validated([&] { cfg.eval.validate(); });
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file, const ExperimentConfig& base) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open config " + file.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str(), file.string(), base);
}

void print_config(std::ostream& os, const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  const auto table = fields(copy);
  std::string section;
  for (const auto& [key, f] : table) {
    const std::string sec = key.substr(0, key.find('.'));
    if (sec != section) {
      os << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
      section = sec;
      if (sec == "arch") os << "preset = " << copy.preset << '\n';
    }
    os << key.substr(key.find('.') + 1) << " = " << f.get() << '\n';
  }
}

uint64_t config_hash(const ExperimentConfig& config) {
  std::ostringstream os;
  print_config(os, config);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : os.str()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace scalpel

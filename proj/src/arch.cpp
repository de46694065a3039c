#include "scalpel/arch.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "scalpel/network.hpp"

namespace scalpel {

ArchConfig ArchConfig::mini() { return ArchConfig{}; }

ArchConfig ArchConfig::full_scale() {
  ArchConfig c;
  c.stem_channels = 64;
  c.stem_kernel = 7;
  c.stage_channels = {256, 512, 1024, 2048};
  c.blocks_per_stage = {3, 4, 6, 3};
  c.block_type = BlockType::kBottleneck;
  c.bottleneck_ratio = 4;
  c.gn_groups = 32;
  c.pyramid_channels = 256;
  c.anchors_per_location = 3;
  c.anchor_sizes = {32.0f, 64.0f, 128.0f, 256.0f};
  c.roi_resolution = 7;
  c.mask_resolution = 28;
  c.box_head_convs = 4;
  c.box_head_fcs = 1;
  c.box_head_dim = 1024;
  c.mask_head_convs = 4;
  c.mask_head_dim = 256;
  c.num_classes = 1;
  c.rpn_batch_per_image = 256;
  c.rpn_pre_nms_topk = 2000;
  c.rpn_post_nms_topk = 1000;
  c.roi_batch_per_image = 512;
  c.detections_per_image = 100;
  c.roi_canonical_size = 224.0f;
  c.roi_canonical_level = 4;
  return c;
}

void ArchConfig::validate() const {
  auto positive = [](const char* field, double v) {
    if (!(v >= 1)) {
      throw std::invalid_argument("arch." + std::string(field) + " must be >= 1, got " +
                                  std::to_string(v));
    }
  };
  positive("stem_channels", stem_channels);
  positive("stem_kernel", stem_kernel);
  for (int i = 0; i < 4; ++i) {
    positive("stage_channels", stage_channels[i]);
    positive("blocks_per_stage", blocks_per_stage[i]);
    positive("anchor_sizes", anchor_sizes[i]);
  }
  positive("bottleneck_ratio", bottleneck_ratio);
  positive("gn_groups", gn_groups);
  positive("pyramid_channels", pyramid_channels);
  positive("anchors_per_location", anchors_per_location);
  positive("roi_resolution", roi_resolution);
  positive("mask_resolution", mask_resolution);
  positive("box_head_fcs", box_head_fcs);
  positive("box_head_dim", box_head_dim);
  positive("mask_head_dim", mask_head_dim);
  positive("num_classes", num_classes);
  positive("rpn_batch_per_image", rpn_batch_per_image);
  positive("rpn_pre_nms_topk", rpn_pre_nms_topk);
  positive("rpn_post_nms_topk", rpn_post_nms_topk);
  positive("roi_batch_per_image", roi_batch_per_image);
  positive("detections_per_image", detections_per_image);
  if (box_head_convs < 0) throw std::invalid_argument("arch.box_head_convs must be >= 0");
  if (mask_head_convs < 0) throw std::invalid_argument("arch.mask_head_convs must be >= 0");
  if (anchors_per_location != 3) {
    throw std::invalid_argument("arch.anchors_per_location must be 3 (aspect ratios 0.5/1/2)");
  }
  if (mask_resolution % 2 != 0) {
    throw std::invalid_argument("arch.mask_resolution must be even (2x deconv upsampling)");
  }
  auto divisible = [this](const char* field, int channels) {
    if (channels % gn_groups != 0) {
      throw std::invalid_argument("arch." + std::string(field) + " (" + std::to_string(channels) +
                                  ") is not divisible by arch.gn_groups (" +
                                  std::to_string(gn_groups) + ")");
    }
  };
  divisible("stem_channels", stem_channels);
  for (int c : stage_channels) {
    divisible("stage_channels", c);
    if (block_type == BlockType::kBottleneck) {
      if (c % bottleneck_ratio != 0) {
        throw std::invalid_argument("arch.stage_channels not divisible by arch.bottleneck_ratio");
      }
      divisible("stage_channels / bottleneck_ratio", c / bottleneck_ratio);
    }
  }
  divisible("pyramid_channels", pyramid_channels);
  if (box_head_convs > 0) divisible("pyramid_channels", pyramid_channels);
  if (mask_head_convs > 0) divisible("mask_head_dim", mask_head_dim);
  auto unit = [](const char* field, float v, bool open_low) {
    if (!(open_low ? v > 0.0f : v >= 0.0f) || v > 1.0f) {
      throw std::invalid_argument("arch." + std::string(field) + " must lie in (0, 1]");
    }
  };
  unit("rpn_nms_threshold", rpn_nms_threshold, true);
  unit("roi_positive_fraction", roi_positive_fraction, true);
  unit("detection_nms_threshold", detection_nms_threshold, true);
  if (!(roi_canonical_size > 0.0f)) throw std::invalid_argument("arch.roi_canonical_size must be > 0");
  if (roi_canonical_level < 2 || roi_canonical_level > 5) {
    throw std::invalid_argument("arch.roi_canonical_level must be in 2..5");
  }
}

const std::vector<std::string>& group_labels() {
  static const std::vector<std::string> labels{
      "stem", "res2", "res3", "res4", "res5", "fpn@2", "fpn@3", "fpn@4", "fpn@5", "rpn",
      "roi_heads"};
  return labels;
}

namespace {

class Builder {
 public:
  Builder(const ArchConfig& c, const ParamSink& sink) : c_(c), sink_(sink) {}

  Tensor param(const std::string& path, const std::string& group, Shape shape, ParamInit init) {
    return sink_(ParamSpec{path, group, std::move(shape), init});
  }

  ConvUnit conv(const std::string& path, const std::string& group, int cin, int cout, int k,
                int stride, bool norm, ParamInit init = ParamInit::kaiming()) {
    ConvUnit u;
    u.stride = stride;
    u.pad = k / 2;
    u.weight = param(path + ".weight", group, {cout, cin, k, k}, init);
    if (norm) {
      u.gamma = param(path + ".norm.weight", group, {cout}, ParamInit::ones());
      u.beta = param(path + ".norm.bias", group, {cout}, ParamInit::zeros());
    } else {
      u.bias = param(path + ".bias", group, {cout}, ParamInit::zeros());
    }
    return u;
  }

  LinearUnit fc(const std::string& path, const std::string& group, int in, int out,
                ParamInit init) {
    return {param(path + ".weight", group, {out, in}, init),
            param(path + ".bias", group, {out}, ParamInit::zeros())};
  }

  ResidualBlock block(const std::string& path, const std::string& group, int cin, int cout,
                      int stride) {
    ResidualBlock b;
    if (c_.block_type == BlockType::kBottleneck) {
      const int mid = cout / c_.bottleneck_ratio;
      b.conv1 = conv(path + ".conv1", group, cin, mid, 1, 1, true);
      b.conv2 = conv(path + ".conv2", group, mid, mid, 3, stride, true);
      b.conv3 = conv(path + ".conv3", group, mid, cout, 1, 1, true);
    } else {
      b.conv1 = conv(path + ".conv1", group, cin, cout, 3, stride, true);
      b.conv2 = conv(path + ".conv2", group, cout, cout, 3, 1, true);
    }
    if (cin != cout || stride != 1) {
      b.shortcut = conv(path + ".shortcut", group, cin, cout, 1, stride, true);
    }
    return b;
  }

 private:
  const ArchConfig& c_;
  const ParamSink& sink_;
};

}  // namespace

Network build_network(const ArchConfig& c, const ParamSink& sink) {
  c.validate();
  Builder b(c, sink);
  Network net;
  net.stem = b.conv("backbone.stem.conv1", "stem", 3, c.stem_channels, c.stem_kernel, 2, true);

  int cin = c.stem_channels;
  for (int s = 0; s < 4; ++s) {
    const std::string group = "res" + std::to_string(s + 2);
    const int cout = c.stage_channels[s];
    for (int i = 0; i < c.blocks_per_stage[s]; ++i) {
      const int stride = (i == 0 && s > 0) ? 2 : 1;
      net.stages[s].push_back(b.block("backbone." + group + ".block" + std::to_string(i), group,
                                      cin, cout, stride));
      cin = cout;
    }
  }

  for (int s = 0; s < 4; ++s) {
    const std::string lvl = std::to_string(s + 2);
    const std::string group = "fpn@" + lvl;
    net.fpn_lateral[s] =
        b.conv("fpn.lateral" + lvl, group, c.stage_channels[s], c.pyramid_channels, 1, 1, true);
    net.fpn_output[s] =
        b.conv("fpn.output" + lvl, group, c.pyramid_channels, c.pyramid_channels, 3, 1, true);
  }

  const int pc = c.pyramid_channels;
  const int a = c.anchors_per_location;
  net.rpn_conv = b.conv("rpn.conv", "rpn", pc, pc, 3, 1, false, ParamInit::normal(0.01f));
  net.rpn_objectness = b.conv("rpn.objectness", "rpn", pc, a, 1, 1, false, ParamInit::normal(0.01f));
  net.rpn_deltas = b.conv("rpn.anchor_deltas", "rpn", pc, 4 * a, 1, 1, false, ParamInit::normal(0.01f));

  const std::string rh = "roi_heads";
  for (int i = 0; i < c.box_head_convs; ++i) {
    net.box_convs.push_back(b.conv("roi_heads.box_head.conv" + std::to_string(i), rh, pc, pc, 3, 1, true));
  }
  int in = pc * c.roi_resolution * c.roi_resolution;
  for (int i = 0; i < c.box_head_fcs; ++i) {
    net.box_fcs.push_back(b.fc("roi_heads.box_head.fc" + std::to_string(i), rh, in, c.box_head_dim,
                               ParamInit::normal(std::sqrt(2.0f / static_cast<float>(in)))));
    in = c.box_head_dim;
  }
  net.cls_score = b.fc("roi_heads.box_predictor.cls_score", rh, in, c.num_classes + 1,
                       ParamInit::normal(0.01f));
  net.bbox_pred = b.fc("roi_heads.box_predictor.bbox_pred", rh, in, 4 * c.num_classes,
                       ParamInit::normal(0.001f));

  int mc = pc;
  for (int i = 0; i < c.mask_head_convs; ++i) {
    net.mask_convs.push_back(
        b.conv("roi_heads.mask_head.conv" + std::to_string(i), rh, mc, c.mask_head_dim, 3, 1, true));
    mc = c.mask_head_dim;
  }
  net.mask_deconv_weight = b.param("roi_heads.mask_head.deconv.weight", rh,
                                   {mc, c.mask_head_dim, 2, 2}, ParamInit::kaiming());
  net.mask_deconv_bias =
      b.param("roi_heads.mask_head.deconv.bias", rh, {c.mask_head_dim}, ParamInit::zeros());
  net.mask_predictor = b.conv("roi_heads.mask_head.predictor", rh, c.mask_head_dim, c.num_classes,
                              1, 1, false, ParamInit::normal(0.001f));
  return net;
}

std::vector<ParamSpec> describe_architecture(const ArchConfig& config) {
  std::vector<ParamSpec> specs;
  build_network(config, [&specs](const ParamSpec& spec) {
    specs.push_back(spec);
    return Tensor{};
  });
  return specs;
}

std::vector<PyramidLevel> pyramid_shapes(const ArchConfig& config, int64_t image_h,
                                         int64_t image_w) {
  config.validate();
  if (image_h <= 0 || image_w <= 0 || image_h % 32 != 0 || image_w % 32 != 0) {
    throw std::invalid_argument("image size " + std::to_string(image_h) + "x" +
                                std::to_string(image_w) +
                                " is not divisible by 32; pad the input first");
  }
  std::vector<PyramidLevel> levels;
  for (int lvl = 2; lvl <= 5; ++lvl) {
    levels.push_back({lvl, image_h >> lvl, image_w >> lvl});
  }
  return levels;
}

}  // namespace scalpel

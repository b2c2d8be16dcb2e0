#pragma once

#include <fstream>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "abed/tensor.hpp"

namespace abed {

struct LayerConfig {
  std::string id;
  LayerShape shape;
  bool activation = true;
};

/// Ordered per-layer convolution geometry for one network at one input size.
/// Pooling and residual branches are encoded in the shapes themselves.
struct NetworkConfig {
  std::string name;
  bool exclude_first_layer = false;
  std::vector<LayerConfig> layers;

  const LayerConfig& layer(const std::string& id) const {
    for (const auto& l : layers)
      if (l.id == id) return l;
    throw std::invalid_argument("NetworkConfig: no layer with id '" + id + "'");
  }
  bool has_layer(const std::string& id) const {
    for (const auto& l : layers)
      if (l.id == id) return true;
    return false;
  }
};

inline nlohmann::json network_to_json(const NetworkConfig& cfg) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : cfg.layers) {
    layers.push_back({{"id", l.id},
                      {"n", l.shape.n},
                      {"c", l.shape.c},
                      {"h", l.shape.h},
                      {"w", l.shape.w},
                      {"k", l.shape.k},
                      {"r", l.shape.r},
                      {"s", l.shape.s},
                      {"stride_h", l.shape.stride_h},
                      {"stride_w", l.shape.stride_w},
                      {"pad_h", l.shape.pad_h},
                      {"pad_w", l.shape.pad_w},
                      {"activation", l.activation}});
  }
  return {{"name", cfg.name},
          {"exclude_first_layer", cfg.exclude_first_layer},
          {"layers", layers}};
}

inline NetworkConfig network_from_json(const nlohmann::json& j) {
  NetworkConfig cfg;
  cfg.name = j.at("name").get<std::string>();
  cfg.exclude_first_layer = j.value("exclude_first_layer", false);
  if (!j.contains("layers") || !j.at("layers").is_array() || j.at("layers").empty())
    throw std::invalid_argument("network config: missing or empty layers array");
  for (const auto& l : j.at("layers")) {
    LayerConfig layer;
    layer.id = l.at("id").get<std::string>();
    layer.shape = LayerShape::make(l.at("n").get<std::int64_t>(), l.at("c").get<std::int64_t>(),
                                   l.at("h").get<std::int64_t>(), l.at("w").get<std::int64_t>(),
                                   l.at("k").get<std::int64_t>(), l.at("r").get<std::int64_t>(),
                                   l.at("s").get<std::int64_t>(), l.value("stride_h", 1),
                                   l.value("stride_w", 1), l.value("pad_h", 0),
                                   l.value("pad_w", 0));
    layer.activation = l.value("activation", true);
    if (cfg.has_layer(layer.id))
      throw std::invalid_argument("network config: duplicate layer id '" + layer.id + "'");
    cfg.layers.push_back(std::move(layer));
  }
  return cfg;
}

inline NetworkConfig load_network(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_network: cannot open " + path.string());
  nlohmann::json j;
  f >> j;
  return network_from_json(j);
}

/// Pruned variants override per-layer filter counts:
///   {"layers": [{"id": "...", "k": <count>}, ...]}
inline NetworkConfig apply_pruned_k(const NetworkConfig& cfg, const nlohmann::json& pruned) {
  NetworkConfig out = cfg;
  for (const auto& entry : pruned.at("layers")) {
    const std::string id = entry.at("id").get<std::string>();
    const std::int64_t k = entry.at("k").get<std::int64_t>();
    bool found = false;
    for (auto& layer : out.layers) {
      if (layer.id == id) {
        if (k < 1 || k > layer.shape.k)
          throw std::invalid_argument("pruned config: bad k for layer '" + id + "'");
        layer.shape.k = k;
        found = true;
        break;
      }
    }
    if (!found) throw std::invalid_argument("pruned config: unknown layer id '" + id + "'");
  }
  if (pruned.contains("name")) out.name = pruned.at("name").get<std::string>();
  return out;
}

inline NetworkConfig load_pruned(const NetworkConfig& cfg, const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_pruned: cannot open " + path.string());
  nlohmann::json j;
  f >> j;
  return apply_pruned_k(cfg, j);
}

namespace detail {
// pooling as it appears between consecutive convolutions in the builtins
inline std::int64_t pool_half(std::int64_t v) { return v / 2; }                  // 2x2 stride 2
inline std::int64_t pool_3x3s2p1(std::int64_t v) { return (v - 1) / 2 + 1; }     // 3x3 stride 2 pad 1
}  // namespace detail

/// Sanity-checks that each layer's input extents are explained by a nearby
/// predecessor: its output, its output after a pooling step, or its own input
/// (parallel residual branch). Throws with the first offending layer.
inline void validate_chain(const NetworkConfig& cfg) {
  if (cfg.layers.empty()) throw std::invalid_argument("validate_chain: empty config");
  for (std::size_t i = 1; i < cfg.layers.size(); ++i) {
    const LayerShape& cur = cfg.layers[i].shape;
    bool ok = false;
    const std::size_t lookback = std::min<std::size_t>(i, 4);
    for (std::size_t back = 1; back <= lookback && !ok; ++back) {
      const LayerShape& prev = cfg.layers[i - back].shape;
      if (cur.n != prev.n) continue;
      if (cur.c == prev.k && cur.h == prev.p && cur.w == prev.q) ok = true;
      if (cur.c == prev.c && cur.h == prev.h && cur.w == prev.w) ok = true;  // shared input
      if (back == 1 && cur.c == prev.k) {
        if (cur.h == detail::pool_half(prev.p) && cur.w == detail::pool_half(prev.q)) ok = true;
        if (cur.h == detail::pool_3x3s2p1(prev.p) && cur.w == detail::pool_3x3s2p1(prev.q))
          ok = true;
      }
    }
    if (!ok)
      throw std::invalid_argument("validate_chain: layer '" + cfg.layers[i].id +
                                  "' does not chain from a predecessor");
  }
}

// ---------------------------------------------------------------------------
// Builtin configs: VGG16 / ResNet18 / ResNet50 at 224x224 and 1080x1920.
// Output extents follow the usual same-padding conventions with floor
// division, so odd 1080p sizes stay well defined.
// ---------------------------------------------------------------------------

namespace detail {

inline NetworkConfig make_vgg16(std::int64_t h, std::int64_t w, const std::string& suffix) {
  NetworkConfig cfg;
  cfg.name = "vgg16-" + suffix;
  cfg.exclude_first_layer = true;
  const std::vector<std::vector<std::int64_t>> stages = {
      {64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}, {512, 512, 512}};
  std::int64_t c = 3;
  for (std::size_t st = 0; st < stages.size(); ++st) {
    for (std::size_t li = 0; li < stages[st].size(); ++li) {
      const std::int64_t k = stages[st][li];
      LayerConfig layer;
      layer.id = "conv" + std::to_string(st + 1) + "_" + std::to_string(li + 1);
      layer.shape = LayerShape::make(1, c, h, w, k, 3, 3, 1, 1, 1, 1);
      layer.activation = true;
      cfg.layers.push_back(layer);
      c = k;
    }
    h = pool_half(h);  // 2x2 max pool, stride 2
    w = pool_half(w);
  }
  return cfg;
}

struct ResnetStage {
  int blocks;
  std::int64_t width;   // bottleneck width (resnet50) or block width (resnet18)
  std::int64_t out;     // output channels
  std::int64_t stride;  // stride of the first block
};

inline NetworkConfig make_resnet18(std::int64_t h, std::int64_t w, const std::string& suffix) {
  NetworkConfig cfg;
  cfg.name = "resnet18-" + suffix;
  cfg.exclude_first_layer = true;
  LayerConfig stem;
  stem.id = "conv1";
  stem.shape = LayerShape::make(1, 3, h, w, 64, 7, 7, 2, 2, 3, 3);
  stem.activation = true;
  cfg.layers.push_back(stem);
  h = pool_3x3s2p1(stem.shape.p);
  w = pool_3x3s2p1(stem.shape.q);

  // both residual-block convs per block; shortcuts are identity (no 1x1
  // projections in this variant, keeping the network free of 1x1 layers)
  const ResnetStage stages[] = {{2, 64, 64, 1}, {2, 128, 128, 2}, {2, 256, 256, 2},
                                {2, 512, 512, 2}};
  std::int64_t c = 64;
  for (int st = 0; st < 4; ++st) {
    for (int b = 0; b < stages[st].blocks; ++b) {
      const std::int64_t stride = b == 0 ? stages[st].stride : 1;
      const std::int64_t width = stages[st].width;
      const std::string prefix = "layer" + std::to_string(st + 1) + "." + std::to_string(b);
      LayerConfig c1;
      c1.id = prefix + ".conv1";
      c1.shape = LayerShape::make(1, c, h, w, width, 3, 3, stride, stride, 1, 1);
      c1.activation = true;
      cfg.layers.push_back(c1);
      LayerConfig c2;
      c2.id = prefix + ".conv2";
      c2.shape = LayerShape::make(1, width, c1.shape.p, c1.shape.q, width, 3, 3, 1, 1, 1, 1);
      c2.activation = false;  // activation lands after the residual add
      cfg.layers.push_back(c2);
      h = c1.shape.p;
      w = c1.shape.q;
      c = width;
    }
  }
  return cfg;
}

inline NetworkConfig make_resnet50(std::int64_t h, std::int64_t w, const std::string& suffix) {
  NetworkConfig cfg;
  cfg.name = "resnet50-" + suffix;
  cfg.exclude_first_layer = true;
  LayerConfig stem;
  stem.id = "conv1";
  stem.shape = LayerShape::make(1, 3, h, w, 64, 7, 7, 2, 2, 3, 3);
  stem.activation = true;
  cfg.layers.push_back(stem);
  h = pool_3x3s2p1(stem.shape.p);
  w = pool_3x3s2p1(stem.shape.q);

  const ResnetStage stages[] = {{3, 64, 256, 1}, {4, 128, 512, 2}, {6, 256, 1024, 2},
                                {3, 512, 2048, 2}};
  std::int64_t c = 64;
  for (int st = 0; st < 4; ++st) {
    for (int b = 0; b < stages[st].blocks; ++b) {
      const std::int64_t stride = b == 0 ? stages[st].stride : 1;
      const std::int64_t width = stages[st].width;
      const std::int64_t out = stages[st].out;
      const std::string prefix = "layer" + std::to_string(st + 1) + "." + std::to_string(b);
      LayerConfig c1;
      c1.id = prefix + ".conv1";
      c1.shape = LayerShape::make(1, c, h, w, width, 1, 1, 1, 1, 0, 0);
      c1.activation = true;
      cfg.layers.push_back(c1);
      LayerConfig c2;
      c2.id = prefix + ".conv2";
      c2.shape = LayerShape::make(1, width, h, w, width, 3, 3, stride, stride, 1, 1);
      c2.activation = true;
      cfg.layers.push_back(c2);
      LayerConfig c3;
      c3.id = prefix + ".conv3";
      c3.shape = LayerShape::make(1, width, c2.shape.p, c2.shape.q, out, 1, 1, 1, 1, 0, 0);
      c3.activation = false;
      cfg.layers.push_back(c3);
      if (b == 0) {
        LayerConfig ds;
        ds.id = prefix + ".downsample";
        ds.shape = LayerShape::make(1, c, h, w, out, 1, 1, stride, stride, 0, 0);
        ds.activation = false;
        cfg.layers.push_back(ds);
      }
      h = c2.shape.p;
      w = c2.shape.q;
      c = out;
    }
  }
  return cfg;
}

}  // namespace detail

inline NetworkConfig builtin_network(const std::string& name, const std::string& image) {
  std::int64_t h = 0, w = 0;
  if (image == "224") {
    h = 224;
    w = 224;
  } else if (image == "1080p") {
    h = 1080;
    w = 1920;
  } else {
    throw std::invalid_argument("builtin_network: image must be 224 or 1080p");
  }
  NetworkConfig cfg;
  if (name == "vgg16")
    cfg = detail::make_vgg16(h, w, image);
  else if (name == "resnet18")
    cfg = detail::make_resnet18(h, w, image);
  else if (name == "resnet50")
    cfg = detail::make_resnet50(h, w, image);
  else
    throw std::invalid_argument("builtin_network: unknown network '" + name + "'");
  validate_chain(cfg);
  return cfg;
}

inline std::vector<NetworkConfig> builtin_configs() {
  std::vector<NetworkConfig> configs;
  for (const char* name : {"vgg16", "resnet18", "resnet50"})
    for (const char* image : {"224", "1080p"})
      configs.push_back(builtin_network(name, image));
  return configs;
}

}  // namespace abed

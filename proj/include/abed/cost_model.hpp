#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "abed/checksum.hpp"
#include "abed/network_config.hpp"
#include "abed/tensor.hpp"

namespace abed {

/// Kernel implementation options: separate kernels for every task (UF),
/// checksum generation fused into the conv+epilog kernel (FR), and the fused
/// kernel additionally emitting the next layer's input checksum (AF).
enum class ImplOption { UF, FR, AF };

inline const char* to_string(ImplOption o) {
  switch (o) {
    case ImplOption::UF: return "uf";
    case ImplOption::FR: return "fr";
    case ImplOption::AF: return "af";
  }
  return "?";
}

struct OpCounts {
  std::int64_t fma = 0;
  std::int64_t add = 0;
  std::int64_t mul = 0;
  std::int64_t activation_eval = 0;
  std::int64_t cast = 0;

  std::int64_t total() const { return fma + add + mul + activation_eval + cast; }
  OpCounts& operator+=(const OpCounts& o) {
    fma += o.fma;
    add += o.add;
    mul += o.mul;
    activation_eval += o.activation_eval;
    cast += o.cast;
    return *this;
  }
  bool operator==(const OpCounts&) const = default;
};

struct ByteCounts {
  std::int64_t read_bytes = 0;
  std::int64_t write_bytes = 0;

  std::int64_t total() const { return read_bytes + write_bytes; }
  ByteCounts& operator+=(const ByteCounts& o) {
    read_bytes += o.read_bytes;
    write_bytes += o.write_bytes;
    return *this;
  }
  bool operator==(const ByteCounts&) const = default;
};

struct CostOptions {
  int fc_planes = 4;        // int8 byte planes of the decomposed filter checksum
  bool fc_pad_to_8 = false; // model the pad-to-multiple-of-8 kernels (4 planes + 4 zero filters)
};

/// Convolution plus a 4-op-per-element epilog (scale, bias, activation, cast).
inline OpCounts baseline_ops(const LayerShape& ls, bool activation = true) {
  OpCounts ops;
  ops.fma = ls.n * ls.k * ls.p * ls.q * ls.crs();
  ops.mul = ls.nkpq();
  ops.add = ls.nkpq();
  ops.activation_eval = activation ? ls.nkpq() : 0;
  ops.cast = ls.nkpq();
  return ops;
}

/// Extra arithmetic each scheme adds on top of the baseline. Comparison ops
/// in the verification reductions are folded into the add counts.
inline OpCounts scheme_extra_ops(const LayerShape& ls, Scheme scheme, int fc_planes = 4) {
  if (fc_planes < 1 || fc_planes > 4)
    throw std::invalid_argument("scheme_extra_ops: fc_planes must be in 1..4");
  const std::int64_t pqn = ls.npq();
  const std::int64_t crs = ls.crs();
  OpCounts extra;
  switch (scheme) {
    case Scheme::FC:
      extra.fma = fc_planes * ls.n * ls.p * ls.q * crs;  // checksum-filter convolution
      extra.add = pqn * ls.k;                            // channel reduction + compare
      break;
    case Scheme::IC:
      extra.fma = crs * ls.k;            // checksum convolved with the K filters
      extra.add = pqn * crs + pqn * ls.k;  // checksum generation + output reduction
      break;
    case Scheme::FIC:
      extra.fma = crs;                     // checksum dot product
      extra.add = pqn * crs + pqn * ls.k;  // checksum generation + output reduction
      break;
    case Scheme::ICBatch:
      extra.fma = ls.k * ls.p * ls.q * crs;  // extra checksum batch in the conv
      extra.add = ls.n * ls.c * ls.h * ls.w + ls.nkpq();  // batch sums + output reduction
      break;
  }
  return extra;
}

inline OpCounts count_ops(const LayerShape& ls, Scheme scheme, bool activation = true,
                          int fc_planes = 4) {
  OpCounts ops = baseline_ops(ls, activation);
  ops += scheme_extra_ops(ls, scheme, fc_planes);
  return ops;
}

namespace detail {

struct LayerTraffic {
  std::int64_t nchw, kcrs, nkpq, crs;
};

inline LayerTraffic traffic(const LayerShape& ls) {
  return {ls.n * ls.c * ls.h * ls.w, ls.k * ls.crs(), ls.nkpq(), ls.crs()};
}

inline ByteCounts count_bytes_impl(const LayerShape& ls, Scheme scheme, ImplOption option,
                                   const CostOptions& opts, bool prior_af_provides_ic,
                                   std::int64_t next_crs) {
  const LayerTraffic t = traffic(ls);
  const std::int64_t fc_extra_filters = opts.fc_pad_to_8 ? 8 : opts.fc_planes;
  ByteCounts bytes;
  const auto kernel = [&bytes](std::int64_t r, std::int64_t w) {
    bytes.read_bytes += r;
    bytes.write_bytes += w;
  };

  const bool wants_icg = scheme == Scheme::IC || scheme == Scheme::FIC;
  const bool fused = option != ImplOption::UF;
  const bool emits_next_ic = option == ImplOption::AF && wants_icg && next_crs > 0;
  const bool needs_own_icg = wants_icg && !(option == ImplOption::AF && prior_af_provides_ic);

  if (needs_own_icg) kernel(t.nchw, t.crs * 4);  // input checksum generation

  switch (scheme) {
    case Scheme::FC: {
      const std::int64_t conv_in = t.nchw + t.kcrs + fc_extra_filters * t.crs;
      const std::int64_t aug_out = (ls.k + fc_extra_filters) * ls.n * ls.p * ls.q;
      if (!fused) {
        kernel(conv_in, aug_out * 4);          // larger convolution
        kernel(aug_out * 4, 8);                // channel reduction + verify
        kernel(t.nkpq * 4, t.nkpq);            // epilog over the original channels
      } else {
        kernel(conv_in, t.nkpq + 8);           // fused conv + epilog + reduce/verify
      }
      break;
    }
    case Scheme::IC: {
      if (!fused) {
        kernel(t.nchw + t.kcrs, t.nkpq * 4);   // convolution
        kernel(t.nkpq * 4, t.nkpq);            // epilog
        kernel(t.nkpq * 4, ls.k * 8);          // per-channel output reductions
      } else {
        kernel(t.nchw + t.kcrs, t.nkpq + ls.k * 8 + (emits_next_ic ? next_crs * 4 : 0));
      }
      kernel(t.kcrs + t.crs * 4, ls.k * 8);    // checksum convolved with the K filters
      break;
    }
    case Scheme::FIC: {
      if (!fused) {
        kernel(t.nchw + t.kcrs, t.nkpq * 4);   // convolution
        kernel(t.nkpq * 4, t.nkpq);            // epilog
        kernel(t.nkpq * 4, 8);                 // output checksum generation
      } else {
        kernel(t.nchw + t.kcrs, t.nkpq + 8 + (emits_next_ic ? next_crs * 4 : 0));
      }
      kernel(2 * t.crs * 4, 8);                // checksum dot product
      break;
    }
    case Scheme::ICBatch: {
      kernel(t.nchw, t.nchw / ls.n * 4);       // checksum batch generation
      const std::int64_t batch_in = t.nchw + t.nchw / ls.n * 4 + t.kcrs;
      if (!fused) {
        kernel(batch_in, (ls.n + 1) * ls.k * ls.p * ls.q * 4);
        kernel(t.nkpq * 4, t.nkpq);
        kernel((ls.n + 1) * ls.k * ls.p * ls.q * 4, 8);
      } else {
        kernel(batch_in, t.nkpq + ls.k * ls.p * ls.q * 8 + 8);
      }
      break;
    }
  }
  return bytes;
}

}  // namespace detail

/// Baseline conv+epilog traffic, fused or as two kernels with an i32
/// intermediate.
inline ByteCounts baseline_bytes(const LayerShape& ls, bool fused) {
  const detail::LayerTraffic t = detail::traffic(ls);
  ByteCounts bytes;
  if (fused) {
    bytes.read_bytes = t.nchw + t.kcrs;
    bytes.write_bytes = t.nkpq;
  } else {
    bytes.read_bytes = t.nchw + t.kcrs + t.nkpq * 4;
    bytes.write_bytes = t.nkpq * 4 + t.nkpq;
  }
  return bytes;
}

/// Per-layer kernel traffic for a scheme and implementation option. The AF
/// accounting uses the layer's own CRS as a stand-in for the next layer's
/// checksum size; network aggregation chains the real sizes.
inline ByteCounts count_bytes(const LayerShape& ls, Scheme scheme, ImplOption option,
                              const CostOptions& opts = {}) {
  return detail::count_bytes_impl(ls, scheme, option, opts,
                                  /*prior_af_provides_ic=*/option == ImplOption::AF,
                                  /*next_crs=*/ls.crs());
}

struct LayerCost {
  std::string layer;
  OpCounts ops;
  OpCounts ops_baseline;
  ByteCounts bytes;
  ByteCounts bytes_baseline;
  bool excluded = false;

  double op_overhead_pct() const {
    return ops_baseline.total()
               ? 100.0 * static_cast<double>(ops.total() - ops_baseline.total()) /
                     static_cast<double>(ops_baseline.total())
               : 0.0;
  }
  double byte_overhead_pct() const {
    return bytes_baseline.total()
               ? 100.0 * static_cast<double>(bytes.total() - bytes_baseline.total()) /
                     static_cast<double>(bytes_baseline.total())
               : 0.0;
  }
};

struct CostReport {
  std::string network;
  Scheme scheme = Scheme::FIC;
  ImplOption option = ImplOption::UF;
  std::vector<LayerCost> rows;
  OpCounts total_ops, total_ops_baseline;
  ByteCounts total_bytes, total_bytes_baseline;

  double op_overhead_pct() const {
    return total_ops_baseline.total()
               ? 100.0 * static_cast<double>(total_ops.total() - total_ops_baseline.total()) /
                     static_cast<double>(total_ops_baseline.total())
               : 0.0;
  }
  double byte_overhead_pct() const {
    return total_bytes_baseline.total()
               ? 100.0 *
                     static_cast<double>(total_bytes.total() - total_bytes_baseline.total()) /
                     static_cast<double>(total_bytes_baseline.total())
               : 0.0;
  }
};

/// Sums per-layer op and byte counts over a network. Overheads are relative
/// to the baseline of the matching fusion level (unfused for UF, fused for
/// FR/AF). With baseline_cfg set (pruned runs) the baseline columns come from
/// that config instead, so overheads are relative to the unpruned network.
inline CostReport aggregate_network(const NetworkConfig& cfg, Scheme scheme, ImplOption option,
                                    const CostOptions& opts = {},
                                    const NetworkConfig* baseline_cfg = nullptr) {
  if (cfg.layers.empty()) throw std::invalid_argument("aggregate_network: empty config");
  if (baseline_cfg && baseline_cfg->layers.size() != cfg.layers.size())
    throw std::invalid_argument("aggregate_network: baseline config does not match");
  const bool fused_baseline = option != ImplOption::UF;
  CostReport report;
  report.network = cfg.name;
  report.scheme = scheme;
  report.option = option;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerConfig& layer = cfg.layers[i];
    const LayerConfig& base_layer = baseline_cfg ? baseline_cfg->layers[i] : layer;
    const bool has_prior_conv = i > 0;
    const std::int64_t next_crs =
        i + 1 < cfg.layers.size() ? cfg.layers[i + 1].shape.crs() : 0;
    LayerCost row;
    row.layer = layer.id;
    row.ops = count_ops(layer.shape, scheme, layer.activation, opts.fc_planes);
    row.ops_baseline = baseline_ops(base_layer.shape, base_layer.activation);
    row.bytes = detail::count_bytes_impl(layer.shape, scheme, option, opts,
                                         option == ImplOption::AF && has_prior_conv, next_crs);
    row.bytes_baseline = baseline_bytes(base_layer.shape, fused_baseline);
    row.excluded = cfg.exclude_first_layer && i == 0;
    if (!row.excluded) {
      report.total_ops += row.ops;
      report.total_ops_baseline += row.ops_baseline;
      report.total_bytes += row.bytes;
      report.total_bytes_baseline += row.bytes_baseline;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace abed

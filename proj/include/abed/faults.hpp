#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "abed/checksum.hpp"
#include "abed/convolution.hpp"
#include "abed/rng.hpp"
#include "abed/tensor.hpp"

namespace abed {

enum class InjectionTarget { InputFmap, Filter, ConvOut };

inline const char* to_string(InjectionTarget t) {
  switch (t) {
    case InjectionTarget::InputFmap: return "input";
    case InjectionTarget::Filter: return "filter";
    case InjectionTarget::ConvOut: return "convout";
  }
  return "?";
}

enum class Classification { Detected, SDC, Masked, DetectedBenign };

inline const char* to_string(Classification c) {
  switch (c) {
    case Classification::Detected: return "detected";
    case Classification::SDC: return "sdc";
    case Classification::Masked: return "masked";
    case Classification::DetectedBenign: return "detected_benign";
  }
  return "?";
}

struct FlipSpec {
  InjectionTarget target = InjectionTarget::ConvOut;
  std::int64_t flat_index = 0;
  int bit = 0;
};

struct TrialOutcome {
  Classification classification = Classification::Masked;
  FlipSpec flipped;
  bool final_output_differs = false;
  VerifyOutcome verify;
};

inline void flip_bit_inplace(Tensor4D& t, std::int64_t flat_index, int bit) {
  if (flat_index < 0 || flat_index >= t.count())
    throw std::out_of_range("flip_bit: flat index out of bounds");
  if (bit < 0 || bit >= elem_bits(t.kind()))
    throw std::out_of_range("flip_bit: bit position out of range for element kind");
  auto* bytes = reinterpret_cast<std::uint8_t*>(t.raw());
  const std::size_t at =
      static_cast<std::size_t>(flat_index) * elem_size(t.kind()) + static_cast<std::size_t>(bit / 8);
  bytes[at] = static_cast<std::uint8_t>(bytes[at] ^ (1u << (bit % 8)));
}

/// Returns a copy of t with exactly one bit toggled.
inline Tensor4D flip_bit(const Tensor4D& t, std::int64_t flat_index, int bit) {
  Tensor4D out = t;
  flip_bit_inplace(out, flat_index, bit);
  return out;
}

enum class DataMode { Ones, RandomI8 };

inline const char* to_string(DataMode m) {
  return m == DataMode::Ones ? "ones" : "random";
}

struct CampaignConfig {
  LayerShape shape;
  Scheme scheme = Scheme::FIC;
  InjectionTarget target = InjectionTarget::ConvOut;
  std::int64_t trials = 1000;
  std::uint64_t root_seed = 1;
  DataMode mode = DataMode::Ones;
  EpilogParams epilog;  // bias resized to K when empty
  int jobs = 0;         // 0 = hardware concurrency
};

struct CampaignReport {
  Scheme scheme = Scheme::FIC;
  InjectionTarget target = InjectionTarget::ConvOut;
  std::int64_t trials = 0;
  std::int64_t detected = 0;
  std::int64_t detected_benign = 0;
  std::int64_t sdc = 0;
  std::int64_t masked = 0;
  std::uint64_t seed = 0;

  double detection_rate() const {
    return trials ? static_cast<double>(detected + detected_benign) / static_cast<double>(trials)
                  : 0.0;
  }
  double sdc_rate() const {
    return trials ? static_cast<double>(sdc) / static_cast<double>(trials) : 0.0;
  }

  bool operator==(const CampaignReport&) const = default;
};

namespace detail {

// Fault model: filter checksums are generated offline and input checksums
// online but ahead of the injected corruption, so both read pristine data;
// every convolution (including FC's extra-fmap conv) reads the post-flip
// tensors. ConvOut flips land after the convolution, before verification and
// epilog.
struct TrialContext {
  LayerShape shape;
  Scheme scheme = Scheme::FIC;
  EpilogParams epilog_params;
  Tensor4D input;
  Tensor4D filters;
  std::vector<std::int8_t> patches;  // pristine im2col rows
  Tensor4D convout_golden;
  Tensor4D output_golden;
  // scheme artifacts from pristine tensors
  FilterChecksum fc;
  InputChecksum ic;
  std::int64_t fic_expected = 0;
  Tensor4D fc_extra_golden;  // recombined extra fmap over the pristine input
};

inline std::array<Tensor4D, 4> conv_planes_rows(const std::vector<std::int8_t>& rows,
                                                const LayerShape& shape,
                                                const std::array<Tensor4D, 4>& planes) {
  std::array<Tensor4D, 4> extra{
      Tensor4D({shape.n, 1, shape.p, shape.q}, ElemKind::I32),
      Tensor4D({shape.n, 1, shape.p, shape.q}, ElemKind::I32),
      Tensor4D({shape.n, 1, shape.p, shape.q}, ElemKind::I32),
      Tensor4D({shape.n, 1, shape.p, shape.q}, ElemKind::I32)};
  const std::int64_t crs = shape.crs();
  const std::int64_t npq = shape.npq();
  const std::array<const std::int8_t*, 4> pv{
      planes[0].view<const std::int8_t>().data(), planes[1].view<const std::int8_t>().data(),
      planes[2].view<const std::int8_t>().data(), planes[3].view<const std::int8_t>().data()};
  std::array<std::int32_t*, 4> ev{
      extra[0].view<std::int32_t>().data(), extra[1].view<std::int32_t>().data(),
      extra[2].view<std::int32_t>().data(), extra[3].view<std::int32_t>().data()};
  for (std::int64_t j = 0; j < npq; ++j) {
    const std::int8_t* row = rows.data() + static_cast<std::size_t>(j * crs);
    ev[0][j] = row_dot<std::int32_t>(reinterpret_cast<const std::uint8_t*>(pv[0]), row, crs);
    ev[1][j] = row_dot<std::int32_t>(reinterpret_cast<const std::uint8_t*>(pv[1]), row, crs);
    ev[2][j] = row_dot<std::int32_t>(reinterpret_cast<const std::uint8_t*>(pv[2]), row, crs);
    ev[3][j] = row_dot<std::int32_t>(pv[3], row, crs);
  }
  return extra;
}

inline TrialContext make_trial_context(const LayerShape& shape, const Tensor4D& input,
                                       const Tensor4D& filters, Scheme scheme,
                                       const EpilogParams& params) {
  if (scheme == Scheme::ICBatch)
    throw std::invalid_argument("run_trial: batch-checksum IC is not an injection scheme");
  TrialContext ctx;
  ctx.shape = shape;
  ctx.scheme = scheme;
  ctx.epilog_params = params;
  if (ctx.epilog_params.bias.empty())
    ctx.epilog_params.bias.assign(static_cast<std::size_t>(shape.k), 0.0f);
  ctx.input = input;
  ctx.filters = filters;
  im2col_rows<std::int8_t>(input, shape, ctx.patches);
  ctx.convout_golden = conv_rows_i8(ctx.patches, filters, shape);
  ctx.output_golden = epilog(ctx.convout_golden, ctx.epilog_params);
  switch (scheme) {
    case Scheme::FC:
      ctx.fc = gen_filter_checksum_decomposed(filters);
      ctx.fc_extra_golden =
          recombine_extra_fmaps(conv_planes_rows(ctx.patches, shape, *ctx.fc.decomposed));
      break;
    case Scheme::IC:
      ctx.ic = gen_input_checksum(input, shape);
      break;
    case Scheme::FIC:
      ctx.fc = gen_filter_checksum(filters);
      ctx.ic = gen_input_checksum(input, shape);
      ctx.fic_expected = fic_dot(ctx.fc, ctx.ic);
      break;
    default: break;
  }
  return ctx;
}

struct TrialBuffers {
  std::vector<std::int8_t> patches;
};

inline TrialOutcome execute_trial(const TrialContext& ctx, InjectionTarget target,
                                  std::uint64_t seed, TrialBuffers& buf) {
  const LayerShape& shape = ctx.shape;
  SplitMix64 rng(seed);

  FlipSpec flip;
  flip.target = target;
  const Tensor4D& domain = target == InjectionTarget::InputFmap ? ctx.input
                           : target == InjectionTarget::Filter  ? ctx.filters
                                                                : ctx.convout_golden;
  flip.flat_index = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(domain.count())));
  flip.bit = static_cast<int>(rng.below(static_cast<std::uint64_t>(elem_bits(domain.kind()))));

  Tensor4D convout;
  const Tensor4D* verify_filters = &ctx.filters;
  Tensor4D flipped_operand;
  std::optional<Tensor4D> fc_extra;

  switch (target) {
    case InjectionTarget::InputFmap: {
      flipped_operand = flip_bit(ctx.input, flip.flat_index, flip.bit);
      im2col_rows<std::int8_t>(flipped_operand, shape, buf.patches);
      convout = conv_rows_i8(buf.patches, ctx.filters, shape);
      if (ctx.scheme == Scheme::FC)
        fc_extra = recombine_extra_fmaps(conv_planes_rows(buf.patches, shape, *ctx.fc.decomposed));
      break;
    }
    case InjectionTarget::Filter: {
      flipped_operand = flip_bit(ctx.filters, flip.flat_index, flip.bit);
      verify_filters = &flipped_operand;
      convout = conv_rows_i8(ctx.patches, flipped_operand, shape);
      break;
    }
    case InjectionTarget::ConvOut: {
      convout = flip_bit(ctx.convout_golden, flip.flat_index, flip.bit);
      break;
    }
  }

  TrialOutcome outcome;
  outcome.flipped = flip;
  switch (ctx.scheme) {
    case Scheme::FC:
      outcome.verify = fc_verify(convout, fc_extra ? *fc_extra : ctx.fc_extra_golden, shape.k);
      break;
    case Scheme::IC:
      // the verification dot re-reads filter storage, so it sees the same
      // corrupted filter the convolution used
      outcome.verify = ic_verify_k(convout, *verify_filters, ctx.ic);
      break;
    case Scheme::FIC:
      outcome.verify = fic_verify(convout, ctx.fic_expected);
      break;
    default: break;
  }

  const Tensor4D output = epilog(convout, ctx.epilog_params);
  outcome.final_output_differs = !(output == ctx.output_golden);
  if (outcome.verify.pass())
    outcome.classification =
        outcome.final_output_differs ? Classification::SDC : Classification::Masked;
  else
    outcome.classification = outcome.final_output_differs ? Classification::Detected
                                                          : Classification::DetectedBenign;
  return outcome;
}

}  // namespace detail

/// One injection trial: golden pipeline once, then a re-run with a single
/// seeded bit flip at the target stage, verified with the scheme's check.
inline TrialOutcome run_trial(const LayerShape& shape, const Tensor4D& input,
                              const Tensor4D& filters, Scheme scheme, InjectionTarget target,
                              const EpilogParams& params, std::uint64_t seed) {
  const detail::TrialContext ctx = detail::make_trial_context(shape, input, filters, scheme, params);
  detail::TrialBuffers buf;
  return detail::execute_trial(ctx, target, seed, buf);
}

inline CampaignReport run_campaign(const CampaignConfig& config) {
  if (config.trials < 1) throw std::invalid_argument("run_campaign: trials must be >= 1");

  Tensor4D input(config.shape.input_dims(), ElemKind::I8);
  Tensor4D filters(config.shape.filter_dims(), ElemKind::I8);
  if (config.mode == DataMode::Ones) {
    input = Tensor4D::filled(config.shape.input_dims(), ElemKind::I8, 1);
    filters = Tensor4D::filled(config.shape.filter_dims(), ElemKind::I8, 1);
  } else {
    SplitMix64 data_rng(derive_seed(config.root_seed, 0x0DA7Au));
    fill_random_i8(input, data_rng);
    fill_random_i8(filters, data_rng);
  }

  const detail::TrialContext ctx =
      detail::make_trial_context(config.shape, input, filters, config.scheme, config.epilog);

  std::vector<Classification> outcomes(static_cast<std::size_t>(config.trials));
  int jobs = config.jobs > 0 ? config.jobs
                             : static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  jobs = static_cast<int>(std::min<std::int64_t>(jobs, config.trials));

  std::atomic<std::int64_t> next{0};
  auto worker = [&] {
    detail::TrialBuffers buf;
    for (;;) {
      const std::int64_t t = next.fetch_add(1, std::memory_order_relaxed);
      if (t >= config.trials) return;
      const std::uint64_t seed = derive_seed(config.root_seed, static_cast<std::uint64_t>(t));
      outcomes[static_cast<std::size_t>(t)] =
          detail::execute_trial(ctx, config.target, seed, buf).classification;
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  CampaignReport report;
  report.scheme = config.scheme;
  report.target = config.target;
  report.trials = config.trials;
  report.seed = config.root_seed;
  for (Classification c : outcomes) {  // fold in trial order
    switch (c) {
      case Classification::Detected: ++report.detected; break;
      case Classification::DetectedBenign: ++report.detected_benign; break;
      case Classification::SDC: ++report.sdc; break;
      case Classification::Masked: ++report.masked; break;
    }
  }
  return report;
}

}  // namespace abed

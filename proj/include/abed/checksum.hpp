#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "abed/convolution.hpp"
#include "abed/tensor.hpp"

namespace abed {

enum class Scheme { FC, IC, ICBatch, FIC };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::FC: return "fc";
    case Scheme::IC: return "ic";
    case Scheme::ICBatch: return "icbatch";
    case Scheme::FIC: return "fic";
  }
  return "?";
}

/// Result of a checksum comparison. Mismatch is data, not an error. The locus
/// is diagnostic only: (n,p,q) for FC, (k,-1,-1) for IC, (k,p,q) for the batch
/// variant; absent for FIC and scalar compares.
struct VerifyOutcome {
  enum class Status { Pass, Mismatch };

  Status status = Status::Pass;
  std::optional<std::array<std::int64_t, 3>> locus;
  std::int64_t lhs = 0;  // reduction of the (possibly corrupted) output
  std::int64_t rhs = 0;  // checksum-side prediction
  double lhs_f = 0.0, rhs_f = 0.0;  // float-mode pair

  bool pass() const { return status == Status::Pass; }

  static VerifyOutcome ok() { return {}; }
  static VerifyOutcome fail(std::int64_t lhs, std::int64_t rhs,
                            std::optional<std::array<std::int64_t, 3>> locus = std::nullopt) {
    VerifyOutcome v;
    v.status = Status::Mismatch;
    v.lhs = lhs;
    v.rhs = rhs;
    v.locus = locus;
    return v;
  }
};

inline int ceil_log2(std::int64_t v) {
  if (v < 1) throw std::invalid_argument("ceil_log2: argument must be >= 1");
  int bits = 0;
  std::uint64_t u = static_cast<std::uint64_t>(v) - 1;
  while (u) {
    ++bits;
    u >>= 1;
  }
  return bits;
}

// ---------------------------------------------------------------------------
// Filter checksums (FC scheme)
// ---------------------------------------------------------------------------

/// Element-wise sum of the K filters, plus (optionally) the int8 byte planes
/// that let the checksum filter ride along an int8 convolution.
struct FilterChecksum {
  Tensor4D sums;  // 1 x C x R x S, i32
  std::optional<std::array<Tensor4D, 4>> decomposed;
};

inline FilterChecksum gen_filter_checksum(const Tensor4D& filters) {
  if (filters.kind() != ElemKind::I8)
    throw std::invalid_argument("gen_filter_checksum: expected i8 filters");
  const Dims4 d = filters.dims();
  if (d.d0 > (std::int64_t{1} << 24))
    throw std::invalid_argument("gen_filter_checksum: K too large for i32 checksums");
  FilterChecksum fc;
  fc.sums = Tensor4D({1, d.d1, d.d2, d.d3}, ElemKind::I32);
  auto sums = fc.sums.view<std::int32_t>();
  const auto fv = filters.view<const std::int8_t>();
  const std::int64_t crs = d.d1 * d.d2 * d.d3;
  for (std::int64_t k = 0; k < d.d0; ++k)
    for (std::int64_t i = 0; i < crs; ++i)
      sums[static_cast<std::size_t>(i)] += fv[static_cast<std::size_t>(k * crs + i)];
  return fc;
}

/// Little-endian byte planes of an int32 value, stored as int8 bit patterns.
inline std::array<std::int8_t, 4> decompose_value(std::int32_t v) {
  const std::uint32_t u = static_cast<std::uint32_t>(v);
  return {static_cast<std::int8_t>(u & 0xFF), static_cast<std::int8_t>((u >> 8) & 0xFF),
          static_cast<std::int8_t>((u >> 16) & 0xFF), static_cast<std::int8_t>((u >> 24) & 0xFF)};
}

/// Inverse of decompose_value. Digits 0..2 weigh in as unsigned bytes and the
/// top digit as a signed byte, so the identity holds for every int32 value.
inline std::int64_t recombine_value(const std::array<std::int8_t, 4>& d) {
  return static_cast<std::int64_t>(static_cast<std::uint8_t>(d[0])) +
         (static_cast<std::int64_t>(static_cast<std::uint8_t>(d[1])) << 8) +
         (static_cast<std::int64_t>(static_cast<std::uint8_t>(d[2])) << 16) +
         (static_cast<std::int64_t>(d[3]) << 24);
}

inline std::array<Tensor4D, 4> decompose_checksum_filters(const FilterChecksum& fc) {
  if (fc.sums.kind() != ElemKind::I32)
    throw std::invalid_argument("decompose_checksum_filters: sums must be i32");
  const Dims4 d = fc.sums.dims();
  std::array<Tensor4D, 4> planes{Tensor4D(d, ElemKind::I8), Tensor4D(d, ElemKind::I8),
                                 Tensor4D(d, ElemKind::I8), Tensor4D(d, ElemKind::I8)};
  const auto sums = fc.sums.view<const std::int32_t>();
  for (std::int64_t i = 0; i < fc.sums.count(); ++i) {
    const auto bytes = decompose_value(sums[static_cast<std::size_t>(i)]);
    for (int b = 0; b < 4; ++b)
      planes[static_cast<std::size_t>(b)].view<std::int8_t>()[static_cast<std::size_t>(i)] =
          bytes[static_cast<std::size_t>(b)];
  }
  return planes;
}

inline FilterChecksum gen_filter_checksum_decomposed(const Tensor4D& filters) {
  FilterChecksum fc = gen_filter_checksum(filters);
  fc.decomposed = decompose_checksum_filters(fc);
  return fc;
}

/// Convolves the input with the four byte-plane checksum filters. Planes 0..2
/// enter the dot product as unsigned bytes and plane 3 as a signed byte,
/// mirroring the digit weights of recombine_value; with plain 0/8/16/24 shifts
/// on recombination the result equals the convolution with the i32 sums.
inline std::array<Tensor4D, 4> conv_checksum_planes(const Tensor4D& input, const LayerShape& shape,
                                                    const std::array<Tensor4D, 4>& planes) {
  if (shape.crs() > kMaxCrsForI32)
    throw std::invalid_argument("conv_checksum_planes: CRS > 65536 exceeds the i32 plan");
  const Dims4 pd{1, shape.c, shape.r, shape.s};
  for (const auto& pl : planes)
    if (pl.dims() != pd || pl.kind() != ElemKind::I8)
      throw std::invalid_argument("conv_checksum_planes: bad plane tensor");
  std::array<Tensor4D, 4> extra{
      Tensor4D({shape.n, 1, shape.p, shape.q}, ElemKind::I32),
      Tensor4D({shape.n, 1, shape.p, shape.q}, ElemKind::I32),
      Tensor4D({shape.n, 1, shape.p, shape.q}, ElemKind::I32),
      Tensor4D({shape.n, 1, shape.p, shape.q}, ElemKind::I32)};
  const std::array<const std::int8_t*, 4> pv{
      planes[0].view<const std::int8_t>().data(), planes[1].view<const std::int8_t>().data(),
      planes[2].view<const std::int8_t>().data(), planes[3].view<const std::int8_t>().data()};
  std::array<std::int32_t*, 4> ev{
      extra[0].view<std::int32_t>().data(), extra[1].view<std::int32_t>().data(),
      extra[2].view<std::int32_t>().data(), extra[3].view<std::int32_t>().data()};
  std::int64_t out_idx = 0;
  for (std::int64_t n = 0; n < shape.n; ++n) {
    for (std::int64_t p = 0; p < shape.p; ++p) {
      for (std::int64_t q = 0; q < shape.q; ++q, ++out_idx) {
        std::int32_t acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
        for_each_patch_element(
            input, shape, n, p, q,
            [&](std::int64_t c, std::int64_t r, std::int64_t s, std::int8_t x) {
              const std::int64_t i = (c * shape.r + r) * shape.s + s;
              const std::int32_t xv = x;
              acc0 += xv * static_cast<std::uint8_t>(pv[0][i]);
              acc1 += xv * static_cast<std::uint8_t>(pv[1][i]);
              acc2 += xv * static_cast<std::uint8_t>(pv[2][i]);
              acc3 += xv * static_cast<std::int32_t>(pv[3][i]);
            });
        ev[0][out_idx] = acc0;
        ev[1][out_idx] = acc1;
        ev[2][out_idx] = acc2;
        ev[3][out_idx] = acc3;
      }
    }
  }
  return extra;
}

/// extra0 + (extra1 << 8) + (extra2 << 16) + (extra3 << 24), in i64.
inline Tensor4D recombine_extra_fmaps(const std::array<Tensor4D, 4>& extra) {
  const Dims4 d = extra[0].dims();
  for (const auto& e : extra)
    if (e.dims() != d || e.kind() != ElemKind::I32)
      throw std::invalid_argument("recombine_extra_fmaps: planes must be matching i32 tensors");
  Tensor4D out(d, ElemKind::I64);
  auto ov = out.view<std::int64_t>();
  const auto e0 = extra[0].view<const std::int32_t>();
  const auto e1 = extra[1].view<const std::int32_t>();
  const auto e2 = extra[2].view<const std::int32_t>();
  const auto e3 = extra[3].view<const std::int32_t>();
  for (std::int64_t i = 0; i < out.count(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    ov[u] = static_cast<std::int64_t>(e0[u]) + (static_cast<std::int64_t>(e1[u]) << 8) +
            (static_cast<std::int64_t>(e2[u]) << 16) + (static_cast<std::int64_t>(e3[u]) << 24);
  }
  return out;
}

/// Direct route for the extra fmap: convolve the input with the i32 checksum
/// sums, accumulating in i64. Equals the plane path bit-exactly; kept as the
/// independent side of the cross-path oracle.
inline Tensor4D conv_filter_checksum(const Tensor4D& input, const LayerShape& shape,
                                     const FilterChecksum& fc) {
  LayerShape cs_shape = shape;
  cs_shape.k = 1;
  return detail::conv_reference<std::int8_t, std::int32_t, std::int64_t>(input, fc.sums, cs_shape);
}

/// FC verification: per-position channel sums of ConvOut against the extra
/// fmap, bit-equal. Only the first original_k channels participate so padded
/// filler filters never leak into the reduction (original_k < 0 means all).
inline VerifyOutcome fc_verify(const Tensor4D& convout, const Tensor4D& extra_fmap,
                               std::int64_t original_k = -1) {
  if (convout.kind() != ElemKind::I32) throw std::invalid_argument("fc_verify: convout must be i32");
  if (extra_fmap.kind() != ElemKind::I64)
    throw std::invalid_argument("fc_verify: extra fmap must be i64");
  const Dims4 d = convout.dims();
  if (extra_fmap.dims() != Dims4{d.d0, 1, d.d2, d.d3})
    throw std::invalid_argument("fc_verify: extra fmap dims do not match convout");
  const std::int64_t k_lim = original_k < 0 ? d.d1 : original_k;
  if (k_lim < 1 || k_lim > d.d1) throw std::invalid_argument("fc_verify: bad original_k");
  const auto cv = convout.view<const std::int32_t>();
  const auto ev = extra_fmap.view<const std::int64_t>();
  const std::int64_t pq = d.d2 * d.d3;
  for (std::int64_t n = 0; n < d.d0; ++n) {
    for (std::int64_t j = 0; j < pq; ++j) {
      std::int64_t sum = 0;
      for (std::int64_t k = 0; k < k_lim; ++k)
        sum += cv[static_cast<std::size_t>((n * d.d1 + k) * pq + j)];
      const std::int64_t want = ev[static_cast<std::size_t>(n * pq + j)];
      if (sum != want)
        return VerifyOutcome::fail(sum, want,
                                   std::array<std::int64_t, 3>{n, j / d.d3, j % d.d3});
    }
  }
  return VerifyOutcome::ok();
}

// ---------------------------------------------------------------------------
// Input checksums (IC / FIC schemes)
// ---------------------------------------------------------------------------

/// Element-wise sum of every convolution window of the input; same size as
/// one filter. Padding halo positions contribute zero.
struct InputChecksum {
  Tensor4D sums;  // 1 x C x R x S, i32
};

inline InputChecksum gen_input_checksum(const Tensor4D& input, const LayerShape& shape) {
  if (input.kind() != ElemKind::I8 || input.dims() != shape.input_dims())
    throw std::invalid_argument("gen_input_checksum: input does not match shape");
  if (8 + ceil_log2(shape.npq()) > 32)
    throw std::invalid_argument(
        "gen_input_checksum: PQN too large for i32 checksums; a wider plan is required");
  InputChecksum ic;
  ic.sums = Tensor4D({1, shape.c, shape.r, shape.s}, ElemKind::I32);
  auto sums = ic.sums.view<std::int32_t>();
  for (std::int64_t n = 0; n < shape.n; ++n)
    for (std::int64_t p = 0; p < shape.p; ++p)
      for (std::int64_t q = 0; q < shape.q; ++q)
        for_each_patch_element(input, shape, n, p, q,
                               [&](std::int64_t c, std::int64_t r, std::int64_t s, std::int8_t v) {
                                 sums[static_cast<std::size_t>((c * shape.r + r) * shape.s + s)] +=
                                     v;
                               });
  return ic;
}

inline std::int64_t reduce_all_i64(const Tensor4D& convout) {
  std::int64_t sum = 0;
  for (std::int32_t v : convout.view<const std::int32_t>()) sum += v;
  return sum;
}

/// FIC expected value: dot product of the filter and input checksums.
inline std::int64_t fic_dot(const FilterChecksum& fc, const InputChecksum& ic) {
  if (fc.sums.dims() != ic.sums.dims())
    throw std::invalid_argument("fic_dot: checksum sizes do not match");
  const auto a = fc.sums.view<const std::int32_t>();
  const auto b = ic.sums.view<const std::int32_t>();
  std::int64_t acc = 0;
  for (std::int64_t i = 0; i < fc.sums.count(); ++i)
    acc += static_cast<std::int64_t>(a[static_cast<std::size_t>(i)]) *
           static_cast<std::int64_t>(b[static_cast<std::size_t>(i)]);
  return acc;
}

inline VerifyOutcome fic_verify(const Tensor4D& convout, std::int64_t expected) {
  const std::int64_t sum = reduce_all_i64(convout);
  if (sum != expected) return VerifyOutcome::fail(sum, expected);
  VerifyOutcome v = VerifyOutcome::ok();
  v.lhs = sum;
  v.rhs = expected;
  return v;
}

/// Negative-control reduction: the running sum is kept in 32 bits and wraps.
/// Comparing it against the exact i64 expected value yields an incorrect
/// verdict whenever the true reduction needs more than 32 bits.
inline std::int32_t reduce_all_wrap32(const Tensor4D& convout) {
  std::uint32_t sum = 0;
  for (std::int32_t v : convout.view<const std::int32_t>()) sum += static_cast<std::uint32_t>(v);
  return static_cast<std::int32_t>(sum);
}

inline VerifyOutcome fic_verify_forced32(const Tensor4D& convout, std::int64_t expected) {
  const std::int64_t sum = reduce_all_wrap32(convout);
  if (sum != expected) return VerifyOutcome::fail(sum, expected);
  VerifyOutcome v = VerifyOutcome::ok();
  v.lhs = sum;
  v.rhs = expected;
  return v;
}

/// IC verification (separate-checksum variant): the input checksum convolved
/// with each filter yields K values, compared against per-k reductions of
/// ConvOut. Note the filters are read again here; a fault that corrupts the
/// stored filter before both uses goes undetected (IC does not protect
/// filter storage).
inline VerifyOutcome ic_verify_k(const Tensor4D& convout, const Tensor4D& filters,
                                 const InputChecksum& ic) {
  if (convout.kind() != ElemKind::I32)
    throw std::invalid_argument("ic_verify_k: convout must be i32");
  if (filters.kind() != ElemKind::I8) throw std::invalid_argument("ic_verify_k: filters must be i8");
  const Dims4 d = convout.dims();
  const Dims4 fd = filters.dims();
  if (fd.d0 != d.d1) throw std::invalid_argument("ic_verify_k: filter count does not match convout");
  if (ic.sums.dims() != Dims4{1, fd.d1, fd.d2, fd.d3})
    throw std::invalid_argument("ic_verify_k: checksum size does not match filters");
  const auto cv = convout.view<const std::int32_t>();
  const auto fv = filters.view<const std::int8_t>();
  const auto sv = ic.sums.view<const std::int32_t>();
  const std::int64_t crs = fd.d1 * fd.d2 * fd.d3;
  const std::int64_t pq = d.d2 * d.d3;
  for (std::int64_t k = 0; k < d.d1; ++k) {
    std::int64_t out_sum = 0;
    for (std::int64_t n = 0; n < d.d0; ++n)
      for (std::int64_t j = 0; j < pq; ++j)
        out_sum += cv[static_cast<std::size_t>((n * d.d1 + k) * pq + j)];
    std::int64_t dot = 0;
    for (std::int64_t i = 0; i < crs; ++i)
      dot += static_cast<std::int64_t>(fv[static_cast<std::size_t>(k * crs + i)]) *
             static_cast<std::int64_t>(sv[static_cast<std::size_t>(i)]);
    if (out_sum != dot)
      return VerifyOutcome::fail(out_sum, dot, std::array<std::int64_t, 3>{k, -1, -1});
  }
  return VerifyOutcome::ok();
}

/// IC batch variant: sums the input fmaps element-wise across batches.
inline Tensor4D ic_batch_checksum(const Tensor4D& input) {
  if (input.kind() != ElemKind::I8)
    throw std::invalid_argument("ic_batch_checksum: expected i8 input");
  const Dims4 d = input.dims();
  Tensor4D batch({1, d.d1, d.d2, d.d3}, ElemKind::I32);
  auto bv = batch.view<std::int32_t>();
  const auto iv = input.view<const std::int8_t>();
  const std::int64_t chw = d.d1 * d.d2 * d.d3;
  for (std::int64_t n = 0; n < d.d0; ++n)
    for (std::int64_t i = 0; i < chw; ++i)
      bv[static_cast<std::size_t>(i)] += iv[static_cast<std::size_t>(n * chw + i)];
  return batch;
}

/// Convolves the checksum batch with the original filters (widened
/// arithmetic). When every batch value fits int8 the int8 fast path is used;
/// the values, and hence the result, are identical.
inline Tensor4D conv_batch_checksum(const Tensor4D& batch, const Tensor4D& filters,
                                    const LayerShape& shape) {
  if (batch.kind() != ElemKind::I32)
    throw std::invalid_argument("conv_batch_checksum: batch must be i32");
  if (batch.dims() != Dims4{1, shape.c, shape.h, shape.w})
    throw std::invalid_argument("conv_batch_checksum: batch dims do not match shape");
  const LayerShape one = LayerShape::make(1, shape.c, shape.h, shape.w, shape.k, shape.r, shape.s,
                                          shape.stride_h, shape.stride_w, shape.pad_h, shape.pad_w);
  const auto bv = batch.view<const std::int32_t>();
  bool fits_i8 = true;
  for (std::int32_t v : bv)
    if (v < -128 || v > 127) {
      fits_i8 = false;
      break;
    }
  Tensor4D wide({1, shape.k, shape.p, shape.q}, ElemKind::I64);
  if (fits_i8 && shape.crs() <= kMaxCrsForI32) {
    Tensor4D b8(batch.dims(), ElemKind::I8);
    auto b8v = b8.view<std::int8_t>();
    for (std::int64_t i = 0; i < batch.count(); ++i)
      b8v[static_cast<std::size_t>(i)] = static_cast<std::int8_t>(bv[static_cast<std::size_t>(i)]);
    const Tensor4D narrow = detail::conv_fast_i8(b8, filters, one);
    const auto nv = narrow.view<const std::int32_t>();
    auto wv = wide.view<std::int64_t>();
    for (std::int64_t i = 0; i < narrow.count(); ++i)
      wv[static_cast<std::size_t>(i)] = nv[static_cast<std::size_t>(i)];
    return wide;
  }
  return detail::conv_reference<std::int32_t, std::int8_t, std::int64_t>(batch, filters, one);
}

inline VerifyOutcome ic_batch_verify(const Tensor4D& convout, const Tensor4D& extra_batch_out) {
  if (convout.kind() != ElemKind::I32)
    throw std::invalid_argument("ic_batch_verify: convout must be i32");
  if (extra_batch_out.kind() != ElemKind::I64)
    throw std::invalid_argument("ic_batch_verify: extra batch must be i64");
  const Dims4 d = convout.dims();
  if (extra_batch_out.dims() != Dims4{1, d.d1, d.d2, d.d3})
    throw std::invalid_argument("ic_batch_verify: extra batch dims do not match convout");
  const auto cv = convout.view<const std::int32_t>();
  const auto ev = extra_batch_out.view<const std::int64_t>();
  const std::int64_t kpq = d.d1 * d.d2 * d.d3;
  for (std::int64_t i = 0; i < kpq; ++i) {
    std::int64_t sum = 0;
    for (std::int64_t n = 0; n < d.d0; ++n)
      sum += cv[static_cast<std::size_t>(n * kpq + i)];
    const std::int64_t want = ev[static_cast<std::size_t>(i)];
    if (sum != want) {
      const std::int64_t pq = d.d2 * d.d3;
      return VerifyOutcome::fail(
          sum, want, std::array<std::int64_t, 3>{i / pq, (i % pq) / d.d3, i % d.d3});
    }
  }
  return VerifyOutcome::ok();
}

// ---------------------------------------------------------------------------
// Precision planning
// ---------------------------------------------------------------------------

/// Worst-case bit widths for the checksum pipeline of an int-b convolution,
/// and the narrowest storage kinds that hold them.
struct PrecisionPlan {
  int operand_bits = 8;
  int bits_output_fmap = 0;
  int bits_reduced_fc = 0;
  int bits_reduced_fic = 0;
  int bits_filter_checksum = 0;
  int bits_input_checksum = 0;
  ElemKind output_fmap_kind = ElemKind::I32;
  ElemKind reduced_fc_kind = ElemKind::I64;
  ElemKind reduced_fic_kind = ElemKind::I64;
  ElemKind filter_checksum_kind = ElemKind::I32;
  ElemKind input_checksum_kind = ElemKind::I32;
};

namespace detail {
inline ElemKind narrowest_kind(int bits) {
  if (bits <= 32) return ElemKind::I32;
  if (bits <= 64) return ElemKind::I64;
  throw std::invalid_argument("plan_precision: requirement exceeds 64 bits");
}
}  // namespace detail

inline PrecisionPlan plan_precision(const LayerShape& shape, int operand_bits) {
  if (operand_bits != 4 && operand_bits != 8)
    throw std::invalid_argument("plan_precision: operand width must be 4 or 8 bits");
  const int b = operand_bits;
  PrecisionPlan plan;
  plan.operand_bits = b;
  plan.bits_output_fmap = 2 * b + ceil_log2(shape.crs());
  plan.bits_reduced_fc = 2 * b + ceil_log2(shape.crs() * shape.k);
  plan.bits_reduced_fic = 2 * b + ceil_log2(shape.npq() * shape.k * shape.crs());
  plan.bits_filter_checksum = b + ceil_log2(shape.k);
  plan.bits_input_checksum = b + ceil_log2(shape.npq());
  plan.output_fmap_kind = detail::narrowest_kind(plan.bits_output_fmap);
  plan.reduced_fc_kind = detail::narrowest_kind(plan.bits_reduced_fc);
  plan.reduced_fic_kind = detail::narrowest_kind(plan.bits_reduced_fic);  // rejects > 64
  plan.filter_checksum_kind = detail::narrowest_kind(plan.bits_filter_checksum);
  plan.input_checksum_kind = detail::narrowest_kind(plan.bits_input_checksum);
  return plan;
}

// ---------------------------------------------------------------------------
// Float mode: f32 operands, f64 reductions, thresholded comparison
// ---------------------------------------------------------------------------

inline VerifyOutcome float_verify(double lhs, double rhs, double tau) {
  if (!(tau >= 0.0)) throw std::invalid_argument("float_verify: tau must be >= 0");
  VerifyOutcome v;
  v.lhs_f = lhs;
  v.rhs_f = rhs;
  if (!(std::abs(lhs - rhs) <= tau)) v.status = VerifyOutcome::Status::Mismatch;
  return v;
}

inline std::vector<double> filter_checksum_f64(const Tensor4D& filters) {
  if (filters.kind() != ElemKind::F32)
    throw std::invalid_argument("filter_checksum_f64: expected f32 filters");
  const Dims4 d = filters.dims();
  const std::int64_t crs = d.d1 * d.d2 * d.d3;
  std::vector<double> sums(static_cast<std::size_t>(crs), 0.0);
  const auto fv = filters.view<const float>();
  for (std::int64_t k = 0; k < d.d0; ++k)
    for (std::int64_t i = 0; i < crs; ++i)
      sums[static_cast<std::size_t>(i)] += fv[static_cast<std::size_t>(k * crs + i)];
  return sums;
}

inline std::vector<double> input_checksum_f64(const Tensor4D& input, const LayerShape& shape) {
  if (input.kind() != ElemKind::F32 || input.dims() != shape.input_dims())
    throw std::invalid_argument("input_checksum_f64: input does not match shape");
  std::vector<double> sums(static_cast<std::size_t>(shape.crs()), 0.0);
  const auto in = input.view<const float>();
  for (std::int64_t n = 0; n < shape.n; ++n) {
    for (std::int64_t p = 0; p < shape.p; ++p) {
      const std::int64_t h0 = p * shape.stride_h - shape.pad_h;
      for (std::int64_t q = 0; q < shape.q; ++q) {
        const std::int64_t w0 = q * shape.stride_w - shape.pad_w;
        for (std::int64_t c = 0; c < shape.c; ++c) {
          for (std::int64_t r = 0; r < shape.r; ++r) {
            const std::int64_t h_idx = h0 + r;
            if (h_idx < 0 || h_idx >= shape.h) continue;
            for (std::int64_t s = 0; s < shape.s; ++s) {
              const std::int64_t w_idx = w0 + s;
              if (w_idx < 0 || w_idx >= shape.w) continue;
              sums[static_cast<std::size_t>((c * shape.r + r) * shape.s + s)] +=
                  in[static_cast<std::size_t>(((n * shape.c + c) * shape.h + h_idx) * shape.w + w_idx)];
            }
          }
        }
      }
    }
  }
  return sums;
}

inline double reduce_all_f64(const Tensor4D& convout) {
  double sum = 0.0;
  for (float v : convout.view<const float>()) sum += v;
  return sum;
}

inline double fic_dot_f64(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("fic_dot_f64: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline VerifyOutcome fic_verify_f32(const Tensor4D& convout, double expected, double tau) {
  return float_verify(reduce_all_f64(convout), expected, tau);
}

inline VerifyOutcome fc_verify_f32(const Tensor4D& convout, const Tensor4D& extra_fmap,
                                   double tau) {
  if (convout.kind() != ElemKind::F32 || extra_fmap.kind() != ElemKind::F32)
    throw std::invalid_argument("fc_verify_f32: expected f32 tensors");
  const Dims4 d = convout.dims();
  if (extra_fmap.dims() != Dims4{d.d0, 1, d.d2, d.d3})
    throw std::invalid_argument("fc_verify_f32: extra fmap dims do not match convout");
  const auto cv = convout.view<const float>();
  const auto ev = extra_fmap.view<const float>();
  const std::int64_t pq = d.d2 * d.d3;
  for (std::int64_t n = 0; n < d.d0; ++n) {
    for (std::int64_t j = 0; j < pq; ++j) {
      double sum = 0.0;
      for (std::int64_t k = 0; k < d.d1; ++k)
        sum += cv[static_cast<std::size_t>((n * d.d1 + k) * pq + j)];
      const double want = ev[static_cast<std::size_t>(n * pq + j)];
      if (!(std::abs(sum - want) <= tau)) {
        VerifyOutcome v = float_verify(sum, want, tau);
        v.locus = std::array<std::int64_t, 3>{n, j / d.d3, j % d.d3};
        return v;
      }
    }
  }
  return VerifyOutcome::ok();
}

inline VerifyOutcome ic_verify_k_f32(const Tensor4D& convout, const Tensor4D& filters,
                                     const std::vector<double>& ic_sums, double tau) {
  if (convout.kind() != ElemKind::F32 || filters.kind() != ElemKind::F32)
    throw std::invalid_argument("ic_verify_k_f32: expected f32 tensors");
  const Dims4 d = convout.dims();
  const Dims4 fd = filters.dims();
  const std::int64_t crs = fd.d1 * fd.d2 * fd.d3;
  if (static_cast<std::int64_t>(ic_sums.size()) != crs)
    throw std::invalid_argument("ic_verify_k_f32: checksum size does not match filters");
  const auto cv = convout.view<const float>();
  const auto fv = filters.view<const float>();
  const std::int64_t pq = d.d2 * d.d3;
  for (std::int64_t k = 0; k < d.d1; ++k) {
    double out_sum = 0.0;
    for (std::int64_t n = 0; n < d.d0; ++n)
      for (std::int64_t j = 0; j < pq; ++j)
        out_sum += cv[static_cast<std::size_t>((n * d.d1 + k) * pq + j)];
    double dot = 0.0;
    for (std::int64_t i = 0; i < crs; ++i)
      dot += static_cast<double>(fv[static_cast<std::size_t>(k * crs + i)]) *
             ic_sums[static_cast<std::size_t>(i)];
    if (!(std::abs(out_sum - dot) <= tau)) {
      VerifyOutcome v = float_verify(out_sum, dot, tau);
      v.locus = std::array<std::int64_t, 3>{k, -1, -1};
      return v;
    }
  }
  return VerifyOutcome::ok();
}

// ---------------------------------------------------------------------------
// Fused convolution + epilog with checksum taps
// ---------------------------------------------------------------------------

/// Checksum taps on the fused kernel. The output checksum is always computed
/// from the pre-epilog ConvOut. When next_layer is set the kernel also emits
/// the input checksum of the subsequent convolution, computed from the epilog
/// output (which must then be int8).
struct FusedTaps {
  bool output_checksum = false;
  std::optional<LayerShape> next_layer;
};

struct FusedConvResult {
  Tensor4D output;
  std::optional<std::int64_t> output_checksum;
  std::optional<InputChecksum> next_input_checksum;
};

inline FusedConvResult fused_conv_epilog(const Tensor4D& input, const Tensor4D& filters,
                                         const LayerShape& shape, const EpilogParams& params,
                                         const FusedTaps& taps = {}) {
  const Tensor4D convout = conv_direct(input, filters, shape);
  FusedConvResult result;
  if (taps.output_checksum) result.output_checksum = reduce_all_i64(convout);
  result.output = epilog(convout, params);
  if (taps.next_layer) {
    if (params.output_kind != ElemKind::I8)
      throw std::invalid_argument("fused_conv_epilog: next-layer checksum tap needs an i8 epilog");
    if (taps.next_layer->input_dims() != result.output.dims())
      throw std::invalid_argument("fused_conv_epilog: next-layer shape does not match the output");
    result.next_input_checksum = gen_input_checksum(result.output, *taps.next_layer);
  }
  return result;
}

}  // namespace abed

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace abed {

enum class ElemKind : std::uint8_t { I8 = 0, I32 = 1, I64 = 2, F32 = 3 };

constexpr std::size_t elem_size(ElemKind kind) {
  switch (kind) {
    case ElemKind::I8: return 1;
    case ElemKind::I32: return 4;
    case ElemKind::I64: return 8;
    case ElemKind::F32: return 4;
  }
  return 0;
}

constexpr int elem_bits(ElemKind kind) { return static_cast<int>(elem_size(kind)) * 8; }

inline const char* to_string(ElemKind kind) {
  switch (kind) {
    case ElemKind::I8: return "i8";
    case ElemKind::I32: return "i32";
    case ElemKind::I64: return "i64";
    case ElemKind::F32: return "f32";
  }
  return "?";
}

template <typename T>
constexpr ElemKind kind_of() {
  if constexpr (std::is_same_v<T, std::int8_t>) {
    return ElemKind::I8;
  } else if constexpr (std::is_same_v<T, std::int32_t>) {
    return ElemKind::I32;
  } else if constexpr (std::is_same_v<T, std::int64_t>) {
    return ElemKind::I64;
  } else {
    static_assert(std::is_same_v<T, float>, "unsupported element type");
    return ElemKind::F32;
  }
}

struct Dims4 {
  std::int64_t d0 = 1;
  std::int64_t d1 = 1;
  std::int64_t d2 = 1;
  std::int64_t d3 = 1;

  std::int64_t count() const { return d0 * d1 * d2 * d3; }
  bool operator==(const Dims4&) const = default;
};

/// Dense 4-D tensor in row-major d0-major order. Activations are NCHW,
/// filters KCRS. Exactly one element kind per tensor; accessing the buffer
/// through a mismatched type throws.
class Tensor4D {
 public:
  Tensor4D() = default;

  Tensor4D(Dims4 dims, ElemKind kind) : dims_(dims), kind_(kind) {
    validate_dims(dims);
    data_.resize(static_cast<std::size_t>(dims.count()) * elem_size(kind));
  }

  static Tensor4D filled(Dims4 dims, ElemKind kind, double value) {
    Tensor4D t(dims, kind);
    switch (kind) {
      case ElemKind::I8: t.fill_int<std::int8_t>(value); break;
      case ElemKind::I32: t.fill_int<std::int32_t>(value); break;
      case ElemKind::I64: t.fill_int<std::int64_t>(value); break;
      case ElemKind::F32: {
        if (!std::isfinite(value))
          throw std::invalid_argument("Tensor4D::filled: non-finite f32 fill value");
        for (auto& v : t.view<float>()) v = static_cast<float>(value);
        break;
      }
    }
    return t;
  }

  const Dims4& dims() const { return dims_; }
  ElemKind kind() const { return kind_; }
  std::int64_t count() const { return dims_.count(); }
  std::size_t byte_size() const { return data_.size(); }
  std::byte* raw() { return data_.data(); }
  const std::byte* raw() const { return data_.data(); }

  template <typename T>
  std::span<T> view() {
    check_kind<T>();
    return {reinterpret_cast<T*>(data_.data()), static_cast<std::size_t>(count())};
  }

  template <typename T>
  std::span<const T> view() const {
    check_kind<T>();
    return {reinterpret_cast<const T*>(data_.data()), static_cast<std::size_t>(count())};
  }

  std::int64_t flat_index(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) const {
    if (a < 0 || a >= dims_.d0 || b < 0 || b >= dims_.d1 || c < 0 || c >= dims_.d2 || d < 0 ||
        d >= dims_.d3)
      throw std::out_of_range("Tensor4D: index out of bounds");
    return ((a * dims_.d1 + b) * dims_.d2 + c) * dims_.d3 + d;
  }

  template <typename T>
  T& at(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
    return view<T>()[static_cast<std::size_t>(flat_index(a, b, c, d))];
  }

  template <typename T>
  T at(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) const {
    return view<const T>()[static_cast<std::size_t>(flat_index(a, b, c, d))];
  }

  bool operator==(const Tensor4D&) const = default;

 private:
  static void validate_dims(Dims4 dims) {
    if (dims.d0 < 1 || dims.d1 < 1 || dims.d2 < 1 || dims.d3 < 1)
      throw std::invalid_argument("Tensor4D: all extents must be >= 1");
    // element count must stay well clear of size_t/int64 arithmetic limits
    const std::int64_t limit = std::int64_t{1} << 40;
    if (dims.d0 > limit / dims.d1 || dims.d0 * dims.d1 > limit / dims.d2 ||
        dims.d0 * dims.d1 * dims.d2 > limit / dims.d3)
      throw std::invalid_argument("Tensor4D: element count too large");
  }

  template <typename T>
  void check_kind() const {
    using U = std::remove_const_t<T>;
    if (kind_of<U>() != kind_)
      throw std::invalid_argument(std::string("Tensor4D: element access as ") +
                                  to_string(kind_of<U>()) + " but tensor kind is " +
                                  to_string(kind_));
  }

  template <typename T>
  void fill_int(double value) {
    const double lo = static_cast<double>(std::numeric_limits<T>::min());
    const double hi = static_cast<double>(std::numeric_limits<T>::max());
    if (!(value >= lo && value <= hi) || value != std::trunc(value))
      throw std::invalid_argument(std::string("Tensor4D::filled: value not representable in ") +
                                  to_string(kind_of<T>()));
    for (auto& v : view<T>()) v = static_cast<T>(value);
  }

  Dims4 dims_{};
  ElemKind kind_ = ElemKind::I8;
  std::vector<std::byte> data_;
};

/// Convolution geometry. p and q are derived from the input extents,
/// filter extents, strides and pads on construction.
struct LayerShape {
  std::int64_t n = 1, c = 1, h = 1, w = 1;  // input fmap extents
  std::int64_t k = 1, r = 1, s = 1;         // filter count and spatial extents
  std::int64_t stride_h = 1, stride_w = 1;
  std::int64_t pad_h = 0, pad_w = 0;
  std::int64_t p = 1, q = 1;  // output spatial extents

  static LayerShape make(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                         std::int64_t k, std::int64_t r, std::int64_t s, std::int64_t stride_h = 1,
                         std::int64_t stride_w = 1, std::int64_t pad_h = 0,
                         std::int64_t pad_w = 0) {
    LayerShape ls{n, c, h, w, k, r, s, stride_h, stride_w, pad_h, pad_w, 0, 0};
    if (n < 1 || c < 1 || h < 1 || w < 1 || k < 1 || r < 1 || s < 1)
      throw std::invalid_argument("LayerShape: extents must be >= 1");
    if (stride_h < 1 || stride_w < 1)
      throw std::invalid_argument("LayerShape: strides must be >= 1");
    if (pad_h < 0 || pad_w < 0) throw std::invalid_argument("LayerShape: pads must be >= 0");
    if (r > h + 2 * pad_h || s > w + 2 * pad_w)
      throw std::invalid_argument("LayerShape: filter exceeds padded input");
    ls.p = (h + 2 * pad_h - r) / stride_h + 1;
    ls.q = (w + 2 * pad_w - s) / stride_w + 1;
    return ls;
  }

  std::int64_t crs() const { return c * r * s; }
  std::int64_t npq() const { return n * p * q; }
  std::int64_t nkpq() const { return n * k * p * q; }
  Dims4 input_dims() const { return {n, c, h, w}; }
  Dims4 filter_dims() const { return {k, c, r, s}; }
  Dims4 output_dims() const { return {n, k, p, q}; }

  bool operator==(const LayerShape&) const = default;
};

/// Caps the input spatial extents at max_hw and rederives p,q. Used to run
/// large-image layer configs functionally at reduced scale.
inline LayerShape capped_spatial(const LayerShape& ls, std::int64_t max_hw) {
  return LayerShape::make(ls.n, ls.c, std::min(ls.h, max_hw), std::min(ls.w, max_hw), ls.k, ls.r,
                          ls.s, ls.stride_h, ls.stride_w, ls.pad_h, ls.pad_w);
}

namespace detail {
inline void check_patch_args(const Tensor4D& input, const LayerShape& shape, std::int64_t n,
                             std::int64_t p, std::int64_t q) {
  if (input.dims() != shape.input_dims())
    throw std::invalid_argument("patch: input dims do not match shape");
  if (n < 0 || n >= shape.n || p < 0 || p >= shape.p || q < 0 || q >= shape.q)
    throw std::out_of_range("patch: output index out of bounds");
}
}  // namespace detail

/// Visits the C*R*S input-window entries feeding output position (n,p,q) in
/// (c,r,s) order. Entries whose source coordinate falls in the zero-padding
/// halo are visited with value 0. fn(c, r, s, value).
template <typename Fn>
void for_each_patch_element(const Tensor4D& input, const LayerShape& shape, std::int64_t n,
                            std::int64_t p, std::int64_t q, Fn&& fn) {
  detail::check_patch_args(input, shape, n, p, q);
  const auto in = input.view<const std::int8_t>();
  const std::int64_t h0 = p * shape.stride_h - shape.pad_h;
  const std::int64_t w0 = q * shape.stride_w - shape.pad_w;
  for (std::int64_t c = 0; c < shape.c; ++c) {
    const std::int64_t base_c = (n * shape.c + c) * shape.h;
    for (std::int64_t r = 0; r < shape.r; ++r) {
      const std::int64_t h_idx = h0 + r;
      const bool h_ok = h_idx >= 0 && h_idx < shape.h;
      const std::int64_t base_h = (base_c + h_idx) * shape.w;
      for (std::int64_t s = 0; s < shape.s; ++s) {
        const std::int64_t w_idx = w0 + s;
        std::int8_t v = 0;
        if (h_ok && w_idx >= 0 && w_idx < shape.w)
          v = in[static_cast<std::size_t>(base_h + w_idx)];
        fn(c, r, s, v);
      }
    }
  }
}

struct PatchEntry {
  std::int64_t c, r, s;
  std::int8_t value;
  bool operator==(const PatchEntry&) const = default;
};

/// Materialized form of for_each_patch_element; yields exactly C*R*S entries.
inline std::vector<PatchEntry> patch_accumulate_view(const Tensor4D& input,
                                                     const LayerShape& shape, std::int64_t n,
                                                     std::int64_t p, std::int64_t q) {
  std::vector<PatchEntry> out;
  out.reserve(static_cast<std::size_t>(shape.crs()));
  for_each_patch_element(input, shape, n, p, q,
                         [&](std::int64_t c, std::int64_t r, std::int64_t s, std::int8_t v) {
                           out.push_back({c, r, s, v});
                         });
  return out;
}

// ---------------------------------------------------------------------------
// Binary tensor dump format:
//   magic "ABED", one tag byte (low nibble element kind, high nibble layout;
//   layout 0 = dense row-major), four u32 little-endian extents, then the raw
//   little-endian element payload.
// ---------------------------------------------------------------------------

namespace detail {
inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

inline std::uint32_t get_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
}  // namespace detail

inline std::vector<std::uint8_t> serialize(const Tensor4D& t) {
  std::vector<std::uint8_t> out;
  out.reserve(21 + t.byte_size());
  out.insert(out.end(), {'A', 'B', 'E', 'D'});
  out.push_back(static_cast<std::uint8_t>(t.kind()));  // layout nibble 0
  for (std::int64_t d : {t.dims().d0, t.dims().d1, t.dims().d2, t.dims().d3}) {
    if (d > std::int64_t{0xFFFFFFFF}) throw std::invalid_argument("serialize: extent exceeds u32");
    detail::put_u32le(out, static_cast<std::uint32_t>(d));
  }
  const std::size_t esz = elem_size(t.kind());
  const auto* src = reinterpret_cast<const std::uint8_t*>(t.raw());
  if constexpr (std::endian::native == std::endian::little) {
    out.insert(out.end(), src, src + t.byte_size());
  } else {
    for (std::int64_t i = 0; i < t.count(); ++i)
      for (std::size_t b = 0; b < esz; ++b) out.push_back(src[i * esz + (esz - 1 - b)]);
  }
  return out;
}

inline Tensor4D deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 21) throw std::runtime_error("deserialize: header truncated");
  if (std::memcmp(bytes.data(), "ABED", 4) != 0)
    throw std::runtime_error("deserialize: bad magic");
  const std::uint8_t tag = bytes[4];
  if ((tag >> 4) != 0) throw std::runtime_error("deserialize: unsupported layout tag");
  if ((tag & 0x0F) > 3) throw std::runtime_error("deserialize: unknown element kind");
  const ElemKind kind = static_cast<ElemKind>(tag & 0x0F);
  Dims4 dims;
  dims.d0 = detail::get_u32le(&bytes[5]);
  dims.d1 = detail::get_u32le(&bytes[9]);
  dims.d2 = detail::get_u32le(&bytes[13]);
  dims.d3 = detail::get_u32le(&bytes[17]);
  if (dims.d0 < 1 || dims.d1 < 1 || dims.d2 < 1 || dims.d3 < 1)
    throw std::runtime_error("deserialize: zero extent");
  Tensor4D t(dims, kind);
  if (bytes.size() - 21 < t.byte_size()) throw std::runtime_error("deserialize: payload truncated");
  if (bytes.size() - 21 > t.byte_size())
    throw std::runtime_error("deserialize: trailing bytes after payload");
  auto* dst = reinterpret_cast<std::uint8_t*>(t.raw());
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst, bytes.data() + 21, t.byte_size());
  } else {
    const std::size_t esz = elem_size(kind);
    for (std::int64_t i = 0; i < t.count(); ++i)
      for (std::size_t b = 0; b < esz; ++b)
        dst[i * esz + (esz - 1 - b)] = bytes[21 + i * esz + b];
  }
  return t;
}

inline void save_tensor(const std::filesystem::path& path, const Tensor4D& t) {
  const auto bytes = serialize(t);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_tensor: cannot open " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("save_tensor: write failed for " + path.string());
}

inline Tensor4D load_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("load_tensor: cannot open " + path.string());
  const auto size = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!f) throw std::runtime_error("load_tensor: read failed for " + path.string());
  return deserialize(bytes);
}

}  // namespace abed

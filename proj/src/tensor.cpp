#include "fssd/tensor.hpp"

#include <cstring>
#include <istream>
#include <ostream>

#include "fssd/rng.hpp"

namespace fssd {

template <typename T>
Tensor<T> Tensor<T>::random_init(Shape shape, std::uint64_t seed, InitScheme scheme) {
  FSSD_CHECK(scheme == InitScheme::fan_scaled_uniform, "unknown init scheme");
  std::int64_t fan_in = 0, fan_out = 0;
  switch (shape.size()) {
    case 1:
      fan_in = fan_out = shape[0];
      break;
    case 2:
      fan_in = shape[1];
      fan_out = shape[0];
      break;
    case 4: {
      std::int64_t rf = static_cast<std::int64_t>(shape[2]) * shape[3];
      fan_in = shape[1] * rf;
      fan_out = shape[0] * rf;
      break;
    }
    default:
      FSSD_FAIL("random_init supports rank 1, 2 or 4, got ", shape_str(shape));
  }
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = zeros(std::move(shape));
  Rng rng(seed);
  for (T& v : t.st().values) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
Tensor<T> subsample_weight_tensor(const Tensor<T>& w, const std::array<int, 4>& factors) {
  FSSD_CHECK(w.rank() == 4, "subsample_weight_tensor needs rank 4, got ",
             shape_str(w.shape()));
  Shape os(4);
  for (int m = 0; m < 4; ++m) {
    FSSD_CHECK(factors[m] >= 1, "subsample factor must be >= 1, got ", factors[m]);
    os[m] = (w.dim(m) + factors[m] - 1) / factors[m];
  }
  Tensor<T> out = Tensor<T>::zeros(os);
  auto wv = w.values();
  auto ov = out.values();
  const auto& is = w.shape();
  std::int64_t o = 0;
  for (int i0 = 0; i0 < os[0]; ++i0)
    for (int i1 = 0; i1 < os[1]; ++i1)
      for (int i2 = 0; i2 < os[2]; ++i2)
        for (int i3 = 0; i3 < os[3]; ++i3) {
          std::int64_t src = ((static_cast<std::int64_t>(i0) * factors[0] * is[1] +
                               static_cast<std::int64_t>(i1) * factors[1]) *
                                  is[2] +
                              static_cast<std::int64_t>(i2) * factors[2]) *
                                 is[3] +
                             static_cast<std::int64_t>(i3) * factors[3];
          ov[o++] = wv[src];
        }
  return out;
}

namespace {

constexpr std::uint32_t kTensorFormatVersion = 1;

void write_raw(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  FSSD_CHECK(os.good(), "tensor write failed");
}

void read_raw(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  FSSD_CHECK(is.gcount() == static_cast<std::streamsize>(n), "tensor file truncated");
}

template <typename T>
constexpr std::uint8_t dtype_tag() {
  return std::is_same_v<T, float> ? 0 : 1;
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  write_raw(os, "FSSD", 4);
  std::uint32_t version = kTensorFormatVersion;
  write_raw(os, &version, 4);
  std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
  write_raw(os, &rank, 4);
  for (int i = 0; i < t.rank(); ++i) {
    std::uint32_t d = static_cast<std::uint32_t>(t.dim(i));
    write_raw(os, &d, 4);
  }
  std::uint8_t tag = dtype_tag<T>();
  write_raw(os, &tag, 1);
  write_raw(os, t.data(), sizeof(T) * static_cast<size_t>(t.size()));
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  char magic[4];
  read_raw(is, magic, 4);
  FSSD_CHECK(std::memcmp(magic, "FSSD", 4) == 0, "bad tensor magic");
  std::uint32_t version = 0;
  read_raw(is, &version, 4);
  FSSD_CHECK(version == kTensorFormatVersion, "unsupported tensor format version ", version);
  std::uint32_t rank = 0;
  read_raw(is, &rank, 4);
  FSSD_CHECK(rank >= 1 && rank <= 8, "bad tensor rank ", rank);
  Shape shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint32_t d = 0;
    read_raw(is, &d, 4);
    FSSD_CHECK(d >= 1, "bad tensor dim ", d);
    shape[i] = static_cast<int>(d);
  }
  std::uint8_t tag = 0;
  read_raw(is, &tag, 1);
  FSSD_CHECK(tag == 0 || tag == 1, "bad dtype tag ", int(tag));
  std::int64_t n = shape_numel(shape);
  Tensor<T> t = Tensor<T>::zeros(std::move(shape));
  if (tag == dtype_tag<T>()) {
    read_raw(is, t.data(), sizeof(T) * static_cast<size_t>(n));
  } else if (tag == 0) {
    std::vector<float> buf(static_cast<size_t>(n));
    read_raw(is, buf.data(), 4 * static_cast<size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) t.data()[i] = static_cast<T>(buf[static_cast<size_t>(i)]);
  } else {
    std::vector<double> buf(static_cast<size_t>(n));
    read_raw(is, buf.data(), 8 * static_cast<size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) t.data()[i] = static_cast<T>(buf[static_cast<size_t>(i)]);
  }
  return t;
}

#define FSSD_INSTANTIATE(T)                                                    \
  template Tensor<T> Tensor<T>::random_init(Shape, std::uint64_t, InitScheme); \
  template Tensor<T> subsample_weight_tensor<T>(const Tensor<T>&,              \
                                                const std::array<int, 4>&);    \
  template void write_tensor<T>(std::ostream&, const Tensor<T>&);              \
  template Tensor<T> read_tensor<T>(std::istream&);

FSSD_INSTANTIATE(float)
FSSD_INSTANTIATE(double)

#undef FSSD_INSTANTIATE

}  // namespace fssd

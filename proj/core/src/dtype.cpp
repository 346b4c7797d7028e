#include "rece/dtype.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

namespace rece {

static_assert(std::endian::native == std::endian::little,
              "tensor payloads are little-endian; big-endian hosts are not supported");

namespace {

// IEEE-style binary format with `kMantissa` stored fraction bits.
template <int kExponent, int kMantissa>
std::uint16_t round_to_small_float(double value) {
  constexpr int kBias = (1 << (kExponent - 1)) - 1;
  constexpr int kMinExp = 1 - kBias;  // exponent of the smallest normal
  constexpr std::uint32_t kExpMask = (1u << kExponent) - 1;

  const std::uint16_t sign = std::signbit(value) ? std::uint16_t(1u << (kExponent + kMantissa)) : 0;
  if (std::isnan(value)) {
    return static_cast<std::uint16_t>(sign | (kExpMask << kMantissa) | (1u << (kMantissa - 1)));
  }
  const double mag = std::abs(value);
  if (std::isinf(mag)) return static_cast<std::uint16_t>(sign | (kExpMask << kMantissa));
  if (mag == 0.0) return sign;

  int exp2 = 0;
  const double frac = std::frexp(mag, &exp2);  // mag = frac * 2^exp2, frac in [0.5, 1)
  int e = exp2 - 1;                            // mag = s * 2^e, s in [1, 2)
  if (e < kMinExp) {
    // Subnormal: count units of 2^(kMinExp - kMantissa). A carry into 2^kMantissa
    // lands exactly on the smallest normal encoding.
    const double units = std::nearbyint(std::ldexp(mag, kMantissa - kMinExp));
    return static_cast<std::uint16_t>(sign | static_cast<std::uint32_t>(units));
  }
  auto q = static_cast<std::uint32_t>(std::nearbyint(std::ldexp(frac * 2.0, kMantissa)));
  if (q == (2u << kMantissa)) {
    q = 1u << kMantissa;
    ++e;
  }
  if (e > kBias) return static_cast<std::uint16_t>(sign | (kExpMask << kMantissa));
  const auto biased = static_cast<std::uint32_t>(e + kBias);
  return static_cast<std::uint16_t>(sign | (biased << kMantissa) | (q - (1u << kMantissa)));
}

template <int kExponent, int kMantissa>
double expand_small_float(std::uint16_t bits) {
  constexpr int kBias = (1 << (kExponent - 1)) - 1;
  constexpr std::uint32_t kExpMask = (1u << kExponent) - 1;
  const bool negative = (bits >> (kExponent + kMantissa)) & 1u;
  const std::uint32_t exp = (bits >> kMantissa) & kExpMask;
  const std::uint32_t man = bits & ((1u << kMantissa) - 1);
  double mag;
  if (exp == kExpMask) {
    mag = man ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  } else if (exp == 0) {
    mag = std::ldexp(static_cast<double>(man), 1 - kBias - kMantissa);
  } else {
    mag = std::ldexp(static_cast<double>(man | (1u << kMantissa)),
                     static_cast<int>(exp) - kBias - kMantissa);
  }
  return negative ? -mag : mag;
}

template <typename T>
T load(const std::uint8_t* src) {
  T v;
  std::memcpy(&v, src, sizeof(T));
  return v;
}

template <typename T>
void store(T v, std::uint8_t* dst) {
  std::memcpy(dst, &v, sizeof(T));
}

}  // namespace

std::optional<FloatType> parse_float_type(std::string_view dtype) {
  if (dtype == "F16") return FloatType::F16;
  if (dtype == "BF16") return FloatType::BF16;
  if (dtype == "F32") return FloatType::F32;
  if (dtype == "F64") return FloatType::F64;
  return std::nullopt;
}

std::string_view to_string(FloatType type) {
  switch (type) {
    case FloatType::F16: return "F16";
    case FloatType::BF16: return "BF16";
    case FloatType::F32: return "F32";
    case FloatType::F64: return "F64";
  }
  return "?";
}

std::size_t byte_width(FloatType type) {
  switch (type) {
    case FloatType::F16:
    case FloatType::BF16: return 2;
    case FloatType::F32: return 4;
    case FloatType::F64: return 8;
  }
  return 0;
}

std::optional<std::size_t> dtype_byte_width(std::string_view dtype) {
  if (auto f = parse_float_type(dtype)) return byte_width(*f);
  if (dtype == "BOOL" || dtype == "U8" || dtype == "I8" || dtype == "F8_E4M3" ||
      dtype == "F8_E5M2") {
    return 1;
  }
  if (dtype == "U16" || dtype == "I16") return 2;
  if (dtype == "U32" || dtype == "I32") return 4;
  if (dtype == "U64" || dtype == "I64") return 8;
  return std::nullopt;
}

double half_to_double(std::uint16_t bits) { return expand_small_float<5, 10>(bits); }
double bfloat16_to_double(std::uint16_t bits) { return expand_small_float<8, 7>(bits); }
std::uint16_t double_to_half(double value) { return round_to_small_float<5, 10>(value); }
std::uint16_t double_to_bfloat16(double value) { return round_to_small_float<8, 7>(value); }

double load_element(FloatType type, const std::uint8_t* src) {
  switch (type) {
    case FloatType::F16: return half_to_double(load<std::uint16_t>(src));
    case FloatType::BF16: return bfloat16_to_double(load<std::uint16_t>(src));
    case FloatType::F32: return static_cast<double>(load<float>(src));
    case FloatType::F64: return load<double>(src);
  }
  return 0.0;
}

void store_element(FloatType type, double value, std::uint8_t* dst) {
  switch (type) {
    case FloatType::F16: store(double_to_half(value), dst); break;
    case FloatType::BF16: store(double_to_bfloat16(value), dst); break;
    case FloatType::F32: store(static_cast<float>(value), dst); break;
    case FloatType::F64: store(value, dst); break;
  }
}

}  // namespace rece

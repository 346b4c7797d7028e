#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace rece {

/// Floating-point storage types a projection or embedding may use on disk.
enum class FloatType { F16, BF16, F32, F64 };

std::optional<FloatType> parse_float_type(std::string_view dtype);
std::string_view to_string(FloatType type);
std::size_t byte_width(FloatType type);

/// Element size of any dtype string the tensor-file format defines, or
/// nullopt for an unknown one.
std::optional<std::size_t> dtype_byte_width(std::string_view dtype);

double half_to_double(std::uint16_t bits);
double bfloat16_to_double(std::uint16_t bits);

/// Round-to-nearest-even, straight from double (no intermediate float
/// rounding). Overflow goes to infinity, NaN stays NaN.
std::uint16_t double_to_half(double value);
std::uint16_t double_to_bfloat16(double value);

/// Reads one little-endian element of `type` at `src`.
double load_element(FloatType type, const std::uint8_t* src);
/// Writes `value` rounded to `type`, little-endian, at `dst`.
void store_element(FloatType type, double value, std::uint8_t* dst);

}  // namespace rece

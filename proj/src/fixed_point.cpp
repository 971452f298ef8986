#include "qrbd/fixed_point.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <limits>

namespace qrbd {

double FxpFormat::epsilon() const { return std::ldexp(1.0, -frac_bits - 1); }

double FxpFormat::resolution() const { return std::ldexp(1.0, -frac_bits); }

std::int64_t FxpFormat::max_mantissa() const {
  if (width() >= 64) return std::numeric_limits<std::int64_t>::max();
  return (std::int64_t{1} << (width() - 1)) - 1;
}

std::int64_t FxpFormat::min_mantissa() const {
  if (width() >= 64) return std::numeric_limits<std::int64_t>::min();
  return -(std::int64_t{1} << (width() - 1));
}

double FxpFormat::max_real() const {
  return std::ldexp(static_cast<double>(max_mantissa()), -frac_bits);
}

double FxpFormat::min_real() const {
  return std::ldexp(static_cast<double>(min_mantissa()), -frac_bits);
}

void FxpFormat::validate() const {
  if (int_bits < 1) throw std::invalid_argument("fixed-point format needs at least one integer (sign) bit");
  if (frac_bits < 0) throw std::invalid_argument("fixed-point fractional bits must be non-negative");
  if (width() > 64) throw std::invalid_argument("fixed-point width exceeds 64 bits");
}

std::string FxpFormat::to_string() const {
  return "Q" + std::to_string(int_bits) + "." + std::to_string(frac_bits);
}

FxpFormat FxpFormat::parse(std::string_view text) {
  auto fail = [&] { return std::invalid_argument("malformed fixed-point format '" + std::string(text) + "' (expected Qi.f)"); };
  if (text.size() < 4 || (text[0] != 'Q' && text[0] != 'q')) throw fail();
  auto dot = text.find('.');
  if (dot == std::string_view::npos) throw fail();
  FxpFormat fmt;
  auto parse_int = [&](std::string_view part, int& out) {
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    if (ec != std::errc{} || ptr != part.data() + part.size()) throw fail();
  };
  parse_int(text.substr(1, dot - 1), fmt.int_bits);
  parse_int(text.substr(dot + 1), fmt.frac_bits);
  fmt.validate();
  return fmt;
}

void FxpStats::observe(const std::string& name, double value) {
  auto& slot = max_abs[name];
  slot = std::max(slot, std::abs(value));
}

void FxpStats::merge(const FxpStats& other) {
  saturations += other.saturations;
  for (const auto& [name, v] : other.max_abs) observe(name, v);
}

double FxpValue::to_real() const { return std::ldexp(static_cast<double>(mantissa), -format.frac_bits); }

namespace fxp {

__int128 round_shift(__int128 value, int shift) {
  if (shift <= 0) return value << (-shift);
  if (shift >= 126) return 0;
  const __int128 half = static_cast<__int128>(1) << (shift - 1);
  if (value >= 0) return (value + half) >> shift;
  return -((-value + half) >> shift);
}

std::int64_t saturate(__int128 value, const FxpFormat& fmt, std::uint64_t* saturations) {
  const auto hi = fmt.max_mantissa();
  const auto lo = fmt.min_mantissa();
  if (value > hi) {
    if (saturations) ++*saturations;
    return hi;
  }
  if (value < lo) {
    if (saturations) ++*saturations;
    return lo;
  }
  return static_cast<std::int64_t>(value);
}

std::int64_t quantize_mantissa(double x, const FxpFormat& fmt, std::uint64_t* saturations) {
  const double scaled = std::round(std::ldexp(x, fmt.frac_bits));
  // Clamp in floating point first so the integer conversion is defined.
  const double hi = static_cast<double>(fmt.max_mantissa());
  const double lo = static_cast<double>(fmt.min_mantissa());
  if (!(scaled <= hi)) {
    if (saturations) ++*saturations;
    return std::isnan(scaled) ? 0 : fmt.max_mantissa();
  }
  if (scaled < lo) {
    if (saturations) ++*saturations;
    return fmt.min_mantissa();
  }
  return static_cast<std::int64_t>(scaled);
}

}  // namespace fxp

FxpValue quantize(double x, const FxpFormat& fmt, FxpStats* stats) {
  return {fxp::quantize_mantissa(x, fmt, stats ? &stats->saturations : nullptr), fmt};
}

FxpValue fxp_arith(const FxpValue& a, const FxpValue& b, FxpOp op, FxpStats* stats) {
  if (a.format != b.format) {
    throw FxpFormatMismatch("fixed-point operands differ in format: " + a.format.to_string() + " vs " +
                            b.format.to_string());
  }
  const auto& fmt = a.format;
  auto* sat = stats ? &stats->saturations : nullptr;
  __int128 exact = 0;
  switch (op) {
    case FxpOp::Add:
      exact = static_cast<__int128>(a.mantissa) + b.mantissa;
      break;
    case FxpOp::Sub:
      exact = static_cast<__int128>(a.mantissa) - b.mantissa;
      break;
    case FxpOp::Mul:
      exact = fxp::round_shift(static_cast<__int128>(a.mantissa) * b.mantissa, fmt.frac_bits);
      break;
  }
  return {fxp::saturate(exact, fmt, sat), fmt};
}

int required_accumulator_width(const FxpFormat& fmt, std::size_t n_pairs) {
  int extra = 0;
  while ((std::size_t{1} << extra) < std::max<std::size_t>(n_pairs, 1)) ++extra;
  return 2 * fmt.width() + extra;
}

FxpValue fxp_dot(int acc_width, std::span<const std::pair<FxpValue, FxpValue>> pairs, Rounding rounding,
                 FxpStats* stats) {
  if (pairs.empty()) return {};
  const FxpFormat fmt = pairs.front().first.format;
  for (const auto& [a, b] : pairs) {
    if (a.format != fmt || b.format != fmt) throw FxpFormatMismatch("fxp_dot operands must share one format");
  }
  const int needed = required_accumulator_width(fmt, pairs.size());
  if (acc_width < needed || acc_width > 127) {
    throw std::invalid_argument("accumulator width " + std::to_string(acc_width) + " too small for " +
                                std::to_string(pairs.size()) + " products in " + fmt.to_string() +
                                " (needs " + std::to_string(needed) + ")");
  }
  auto* sat = stats ? &stats->saturations : nullptr;
  if (rounding == Rounding::PerChain) {
    __int128 acc = 0;
    for (const auto& [a, b] : pairs) acc += static_cast<__int128>(a.mantissa) * b.mantissa;
    return {fxp::saturate(fxp::round_shift(acc, fmt.frac_bits), fmt, sat), fmt};
  }
  std::int64_t acc = 0;
  for (const auto& [a, b] : pairs) {
    const auto p = fxp::saturate(fxp::round_shift(static_cast<__int128>(a.mantissa) * b.mantissa, fmt.frac_bits),
                                 fmt, sat);
    acc = fxp::saturate(static_cast<__int128>(acc) + p, fmt, sat);
  }
  return {acc, fmt};
}

}  // namespace qrbd

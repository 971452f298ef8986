#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace qrbd {

/// Signed fixed-point format: `int_bits` includes the sign bit.
struct FxpFormat {
  int int_bits = 12;
  int frac_bits = 12;

  int width() const { return int_bits + frac_bits; }
  /// Half an ulp, the worst-case error of a single in-range rounding.
  double epsilon() const;
  double resolution() const;
  double max_real() const;
  double min_real() const;
  std::int64_t max_mantissa() const;
  std::int64_t min_mantissa() const;

  /// Throws std::invalid_argument when the bit widths are out of range.
  void validate() const;

  /// "Q12.12" style label.
  std::string to_string() const;
  static FxpFormat parse(std::string_view text);

  friend bool operator==(const FxpFormat&, const FxpFormat&) = default;
};

/// Per-run saturation and range bookkeeping. Merged explicitly, never shared.
struct FxpStats {
  std::uint64_t saturations = 0;
  std::map<std::string, double> max_abs;

  void observe(const std::string& name, double value);
  void merge(const FxpStats& other);
};

class FxpFormatMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct FxpValue {
  std::int64_t mantissa = 0;
  FxpFormat format;

  double to_real() const;
  friend bool operator==(const FxpValue&, const FxpValue&) = default;
};

enum class FxpOp { Add, Sub, Mul };

/// Accumulation semantics for dot products.
enum class Rounding {
  PerChain,  ///< exact wide accumulation, one rounding at the end (DSP cascade)
  PerOp,     ///< every product rounded and saturated before accumulation
};

namespace fxp {

/// Round-half-away-from-zero of `value / 2^shift` for shift >= 0; left shift otherwise.
__int128 round_shift(__int128 value, int shift);

/// Clamp to the representable mantissa range, counting a saturation event.
std::int64_t saturate(__int128 value, const FxpFormat& fmt, std::uint64_t* saturations);

std::int64_t quantize_mantissa(double x, const FxpFormat& fmt, std::uint64_t* saturations);

}  // namespace fxp

FxpValue quantize(double x, const FxpFormat& fmt, FxpStats* stats = nullptr);

FxpValue fxp_arith(const FxpValue& a, const FxpValue& b, FxpOp op, FxpStats* stats = nullptr);

/// Minimum accumulator width needed for an exact dot product of `n_pairs` terms.
int required_accumulator_width(const FxpFormat& fmt, std::size_t n_pairs);

/// Dot product with a wide accumulator and a single final rounding.
/// Throws std::invalid_argument when `acc_width` cannot hold the exact sum.
FxpValue fxp_dot(int acc_width, std::span<const std::pair<FxpValue, FxpValue>> pairs,
                 Rounding rounding = Rounding::PerChain, FxpStats* stats = nullptr);

}  // namespace qrbd

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "qrbd/fixed_point.hpp"

namespace qrbd {

enum class Module { Rnea, DeltaRnea, Minv };
enum class Pass { Forward, Backward, Divider };

/// Which half of a dual-number computation an operation belongs to.
enum class Channel { Value, Tangent, Muted };

const char* to_string(Module m);
const char* to_string(Pass p);

/// Double-precision binding: the oracle arithmetic.
struct RealArith {
  using Scalar = double;

  Scalar constant(double x) const { return x; }
  Scalar input(double x) const { return x; }
  Scalar zero() const { return 0.0; }
  double to_real(Scalar x) const { return x; }

  Scalar add(Scalar a, Scalar b) const { return a + b; }
  Scalar sub(Scalar a, Scalar b) const { return a - b; }
  Scalar neg(Scalar a) const { return -a; }
  Scalar mul(Scalar a, Scalar b) const { return a * b; }
  Scalar dot(std::span<const Scalar> a, std::span<const Scalar> b) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
  }
  /// sum(a*b) * 2^shift with a single rounding.
  Scalar dot_scaled(std::span<const Scalar> a, std::span<const Scalar> b, int shift) const {
    return std::ldexp(dot(a, b), shift);
  }
  Scalar reciprocal(Scalar a) const { return 1.0 / a; }
  std::pair<Scalar, Scalar> sincos(Scalar a) const { return {std::sin(a), std::cos(a)}; }
  Scalar ldexp(Scalar a, int k) const { return std::ldexp(a, k); }
  int ilogb(Scalar a) const { return a == 0.0 || !std::isfinite(a) ? 0 : std::ilogb(a); }

  void stage(Module, Pass, int) {}
  void channel(Channel) {}
};

/// Fixed-point binding. Every operation rounds and saturates into `format`.
class FixedArith {
 public:
  struct Scalar {
    std::int64_t m = 0;
    friend bool operator==(const Scalar&, const Scalar&) = default;
  };

  explicit FixedArith(FxpFormat fmt, Rounding rounding = Rounding::PerChain);

  const FxpFormat& format() const { return fmt_; }
  Rounding rounding() const { return rounding_; }
  std::uint64_t saturations() const { return saturations_; }
  void reset_saturations() { saturations_ = 0; }

  Scalar constant(double x) { return {fxp::quantize_mantissa(x, fmt_, &saturations_)}; }
  Scalar input(double x) { return {fxp::quantize_mantissa(x, fmt_, &saturations_)}; }
  Scalar zero() const { return {0}; }
  double to_real(Scalar x) const { return std::ldexp(static_cast<double>(x.m), -fmt_.frac_bits); }

  Scalar add(Scalar a, Scalar b) { return {fxp::saturate(static_cast<__int128>(a.m) + b.m, fmt_, &saturations_)}; }
  Scalar sub(Scalar a, Scalar b) { return {fxp::saturate(static_cast<__int128>(a.m) - b.m, fmt_, &saturations_)}; }
  Scalar neg(Scalar a) { return {fxp::saturate(-static_cast<__int128>(a.m), fmt_, &saturations_)}; }
  Scalar mul(Scalar a, Scalar b) {
    return {fxp::saturate(fxp::round_shift(static_cast<__int128>(a.m) * b.m, fmt_.frac_bits), fmt_, &saturations_)};
  }
  Scalar dot(std::span<const Scalar> a, std::span<const Scalar> b) { return dot_scaled(a, b, 0); }
  Scalar dot_scaled(std::span<const Scalar> a, std::span<const Scalar> b, int shift);
  /// Converts to double, divides, and re-quantizes (a floating-point divider).
  Scalar reciprocal(Scalar a);
  std::pair<Scalar, Scalar> sincos(Scalar a);
  Scalar ldexp(Scalar a, int k);
  int ilogb(Scalar a) const;

  void stage(Module, Pass, int) {}
  void channel(Channel) {}

 private:
  FxpFormat fmt_;
  Rounding rounding_;
  std::uint64_t saturations_ = 0;
};

/// Operation counts of one pipeline unit.
struct OpCounts {
  std::int64_t macs = 0;
  std::int64_t divisions = 0;
};

using UnitKey = std::tuple<Module, Pass, int>;

/// Symbolic binding that tracks structural zeros and units and counts the
/// multiplications and divisions that survive them, per (module, pass, joint).
class CountingArith {
 public:
  enum class Sym : std::uint8_t { Zero, One, MinusOne, General };
  using Scalar = Sym;

  Scalar constant(double x) const {
    if (x == 0.0) return Sym::Zero;
    if (x == 1.0) return Sym::One;
    if (x == -1.0) return Sym::MinusOne;
    return Sym::General;
  }
  Scalar input(double) const { return Sym::General; }
  Scalar zero() const { return Sym::Zero; }
  double to_real(Scalar x) const {
    switch (x) {
      case Sym::Zero:
        return 0.0;
      case Sym::MinusOne:
        return -1.0;
      default:
        return 1.0;
    }
  }

  Scalar add(Scalar a, Scalar b) const {
    if (a == Sym::Zero) return b;
    if (b == Sym::Zero) return a;
    return Sym::General;
  }
  Scalar neg(Scalar a) const {
    if (a == Sym::One) return Sym::MinusOne;
    if (a == Sym::MinusOne) return Sym::One;
    return a;
  }
  Scalar sub(Scalar a, Scalar b) const { return add(a, neg(b)); }
  Scalar mul(Scalar a, Scalar b);
  Scalar dot(std::span<const Scalar> a, std::span<const Scalar> b);
  Scalar dot_scaled(std::span<const Scalar> a, std::span<const Scalar> b, int) {
    const Scalar r = dot(a, b);
    return r == Sym::Zero ? r : Sym::General;
  }
  Scalar reciprocal(Scalar a);
  std::pair<Scalar, Scalar> sincos(Scalar) const { return {Sym::General, Sym::General}; }
  Scalar ldexp(Scalar a, int) const { return a == Sym::Zero ? a : Sym::General; }
  int ilogb(Scalar) const { return 0; }

  void stage(Module m, Pass p, int joint) { unit_ = {m, p, joint}; }
  void channel(Channel c) { channel_ = c; }

  const std::map<UnitKey, OpCounts>& counts() const { return counts_; }
  OpCounts total(Module m) const;
  OpCounts total(Module m, Pass p) const;
  void clear() { counts_.clear(); }

 private:
  OpCounts* slot();

  UnitKey unit_{Module::Rnea, Pass::Forward, 0};
  Channel channel_ = Channel::Value;
  std::map<UnitKey, OpCounts> counts_;
};

/// Double binding that records the largest magnitude produced in each unit
/// and rejects non-finite intermediates.
class RangeArith {
 public:
  using Scalar = double;

  Scalar constant(double x) { return observe(x); }
  Scalar input(double x) { return observe(x); }
  Scalar zero() const { return 0.0; }
  double to_real(Scalar x) const { return x; }

  Scalar add(Scalar a, Scalar b) { return observe(a + b); }
  Scalar sub(Scalar a, Scalar b) { return observe(a - b); }
  Scalar neg(Scalar a) { return -a; }
  Scalar mul(Scalar a, Scalar b) { return observe(a * b); }
  Scalar dot(std::span<const Scalar> a, std::span<const Scalar> b) { return observe(RealArith{}.dot(a, b)); }
  Scalar dot_scaled(std::span<const Scalar> a, std::span<const Scalar> b, int shift) {
    return observe(RealArith{}.dot_scaled(a, b, shift));
  }
  Scalar reciprocal(Scalar a) { return observe(1.0 / a); }
  std::pair<Scalar, Scalar> sincos(Scalar a) { return {observe(std::sin(a)), observe(std::cos(a))}; }
  Scalar ldexp(Scalar a, int k) { return observe(std::ldexp(a, k)); }
  int ilogb(Scalar a) const { return RealArith{}.ilogb(a); }

  void stage(Module m, Pass p, int joint) { unit_ = {m, p, joint}; }
  void channel(Channel) {}

  /// Largest |value| seen per (module, pass).
  const std::map<std::pair<Module, Pass>, double>& max_abs() const { return max_abs_; }
  double overall_max() const;
  void merge(const RangeArith& other);

 private:
  Scalar observe(Scalar x);

  UnitKey unit_{Module::Rnea, Pass::Forward, 0};
  std::map<std::pair<Module, Pass>, double> max_abs_;
};

class RangeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Forward-mode dual number over any binding, with one tangent direction.
template <class Base>
class DualArith {
 public:
  using B = typename Base::Scalar;
  struct Scalar {
    B v{};
    B d{};
  };

  explicit DualArith(Base& base) : b_(base) {}
  Base& base() { return b_; }

  /// Counting hook: value operations can be muted when repeated across directions.
  void set_value_channel(Channel c) { value_channel_ = c; }

  Scalar make(B v, B d) const { return {v, d}; }
  Scalar constant(double x) {
    val();
    return {b_.constant(x), b_.zero()};
  }
  Scalar input(double x) {
    val();
    return {b_.input(x), b_.zero()};
  }
  Scalar zero() const { return {b_.zero(), b_.zero()}; }
  double to_real(Scalar x) const { return b_.to_real(x.v); }

  Scalar add(Scalar x, Scalar y) {
    val();
    B v = b_.add(x.v, y.v);
    tan();
    return {v, b_.add(x.d, y.d)};
  }
  Scalar sub(Scalar x, Scalar y) {
    val();
    B v = b_.sub(x.v, y.v);
    tan();
    return {v, b_.sub(x.d, y.d)};
  }
  Scalar neg(Scalar x) {
    val();
    B v = b_.neg(x.v);
    tan();
    return {v, b_.neg(x.d)};
  }
  Scalar mul(Scalar x, Scalar y) {
    val();
    B v = b_.mul(x.v, y.v);
    tan();
    const std::array<B, 2> l{x.v, x.d};
    const std::array<B, 2> r{y.d, y.v};
    return {v, b_.dot(l, r)};
  }
  Scalar dot(std::span<const Scalar> x, std::span<const Scalar> y) { return dot_scaled(x, y, 0); }
  Scalar dot_scaled(std::span<const Scalar> x, std::span<const Scalar> y, int shift) {
    const std::size_t n = x.size();
    B xs[64], ys[64];
    B xt[128], yt[128];
    if (n > 64) throw std::invalid_argument("dual dot product longer than 64 terms");
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = x[i].v;
      ys[i] = y[i].v;
      xt[i] = x[i].v;
      yt[i] = y[i].d;
      xt[n + i] = x[i].d;
      yt[n + i] = y[i].v;
    }
    val();
    B v = b_.dot_scaled(std::span<const B>(xs, n), std::span<const B>(ys, n), shift);
    tan();
    return {v, b_.dot_scaled(std::span<const B>(xt, 2 * n), std::span<const B>(yt, 2 * n), shift)};
  }
  Scalar reciprocal(Scalar x) {
    val();
    B r = b_.reciprocal(x.v);
    tan();
    return {r, b_.neg(b_.mul(b_.mul(r, r), x.d))};
  }
  std::pair<Scalar, Scalar> sincos(Scalar x) {
    val();
    auto [s, c] = b_.sincos(x.v);
    tan();
    return {{s, b_.mul(c, x.d)}, {c, b_.neg(b_.mul(s, x.d))}};
  }
  Scalar ldexp(Scalar x, int k) {
    val();
    B v = b_.ldexp(x.v, k);
    tan();
    return {v, b_.ldexp(x.d, k)};
  }
  int ilogb(Scalar x) const { return b_.ilogb(x.v); }

  void stage(Module m, Pass p, int joint) { b_.stage(m, p, joint); }
  void channel(Channel) {}

 private:
  void val() { b_.channel(value_channel_); }
  void tan() { b_.channel(Channel::Tangent); }

  Base& b_;
  Channel value_channel_ = Channel::Value;
};

}  // namespace qrbd

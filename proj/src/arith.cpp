#include "qrbd/arith.hpp"

#include <algorithm>
#include <bit>
#include <sstream>

namespace qrbd {

const char* to_string(Module m) {
  switch (m) {
    case Module::Rnea:
      return "rnea";
    case Module::DeltaRnea:
      return "delta_rnea";
    case Module::Minv:
      return "minv";
  }
  return "?";
}

const char* to_string(Pass p) {
  switch (p) {
    case Pass::Forward:
      return "forward";
    case Pass::Backward:
      return "backward";
    case Pass::Divider:
      return "divider";
  }
  return "?";
}

FixedArith::FixedArith(FxpFormat fmt, Rounding rounding) : fmt_(fmt), rounding_(rounding) { fmt_.validate(); }

FixedArith::Scalar FixedArith::dot_scaled(std::span<const Scalar> a, std::span<const Scalar> b, int shift) {
  const int f = fmt_.frac_bits;
  if (rounding_ == Rounding::PerChain) {
    __int128 acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<__int128>(a[i].m) * b[i].m;
    return {fxp::saturate(fxp::round_shift(acc, f - shift), fmt_, &saturations_)};
  }
  __int128 acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto p = fxp::saturate(fxp::round_shift(static_cast<__int128>(a[i].m) * b[i].m, f), fmt_, &saturations_);
    acc = fxp::saturate(acc + p, fmt_, &saturations_);
  }
  return ldexp({static_cast<std::int64_t>(acc)}, shift);
}

FixedArith::Scalar FixedArith::reciprocal(Scalar a) {
  if (a.m == 0) {
    ++saturations_;
    return {fmt_.max_mantissa()};
  }
  return {fxp::quantize_mantissa(1.0 / to_real(a), fmt_, &saturations_)};
}

std::pair<FixedArith::Scalar, FixedArith::Scalar> FixedArith::sincos(Scalar a) {
  const double x = to_real(a);
  return {{fxp::quantize_mantissa(std::sin(x), fmt_, &saturations_)},
          {fxp::quantize_mantissa(std::cos(x), fmt_, &saturations_)}};
}

FixedArith::Scalar FixedArith::ldexp(Scalar a, int k) {
  if (k >= 0) {
    if (a.m == 0) return a;
    if (k > 62) return {fxp::saturate(a.m > 0 ? fmt_.max_mantissa() + __int128{1} : fmt_.min_mantissa() - __int128{1}, fmt_, &saturations_)};
    return {fxp::saturate(static_cast<__int128>(a.m) << k, fmt_, &saturations_)};
  }
  return {static_cast<std::int64_t>(fxp::round_shift(a.m, -k))};
}

int FixedArith::ilogb(Scalar a) const {
  if (a.m == 0) return 0;
  const auto mag = static_cast<std::uint64_t>(a.m < 0 ? -a.m : a.m);
  return (63 - std::countl_zero(mag)) - fmt_.frac_bits;
}

OpCounts* CountingArith::slot() {
  if (channel_ == Channel::Muted) return nullptr;
  UnitKey key = unit_;
  if (channel_ == Channel::Tangent) std::get<0>(key) = Module::DeltaRnea;
  return &counts_[key];
}

CountingArith::Scalar CountingArith::mul(Scalar a, Scalar b) {
  if (a == Sym::Zero || b == Sym::Zero) return Sym::Zero;
  if (a == Sym::One) return b;
  if (a == Sym::MinusOne) return neg(b);
  if (b == Sym::One) return a;
  if (b == Sym::MinusOne) return neg(a);
  if (auto* s = slot()) ++s->macs;
  return Sym::General;
}

CountingArith::Scalar CountingArith::dot(std::span<const Scalar> a, std::span<const Scalar> b) {
  Scalar acc = Sym::Zero;
  for (std::size_t i = 0; i < a.size(); ++i) acc = add(acc, mul(a[i], b[i]));
  return acc;
}

CountingArith::Scalar CountingArith::reciprocal(Scalar a) {
  if (a == Sym::Zero) throw std::domain_error("reciprocal of a structural zero");
  if (auto* s = slot()) ++s->divisions;
  return a == Sym::One || a == Sym::MinusOne ? a : Sym::General;
}

OpCounts CountingArith::total(Module m) const {
  OpCounts out;
  for (const auto& [key, c] : counts_) {
    if (std::get<0>(key) != m) continue;
    out.macs += c.macs;
    out.divisions += c.divisions;
  }
  return out;
}

OpCounts CountingArith::total(Module m, Pass p) const {
  OpCounts out;
  for (const auto& [key, c] : counts_) {
    if (std::get<0>(key) != m || std::get<1>(key) != p) continue;
    out.macs += c.macs;
    out.divisions += c.divisions;
  }
  return out;
}

double RangeArith::observe(double x) {
  if (!std::isfinite(x)) {
    std::ostringstream msg;
    msg << "non-finite intermediate in " << to_string(std::get<0>(unit_)) << " " << to_string(std::get<1>(unit_))
        << " pass at joint " << std::get<2>(unit_);
    throw RangeError(msg.str());
  }
  auto& slot = max_abs_[{std::get<0>(unit_), std::get<1>(unit_)}];
  slot = std::max(slot, std::abs(x));
  return x;
}

double RangeArith::overall_max() const {
  double m = 0.0;
  for (const auto& [key, v] : max_abs_) m = std::max(m, v);
  return m;
}

void RangeArith::merge(const RangeArith& other) {
  for (const auto& [key, v] : other.max_abs_) {
    auto& slot = max_abs_[key];
    slot = std::max(slot, v);
  }
}

}  // namespace qrbd

#pragma once

// Rigid-body dynamics kernels written once over an arithmetic binding (see arith.hpp).
// Matrices are row-major std::vector<Scalar>; derivative blocks are column-major.

#include <array>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrbd/arith.hpp"
#include "qrbd/robot_model.hpp"

namespace qrbd {

template <class S>
using Vec6 = std::array<S, 6>;
template <class S>
using Mat6 = std::array<S, 36>;

class KernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MinvMethod { Original, Deferred };

/// Model constants converted once into a binding's scalar type.
template <class A>
struct KernelModel {
  using S = typename A::Scalar;
  int n = 0;
  std::vector<int> parent;
  std::vector<int> subtree_end;
  std::vector<int> axis;  ///< index of the one-hot motion subspace entry
  std::vector<bool> prismatic;
  std::vector<Mat6<S>> xtree;
  std::vector<Mat6<S>> inertia;
  Vec6<S> base_accel{};  ///< -g, the base acceleration that injects gravity
};

namespace detail {

inline double snap_constant(double x) {
  constexpr double kTol = 1e-12;
  if (std::abs(x) < kTol) return 0.0;
  if (std::abs(x - 1.0) < kTol) return 1.0;
  if (std::abs(x + 1.0) < kTol) return -1.0;
  return x;
}

template <class A, class S = typename A::Scalar>
Mat6<S> constant_matrix(A& ar, const SpatialMatrix& m) {
  Mat6<S> out;
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) out[static_cast<std::size_t>(r * 6 + c)] = ar.constant(snap_constant(m(r, c)));
  return out;
}

template <class S>
std::span<const S> row(const Mat6<S>& m, int r) {
  return std::span<const S>(m.data() + r * 6, 6);
}

}  // namespace detail

template <class A>
KernelModel<A> make_kernel_model(A& ar, const RobotModel& model) {
  KernelModel<A> km;
  km.n = model.size();
  for (int i = 0; i < km.n; ++i) {
    const Link& l = model.link(i);
    km.parent.push_back(l.parent);
    km.subtree_end.push_back(model.subtree_end(i));
    km.axis.push_back(l.joint.subspace_index());
    km.prismatic.push_back(l.joint.kind == JointKind::Prismatic);
    km.xtree.push_back(detail::constant_matrix(ar, l.joint.placement.motion_matrix()));
    km.inertia.push_back(detail::constant_matrix(ar, l.spatial_inertia()));
  }
  const Vector3& g = model.gravity();
  km.base_accel = {ar.zero(), ar.zero(), ar.zero(), ar.constant(-g.x()), ar.constant(-g.y()), ar.constant(-g.z())};
  return km;
}

/// Re-expresses constants of a base binding as duals with zero tangent.
template <class A>
KernelModel<DualArith<A>> lift(const KernelModel<A>& km, DualArith<A>& dar) {
  KernelModel<DualArith<A>> out;
  out.n = km.n;
  out.parent = km.parent;
  out.subtree_end = km.subtree_end;
  out.axis = km.axis;
  out.prismatic = km.prismatic;
  auto z = dar.base().zero();
  auto lift_mat = [&](const auto& m) {
    Mat6<typename DualArith<A>::Scalar> r;
    for (std::size_t k = 0; k < 36; ++k) r[k] = dar.make(m[k], z);
    return r;
  };
  for (int i = 0; i < km.n; ++i) {
    out.xtree.push_back(lift_mat(km.xtree[static_cast<std::size_t>(i)]));
    out.inertia.push_back(lift_mat(km.inertia[static_cast<std::size_t>(i)]));
  }
  for (std::size_t k = 0; k < 6; ++k) out.base_accel[k] = dar.make(km.base_accel[k], z);
  return out;
}

// ---- spatial helpers over a binding ----

template <class A, class S = typename A::Scalar>
Vec6<S> zero_vec(A& ar) {
  Vec6<S> v;
  v.fill(ar.zero());
  return v;
}

template <class A, class S = typename A::Scalar>
Vec6<S> matvec(A& ar, const Mat6<S>& m, const Vec6<S>& v) {
  Vec6<S> out;
  for (int r = 0; r < 6; ++r) out[static_cast<std::size_t>(r)] = ar.dot(detail::row(m, r), std::span<const S>(v));
  return out;
}

template <class A, class S = typename A::Scalar>
Vec6<S> matTvec(A& ar, const Mat6<S>& m, const Vec6<S>& v) {
  Vec6<S> out;
  std::array<S, 6> col;
  for (int c = 0; c < 6; ++c) {
    for (int r = 0; r < 6; ++r) col[static_cast<std::size_t>(r)] = m[static_cast<std::size_t>(r * 6 + c)];
    out[static_cast<std::size_t>(c)] = ar.dot(std::span<const S>(col), std::span<const S>(v));
  }
  return out;
}

template <class A, class S = typename A::Scalar>
Vec6<S> add_vec(A& ar, const Vec6<S>& a, const Vec6<S>& b) {
  Vec6<S> out;
  for (std::size_t k = 0; k < 6; ++k) out[k] = ar.add(a[k], b[k]);
  return out;
}

/// a x b for 3-vectors stored at offsets of 6-vectors.
template <class A, class S = typename A::Scalar>
S cross_term(A& ar, const S& a1, const S& b2, const S& a2, const S& b1) {
  const std::array<S, 2> l{a1, ar.neg(a2)};
  const std::array<S, 2> r{b2, b1};
  return ar.dot(std::span<const S>(l), std::span<const S>(r));
}

/// v x m (motion cross product).
template <class A, class S = typename A::Scalar>
Vec6<S> cross_motion(A& ar, const Vec6<S>& v, const Vec6<S>& m) {
  Vec6<S> out;
  out[0] = cross_term(ar, v[1], m[2], v[2], m[1]);
  out[1] = cross_term(ar, v[2], m[0], v[0], m[2]);
  out[2] = cross_term(ar, v[0], m[1], v[1], m[0]);
  for (int c = 0; c < 3; ++c) {
    const int a = (c + 1) % 3, b = (c + 2) % 3;
    const std::array<S, 4> l{v[a], ar.neg(v[b]), v[3 + a], ar.neg(v[3 + b])};
    const std::array<S, 4> r{m[3 + b], m[3 + a], m[b], m[a]};
    out[static_cast<std::size_t>(3 + c)] = ar.dot(std::span<const S>(l), std::span<const S>(r));
  }
  return out;
}

/// v x* f (force cross product).
template <class A, class S = typename A::Scalar>
Vec6<S> cross_force(A& ar, const Vec6<S>& v, const Vec6<S>& f) {
  Vec6<S> out;
  for (int c = 0; c < 3; ++c) {
    const int a = (c + 1) % 3, b = (c + 2) % 3;
    const std::array<S, 4> l{v[a], ar.neg(v[b]), v[3 + a], ar.neg(v[3 + b])};
    const std::array<S, 4> r{f[b], f[a], f[3 + b], f[3 + a]};
    out[static_cast<std::size_t>(c)] = ar.dot(std::span<const S>(l), std::span<const S>(r));
    out[static_cast<std::size_t>(3 + c)] = cross_term(ar, v[a], f[3 + b], v[b], f[3 + a]);
  }
  return out;
}

/// v x (e_k s): the motion cross product with a one-hot subspace vector.
template <class A, class S = typename A::Scalar>
Vec6<S> cross_motion_axis(A& ar, const Vec6<S>& v, int k, const S& s) {
  Vec6<S> out = zero_vec(ar);
  if (k == 2) {
    out[0] = ar.mul(v[1], s);
    out[1] = ar.neg(ar.mul(v[0], s));
    out[3] = ar.mul(v[4], s);
    out[4] = ar.neg(ar.mul(v[3], s));
  } else {
    out[3] = ar.mul(v[1], s);
    out[4] = ar.neg(ar.mul(v[0], s));
  }
  return out;
}

/// ^iX_λ(q_i) as a dense 6x6 built from the joint motion and the tree transform.
template <class A, class S = typename A::Scalar>
Mat6<S> joint_x(A& ar, const KernelModel<A>& km, int i, const S& q) {
  const Mat6<S>& t = km.xtree[static_cast<std::size_t>(i)];
  Mat6<S> x = t;
  if (!km.prismatic[static_cast<std::size_t>(i)]) {
    auto [s, c] = ar.sincos(q);
    const S ns = ar.neg(s);
    for (int blk = 0; blk < 6; blk += 3) {
      for (int col = 0; col < 6; ++col) {
        const S r0 = t[static_cast<std::size_t>(blk * 6 + col)];
        const S r1 = t[static_cast<std::size_t>((blk + 1) * 6 + col)];
        const std::array<S, 2> a0{c, s}, a1{ns, c}, b{r0, r1};
        x[static_cast<std::size_t>(blk * 6 + col)] = ar.dot(std::span<const S>(a0), std::span<const S>(b));
        x[static_cast<std::size_t>((blk + 1) * 6 + col)] = ar.dot(std::span<const S>(a1), std::span<const S>(b));
      }
    }
  } else {
    for (int col = 0; col < 6; ++col) {
      const auto at = [&](int r) { return t[static_cast<std::size_t>(r * 6 + col)]; };
      x[static_cast<std::size_t>(18 + col)] = ar.add(at(3), ar.mul(q, at(1)));
      x[static_cast<std::size_t>(24 + col)] = ar.sub(at(4), ar.mul(q, at(0)));
    }
  }
  return x;
}

// ---- RNEA ----

template <class S>
struct RneaTrace {
  std::vector<Vec6<S>> v, a, f;
};

/// Inverse dynamics tau = M(q) qdd + C(q, qd, fext). `fext` is in link coordinates
/// and may be null. With `gravity` false the base acceleration is zero.
template <class A, class S = typename A::Scalar>
std::vector<S> rnea(A& ar, const KernelModel<A>& km, const std::vector<S>& q, const std::vector<S>& qd,
                    const std::vector<S>& qdd, const std::vector<Vec6<typename A::Scalar>>* fext, bool gravity,
                    RneaTrace<S>* trace = nullptr) {
  const int n = km.n;
  if (static_cast<int>(q.size()) != n || static_cast<int>(qd.size()) != n || static_cast<int>(qdd.size()) != n ||
      (fext && static_cast<int>(fext->size()) != n)) {
    throw std::invalid_argument("rnea: state dimension does not match the model (" + std::to_string(n) + " joints)");
  }
  std::vector<Mat6<S>> xs(static_cast<std::size_t>(n));
  std::vector<Vec6<S>> v(static_cast<std::size_t>(n)), a(static_cast<std::size_t>(n)), f(static_cast<std::size_t>(n));
  const Vec6<S> a0 = gravity ? km.base_accel : zero_vec(ar);
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    ar.stage(Module::Rnea, Pass::Forward, i);
    const int p = km.parent[ui];
    const int k = km.axis[ui];
    xs[ui] = joint_x(ar, km, i, q[ui]);
    if (p < 0) {
      v[ui] = zero_vec(ar);
      v[ui][static_cast<std::size_t>(k)] = qd[ui];
      a[ui] = matvec(ar, xs[ui], a0);
    } else {
      v[ui] = matvec(ar, xs[ui], v[static_cast<std::size_t>(p)]);
      v[ui][static_cast<std::size_t>(k)] = ar.add(v[ui][static_cast<std::size_t>(k)], qd[ui]);
      a[ui] = matvec(ar, xs[ui], a[static_cast<std::size_t>(p)]);
    }
    a[ui][static_cast<std::size_t>(k)] = ar.add(a[ui][static_cast<std::size_t>(k)], qdd[ui]);
    if (p >= 0) a[ui] = add_vec(ar, a[ui], cross_motion_axis(ar, v[ui], k, qd[ui]));
    const Mat6<S>& inertia = km.inertia[ui];
    const Vec6<S> iv = matvec(ar, inertia, v[ui]);
    f[ui] = add_vec(ar, matvec(ar, inertia, a[ui]), cross_force(ar, v[ui], iv));
    if (fext) {
      for (std::size_t c = 0; c < 6; ++c) f[ui][c] = ar.sub(f[ui][c], (*fext)[ui][c]);
    }
  }
  if (trace) {
    trace->v = v;
    trace->a = a;
  }
  std::vector<S> tau(static_cast<std::size_t>(n));
  for (int i = n - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    ar.stage(Module::Rnea, Pass::Backward, i);
    tau[ui] = f[ui][static_cast<std::size_t>(km.axis[ui])];
    const int p = km.parent[ui];
    if (p >= 0) {
      f[static_cast<std::size_t>(p)] = add_vec(ar, f[static_cast<std::size_t>(p)], matTvec(ar, xs[ui], f[ui]));
    }
  }
  if (trace) trace->f = f;
  return tau;
}

template <class A, class S = typename A::Scalar>
std::vector<S> zeros(A& ar, int n) {
  return std::vector<S>(static_cast<std::size_t>(n), ar.zero());
}

/// Joint-space inertia matrix by unit-acceleration inverse dynamics (row-major).
template <class A, class S = typename A::Scalar>
std::vector<S> mass_matrix(A& ar, const KernelModel<A>& km, const std::vector<S>& q) {
  const int n = km.n;
  const std::vector<S> z = zeros(ar, n);
  const std::vector<S> bias = rnea(ar, km, q, z, z, nullptr, false);
  std::vector<S> m(static_cast<std::size_t>(n * n));
  std::vector<S> e = z;
  for (int j = 0; j < n; ++j) {
    e[static_cast<std::size_t>(j)] = ar.constant(1.0);
    const std::vector<S> col = rnea(ar, km, q, z, e, nullptr, false);
    e[static_cast<std::size_t>(j)] = ar.zero();
    for (int i = 0; i < n; ++i) {
      m[static_cast<std::size_t>(i * n + j)] = ar.sub(col[static_cast<std::size_t>(i)], bias[static_cast<std::size_t>(i)]);
    }
  }
  return m;
}

// ---- analytical inverse of the mass matrix ----

template <class S>
struct MinvWorkspace {
  std::vector<S> d;      ///< articulated pivots D_i (deferred: the scaled pivot)
  std::vector<S> dinv;   ///< reciprocals actually computed by the divider
  std::vector<S> alpha;  ///< transfer coefficients (all one for the original algorithm)
  int backward_divisions = 0;
  int total_reciprocals = 0;
};

namespace detail {

template <class A, class S = typename A::Scalar>
void check_pivot(A& ar, const S& d, int i) {
  if (!(ar.to_real(d) > 0.0)) {
    throw KernelError("non-positive articulated pivot D at joint " + std::to_string(i) +
                      " (inertia data or quantization is inconsistent)");
  }
}

/// X^T M X for symmetric spatial M.
template <class A, class S = typename A::Scalar>
Mat6<S> congruence(A& ar, const Mat6<S>& x, const Mat6<S>& m) {
  Mat6<S> mx;
  std::array<S, 6> col;
  for (int c = 0; c < 6; ++c) {
    for (int r = 0; r < 6; ++r) col[static_cast<std::size_t>(r)] = x[static_cast<std::size_t>(r * 6 + c)];
    for (int r = 0; r < 6; ++r) mx[static_cast<std::size_t>(r * 6 + c)] = ar.dot(row(m, r), std::span<const S>(col));
  }
  Mat6<S> out;
  std::array<S, 6> xc, mc;
  for (int r = 0; r < 6; ++r) {
    for (int k = 0; k < 6; ++k) xc[static_cast<std::size_t>(k)] = x[static_cast<std::size_t>(k * 6 + r)];
    for (int c = 0; c < 6; ++c) {
      for (int k = 0; k < 6; ++k) mc[static_cast<std::size_t>(k)] = mx[static_cast<std::size_t>(k * 6 + c)];
      out[static_cast<std::size_t>(r * 6 + c)] = ar.dot(std::span<const S>(xc), std::span<const S>(mc));
    }
  }
  return out;
}

template <class A, class S = typename A::Scalar>
std::vector<S> minv_forward(A& ar, const KernelModel<A>& km, const std::vector<Mat6<S>>& xs,
                            const std::vector<Vec6<S>>& u, const std::vector<S>& scale, std::vector<S>& m,
                            bool scale_whole_row) {
  // Original: M[i][j] -= scale_i * U_i . X P_λ[j]. Deferred: M[i][j] = scale_i * (M[i][j] - U_i . X P_λ[j]).
  const int n = km.n;
  std::vector<std::vector<Vec6<S>>> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    ar.stage(Module::Minv, Pass::Forward, i);
    const int par = km.parent[ui];
    const int k = km.axis[ui];
    p[ui].resize(static_cast<std::size_t>(n - i));
    for (int j = i; j < n; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      Vec6<S> xp = zero_vec(ar);
      S& mij = m[ui * static_cast<std::size_t>(n) + uj];
      if (par >= 0) {
        xp = matvec(ar, xs[ui], p[static_cast<std::size_t>(par)][static_cast<std::size_t>(j - par)]);
        const S ux = ar.dot(std::span<const S>(u[ui]), std::span<const S>(xp));
        if (scale_whole_row) {
          mij = ar.mul(scale[ui], ar.sub(mij, ux));
        } else {
          mij = ar.sub(mij, ar.mul(scale[ui], ux));
        }
      } else if (scale_whole_row) {
        mij = ar.mul(scale[ui], mij);
      }
      xp[static_cast<std::size_t>(k)] = ar.add(xp[static_cast<std::size_t>(k)], mij);
      p[ui][static_cast<std::size_t>(j - i)] = xp;
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      m[static_cast<std::size_t>(j * n + i)] = m[static_cast<std::size_t>(i * n + j)];
  return m;
}

}  // namespace detail

/// Analytical M^-1 with the pivot reciprocal taken inline in the backward pass.
template <class A, class S = typename A::Scalar>
std::vector<S> minv_original(A& ar, const KernelModel<A>& km, const std::vector<S>& q,
                             MinvWorkspace<S>* ws = nullptr) {
  const int n = km.n;
  if (static_cast<int>(q.size()) != n) throw std::invalid_argument("minv: q dimension does not match the model");
  const auto un = static_cast<std::size_t>(n);
  std::vector<S> m(un * un, ar.zero());
  std::vector<Mat6<S>> ia = km.inertia;
  std::vector<Mat6<S>> xs(un);
  std::vector<Vec6<S>> u(un);
  std::vector<S> d(un), dinv(un);
  std::vector<std::vector<Vec6<S>>> f(un);
  for (int i = 0; i < n; ++i) f[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(km.subtree_end[static_cast<std::size_t>(i)] - i), zero_vec(ar));
  int divisions = 0;

  for (int i = n - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    ar.stage(Module::Minv, Pass::Backward, i);
    const int k = km.axis[ui];
    const int par = km.parent[ui];
    const int end = km.subtree_end[ui];
    xs[ui] = joint_x(ar, km, i, q[ui]);
    for (int r = 0; r < 6; ++r) u[ui][static_cast<std::size_t>(r)] = ia[ui][static_cast<std::size_t>(r * 6 + k)];
    d[ui] = u[ui][static_cast<std::size_t>(k)];
    detail::check_pivot(ar, d[ui], i);
    dinv[ui] = ar.reciprocal(d[ui]);
    ++divisions;
    m[ui * un + ui] = dinv[ui];
    for (int j = i + 1; j < end; ++j) {
      m[ui * un + static_cast<std::size_t>(j)] =
          ar.neg(ar.mul(dinv[ui], f[ui][static_cast<std::size_t>(j - i)][static_cast<std::size_t>(k)]));
    }
    if (par < 0) continue;
    const auto up = static_cast<std::size_t>(par);
    for (int j = i; j < end; ++j) {
      auto& fj = f[ui][static_cast<std::size_t>(j - i)];
      const S mij = m[ui * un + static_cast<std::size_t>(j)];
      for (std::size_t r = 0; r < 6; ++r) fj[r] = ar.add(fj[r], ar.mul(u[ui][r], mij));
      auto& target = f[up][static_cast<std::size_t>(j - par)];
      target = add_vec(ar, target, matTvec(ar, xs[ui], fj));
    }
    Vec6<S> w;
    for (std::size_t r = 0; r < 6; ++r) w[r] = ar.mul(u[ui][r], dinv[ui]);
    Mat6<S> art;
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t c = 0; c < 6; ++c) art[r * 6 + c] = ar.sub(ia[ui][r * 6 + c], ar.mul(w[r], u[ui][c]));
    const Mat6<S> moved = detail::congruence(ar, xs[ui], art);
    for (std::size_t e = 0; e < 36; ++e) ia[up][e] = ar.add(ia[up][e], moved[e]);
  }
  detail::minv_forward(ar, km, xs, u, dinv, m, false);
  if (ws) {
    ws->d = d;
    ws->dinv = dinv;
    ws->alpha.assign(un, ar.constant(1.0));
    ws->backward_divisions = divisions;
    ws->total_reciprocals = divisions;
  }
  return m;
}

/// Analytical M^-1 with division deferred: the backward pass carries every
/// articulated quantity scaled by a transfer coefficient alpha, the divider
/// runs once per joint between the passes, and the forward pass resolves the
/// pending factors. Power-of-two renormalization keeps alpha in [1, 2).
template <class A, class S = typename A::Scalar>
std::vector<S> minv_deferred(A& ar, const KernelModel<A>& km, const std::vector<S>& q,
                             MinvWorkspace<S>* ws = nullptr) {
  const int n = km.n;
  if (static_cast<int>(q.size()) != n) throw std::invalid_argument("minv: q dimension does not match the model");
  const auto un = static_cast<std::size_t>(n);
  std::vector<S> m(un * un, ar.zero());
  std::vector<Mat6<S>> it = km.inertia;
  std::vector<Mat6<S>> xs(un);
  std::vector<Vec6<S>> u(un);
  std::vector<S> alpha(un, ar.constant(1.0)), beta(un), dt(un);
  std::vector<std::vector<Vec6<S>>> fh(un);
  for (int i = 0; i < n; ++i) fh[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(km.subtree_end[static_cast<std::size_t>(i)] - i), zero_vec(ar));

  auto renormalize = [&](std::size_t j) {
    const int e = ar.ilogb(alpha[j]);
    if (e == 0) return;
    alpha[j] = ar.ldexp(alpha[j], -e);
    for (auto& x : it[j]) x = ar.ldexp(x, -e);
    for (auto& col : fh[j])
      for (auto& x : col) x = ar.ldexp(x, -e);
  };

  for (int i = n - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    ar.stage(Module::Minv, Pass::Backward, i);
    const int k = km.axis[ui];
    const auto uk = static_cast<std::size_t>(k);
    const int par = km.parent[ui];
    const int end = km.subtree_end[ui];
    xs[ui] = joint_x(ar, km, i, q[ui]);
    for (int r = 0; r < 6; ++r) u[ui][static_cast<std::size_t>(r)] = it[ui][static_cast<std::size_t>(r * 6 + k)];
    dt[ui] = u[ui][uk];
    detail::check_pivot(ar, dt[ui], i);
    beta[ui] = ar.mul(alpha[ui], dt[ui]);
    // Pending row, resolved by 1/(alpha D~) after the divider.
    m[ui * un + ui] = alpha[ui];
    for (int j = i + 1; j < end; ++j) m[ui * un + static_cast<std::size_t>(j)] = ar.neg(fh[ui][static_cast<std::size_t>(j - i)][uk]);
    if (par < 0) continue;
    const auto up = static_cast<std::size_t>(par);
    const int ks = -ar.ilogb(beta[ui]);
    const S bs = ar.ldexp(beta[ui], ks);
    Mat6<S> nm;
    for (std::size_t r = 0; r < 6; ++r) {
      for (std::size_t c = 0; c < 6; ++c) {
        const std::array<S, 2> l{dt[ui], u[ui][r]};
        const std::array<S, 2> rr{it[ui][r * 6 + c], ar.neg(u[ui][c])};
        nm[r * 6 + c] = ar.dot_scaled(std::span<const S>(l), std::span<const S>(rr), ks);
      }
    }
    const Mat6<S> moved = detail::congruence(ar, xs[ui], nm);
    const S ap = alpha[up];
    for (std::size_t e = 0; e < 36; ++e) {
      const std::array<S, 2> l{bs, ap};
      const std::array<S, 2> rr{it[up][e], moved[e]};
      it[up][e] = ar.dot(std::span<const S>(l), std::span<const S>(rr));
    }
    const int pend = km.subtree_end[up];
    for (int j = par; j < pend; ++j) {
      auto& target = fh[up][static_cast<std::size_t>(j - par)];
      if (j < i || j >= end) {
        for (auto& x : target) x = ar.mul(bs, x);
        continue;
      }
      Vec6<S> g;
      if (j == i) {
        for (std::size_t r = 0; r < 6; ++r) {
          const std::array<S, 1> l{alpha[ui]};
          const std::array<S, 1> rr{u[ui][r]};
          g[r] = ar.dot_scaled(std::span<const S>(l), std::span<const S>(rr), ks);
        }
      } else {
        const auto& fj = fh[ui][static_cast<std::size_t>(j - i)];
        const S nfk = ar.neg(fj[uk]);
        for (std::size_t r = 0; r < 6; ++r) {
          const std::array<S, 2> l{dt[ui], u[ui][r]};
          const std::array<S, 2> rr{fj[r], nfk};
          g[r] = ar.dot_scaled(std::span<const S>(l), std::span<const S>(rr), ks);
        }
      }
      const Vec6<S> xg = matTvec(ar, xs[ui], g);
      for (std::size_t r = 0; r < 6; ++r) {
        const std::array<S, 2> l{bs, ap};
        const std::array<S, 2> rr{target[r], xg[r]};
        target[r] = ar.dot(std::span<const S>(l), std::span<const S>(rr));
      }
    }
    alpha[up] = ar.mul(bs, ap);
    renormalize(up);
  }

  std::vector<S> r(un), scale(un);
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    ar.stage(Module::Minv, Pass::Divider, i);
    r[ui] = ar.reciprocal(beta[ui]);
  }
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    ar.stage(Module::Minv, Pass::Forward, i);
    scale[ui] = ar.mul(alpha[ui], r[ui]);
  }
  detail::minv_forward(ar, km, xs, u, scale, m, true);
  if (ws) {
    ws->d = beta;
    ws->dinv = r;
    ws->alpha = alpha;
    ws->backward_divisions = 0;
    ws->total_reciprocals = n;
  }
  return m;
}

template <class A, class S = typename A::Scalar>
std::vector<S> minv(A& ar, const KernelModel<A>& km, const std::vector<S>& q, MinvMethod method,
                    MinvWorkspace<S>* ws = nullptr) {
  return method == MinvMethod::Original ? minv_original(ar, km, q, ws) : minv_deferred(ar, km, q, ws);
}

/// Row-major n x n matrix times vector, attributed to the Minv forward units.
template <class A, class S = typename A::Scalar>
std::vector<S> minv_apply(A& ar, const std::vector<S>& m, const std::vector<S>& x) {
  const std::size_t n = x.size();
  std::vector<S> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    ar.stage(Module::Minv, Pass::Forward, static_cast<int>(i));
    out[i] = ar.dot(std::span<const S>(m.data() + i * n, n), std::span<const S>(x));
  }
  return out;
}

template <class S>
struct FdResult {
  std::vector<S> qdd;
  std::vector<S> minv;  ///< row-major
};

/// qdd = M^-1 (tau - C(q, qd, fext)).
template <class A, class S = typename A::Scalar>
FdResult<S> forward_dynamics(A& ar, const KernelModel<A>& km, const std::vector<S>& q, const std::vector<S>& qd,
                             const std::vector<S>& tau, const std::vector<Vec6<typename A::Scalar>>* fext,
                             MinvMethod method = MinvMethod::Deferred) {
  if (static_cast<int>(tau.size()) != km.n) throw std::invalid_argument("forward dynamics: tau dimension mismatch");
  const std::vector<S> bias = rnea(ar, km, q, qd, zeros(ar, km.n), fext, true);
  FdResult<S> out;
  out.minv = minv(ar, km, q, method);
  std::vector<S> rhs(tau.size());
  for (std::size_t i = 0; i < tau.size(); ++i) rhs[i] = ar.sub(tau[i], bias[i]);
  out.qdd = minv_apply(ar, out.minv, rhs);
  return out;
}

/// Partial derivatives stored column-major: entry (r, c) at c * n + r.
template <class S>
struct Derivatives {
  int n = 0;
  std::vector<S> dq;
  std::vector<S> dqd;
};

/// d tau / dq and d tau / dqd of inverse dynamics by forward-mode dual numbers,
/// one direction per pass. Value arithmetic after the first pass is reported on
/// the muted channel so symbolic counters see it once.
template <class A, class S = typename A::Scalar>
Derivatives<S> id_derivatives(A& ar, const KernelModel<A>& km, const std::vector<S>& q, const std::vector<S>& qd,
                              const std::vector<S>& qdd, const std::vector<Vec6<typename A::Scalar>>* fext = nullptr) {
  const int n = km.n;
  if (static_cast<int>(q.size()) != n || static_cast<int>(qd.size()) != n || static_cast<int>(qdd.size()) != n) {
    throw std::invalid_argument("id_derivatives: state dimension does not match the model");
  }
  using D = typename DualArith<A>::Scalar;
  DualArith<A> dar(ar);
  const auto dkm = lift(km, dar);
  const S zero = ar.zero();
  const S one = ar.constant(1.0);
  std::vector<D> dq(static_cast<std::size_t>(n)), dqd(static_cast<std::size_t>(n)), dqdd(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < dq.size(); ++i) {
    dq[i] = dar.make(q[i], zero);
    dqd[i] = dar.make(qd[i], zero);
    dqdd[i] = dar.make(qdd[i], zero);
  }
  std::vector<Vec6<D>> dfext;
  if (fext) {
    for (const auto& f : *fext) {
      Vec6<D> e;
      for (std::size_t c = 0; c < 6; ++c) e[c] = dar.make(f[c], zero);
      dfext.push_back(e);
    }
  }
  Derivatives<S> out;
  out.n = n;
  out.dq.resize(static_cast<std::size_t>(n * n));
  out.dqd.resize(static_cast<std::size_t>(n * n));
  for (int dir = 0; dir < 2 * n; ++dir) {
    dar.set_value_channel(dir == 0 ? Channel::Value : Channel::Muted);
    auto& seed = dir < n ? dq[static_cast<std::size_t>(dir)] : dqd[static_cast<std::size_t>(dir - n)];
    seed.d = one;
    const auto tau = rnea(dar, dkm, dq, dqd, dqdd, fext ? &dfext : nullptr, true);
    seed.d = zero;
    auto& dst = dir < n ? out.dq : out.dqd;
    const std::size_t col = static_cast<std::size_t>(dir < n ? dir : dir - n) * static_cast<std::size_t>(n);
    for (std::size_t r = 0; r < static_cast<std::size_t>(n); ++r) dst[col + r] = tau[r].d;
  }
  ar.channel(Channel::Value);
  return out;
}

template <class S>
struct FdDerivatives {
  std::vector<S> qdd;
  std::vector<S> minv;  ///< d qdd / d tau, row-major (symmetric)
  Derivatives<S> d;     ///< d qdd / dq and d qdd / dqd, column-major
};

/// Jacobians of forward dynamics: d qdd/dx = -M^-1 d tau/dx evaluated at qdd = FD(q, qd, tau).
template <class A, class S = typename A::Scalar>
FdDerivatives<S> fd_derivatives(A& ar, const KernelModel<A>& km, const std::vector<S>& q, const std::vector<S>& qd,
                                const std::vector<S>& tau, const std::vector<Vec6<typename A::Scalar>>* fext = nullptr,
                                MinvMethod method = MinvMethod::Deferred) {
  FdDerivatives<S> out;
  auto fd = forward_dynamics(ar, km, q, qd, tau, fext, method);
  out.qdd = std::move(fd.qdd);
  out.minv = std::move(fd.minv);
  const Derivatives<S> id = id_derivatives(ar, km, q, qd, out.qdd, fext);
  const int n = km.n;
  const auto un = static_cast<std::size_t>(n);
  out.d.n = n;
  out.d.dq.resize(un * un);
  out.d.dqd.resize(un * un);
  for (std::size_t i = 0; i < un; ++i) {
    ar.stage(Module::Minv, Pass::Forward, static_cast<int>(i));
    const std::span<const S> row(out.minv.data() + i * un, un);
    for (std::size_t c = 0; c < un; ++c) {
      out.d.dq[c * un + i] = ar.neg(ar.dot(row, std::span<const S>(id.dq.data() + c * un, un)));
      out.d.dqd[c * un + i] = ar.neg(ar.dot(row, std::span<const S>(id.dqd.data() + c * un, un)));
    }
  }
  return out;
}

}  // namespace qrbd

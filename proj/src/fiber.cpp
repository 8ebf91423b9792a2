#include "ntk_geom/fiber.hpp"

#include "ntk_geom/dense.hpp"
#include "ntk_geom/invariants.hpp"
#include "ntk_geom/ntk.hpp"

#include <unsupported/Eigen/Polynomials>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace ntk_geom {

namespace {

using cd = std::complex<double>;

double vec_norm(std::span<const double> x) {
  double s = 0.0;
  for (double a : x) s += a * a;
  return std::sqrt(s);
}

cd horner(std::span<const double> c, cd z) {
  cd acc = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) acc = acc * z + c[i];
  return acc;
}

cd horner_derivative(std::span<const double> c, cd z) {
  cd acc = 0.0;
  for (std::size_t i = c.size(); i-- > 1;) acc = acc * z + static_cast<double>(i) * c[i];
  return acc;
}

cd polish_root(std::span<const double> c, cd z) {
  double best = std::abs(horner(c, z));
  for (int it = 0; it < 8 && best > 0.0; ++it) {
    const cd d = horner_derivative(c, z);
    if (std::abs(d) == 0.0) break;
    const cd next = z - horner(c, z) / d;
    const double val = std::abs(horner(c, next));
    if (!(val < best)) break;
    z = next;
    best = val;
  }
  return z;
}

double first_significant_sign(const FilterTensor<double>& w) {
  double m = 0.0;
  for (double x : w.entries()) m = std::max(m, std::abs(x));
  for (double x : w.entries())
    if (std::abs(x) > 1e-9 * m) return x > 0.0 ? 1.0 : -1.0;
  return 1.0;
}

// ---------------------------------------------------------------------------
// Root grouping

enum class Kind { Finite, Zero, Infinity };

struct RootPoint {
  Kind kind;
  cd z;
};

std::vector<RootPoint> expand(const ProjectiveRootSet& set) {
  std::vector<RootPoint> out;
  for (const auto& c : set.finite) {
    const Kind kind = (c.z == cd(0.0, 0.0)) ? Kind::Zero : Kind::Finite;
    for (int m = 0; m < c.multiplicity; ++m) out.push_back({kind, c.z});
  }
  for (int m = 0; m < set.at_infinity; ++m) out.push_back({Kind::Infinity, cd(0.0)});
  return out;
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a > std::numbers::pi) a -= two_pi;
  if (a < -std::numbers::pi) a += two_pi;
  return a;
}

// Distance in (log|.|, arg) coordinates.
double log_polar_distance(cd a, cd b) {
  return std::max(std::abs(std::log(std::abs(a)) - std::log(std::abs(b))), std::abs(wrap_angle(std::arg(a) - std::arg(b))));
}

struct Orbit {
  std::vector<int> members;  // indices into the root list
  Kind kind = Kind::Finite;
  cd u;  // common value of z^t
};

struct Atom {
  std::vector<int> members;
  std::vector<cd> finite_u;  // roots of the layer polynomial (0 allowed)
  int infinite = 0;
  std::size_t orbit_count() const { return finite_u.size() + static_cast<std::size_t>(infinite); }
};

struct LayerChoice {
  std::vector<cd> finite_u;
  int infinite = 0;
};

class RootGrouper {
 public:
  RootGrouper(const Architecture& arch, std::vector<RootPoint> roots, double tol, std::size_t cap)
      : arch_(arch), roots_(std::move(roots)), tol_(tol), cap_(cap) {}

  std::vector<std::vector<LayerChoice>> run() {
    std::vector<int> all(roots_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    std::vector<LayerChoice> chosen(arch_.depth());
    search(static_cast<int>(arch_.depth()) - 1, all, chosen);
    return solutions_;
  }

  bool truncated() const { return truncated_; }

 private:
  std::vector<Orbit> build_orbits(const std::vector<int>& remaining, int t) const {
    std::vector<bool> used(remaining.size(), false);
    std::vector<Orbit> orbits;
    for (std::size_t a = 0; a < remaining.size(); ++a) {
      if (used[a]) continue;
      const RootPoint& r = roots_[static_cast<std::size_t>(remaining[a])];
      std::vector<std::size_t> members{a};
      bool ok = true;
      for (int m = 1; m < t && ok; ++m) {
        std::size_t best = remaining.size();
        double best_d = tol_;
        for (std::size_t b = 0; b < remaining.size(); ++b) {
          if (used[b] || std::find(members.begin(), members.end(), b) != members.end()) continue;
          const RootPoint& q = roots_[static_cast<std::size_t>(remaining[b])];
          if (q.kind != r.kind) continue;
          if (r.kind != Kind::Finite) {
            best = b;
            break;
          }
          const cd target = r.z * std::polar(1.0, 2.0 * std::numbers::pi * m / t);
          const double d = log_polar_distance(target, q.z);
          if (d <= best_d) {
            best_d = d;
            best = b;
          }
        }
        if (best == remaining.size()) {
          ok = false;
        } else {
          members.push_back(best);
        }
      }
      if (!ok) continue;
      Orbit o;
      o.kind = r.kind;
      cd sum = 0.0;
      for (std::size_t b : members) {
        used[b] = true;
        o.members.push_back(remaining[b]);
        if (r.kind == Kind::Finite) sum += std::pow(roots_[static_cast<std::size_t>(remaining[b])].z, t);
      }
      o.u = r.kind == Kind::Finite ? sum / static_cast<double>(t) : cd(0.0);
      orbits.push_back(std::move(o));
    }
    return orbits;
  }

  bool orbit_contains_near(const Orbit& o, cd z) const {
    for (int idx : o.members) {
      const cd w = roots_[static_cast<std::size_t>(idx)].z;
      if (log_polar_distance(w, z) <= tol_ || std::abs(w - z) <= tol_ * std::max(1.0, std::abs(z))) return true;
    }
    return false;
  }

  std::vector<Atom> build_atoms(const std::vector<int>& remaining, int t) const {
    const auto orbits = build_orbits(remaining, t);
    std::vector<bool> paired(orbits.size(), false);
    std::vector<Atom> atoms;
    for (std::size_t i = 0; i < orbits.size(); ++i) {
      if (paired[i]) continue;
      const Orbit& o = orbits[i];
      Atom a;
      a.members = o.members;
      if (o.kind == Kind::Infinity) {
        a.infinite = 1;
      } else if (o.kind == Kind::Zero) {
        a.finite_u.push_back(0.0);
      } else {
        const cd rho = roots_[static_cast<std::size_t>(o.members.front())].z;
        if (orbit_contains_near(o, std::conj(rho))) {
          a.finite_u.push_back(o.u.real());
        } else {
          std::size_t partner = orbits.size();
          for (std::size_t j = i + 1; j < orbits.size(); ++j) {
            if (!paired[j] && orbits[j].kind == Kind::Finite && orbit_contains_near(orbits[j], std::conj(rho))) {
              partner = j;
              break;
            }
          }
          if (partner == orbits.size()) continue;  // not conjugation closed
          paired[partner] = true;
          a.members.insert(a.members.end(), orbits[partner].members.begin(), orbits[partner].members.end());
          a.finite_u.push_back(o.u);
          a.finite_u.push_back(std::conj(o.u));
        }
      }
      paired[i] = true;
      atoms.push_back(std::move(a));
    }
    return atoms;
  }

  static std::vector<std::tuple<int, double, double>> signature(const std::vector<const Atom*>& picked) {
    std::vector<std::tuple<int, double, double>> sig;
    for (const Atom* a : picked) {
      for (const cd& u : a->finite_u) sig.emplace_back(0, u.real(), u.imag());
      for (int i = 0; i < a->infinite; ++i) sig.emplace_back(1, 0.0, 0.0);
    }
    std::sort(sig.begin(), sig.end());
    return sig;
  }

  void search(int l, const std::vector<int>& remaining, std::vector<LayerChoice>& chosen) {
    if (solutions_.size() >= cap_) {
      truncated_ = true;
      return;
    }
    if (l < 0) {
      if (remaining.empty()) solutions_.push_back(chosen);
      return;
    }
    const int t = arch_.sparse_exponent(static_cast<std::size_t>(l))[0];
    const std::size_t need = static_cast<std::size_t>(arch_.layer(static_cast<std::size_t>(l)).filter_shape[0] - 1);
    const std::vector<Atom> atoms = build_atoms(remaining, t);

    std::set<std::vector<std::tuple<int, double, double>>> seen;
    std::vector<const Atom*> picked;
    std::function<void(std::size_t, std::size_t)> pick = [&](std::size_t idx, std::size_t count) {
      if (count == need) {
        auto sig = signature(picked);
        if (!seen.insert(sig).second) return;
        LayerChoice choice;
        std::set<int> taken;
        for (const Atom* a : picked) {
          choice.finite_u.insert(choice.finite_u.end(), a->finite_u.begin(), a->finite_u.end());
          choice.infinite += a->infinite;
          taken.insert(a->members.begin(), a->members.end());
        }
        std::vector<int> rest;
        for (int r : remaining)
          if (!taken.count(r)) rest.push_back(r);
        chosen[static_cast<std::size_t>(l)] = std::move(choice);
        search(l - 1, rest, chosen);
        return;
      }
      if (idx >= atoms.size()) return;
      if (count + atoms[idx].orbit_count() <= need) {
        picked.push_back(&atoms[idx]);
        pick(idx + 1, count + atoms[idx].orbit_count());
        picked.pop_back();
      }
      pick(idx + 1, count);
    };
    pick(0, 0);
  }

  const Architecture& arch_;
  std::vector<RootPoint> roots_;
  double tol_;
  std::size_t cap_;
  std::vector<std::vector<LayerChoice>> solutions_;
  bool truncated_ = false;
};

// Coefficients (ascending) of prod (u - u_j), padded with zeros for roots at infinity.
bool layer_filter(const LayerChoice& choice, int size, std::vector<double>& out) {
  std::vector<cd> c{cd(1.0)};
  for (const cd& r : choice.finite_u) {
    std::vector<cd> next(c.size() + 1, cd(0.0));
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i + 1] += c[i];
      next[i] -= r * c[i];
    }
    c = std::move(next);
  }
  if (static_cast<int>(c.size()) + choice.infinite != size) return false;
  double mag = 0.0, imag = 0.0;
  for (const cd& x : c) {
    mag = std::max(mag, std::abs(x));
    imag = std::max(imag, std::abs(x.imag()));
  }
  if (imag > 1e-9 * mag) return false;
  out.assign(static_cast<std::size_t>(size), 0.0);
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
  return true;
}

double relative_residual(const Architecture& arch, const ParamTuple<double>& theta, const EndToEndFilter<double>& v) {
  const auto mu = compose(arch, theta);
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += (mu[i] - v[i]) * (mu[i] - v[i]);
  return std::sqrt(s) / vec_norm(v.entries());
}

int jacobian_rank(const Architecture& arch, const ParamTuple<double>& theta) {
  return numerical_rank(to_eigen(jacobian_blocks(arch, theta).full()));
}

void add_class(const Architecture& arch, const EndToEndFilter<double>& v, const ParamTuple<double>& theta,
               FiberResult& out) {
  const ParamTuple<double> canon = canonical_representative(theta);
  for (const auto& r : out.representatives)
    if (same_scaling_class(r, canon)) return;
  out.representatives.push_back(canon);
  out.residuals.push_back(relative_residual(arch, canon, v));
  out.ranks.push_back(jacobian_rank(arch, canon));
}

void require_filter_shape(const Architecture& arch, const EndToEndFilter<double>& v) {
  if (v.shape() != arch.end_to_end_shape()) {
    throw ShapeMismatch("end-to-end filter has shape " + shape_string(v.shape()) + ", architecture produces " +
                        shape_string(arch.end_to_end_shape()));
  }
}

void require_nonzero_function(const EndToEndFilter<double>& v) {
  if (vec_norm(v.entries()) == 0.0) throw PreconditionError("the zero end-to-end filter has no finite fiber");
}

std::string describe_roots(const ProjectiveRootSet& set) {
  std::ostringstream os;
  os << "roots:";
  for (const auto& c : set.finite) os << " (" << c.z.real() << (c.z.imag() < 0 ? "" : "+") << c.z.imag() << "i)^" << c.multiplicity;
  if (set.at_infinity) os << " inf^" << set.at_infinity;
  return os.str();
}

ParamTuple<double> permute_layers(const ParamTuple<double>& theta, const std::vector<std::size_t>& perm) {
  ParamTuple<double> out;
  for (std::size_t l = 0; l < perm.size(); ++l) out.filters.push_back(theta[perm[l]]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

int ProjectiveRootSet::total_multiplicity() const {
  int n = at_infinity;
  for (const auto& c : finite) n += c.multiplicity;
  return n;
}

ProjectiveRootSet homogeneous_roots(std::span<const double> v, double cluster_tol) {
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) throw PreconditionError("homogeneous_roots: zero polynomial");
  const double thr = 1e-14 * scale;
  std::size_t lo = 0, hi = v.size() - 1;
  while (std::abs(v[lo]) <= thr) ++lo;
  while (std::abs(v[hi]) <= thr) --hi;

  ProjectiveRootSet set;
  set.at_infinity = static_cast<int>(v.size() - 1 - hi);
  if (lo > 0) set.finite.push_back({cd(0.0), static_cast<int>(lo)});
  const std::span<const double> c = v.subspan(lo, hi - lo + 1);
  const std::size_t deg = c.size() - 1;
  if (deg == 0) return set;

  std::vector<cd> raw;
  if (deg == 1) {
    raw.push_back(cd(-c[0] / c[1]));
  } else {
    Eigen::VectorXd coeffs(static_cast<Eigen::Index>(c.size()));
    for (std::size_t i = 0; i < c.size(); ++i) coeffs(static_cast<Eigen::Index>(i)) = c[i];
    Eigen::PolynomialSolver<double, Eigen::Dynamic> solver;
    solver.compute(coeffs);
    for (Eigen::Index i = 0; i < solver.roots().size(); ++i) raw.push_back(solver.roots()(i));
  }
  for (auto& z : raw) z = polish_root(c, z);

  // Cluster repeated roots.
  std::vector<ProjectiveRootSet::Cluster> clusters;
  std::vector<cd> sums;
  for (const cd& z : raw) {
    bool merged = false;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      if (std::abs(z - clusters[i].z) < cluster_tol * std::max(1.0, std::abs(clusters[i].z))) {
        sums[i] += z;
        ++clusters[i].multiplicity;
        clusters[i].z = sums[i] / static_cast<double>(clusters[i].multiplicity);
        merged = true;
        break;
      }
    }
    if (!merged) {
      clusters.push_back({z, 1});
      sums.push_back(z);
    }
  }
  // Enforce exact conjugation symmetry.
  std::vector<bool> done(clusters.size(), false);
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    if (done[i]) continue;
    done[i] = true;
    auto& ci = clusters[i];
    if (std::abs(ci.z.imag()) < cluster_tol * std::max(1.0, std::abs(ci.z))) {
      ci.z = cd(ci.z.real(), 0.0);
      continue;
    }
    std::size_t best = clusters.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = i + 1; j < clusters.size(); ++j) {
      if (done[j]) continue;
      const double d = std::abs(clusters[j].z - std::conj(ci.z));
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    if (best < clusters.size()) {
      done[best] = true;
      const cd mid = 0.5 * (ci.z + std::conj(clusters[best].z));
      ci.z = mid;
      clusters[best].z = std::conj(mid);
    }
  }
  set.finite.insert(set.finite.end(), clusters.begin(), clusters.end());
  return set;
}

ParamTuple<double> canonical_signs(const ParamTuple<double>& theta) {
  ParamTuple<double> out = theta;
  double product = 1.0;
  for (std::size_t l = 0; l + 1 < out.depth(); ++l) {
    const double s = first_significant_sign(out[l]);
    out[l] *= s;
    product *= s;
  }
  out[out.depth() - 1] *= product;
  return out;
}

ParamTuple<double> canonical_representative(const ParamTuple<double>& theta) {
  ParamTuple<double> out = theta;
  double carry = 1.0;
  for (std::size_t l = 0; l + 1 < out.depth(); ++l) {
    const double n = std::sqrt(out[l].squared_norm());
    if (n == 0.0) throw ZeroFilter("filter " + std::to_string(l + 1) + " is zero");
    const double s = first_significant_sign(out[l]) / n;
    out[l] *= s;
    carry /= s;
  }
  out[out.depth() - 1] *= carry;
  return out;
}

bool same_scaling_class(const ParamTuple<double>& a, const ParamTuple<double>& b, double tol) {
  if (a.depth() != b.depth()) return false;
  const ParamTuple<double> ca = canonical_representative(a);
  const ParamTuple<double> cb = canonical_representative(b);
  for (std::size_t l = 0; l < ca.depth(); ++l) {
    if (ca[l].shape() != cb[l].shape()) return false;
    const double scale = std::max(1.0, std::sqrt(ca[l].squared_norm()));
    for (std::size_t j = 0; j < ca[l].size(); ++j)
      if (std::abs(ca[l][j] - cb[l][j]) > tol * scale) return false;
  }
  return true;
}

bool is_two_layer_running_architecture(const Architecture& arch) {
  return arch.signal_dim() == 1 && arch.depth() == 2 && arch.layer(0).filter_shape[0] == 3 &&
         arch.layer(1).filter_shape[0] == 2 && arch.layer(0).stride[0] == 2;
}

FiberResult recover_two_layer(const Architecture& arch, const EndToEndFilter<double>& v) {
  if (!is_two_layer_running_architecture(arch)) {
    throw PreconditionError("recover_two_layer: architecture must be k = (3, 2), s = (2, 1)");
  }
  require_filter_shape(arch, v);
  require_nonzero_function(v);
  const double vn = vec_norm(v.entries());
  const double eq = two_layer_equation(v);
  if (std::abs(eq) > 1e-10 * vn * vn * vn) {
    std::ostringstream os;
    os << "filter is not on the neuromanifold: v0 v3^2 + v1^2 v4 - v1 v2 v3 = " << eq;
    throw NotOnManifold(os.str());
  }
  EndToEndFilter<double> snapped = v;
  for (auto& x : snapped.entries())
    if (std::abs(x) <= 1e-14 * vn) x = 0.0;

  const auto theta = two_layer_preimage(snapped);
  if (!theta) {
    FiberResult r = enumerate_factorizations(arch, v);
    r.unique = false;
    r.diagnostics = "v1 = v3 = 0: singular point, fiber enumerated by root grouping; " + r.diagnostics;
    return r;
  }
  FiberResult r;
  add_class(arch, v, *theta, r);
  r.unique = true;
  r.diagnostics = "closed form";
  return r;
}

FiberResult recover_fiber_rootgroup(const Architecture& arch, const EndToEndFilter<double>& v,
                                    const RootGroupOptions& options) {
  if (arch.signal_dim() != 1) throw PreconditionError("root grouping needs a one-dimensional architecture");
  require_filter_shape(arch, v);
  require_nonzero_function(v);

  const ProjectiveRootSet set = homogeneous_roots(v.entries(), options.cluster_tol);
  RootGrouper grouper(arch, expand(set), options.orbit_tol, options.max_groupings);
  const auto groupings = grouper.run();

  std::ostringstream diag;
  diag << describe_roots(set) << "; orbit tolerance " << options.orbit_tol << "; " << groupings.size()
       << " grouping(s)";
  if (grouper.truncated()) diag << " (truncated)";
  if (groupings.empty()) throw NoFactorization("no partition of the roots into layer groups; " + diag.str());

  FiberResult out;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& g : groupings) {
    ParamTuple<double> theta;
    bool ok = true;
    for (std::size_t l = 0; l < arch.depth() && ok; ++l) {
      std::vector<double> w;
      ok = layer_filter(g[l], arch.layer(l).filter_shape[0], w);
      if (ok) theta.filters.emplace_back(std::move(w));
    }
    if (!ok) continue;
    const auto mu = compose(arch, theta);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      num += mu[i] * v[i];
      den += mu[i] * mu[i];
    }
    if (den == 0.0) continue;
    theta[arch.depth() - 1] *= num / den;
    const FiberFit fit = fit_fiber_point(arch, v, {}, theta, 20, 1e-15);
    const ParamTuple<double>& cand = fit.residual < relative_residual(arch, theta, v) ? fit.theta : theta;
    const double res = relative_residual(arch, cand, v);
    best = std::min(best, res);
    if (res <= options.residual_tol) add_class(arch, v, cand, out);
  }
  diag << "; best residual " << best;
  if (out.representatives.empty()) throw AmbiguousGrouping("no grouping reproduces the filter; " + diag.str());
  out.unique = out.representatives.size() == 1;
  out.diagnostics = diag.str() + "; " + std::to_string(out.representatives.size()) + " scaling class(es)";
  return out;
}

FiberResult enumerate_factorizations(const Architecture& arch, const EndToEndFilter<double>& v) {
  if (arch.signal_dim() != 1) throw PreconditionError("enumerate_factorizations needs a one-dimensional architecture");
  require_filter_shape(arch, v);
  std::string failures;
  for (double tol : {1e-7, 1e-6, 1e-5, 1e-4}) {
    RootGroupOptions opt;
    opt.orbit_tol = tol;
    try {
      return recover_fiber_rootgroup(arch, v, opt);
    } catch (const AmbiguousGrouping& e) {
      failures += std::string(e.what()) + "\n";
      if (tol == 1e-4) throw;
    } catch (const NoFactorization& e) {
      failures += std::string(e.what()) + "\n";
      if (tol == 1e-4) throw;
    }
  }
  throw NoFactorization(failures);
}

FiberFit fit_fiber_point(const Architecture& arch, const EndToEndFilter<double>& v, std::span<const double> delta,
                         const ParamTuple<double>& start, int max_iterations, double tol) {
  check_params(arch, start);
  require_filter_shape(arch, v);
  const std::size_t H = arch.depth();
  const bool with_delta = !delta.empty();
  if (with_delta && delta.size() + 1 != H) throw ShapeMismatch("fit_fiber_point: need H-1 invariants");
  const auto k = static_cast<Eigen::Index>(v.size());
  const auto n = static_cast<Eigen::Index>(arch.param_count());
  const Eigen::Index rows = k + (with_delta ? static_cast<Eigen::Index>(H - 1) : 0);
  const double vn = vec_norm(v.entries());
  if (vn == 0.0) throw PreconditionError("fit_fiber_point: zero target filter");

  std::vector<std::size_t> off(H, 0);
  for (std::size_t l = 1; l < H; ++l) off[l] = off[l - 1] + arch.layer_size(l - 1);

  auto residual = [&](const ParamTuple<double>& th) {
    Eigen::VectorXd r(rows);
    const auto mu = compose(arch, th);
    for (Eigen::Index i = 0; i < k; ++i) r(i) = mu[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(i)];
    if (with_delta) {
      const auto d = delta_invariants(th);
      for (std::size_t i = 0; i + 1 < H; ++i) r(k + static_cast<Eigen::Index>(i)) = d[i] - delta[i];
    }
    return r;
  };
  auto jacobian = [&](const ParamTuple<double>& th) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(rows, n);
    J.topRows(k) = to_eigen(jacobian_blocks(arch, th).full());
    if (with_delta) {
      for (std::size_t i = 0; i + 1 < H; ++i) {
        for (std::size_t j = 0; j < th[i].size(); ++j) J(k + static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(off[i] + j)) = -2.0 * th[i][j];
        for (std::size_t j = 0; j < th[i + 1].size(); ++j)
          J(k + static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(off[i + 1] + j)) = 2.0 * th[i + 1][j];
      }
    }
    return J;
  };
  auto done = [&](const Eigen::VectorXd& r, const ParamTuple<double>& th) {
    if (r.head(k).norm() > tol * vn) return false;
    if (!with_delta) return true;
    double scale = 1.0;
    for (const auto& w : th.filters) scale = std::max(scale, w.squared_norm());
    return r.tail(rows - k).norm() <= tol * scale;
  };

  ParamTuple<double> theta = start;
  Eigen::VectorXd r = residual(theta);
  double cost = r.squaredNorm();
  double lambda = -1.0;
  for (int it = 0; it < max_iterations && !done(r, theta); ++it) {
    const Eigen::MatrixXd J = jacobian(theta);
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    if (lambda < 0.0) lambda = 1e-6 * std::max(JtJ.diagonal().maxCoeff(), 1e-300);
    bool accepted = false, stalled = false;
    while (!accepted && lambda < 1e30) {
      Eigen::MatrixXd M = JtJ;
      M.diagonal().array() += lambda;
      const Eigen::VectorXd step = M.ldlt().solve(-g);
      std::vector<double> x = flatten(theta);
      for (Eigen::Index i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] += step(i);
      const ParamTuple<double> trial = unflatten<double>(arch, x);
      const Eigen::VectorXd rt = residual(trial);
      const double ct = rt.squaredNorm();
      if (ct < cost) {
        stalled = cost - ct <= 1e-12 * cost;
        theta = trial;
        r = rt;
        cost = ct;
        lambda /= 3.0;
        accepted = true;
      } else {
        lambda *= 2.0;
      }
    }
    if (!accepted || stalled) break;
  }

  FiberFit fit;
  fit.theta = theta;
  fit.residual = r.head(k).norm() / vn;
  fit.delta_residual = with_delta ? r.tail(rows - k).norm() : 0.0;
  fit.converged = done(r, theta);
  return fit;
}

std::vector<std::vector<std::size_t>> swap_group(const Architecture& arch) {
  const std::size_t H = arch.depth();
  std::vector<std::size_t> id(H);
  for (std::size_t l = 0; l < H; ++l) id[l] = l;
  std::set<std::vector<std::size_t>> seen{id};
  std::deque<std::vector<std::size_t>> queue{id};
  while (!queue.empty()) {
    const auto p = queue.front();
    queue.pop_front();
    for (std::size_t a = 0; a < H; ++a)
      for (std::size_t b = a + 1; b < H; ++b) {
        if (!arch.swap_eligible(a, b)) continue;
        auto q = p;
        std::swap(q[a], q[b]);
        if (seen.insert(q).second) queue.push_back(q);
      }
  }
  return {seen.begin(), seen.end()};
}

FiberResult invert_numeric(const Architecture& arch, const EndToEndFilter<double>& v, const InversionOptions& options) {
  require_filter_shape(arch, v);
  require_nonzero_function(v);
  const std::size_t H = arch.depth();
  const double vn = vec_norm(v.entries());
  const auto perms = arch.signal_dim() >= 2 ? swap_group(arch) : std::vector<std::vector<std::size_t>>{};

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::vector<double> balanced(H - 1, 0.0);

  FiberResult out;
  int successes = 0;
  double best = std::numeric_limits<double>::infinity();
  // Converged starts required before stopping; raised whenever a new class appears.
  int needed = options.adaptive ? options.min_converged : 0;
  auto keep_going = [&](int attempt) {
    if (attempt < options.attempts) return true;
    return options.adaptive && attempt < options.max_attempts && successes < needed;
  };
  int attempt = 0;
  for (; keep_going(attempt); ++attempt) {
    ParamTuple<double> theta;
    for (std::size_t l = 0; l < H; ++l) {
      std::vector<double> w(arch.layer_size(l));
      for (auto& x : w) x = normal(rng);
      theta.filters.emplace_back(arch.layer(l).filter_shape, std::move(w));
    }
    const double mn = vec_norm(compose(arch, theta).entries());
    if (mn == 0.0) continue;
    const double f = std::pow(vn / mn, 1.0 / static_cast<double>(H));
    for (auto& w : theta.filters) w *= f;

    const FiberFit fit = fit_fiber_point(arch, v, balanced, theta, options.max_iterations, 1e-13);
    best = std::min(best, fit.residual);
    if (!(fit.residual <= options.residual_tol)) continue;
    ++successes;
    bool known = false;
    for (const auto& p : perms) {
      const ParamTuple<double> q = permute_layers(fit.theta, p);
      for (const auto& r : out.representatives) known = known || same_scaling_class(r, q);
    }
    if (known) continue;
    const std::size_t before = out.representatives.size();
    add_class(arch, v, fit.theta, out);
    if (out.representatives.size() > before) needed = std::max(needed, options.saturation * successes);
  }
  std::ostringstream diag;
  diag << successes << " of " << attempt << " starts converged; best residual " << best;
  if (out.representatives.empty()) throw FiberNotFound("numerical inversion failed: " + diag.str());
  out.unique = out.representatives.size() == 1;
  out.diagnostics = diag.str() + "; " + std::to_string(out.representatives.size()) + " class(es)";
  return out;
}

}  // namespace ntk_geom

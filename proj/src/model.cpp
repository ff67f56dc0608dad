#include <lqmix/model.hpp>

#include <fmt/format.h>

#include <cmath>

namespace lqmix {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::homogeneous: return "homogeneous";
    case Variant::tc: return "TC";
    case Variant::tv: return "TV";
    case Variant::tctv: return "TCTV";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "homogeneous" || s == "lqr") return Variant::homogeneous;
  if (s == "TC" || s == "tc") return Variant::tc;
  if (s == "TV" || s == "tv") return Variant::tv;
  if (s == "TCTV" || s == "tctv") return Variant::tctv;
  throw SpecificationError("unknown model variant '" + s + "'");
}

Variant variant_for(Index G, Index m) {
  if (G > 1 && m > 1) return Variant::tctv;
  if (G > 1) return Variant::tc;
  if (m > 1) return Variant::tv;
  return Variant::homogeneous;
}

void ModelSpec::validate() const {
  if (G < 1 || m < 1) throw SpecificationError("G and m must be at least 1");
  if (!(eps > 0)) throw SpecificationError("eps must be positive");
  if (maxit < 1) throw SpecificationError("maxit must be at least 1");
  switch (variant) {
    case Variant::homogeneous:
      if (G != 1 || m != 1) throw SpecificationError("homogeneous model requires G = m = 1");
      break;
    case Variant::tc:
      if (m != 1) throw SpecificationError("TC model requires m = 1");
      break;
    case Variant::tv:
      if (G != 1) throw SpecificationError("TV model requires G = 1");
      break;
    case Variant::tctv:
      break;
  }
}

void MixtureParams::validate(double tol) const {
  const Index G = pg.size();
  const Index m = delta.size();
  if (G < 1 || m < 1) throw ValidationError("pg and delta must be non-empty");
  if (betarTC.rows() != G) throw ValidationError("betarTC must have G rows");
  if (betarTV.rows() != m) throw ValidationError("betarTV must have m rows");
  if (Gamma.rows() != m || Gamma.cols() != m) throw ValidationError("Gamma must be m x m");
  if (!betaf.allFinite() || !betarTC.allFinite() || !betarTV.allFinite())
    throw ValidationError("non-finite coefficient");
  auto check_simplex = [tol](const VectorXd& p, const std::string& what) {
    if (!p.allFinite() || (p.array() < 0).any())
      throw ValidationError(what + " has negative or non-finite entries");
    if (std::abs(p.sum() - 1.0) > tol)
      throw ValidationError(fmt::format("{} sums to {} instead of 1", what, p.sum()));
  };
  check_simplex(pg, "pg");
  check_simplex(delta, "delta");
  for (Index h = 0; h < m; ++h) check_simplex(Gamma.row(h).transpose(), fmt::format("Gamma row {}", h + 1));
  if (!(scale > 0) || !std::isfinite(scale)) throw ValidationError("scale must be positive");
}

VectorXd MixtureParams::flatten() const {
  const Index G = this->G(), m = this->m();
  VectorXd out(p() + G * r() + m * l() + G + m + m * m + 1);
  Index k = 0;
  for (Index j = 0; j < p(); ++j) out(k++) = betaf(j);
  for (Index g = 0; g < G; ++g)
    for (Index c = 0; c < r(); ++c) out(k++) = betarTC(g, c);
  for (Index h = 0; h < m; ++h)
    for (Index c = 0; c < l(); ++c) out(k++) = betarTV(h, c);
  for (Index g = 0; g < G; ++g) out(k++) = pg(g);
  for (Index h = 0; h < m; ++h) out(k++) = delta(h);
  for (Index h = 0; h < m; ++h)
    for (Index c = 0; c < m; ++c) out(k++) = Gamma(h, c);
  out(k++) = scale;
  return out;
}

MixtureParams MixtureParams::unflatten(const MixtureParams& shape, const VectorXd& flat) {
  MixtureParams out = shape;
  if (flat.size() != shape.flatten().size()) throw ValidationError("flat parameter length mismatch");
  Index k = 0;
  for (Index j = 0; j < out.p(); ++j) out.betaf(j) = flat(k++);
  for (Index g = 0; g < out.G(); ++g)
    for (Index c = 0; c < out.r(); ++c) out.betarTC(g, c) = flat(k++);
  for (Index h = 0; h < out.m(); ++h)
    for (Index c = 0; c < out.l(); ++c) out.betarTV(h, c) = flat(k++);
  for (Index g = 0; g < out.G(); ++g) out.pg(g) = flat(k++);
  for (Index h = 0; h < out.m(); ++h) out.delta(h) = flat(k++);
  for (Index h = 0; h < out.m(); ++h)
    for (Index c = 0; c < out.m(); ++c) out.Gamma(h, c) = flat(k++);
  out.scale = flat(k++);
  return out;
}

MatrixXd Posteriors::u() const {
  if (units.empty()) return MatrixXd(0, 0);
  MatrixXd out(static_cast<Index>(units.size()), units.front().u.size());
  for (std::size_t i = 0; i < units.size(); ++i) out.row(static_cast<Index>(i)) = units[i].u.transpose();
  return out;
}

VectorXd Posteriors::unit_loglik() const {
  VectorXd out(static_cast<Index>(units.size()));
  for (std::size_t i = 0; i < units.size(); ++i) out(static_cast<Index>(i)) = units[i].loglik;
  return out;
}

double Posteriors::loglik() const {
  double total = 0.0;
  for (const auto& u : units) total += u.loglik;
  return total;
}

Index count_parameters(Index p, Index r, Index l, Index G, Index m) {
  return p + G * r + m * l + (G - 1) + (m - 1) + m * (m - 1) + 1;
}

}  // namespace lqmix

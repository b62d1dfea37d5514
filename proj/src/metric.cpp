#include "ism/metric.hpp"

#include <cmath>
#include <stdexcept>

namespace ism {

void MetricParams::validate() const {
  if (!(gamma >= 0.0)) throw std::invalid_argument("MetricParams: gamma must be >= 0");
  if (!(tau > 0.0)) throw std::invalid_argument("MetricParams: tau must be > 0");
  if (!(eps_div > 0.0) || eps_div > 1e-6)
    throw std::invalid_argument("MetricParams: eps_div must be in (0, 1e-6]");
}

double semantic_distance(const PairedEmbedding& a, const PairedEmbedding& b) {
  return vec::dist(a.semantic, b.semantic);
}

double similarity_uncertainty(const PairedEmbedding& a, const PairedEmbedding& b) {
  return vec::sum_norm(a.uncertainty, b.uncertainty);
}

double relative_uncertainty(const PairedEmbedding& a, const PairedEmbedding& b,
                            const MetricParams& p) {
  const double alpha = semantic_distance(a, b);
  const double beta = similarity_uncertainty(a, b);
  return (beta + p.gamma) / std::max(alpha, p.eps_div);
}

double introspective_distance(const PairedEmbedding& a, const PairedEmbedding& b,
                              const MetricParams& p) {
  const double alpha = semantic_distance(a, b);
  const double beta = similarity_uncertainty(a, b);
  const double r = (beta + p.gamma) / std::max(alpha, p.eps_div);
  return alpha * std::exp(-r / p.tau);
}

double strict_introspective_distance(const PairedEmbedding& a,
                                     const PairedEmbedding& b,
                                     const MetricParams& p) {
  const double alpha = semantic_distance(a, b);
  const double beta = similarity_uncertainty(a, b);
  return (alpha - beta - p.gamma > 0.0) ? alpha : 0.0;
}

double semantic_cosine(const PairedEmbedding& a, const PairedEmbedding& b) {
  const double na = vec::norm(a.semantic);
  const double nb = vec::norm(b.semantic);
  if (na == 0.0 || nb == 0.0)
    throw std::domain_error("semantic_cosine: zero-norm semantic vector");
  return vec::dot(a.semantic, b.semantic) / (na * nb);
}

CosineChain introspective_cosine_chain(double cosine, double beta,
                                       const MetricParams& p,
                                       CosineVariant variant) {
  const double t_raw = 1.0 - cosine;
  const double t = std::max(t_raw, p.eps_div);
  const bool floored = t_raw < p.eps_div;
  const double r = (beta + p.gamma) / t;
  const double w = std::exp(-r / p.tau);

  CosineChain out{};
  if (variant == CosineVariant::kSimilar) {
    // C + (1-C)(1 - e^{-r/tau}); expm1 keeps the zero-uncertainty reduction
    // exact in floating point.
    out.value = cosine + t_raw * (-std::expm1(-r / p.tau));
    // When the denominator is floored, r no longer depends on C.
    out.d_cos = floored ? w : w * (1.0 + r / p.tau);
    out.d_beta = t_raw * w / (p.tau * t);
  } else {
    out.value = cosine * w;
    out.d_cos = floored ? w : w * (1.0 - cosine * (beta + p.gamma) / (p.tau * t * t));
    out.d_beta = -cosine * w / (p.tau * t);
  }
  return out;
}

double introspective_cosine(const PairedEmbedding& a, const PairedEmbedding& b,
                            const MetricParams& p, CosineVariant variant) {
  const double c = semantic_cosine(a, b);
  const double beta = similarity_uncertainty(a, b);
  return introspective_cosine_chain(c, beta, p, variant).value;
}

double gaussian_kl(const DiagGaussian& a, const DiagGaussian& b) {
  vec::check_same_dim(a.mean, b.mean, "gaussian_kl");
  vec::check_same_dim(a.var, b.var, "gaussian_kl");
  vec::check_same_dim(a.mean, a.var, "gaussian_kl");
  double s = 0.0;
  for (std::size_t k = 0; k < a.mean.size(); ++k) {
    const double v1 = a.var[k], v2 = b.var[k];
    if (!(v1 > 0.0) || !(v2 > 0.0))
      throw std::domain_error("gaussian_kl: nonpositive variance");
    const double dm = a.mean[k] - b.mean[k];
    s += std::log(v2 / v1) + v1 / v2 + dm * dm / v2 - 1.0;
  }
  return 0.5 * s;
}

double grad_decay_factor(double x) { return std::exp(-x) * (1.0 + x); }

DistanceGrad grad_introspective_distance(const PairedEmbedding& a,
                                         const PairedEmbedding& b,
                                         const MetricParams& p) {
  const std::size_t ds = a.semantic.size();
  const std::size_t du = a.uncertainty.size();
  vec::check_same_dim(a.semantic, b.semantic, "grad_introspective_distance");
  vec::check_same_dim(a.uncertainty, b.uncertainty, "grad_introspective_distance");

  DistanceGrad g;
  g.d_sem_a.assign(ds, 0.0);
  g.d_sem_b.assign(ds, 0.0);
  g.d_unc_a.assign(du, 0.0);
  g.d_unc_b.assign(du, 0.0);

  const double alpha = semantic_distance(a, b);
  const double beta = similarity_uncertainty(a, b);
  const double r = (beta + p.gamma) / std::max(alpha, p.eps_div);
  const double w = std::exp(-r / p.tau);

  if (alpha > p.eps_div) {
    // dD/ds_a = (s_a - s_b)/alpha * e^{-r/tau} * (1 + r/tau); the second
    // factor is grad_decay_factor(beta/alpha) at tau=1, gamma=0.
    const double f = w * (1.0 + r / p.tau) / alpha;
    for (std::size_t i = 0; i < ds; ++i) {
      const double d = (a.semantic[i] - b.semantic[i]) * f;
      g.d_sem_a[i] = d;
      g.d_sem_b[i] = -d;
    }
  }
  if (beta > p.eps_div && alpha > p.eps_div) {
    // dD/dbeta = -e^{-r/tau}/tau, and dbeta/du is (u_a+u_b)/beta for both.
    const double f = -w / (p.tau * beta);
    for (std::size_t i = 0; i < du; ++i) {
      const double d = (a.uncertainty[i] + b.uncertainty[i]) * f;
      g.d_unc_a[i] = d;
      g.d_unc_b[i] = d;
    }
  }
  return g;
}

void grad_cosine(std::span<const double> sa, std::span<const double> sb,
                 Vec& d_sa, Vec& d_sb) {
  const double na = vec::norm(sa);
  const double nb = vec::norm(sb);
  if (na == 0.0 || nb == 0.0)
    throw std::domain_error("grad_cosine: zero-norm semantic vector");
  const double c = vec::dot(sa, sb) / (na * nb);
  d_sa.assign(sa.size(), 0.0);
  d_sb.assign(sb.size(), 0.0);
  for (std::size_t i = 0; i < sa.size(); ++i) {
    d_sa[i] = sb[i] / (na * nb) - c * sa[i] / (na * na);
    d_sb[i] = sa[i] / (na * nb) - c * sb[i] / (nb * nb);
  }
}

}  // namespace ism

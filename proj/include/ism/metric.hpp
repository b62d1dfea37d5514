#pragma once

/// Uncertainty-aware distance and similarity functions.
///
/// Every sample is a pair of vectors: a semantic embedding s describing the
/// content and an uncertainty embedding u describing how ambiguous the sample
/// is. The semantic discrepancy of a pair is alpha = ||s1 - s2||, the pairwise
/// uncertainty is beta = ||u1 + u2|| (the vector sum, so uncertainties can
/// cancel), and the weakened distance is
///
///     d_in = alpha * exp(-(beta + gamma) / (tau * alpha))
///
/// which collapses toward zero when the pair's uncertainty outweighs its
/// semantic separation. A cosine counterpart pulls similarities toward 1
/// instead. All functions are pure; analytic gradients are provided and
/// verified against finite differences in the test suite.

#include <span>

#include "ism/vec.hpp"

namespace ism {

/// One sample: semantic part plus uncertainty part.
struct PairedEmbedding {
  Vec semantic;
  Vec uncertainty;
};

/// Parameters of the uncertainty-weakened metric.
///   gamma   — bias added to the pairwise uncertainty; keeps the metric
///             suspicious even when the model reports no uncertainty.
///   tau     — temperature; larger tau weakens less.
///   eps_div — floor for the semantic-discrepancy denominator.
struct MetricParams {
  double gamma = 0.0;
  double tau = 1.0;
  double eps_div = 1e-12;

  void validate() const;
};

/// Diagonal Gaussian, used only by the KL baseline comparator.
struct DiagGaussian {
  Vec mean;
  Vec var;  // componentwise variance, strictly positive
};

/// alpha: Euclidean distance between semantic parts.
double semantic_distance(const PairedEmbedding& a, const PairedEmbedding& b);

/// beta: norm of the *sum* of the uncertainty parts. Can vanish by
/// cancellation even when both vectors are nonzero.
double similarity_uncertainty(const PairedEmbedding& a, const PairedEmbedding& b);

/// (beta + gamma) / max(alpha, eps_div).
double relative_uncertainty(const PairedEmbedding& a, const PairedEmbedding& b,
                            const MetricParams& p);

/// Weakened distance alpha * exp(-r/tau). Always in [0, alpha] for gamma >= 0.
double introspective_distance(const PairedEmbedding& a, const PairedEmbedding& b,
                              const MetricParams& p);

/// Hard-thresholded variant alpha * I(alpha - beta - gamma > 0). Reference
/// for tests and diagnostics only; the indicator is not differentiable.
double strict_introspective_distance(const PairedEmbedding& a,
                                     const PairedEmbedding& b,
                                     const MetricParams& p);

/// Cosine of the semantic parts. Throws on zero-norm input.
double semantic_cosine(const PairedEmbedding& a, const PairedEmbedding& b);

/// Which way the cosine metric moves uncertain pairs.
enum class CosineVariant {
  kSimilar,    // 1 - (1-C) * exp(-r/tau): uncertain pairs drift to similar
  kDissimilar  // C * exp(-r/tau): uncertain pairs drift to dissimilar
};

/// Weakened cosine similarity. The semantic-discrepancy denominator of the
/// relative uncertainty is 1 - C (floored at eps_div). kSimilar never drops
/// below the plain cosine; kDissimilar shrinks it toward zero.
double introspective_cosine(const PairedEmbedding& a, const PairedEmbedding& b,
                            const MetricParams& p,
                            CosineVariant variant = CosineVariant::kSimilar);

/// KL divergence between diagonal Gaussians,
/// 1/2 sum[log(v2/v1) + v1/v2 + (m1-m2)^2/v2 - 1]. Baseline comparator.
double gaussian_kl(const DiagGaussian& a, const DiagGaussian& b);

/// g(x) = exp(-x) * (1 + x): the factor by which pairwise uncertainty
/// attenuates the semantic gradient (at tau=1, gamma=0, x = beta/alpha).
/// g(0) = 1 and g is strictly decreasing for x > 0.
double grad_decay_factor(double x);

/// Gradients of introspective_distance with respect to all four input blocks.
struct DistanceGrad {
  Vec d_sem_a;
  Vec d_sem_b;
  Vec d_unc_a;
  Vec d_unc_b;
};

/// Analytic gradient of introspective_distance. Where a norm is degenerate
/// (alpha <= eps_div or beta <= eps_div) the corresponding blocks are the
/// zero subgradient.
DistanceGrad grad_introspective_distance(const PairedEmbedding& a,
                                         const PairedEmbedding& b,
                                         const MetricParams& p);

/// Scalar pieces of the cosine metric's chain rule, used by the loss layer:
/// d(C_in)/dC and d(C_in)/d(beta) at the given pair.
struct CosineChain {
  double value;    // C_in
  double d_cos;    // dC_in / dC
  double d_beta;   // dC_in / dbeta
};

CosineChain introspective_cosine_chain(double cosine, double beta,
                                       const MetricParams& p,
                                       CosineVariant variant);

/// Gradient of the plain cosine C(a,b) wrt each semantic vector.
/// dC/da = (b_hat - C * a_hat) / ||a||, and symmetrically for b.
void grad_cosine(std::span<const double> sa, std::span<const double> sb,
                 Vec& d_sa, Vec& d_sb);

}  // namespace ism

#include "ism/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ism {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double hinge(double x) { return x > 0.0 ? x : 0.0; }

double logsumexp(const std::vector<double>& xs) {
  if (xs.empty()) return -kInf;
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

LossResult make_result(std::span<const PairedEmbedding> batch,
                       const ProxyBank* bank) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  LossResult r;
  r.d_sem.reserve(batch.size());
  r.d_unc.reserve(batch.size());
  for (const auto& e : batch) {
    r.d_sem.emplace_back(e.semantic.size(), 0.0);
    r.d_unc.emplace_back(e.uncertainty.size(), 0.0);
  }
  if (bank != nullptr) {
    r.d_proxy_sem.reserve(bank->size());
    r.d_proxy_unc.reserve(bank->size());
    for (const auto& e : bank->proxies) {
      r.d_proxy_sem.emplace_back(e.semantic.size(), 0.0);
      r.d_proxy_unc.emplace_back(e.uncertainty.size(), 0.0);
    }
  }
  return r;
}

// Adds w * dD/d(block) of the weakened distance between a and b.
void add_dist_grad(const PairedEmbedding& a, const PairedEmbedding& b,
                   const MetricParams& p, double w, Vec& gsa, Vec& gsb, Vec& gua,
                   Vec& gub) {
  const DistanceGrad g = grad_introspective_distance(a, b, p);
  for (std::size_t i = 0; i < gsa.size(); ++i) {
    gsa[i] += w * g.d_sem_a[i];
    gsb[i] += w * g.d_sem_b[i];
  }
  for (std::size_t i = 0; i < gua.size(); ++i) {
    gua[i] += w * g.d_unc_a[i];
    gub[i] += w * g.d_unc_b[i];
  }
}

struct CosPairData {
  double c_in;
  double d_cos;   // dC_in / dC
  double d_beta;  // dC_in / dbeta
  double beta;
};

CosPairData cos_pair(const PairedEmbedding& a, const PairedEmbedding& b,
                     const MetricParams& p, CosineVariant v) {
  const double c = semantic_cosine(a, b);
  const double beta = similarity_uncertainty(a, b);
  const CosineChain chain = introspective_cosine_chain(c, beta, p, v);
  return {chain.value, chain.d_cos, chain.d_beta, beta};
}

// Adds w * dC_in/d(block) for the pair (a, b) given its chain pieces.
void add_cos_grad(const PairedEmbedding& a, const PairedEmbedding& b,
                  const CosPairData& cp, const MetricParams& p, double w,
                  Vec& gsa, Vec& gsb, Vec& gua, Vec& gub) {
  Vec dca(a.semantic.size()), dcb(b.semantic.size());
  grad_cosine(a.semantic, b.semantic, dca, dcb);
  const double wc = w * cp.d_cos;
  for (std::size_t i = 0; i < gsa.size(); ++i) {
    gsa[i] += wc * dca[i];
    gsb[i] += wc * dcb[i];
  }
  if (cp.beta > p.eps_div) {
    const double f = w * cp.d_beta / cp.beta;
    for (std::size_t i = 0; i < gua.size(); ++i) {
      const double d = f * (a.uncertainty[i] + b.uncertainty[i]);
      gua[i] += d;
      gub[i] += d;
    }
  }
}

bool has_negative(std::span<const LabelSet> labels, std::size_t i) {
  for (std::size_t j = 0; j < labels.size(); ++j)
    if (j != i && !label_equal(labels[i], labels[j])) return true;
  return false;
}

}  // namespace

LossVariant loss_variant_from_string(const std::string& name) {
  if (name == "margin_dw") return LossVariant::kMarginDW;
  if (name == "triplet_semihard") return LossVariant::kTripletSemihard;
  if (name == "contrastive") return LossVariant::kContrastive;
  if (name == "multi_similarity") return LossVariant::kMultiSimilarity;
  if (name == "proxy_nca") return LossVariant::kProxyNCA;
  if (name == "proxy_anchor") return LossVariant::kProxyAnchor;
  if (name == "softmax_ism") return LossVariant::kSoftmax;
  throw std::invalid_argument("unknown loss variant: " + name);
}

std::string loss_variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::kMarginDW: return "margin_dw";
    case LossVariant::kTripletSemihard: return "triplet_semihard";
    case LossVariant::kContrastive: return "contrastive";
    case LossVariant::kMultiSimilarity: return "multi_similarity";
    case LossVariant::kProxyNCA: return "proxy_nca";
    case LossVariant::kProxyAnchor: return "proxy_anchor";
    case LossVariant::kSoftmax: return "softmax_ism";
  }
  throw std::logic_error("bad loss variant");
}

bool loss_uses_proxies(LossVariant v) {
  return v == LossVariant::kProxyNCA || v == LossVariant::kProxyAnchor ||
         v == LossVariant::kSoftmax;
}

bool loss_uses_cosine(LossVariant v) {
  return v == LossVariant::kMultiSimilarity || v == LossVariant::kProxyAnchor ||
         v == LossVariant::kSoftmax;
}

void ProxyBank::validate(std::span<const LabelSet> batch_labels) const {
  if (proxies.size() != labels.size())
    throw std::invalid_argument("proxy bank: proxies/labels size mismatch");
  if (proxies.empty()) throw std::invalid_argument("proxy bank: empty");
  for (const auto& set : batch_labels) {
    for (int id : set.ids()) {
      if (std::find(labels.begin(), labels.end(), id) == labels.end())
        throw std::invalid_argument("proxy bank: no proxy for class " +
                                    std::to_string(id));
    }
  }
}

void LossConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("loss config: ") + what);
  };
  need(xi >= 0.0 && std::isfinite(xi), "xi must be >= 0");
  need(omega >= 0.0 && std::isfinite(omega), "omega must be >= 0");
  need(delta >= 0.0 && std::isfinite(delta), "delta must be >= 0");
  need(ms_alpha > 0.0, "ms_alpha must be > 0");
  need(ms_beta > 0.0, "ms_beta must be > 0");
  need(std::isfinite(ms_lambda), "ms_lambda must be finite");
  need(ms_epsilon >= 0.0, "ms_epsilon must be >= 0");
  need(pa_alpha > 0.0, "pa_alpha must be > 0");
  need(pa_delta >= 0.0, "pa_delta must be >= 0");
  need(log_cap > 0.0, "log_cap must be > 0");
}

LossConfig LossConfig::defaults_for(LossVariant v) {
  LossConfig c;
  c.variant = v;
  c.delta = (v == LossVariant::kContrastive) ? 1.0 : 0.2;
  return c;
}

// ---------------------------------------------------------------------------
// Margin loss with distance-weighted sampling
// ---------------------------------------------------------------------------

MarginPairs mine_margin_pairs(std::span<const PairedEmbedding> batch,
                              std::span<const LabelSet> labels,
                              const MetricParams& p,
                              const MiningConfig& mining) {
  if (batch.size() != labels.size())
    throw std::invalid_argument("margin mining: batch/labels size mismatch");
  MarginPairs out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = i + 1; j < batch.size(); ++j) {
      if (!label_equal(labels[i], labels[j])) continue;
      out.pos.emplace_back(i, j);
      if (has_negative(labels, i)) {
        // Substream keyed by the positive index, so each pair draws its own
        // negative independent of evaluation order.
        out.neg.push_back(
            distance_weighted_negative(i, batch, labels, p, mining, j));
      } else {
        out.neg.push_back(std::nullopt);
        out.warning = true;
      }
    }
  }
  if (out.pos.empty()) out.warning = true;
  return out;
}

LossResult margin_dw_eval(std::span<const PairedEmbedding> batch,
                          const MarginPairs& pairs, const MetricParams& p,
                          const LossConfig& cfg) {
  LossResult r = make_result(batch, nullptr);
  r.warning = pairs.warning;
  const double neg_sign = cfg.fidelity_mode ? -1.0 : 1.0;
  for (std::size_t k = 0; k < pairs.pos.size(); ++k) {
    const auto [i, j] = pairs.pos[k];
    const double d_pos = introspective_distance(batch[i], batch[j], p);
    if (d_pos - cfg.xi > 0.0) {
      r.value += d_pos - cfg.xi;
      add_dist_grad(batch[i], batch[j], p, 1.0, r.d_sem[i], r.d_sem[j],
                    r.d_unc[i], r.d_unc[j]);
    }
    if (!pairs.neg[k]) continue;
    const std::size_t n = *pairs.neg[k];
    const double d_neg = introspective_distance(batch[i], batch[n], p);
    if (cfg.omega - d_neg > 0.0) {
      r.value += neg_sign * (cfg.omega - d_neg);
      add_dist_grad(batch[i], batch[n], p, -neg_sign, r.d_sem[i], r.d_sem[n],
                    r.d_unc[i], r.d_unc[n]);
    }
  }
  return r;
}

LossResult margin_dw_loss(std::span<const PairedEmbedding> batch,
                          std::span<const LabelSet> labels,
                          const MetricParams& p, const LossConfig& cfg,
                          const MiningConfig& mining) {
  return margin_dw_eval(batch, mine_margin_pairs(batch, labels, p, mining), p,
                        cfg);
}

// ---------------------------------------------------------------------------
// Semi-hard triplet loss
// ---------------------------------------------------------------------------

TripletSet mine_semihard_triplets(std::span<const PairedEmbedding> batch,
                                  std::span<const LabelSet> labels,
                                  const MetricParams& p) {
  if (batch.size() != labels.size())
    throw std::invalid_argument("triplet mining: batch/labels size mismatch");
  TripletSet out;
  for (std::size_t a = 0; a < batch.size(); ++a) {
    for (std::size_t q = 0; q < batch.size(); ++q) {
      if (q == a || !label_equal(labels[a], labels[q])) continue;
      const auto n = semi_hard_negative(a, q, batch, labels, p);
      if (n) out.triplets.push_back({a, q, *n});
    }
  }
  if (out.triplets.empty()) out.warning = true;
  return out;
}

LossResult triplet_eval(std::span<const PairedEmbedding> batch,
                        const TripletSet& set, const MetricParams& p,
                        const LossConfig& cfg) {
  LossResult r = make_result(batch, nullptr);
  r.warning = set.warning;
  for (const auto& t : set.triplets) {
    const double d_pos = introspective_distance(batch[t.anchor], batch[t.positive], p);
    const double d_neg = introspective_distance(batch[t.anchor], batch[t.negative], p);
    const double h = d_pos - d_neg + cfg.delta;
    if (h <= 0.0) continue;
    r.value += h;
    add_dist_grad(batch[t.anchor], batch[t.positive], p, 1.0, r.d_sem[t.anchor],
                  r.d_sem[t.positive], r.d_unc[t.anchor], r.d_unc[t.positive]);
    add_dist_grad(batch[t.anchor], batch[t.negative], p, -1.0, r.d_sem[t.anchor],
                  r.d_sem[t.negative], r.d_unc[t.anchor], r.d_unc[t.negative]);
  }
  return r;
}

LossResult triplet_semihard_loss(std::span<const PairedEmbedding> batch,
                                 std::span<const LabelSet> labels,
                                 const MetricParams& p, const LossConfig& cfg) {
  return triplet_eval(batch, mine_semihard_triplets(batch, labels, p), p, cfg);
}

// ---------------------------------------------------------------------------
// Contrastive loss
// ---------------------------------------------------------------------------

LossResult contrastive_loss(std::span<const PairedEmbedding> batch,
                            std::span<const LabelSet> labels,
                            const MetricParams& p, const LossConfig& cfg) {
  if (batch.size() != labels.size())
    throw std::invalid_argument("contrastive: batch/labels size mismatch");
  LossResult r = make_result(batch, nullptr);
  bool any_neg = false;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = i + 1; j < batch.size(); ++j) {
      const double d = introspective_distance(batch[i], batch[j], p);
      if (label_equal(labels[i], labels[j])) {
        r.value += d;
        add_dist_grad(batch[i], batch[j], p, 1.0, r.d_sem[i], r.d_sem[j],
                      r.d_unc[i], r.d_unc[j]);
      } else {
        any_neg = true;
        if (cfg.delta - d > 0.0) {
          r.value += cfg.delta - d;
          add_dist_grad(batch[i], batch[j], p, -1.0, r.d_sem[i], r.d_sem[j],
                        r.d_unc[i], r.d_unc[j]);
        }
      }
    }
  }
  if (!any_neg) r.warning = true;
  return r;
}

// ---------------------------------------------------------------------------
// Multi-similarity loss
// ---------------------------------------------------------------------------

MsSelection select_ms_pairs(std::span<const PairedEmbedding> batch,
                            std::span<const LabelSet> labels,
                            const MetricParams& p, const LossConfig& cfg) {
  if (batch.size() != labels.size())
    throw std::invalid_argument("multi-similarity: batch/labels size mismatch");
  MsSelection sel;
  sel.kept.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      if (j == i) continue;
      (label_equal(labels[i], labels[j]) ? pos : neg).push_back(j);
    }
    // Anchors without both a positive and a negative are skipped whole,
    // before any cosine is evaluated.
    if (pos.empty() || neg.empty()) continue;
    std::vector<double> pos_c, neg_c;
    for (std::size_t j : pos)
      pos_c.push_back(cos_pair(batch[i], batch[j], p, cfg.cosine_variant).c_in);
    for (std::size_t j : neg)
      neg_c.push_back(cos_pair(batch[i], batch[j], p, cfg.cosine_variant).c_in);
    const double min_pos = *std::min_element(pos_c.begin(), pos_c.end());
    const double max_neg = *std::max_element(neg_c.begin(), neg_c.end());
    for (std::size_t k = 0; k < pos.size(); ++k)
      if (pos_c[k] < max_neg + cfg.ms_epsilon) sel.kept[i].pos.push_back(pos[k]);
    for (std::size_t k = 0; k < neg.size(); ++k)
      if (neg_c[k] > min_pos - cfg.ms_epsilon) sel.kept[i].neg.push_back(neg[k]);
  }
  return sel;
}

LossResult multi_similarity_eval(std::span<const PairedEmbedding> batch,
                                 const MsSelection& sel, const MetricParams& p,
                                 const LossConfig& cfg) {
  LossResult r = make_result(batch, nullptr);
  if (sel.kept.size() != batch.size())
    throw std::invalid_argument("multi-similarity: stale selection");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  bool any = false;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& kept = sel.kept[i];
    if (kept.pos.empty() && kept.neg.empty()) continue;
    any = true;
    std::vector<CosPairData> pos_cp, neg_cp;
    double s_pos = 0.0, s_neg = 0.0;
    for (std::size_t j : kept.pos) {
      pos_cp.push_back(cos_pair(batch[i], batch[j], p, cfg.cosine_variant));
      s_pos += std::exp(-cfg.ms_alpha * (pos_cp.back().c_in - cfg.ms_lambda));
    }
    for (std::size_t j : kept.neg) {
      neg_cp.push_back(cos_pair(batch[i], batch[j], p, cfg.cosine_variant));
      s_neg += std::exp(cfg.ms_beta * (neg_cp.back().c_in - cfg.ms_lambda));
    }
    r.value += inv_n * (std::log1p(s_pos) / cfg.ms_alpha +
                        std::log1p(s_neg) / cfg.ms_beta);
    for (std::size_t k = 0; k < kept.pos.size(); ++k) {
      const std::size_t j = kept.pos[k];
      const double w = -inv_n *
                       std::exp(-cfg.ms_alpha * (pos_cp[k].c_in - cfg.ms_lambda)) /
                       (1.0 + s_pos);
      add_cos_grad(batch[i], batch[j], pos_cp[k], p, w, r.d_sem[i], r.d_sem[j],
                   r.d_unc[i], r.d_unc[j]);
    }
    for (std::size_t k = 0; k < kept.neg.size(); ++k) {
      const std::size_t j = kept.neg[k];
      const double w = inv_n *
                       std::exp(cfg.ms_beta * (neg_cp[k].c_in - cfg.ms_lambda)) /
                       (1.0 + s_neg);
      add_cos_grad(batch[i], batch[j], neg_cp[k], p, w, r.d_sem[i], r.d_sem[j],
                   r.d_unc[i], r.d_unc[j]);
    }
  }
  if (!any) r.warning = true;
  return r;
}

LossResult multi_similarity_loss(std::span<const PairedEmbedding> batch,
                                 std::span<const LabelSet> labels,
                                 const MetricParams& p, const LossConfig& cfg) {
  return multi_similarity_eval(batch, select_ms_pairs(batch, labels, p, cfg), p,
                               cfg);
}

// ---------------------------------------------------------------------------
// ProxyNCA
// ---------------------------------------------------------------------------

LossResult proxy_nca_loss(std::span<const PairedEmbedding> batch,
                          std::span<const LabelSet> labels,
                          const ProxyBank& bank, const MetricParams& p,
                          const LossConfig& cfg) {
  if (batch.size() != labels.size())
    throw std::invalid_argument("proxy nca: batch/labels size mismatch");
  bank.validate(labels);
  LossResult r = make_result(batch, &bank);
  // The standard objective works on e^{-D}; fidelity mode keeps the printed
  // e^{+D}, which rewards enlarging positive distances.
  const double sgn = cfg.fidelity_mode ? 1.0 : -1.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<std::size_t> pos, neg;
    std::vector<double> pos_x, neg_x, dist;
    dist.resize(bank.size());
    for (std::size_t q = 0; q < bank.size(); ++q) {
      dist[q] = introspective_distance(batch[i], bank.proxies[q], p);
      if (labels[i].contains(bank.labels[q])) {
        pos.push_back(q);
        pos_x.push_back(sgn * dist[q]);
      } else {
        neg.push_back(q);
        neg_x.push_back(sgn * dist[q]);
      }
    }
    if (neg.empty()) r.warning = true;
    const double lse_pos = logsumexp(pos_x);
    const double lse_neg = logsumexp(neg_x);
    const double t = lse_pos - lse_neg;
    if (!(std::abs(t) <= cfg.log_cap)) {
      r.value += -std::clamp(t, -cfg.log_cap, cfg.log_cap);
      ++r.clamp_events;
      continue;  // saturated term: drop its gradient
    }
    r.value += -t;
    for (std::size_t k = 0; k < pos.size(); ++k) {
      const std::size_t q = pos[k];
      const double w = -sgn * std::exp(pos_x[k] - lse_pos);
      add_dist_grad(batch[i], bank.proxies[q], p, w, r.d_sem[i],
                    r.d_proxy_sem[q], r.d_unc[i], r.d_proxy_unc[q]);
    }
    for (std::size_t k = 0; k < neg.size(); ++k) {
      const std::size_t q = neg[k];
      const double w = sgn * std::exp(neg_x[k] - lse_neg);
      add_dist_grad(batch[i], bank.proxies[q], p, w, r.d_sem[i],
                    r.d_proxy_sem[q], r.d_unc[i], r.d_proxy_unc[q]);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// ProxyAnchor
// ---------------------------------------------------------------------------

LossResult proxy_anchor_loss(std::span<const PairedEmbedding> batch,
                             std::span<const LabelSet> labels,
                             const ProxyBank& bank, const MetricParams& p,
                             const LossConfig& cfg) {
  if (batch.size() != labels.size())
    throw std::invalid_argument("proxy anchor: batch/labels size mismatch");
  bank.validate(labels);
  LossResult r = make_result(batch, &bank);
  std::size_t n_active = 0;
  for (std::size_t q = 0; q < bank.size(); ++q) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (labels[i].contains(bank.labels[q])) {
        ++n_active;
        break;
      }
    }
  }
  if (n_active == 0) {
    r.warning = true;
    return r;
  }
  const double inv_active = 1.0 / static_cast<double>(n_active);
  const double inv_all = 1.0 / static_cast<double>(bank.size());
  for (std::size_t q = 0; q < bank.size(); ++q) {
    std::vector<std::size_t> pos, neg;
    std::vector<CosPairData> pos_cp, neg_cp;
    double s_pos = 0.0, s_neg = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const CosPairData cp =
          cos_pair(batch[i], bank.proxies[q], p, cfg.cosine_variant);
      if (labels[i].contains(bank.labels[q])) {
        pos.push_back(i);
        pos_cp.push_back(cp);
        s_pos += std::exp(-cfg.pa_alpha * (cp.c_in - cfg.pa_delta));
      } else {
        neg.push_back(i);
        neg_cp.push_back(cp);
        s_neg += std::exp(cfg.pa_alpha * (cp.c_in + cfg.pa_delta));
      }
    }
    if (!pos.empty()) r.value += inv_active * std::log1p(s_pos);
    r.value += inv_all * std::log1p(s_neg);
    for (std::size_t k = 0; k < pos.size(); ++k) {
      const std::size_t i = pos[k];
      const double w =
          inv_active * -cfg.pa_alpha *
          std::exp(-cfg.pa_alpha * (pos_cp[k].c_in - cfg.pa_delta)) /
          (1.0 + s_pos);
      add_cos_grad(batch[i], bank.proxies[q], pos_cp[k], p, w, r.d_sem[i],
                   r.d_proxy_sem[q], r.d_unc[i], r.d_proxy_unc[q]);
    }
    for (std::size_t k = 0; k < neg.size(); ++k) {
      const std::size_t i = neg[k];
      const double w = inv_all * cfg.pa_alpha *
                       std::exp(cfg.pa_alpha * (neg_cp[k].c_in + cfg.pa_delta)) /
                       (1.0 + s_neg);
      add_cos_grad(batch[i], bank.proxies[q], neg_cp[k], p, w, r.d_sem[i],
                   r.d_proxy_sem[q], r.d_unc[i], r.d_proxy_unc[q]);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Proxy softmax over weakened similarities
// ---------------------------------------------------------------------------

LossResult softmax_proxy_loss(std::span<const PairedEmbedding> batch,
                              std::span<const LabelSet> labels,
                              const ProxyBank& bank, const MetricParams& p,
                              const LossConfig& cfg) {
  if (batch.size() != labels.size())
    throw std::invalid_argument("softmax: batch/labels size mismatch");
  bank.validate(labels);
  LossResult r = make_result(batch, &bank);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<CosPairData> cp(bank.size());
    std::vector<bool> is_pos(bank.size());
    std::vector<double> z_pos, z_den;
    for (std::size_t q = 0; q < bank.size(); ++q) {
      cp[q] = cos_pair(batch[i], bank.proxies[q], p, cfg.cosine_variant);
      is_pos[q] = labels[i].contains(bank.labels[q]);
      if (is_pos[q]) z_pos.push_back(cp[q].c_in);
      // Standard form normalizes over all proxies; fidelity mode keeps the
      // printed negatives-only denominator.
      if (!cfg.fidelity_mode || !is_pos[q]) z_den.push_back(cp[q].c_in);
    }
    const double lse_pos = logsumexp(z_pos);
    const double lse_den = logsumexp(z_den);
    const double t = lse_pos - lse_den;
    if (!(std::abs(t) <= cfg.log_cap)) {
      r.value += inv_n * -std::clamp(t, -cfg.log_cap, cfg.log_cap);
      ++r.clamp_events;
      if (z_den.empty()) r.warning = true;
      continue;
    }
    r.value += inv_n * -t;
    std::size_t kp = 0, kd = 0;
    for (std::size_t q = 0; q < bank.size(); ++q) {
      double w = 0.0;
      if (is_pos[q]) w -= std::exp(z_pos[kp++] - lse_pos);
      if (!cfg.fidelity_mode || !is_pos[q]) w += std::exp(z_den[kd++] - lse_den);
      if (w == 0.0) continue;
      add_cos_grad(batch[i], bank.proxies[q], cp[q], p, inv_n * w, r.d_sem[i],
                   r.d_proxy_sem[q], r.d_unc[i], r.d_proxy_unc[q]);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

LossResult compute_loss(std::span<const PairedEmbedding> batch,
                        std::span<const LabelSet> labels, const ProxyBank* bank,
                        const MetricParams& p, const LossConfig& cfg,
                        const MiningConfig& mining) {
  cfg.validate();
  p.validate();
  if (loss_uses_proxies(cfg.variant) && bank == nullptr)
    throw std::invalid_argument("loss variant needs a proxy bank");
  switch (cfg.variant) {
    case LossVariant::kMarginDW:
      return margin_dw_loss(batch, labels, p, cfg, mining);
    case LossVariant::kTripletSemihard:
      return triplet_semihard_loss(batch, labels, p, cfg);
    case LossVariant::kContrastive:
      return contrastive_loss(batch, labels, p, cfg);
    case LossVariant::kMultiSimilarity:
      return multi_similarity_loss(batch, labels, p, cfg);
    case LossVariant::kProxyNCA:
      return proxy_nca_loss(batch, labels, *bank, p, cfg);
    case LossVariant::kProxyAnchor:
      return proxy_anchor_loss(batch, labels, *bank, p, cfg);
    case LossVariant::kSoftmax:
      return softmax_proxy_loss(batch, labels, *bank, p, cfg);
  }
  throw std::logic_error("bad loss variant");
}

}  // namespace ism

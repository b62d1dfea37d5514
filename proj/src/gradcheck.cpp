#include "ism/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

#include "ism/encoder.hpp"
#include "ism/loss.hpp"
#include "ism/metric.hpp"
#include "ism/rng.hpp"

namespace ism {
namespace {

constexpr int kMaxAttempts = 500;

struct FlatCase {
  std::vector<double*> x;
  std::vector<double> analytic;
  std::function<double()> eval;
};

// Central differences against the recorded analytic gradient; errors are
// relative to max(1, |analytic|, |fd|) so near-zero components compare
// absolutely.
double check_case(FlatCase& c, double h) {
  if (c.x.size() != c.analytic.size())
    throw std::logic_error("gradcheck: misaligned case");
  double worst = 0.0;
  for (std::size_t i = 0; i < c.x.size(); ++i) {
    const double save = *c.x[i];
    *c.x[i] = save + h;
    const double fp = c.eval();
    *c.x[i] = save - h;
    const double fm = c.eval();
    *c.x[i] = save;
    const double fd = (fp - fm) / (2.0 * h);
    const double scale = std::max({1.0, std::abs(c.analytic[i]), std::abs(fd)});
    worst = std::max(worst, std::abs(c.analytic[i] - fd) / scale);
  }
  return worst;
}

Vec rand_vec(Rng& rng, std::size_t n, double scale) {
  NormalDraw nd;
  Vec v(n);
  for (auto& x : v) x = scale * nd(rng);
  return v;
}

PairedEmbedding rand_pair(Rng& rng, std::size_t ds, std::size_t du) {
  return {rand_vec(rng, ds, 1.0), rand_vec(rng, du, 0.6)};
}

MetricParams rand_params(Rng& rng) {
  MetricParams p;
  const double gammas[] = {0.0, 0.5, 3.0};
  p.gamma = gammas[next_index(rng, 3)];
  p.tau = next_unit(rng) < 0.5 ? 1.0 : 5.0;
  return p;
}

void push_ptrs(PairedEmbedding& e, std::vector<double*>& xs) {
  for (auto& v : e.semantic) xs.push_back(&v);
  for (auto& v : e.uncertainty) xs.push_back(&v);
}

void push_grads(const Vec& gs, const Vec& gu, std::vector<double>& out) {
  out.insert(out.end(), gs.begin(), gs.end());
  out.insert(out.end(), gu.begin(), gu.end());
}

// Cases are kept away from hinge kinks, metric floors, and degenerate norms;
// central differences are only meaningful on a smooth neighborhood.
bool pair_ok_distance(const PairedEmbedding& a, const PairedEmbedding& b) {
  return semantic_distance(a, b) > 1e-3 && similarity_uncertainty(a, b) > 1e-3;
}

bool pair_ok_cosine(const PairedEmbedding& a, const PairedEmbedding& b) {
  if (vec::norm(a.semantic) < 0.3 || vec::norm(b.semantic) < 0.3) return false;
  const double c = semantic_cosine(a, b);
  return 1.0 - c > 1e-3 && c > -0.999 && similarity_uncertainty(a, b) > 1e-3;
}

// ---------------------------------------------------------------------------
// Metric kinds
// ---------------------------------------------------------------------------

double distance_cases(const GradCheckOptions& opt, GradCheckReport::Kind& kind) {
  auto rng = make_rng(mix64(opt.seed, 11));
  double worst = 0.0;
  for (int n = 0; n < opt.cases_distance; ++n) {
    PairedEmbedding a, b;
    MetricParams p;
    int attempts = 0;
    do {
      if (++attempts > kMaxAttempts)
        throw std::logic_error("gradcheck: distance case generation stalled");
      const std::size_t ds = 2 + next_index(rng, 4);
      const std::size_t du = 2 + next_index(rng, 4);
      a = rand_pair(rng, ds, du);
      b = rand_pair(rng, ds, du);
      p = rand_params(rng);
    } while (!pair_ok_distance(a, b));

    const DistanceGrad g = grad_introspective_distance(a, b, p);
    FlatCase c;
    push_ptrs(a, c.x);
    push_ptrs(b, c.x);
    push_grads(g.d_sem_a, g.d_unc_a, c.analytic);
    push_grads(g.d_sem_b, g.d_unc_b, c.analytic);
    if (opt.inject_sign_bug) {
      // flip the uncertainty block of a; beta is bounded away from zero, so
      // the block is nonzero and the flip must be caught
      for (std::size_t i = a.semantic.size();
           i < a.semantic.size() + a.uncertainty.size(); ++i)
        c.analytic[i] = -c.analytic[i];
    }
    c.eval = [&] { return introspective_distance(a, b, p); };
    worst = std::max(worst, check_case(c, opt.fd_step));
    ++kind.cases;
  }
  return worst;
}

double cosine_cases(const GradCheckOptions& opt, CosineVariant variant,
                    GradCheckReport::Kind& kind) {
  auto rng =
      make_rng(mix64(opt.seed, variant == CosineVariant::kSimilar ? 12 : 13));
  double worst = 0.0;
  for (int n = 0; n < opt.cases_cosine; ++n) {
    PairedEmbedding a, b;
    MetricParams p;
    int attempts = 0;
    do {
      if (++attempts > kMaxAttempts)
        throw std::logic_error("gradcheck: cosine case generation stalled");
      const std::size_t ds = 2 + next_index(rng, 4);
      const std::size_t du = 2 + next_index(rng, 4);
      a = rand_pair(rng, ds, du);
      b = rand_pair(rng, ds, du);
      p = rand_params(rng);
    } while (!pair_ok_cosine(a, b));

    const double cos = semantic_cosine(a, b);
    const double beta = similarity_uncertainty(a, b);
    const CosineChain chain = introspective_cosine_chain(cos, beta, p, variant);
    Vec dca(a.semantic.size()), dcb(b.semantic.size());
    grad_cosine(a.semantic, b.semantic, dca, dcb);

    Vec gs_a(dca.size()), gs_b(dcb.size());
    for (std::size_t i = 0; i < dca.size(); ++i) gs_a[i] = chain.d_cos * dca[i];
    for (std::size_t i = 0; i < dcb.size(); ++i) gs_b[i] = chain.d_cos * dcb[i];
    Vec gu_a(a.uncertainty.size()), gu_b(b.uncertainty.size());
    for (std::size_t i = 0; i < gu_a.size(); ++i) {
      const double d =
          chain.d_beta * (a.uncertainty[i] + b.uncertainty[i]) / beta;
      gu_a[i] = d;
      gu_b[i] = d;
    }

    FlatCase c;
    push_ptrs(a, c.x);
    push_ptrs(b, c.x);
    push_grads(gs_a, gu_a, c.analytic);
    push_grads(gs_b, gu_b, c.analytic);
    c.eval = [&, variant] { return introspective_cosine(a, b, p, variant); };
    worst = std::max(worst, check_case(c, opt.fd_step));
    ++kind.cases;
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Loss kinds
// ---------------------------------------------------------------------------

struct LossCase {
  std::vector<PairedEmbedding> batch;
  std::vector<LabelSet> labels;
  ProxyBank bank;
  MetricParams p;
};

LossCase rand_loss_case(Rng& rng, bool with_proxies) {
  LossCase lc;
  const std::size_t n = 6 + next_index(rng, 3);
  const std::size_t ds = 3 + next_index(rng, 2);
  const std::size_t du = 2 + next_index(rng, 2);
  const int n_classes = 3;
  for (std::size_t i = 0; i < n; ++i) {
    lc.batch.push_back(rand_pair(rng, ds, du));
    lc.labels.push_back(LabelSet(static_cast<int>(i % n_classes)));
  }
  if (next_unit(rng) < 0.25)
    lc.labels[0] = LabelSet(std::vector<int>{0, 1});  // one blended sample
  lc.p = rand_params(rng);
  if (with_proxies) {
    for (int cl = 0; cl < n_classes; ++cl) {
      lc.bank.proxies.push_back(rand_pair(rng, ds, du));
      lc.bank.labels.push_back(cl);
    }
  }
  return lc;
}

bool all_pairs_ok(const LossCase& lc, bool cosine) {
  for (std::size_t i = 0; i < lc.batch.size(); ++i) {
    for (std::size_t j = i + 1; j < lc.batch.size(); ++j) {
      if (!(cosine ? pair_ok_cosine(lc.batch[i], lc.batch[j])
                   : pair_ok_distance(lc.batch[i], lc.batch[j])))
        return false;
    }
  }
  for (const auto& sample : lc.batch) {
    for (const auto& proxy : lc.bank.proxies) {
      if (!(cosine ? pair_ok_cosine(sample, proxy)
                   : pair_ok_distance(sample, proxy)))
        return false;
    }
  }
  return true;
}

// Runs one loss case: flattens pointers and analytic grads, then compares
// against finite differences of `eval`, which must see the mutations.
double run_loss_case(LossCase& lc, const LossResult& res,
                     const std::function<double()>& eval, double h) {
  FlatCase c;
  for (std::size_t i = 0; i < lc.batch.size(); ++i) {
    push_ptrs(lc.batch[i], c.x);
    push_grads(res.d_sem[i], res.d_unc[i], c.analytic);
  }
  for (std::size_t q = 0; q < lc.bank.size(); ++q) {
    push_ptrs(lc.bank.proxies[q], c.x);
    push_grads(res.d_proxy_sem[q], res.d_proxy_unc[q], c.analytic);
  }
  c.eval = eval;
  return check_case(c, h);
}

double loss_cases(const GradCheckOptions& opt, LossVariant variant,
                  GradCheckReport::Kind& kind) {
  auto rng =
      make_rng(mix64(opt.seed, 20 + static_cast<std::uint64_t>(variant)));
  const bool proxies = loss_uses_proxies(variant);
  const bool cosine = loss_uses_cosine(variant);
  const LossConfig cfg = LossConfig::defaults_for(variant);
  double worst = 0.0;

  for (int n = 0; n < opt.cases_loss; ++n) {
    bool done = false;
    for (int attempts = 0; !done; ++attempts) {
      if (attempts > kMaxAttempts)
        throw std::logic_error("gradcheck: case generation stalled for " +
                               loss_variant_name(variant));
      LossCase lc = rand_loss_case(rng, proxies);
      if (!all_pairs_ok(lc, cosine)) continue;
      auto dist = [&](std::size_t i, std::size_t j) {
        return introspective_distance(lc.batch[i], lc.batch[j], lc.p);
      };

      switch (variant) {
        case LossVariant::kMarginDW: {
          MiningConfig mining;
          mining.n_dim = static_cast<int>(lc.batch[0].semantic.size());
          mining.rng_seed = mix64(opt.seed, 777, static_cast<std::uint64_t>(n));
          const MarginPairs pairs =
              mine_margin_pairs(lc.batch, lc.labels, lc.p, mining);
          bool ok = !pairs.pos.empty();
          for (std::size_t k = 0; k < pairs.pos.size() && ok; ++k) {
            if (std::abs(dist(pairs.pos[k].first, pairs.pos[k].second) -
                         cfg.xi) < 1e-3)
              ok = false;
            if (pairs.neg[k] &&
                std::abs(cfg.omega - dist(pairs.pos[k].first, *pairs.neg[k])) <
                    1e-3)
              ok = false;
          }
          if (!ok) continue;
          const LossResult res = margin_dw_eval(lc.batch, pairs, lc.p, cfg);
          worst = std::max(
              worst, run_loss_case(lc, res,
                                   [&lc, &pairs, &cfg] {
                                     return margin_dw_eval(lc.batch, pairs,
                                                           lc.p, cfg)
                                         .value;
                                   },
                                   opt.fd_step));
          done = true;
          break;
        }
        case LossVariant::kTripletSemihard: {
          const TripletSet set =
              mine_semihard_triplets(lc.batch, lc.labels, lc.p);
          bool ok = !set.triplets.empty();
          for (const auto& t : set.triplets) {
            if (!ok) break;
            const double h =
                dist(t.anchor, t.positive) - dist(t.anchor, t.negative) +
                cfg.delta;
            if (std::abs(h) < 1e-3) ok = false;
          }
          if (!ok) continue;
          const LossResult res = triplet_eval(lc.batch, set, lc.p, cfg);
          worst = std::max(
              worst, run_loss_case(lc, res,
                                   [&lc, &set, &cfg] {
                                     return triplet_eval(lc.batch, set, lc.p,
                                                         cfg)
                                         .value;
                                   },
                                   opt.fd_step));
          done = true;
          break;
        }
        case LossVariant::kContrastive: {
          bool ok = true;
          for (std::size_t i = 0; i < lc.batch.size() && ok; ++i)
            for (std::size_t j = i + 1; j < lc.batch.size() && ok; ++j)
              if (!label_equal(lc.labels[i], lc.labels[j]) &&
                  std::abs(cfg.delta - dist(i, j)) < 1e-3)
                ok = false;
          if (!ok) continue;
          const LossResult res =
              contrastive_loss(lc.batch, lc.labels, lc.p, cfg);
          worst = std::max(
              worst, run_loss_case(lc, res,
                                   [&lc, &cfg] {
                                     return contrastive_loss(lc.batch,
                                                             lc.labels, lc.p,
                                                             cfg)
                                         .value;
                                   },
                                   opt.fd_step));
          done = true;
          break;
        }
        case LossVariant::kMultiSimilarity: {
          const MsSelection sel =
              select_ms_pairs(lc.batch, lc.labels, lc.p, cfg);
          bool any = false;
          for (const auto& kept : sel.kept)
            any = any || !kept.pos.empty() || !kept.neg.empty();
          if (!any) continue;
          const LossResult res =
              multi_similarity_eval(lc.batch, sel, lc.p, cfg);
          worst = std::max(
              worst, run_loss_case(lc, res,
                                   [&lc, &sel, &cfg] {
                                     return multi_similarity_eval(lc.batch, sel,
                                                                  lc.p, cfg)
                                         .value;
                                   },
                                   opt.fd_step));
          done = true;
          break;
        }
        case LossVariant::kProxyNCA: {
          const LossResult res =
              proxy_nca_loss(lc.batch, lc.labels, lc.bank, lc.p, cfg);
          if (res.clamp_events > 0) continue;
          worst = std::max(
              worst, run_loss_case(lc, res,
                                   [&lc, &cfg] {
                                     return proxy_nca_loss(lc.batch, lc.labels,
                                                           lc.bank, lc.p, cfg)
                                         .value;
                                   },
                                   opt.fd_step));
          done = true;
          break;
        }
        case LossVariant::kProxyAnchor: {
          const LossResult res =
              proxy_anchor_loss(lc.batch, lc.labels, lc.bank, lc.p, cfg);
          worst = std::max(
              worst, run_loss_case(lc, res,
                                   [&lc, &cfg] {
                                     return proxy_anchor_loss(lc.batch,
                                                              lc.labels,
                                                              lc.bank, lc.p,
                                                              cfg)
                                         .value;
                                   },
                                   opt.fd_step));
          done = true;
          break;
        }
        case LossVariant::kSoftmax: {
          const LossResult res =
              softmax_proxy_loss(lc.batch, lc.labels, lc.bank, lc.p, cfg);
          if (res.clamp_events > 0) continue;
          worst = std::max(
              worst, run_loss_case(lc, res,
                                   [&lc, &cfg] {
                                     return softmax_proxy_loss(lc.batch,
                                                               lc.labels,
                                                               lc.bank, lc.p,
                                                               cfg)
                                         .value;
                                   },
                                   opt.fd_step));
          done = true;
          break;
        }
      }
    }
    ++kind.cases;
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Encoder kinds
// ---------------------------------------------------------------------------

EncoderSpec rand_encoder_spec(Rng& rng) {
  EncoderSpec spec;
  spec.input_dim = 3 + next_index(rng, 2);
  if (next_unit(rng) < 0.5)
    spec.hidden_dims = {4};
  else
    spec.hidden_dims = {4, 3};
  spec.semantic_dim = 3;
  spec.uncertainty_dim = 2;
  spec.normalize_semantic = next_unit(rng) < 0.5;
  return spec;
}

bool trace_away_from_kinks(const Encoder::Trace& trace) {
  for (const auto& s : trace.samples) {
    for (const auto& z : s.trunk_pre)
      for (double v : z)
        if (std::abs(v) < 1e-3) return false;
    if (!s.sem_raw.empty() && vec::norm(s.sem_raw) < 1e-2) return false;
  }
  return true;
}

// Linear functional of the outputs: isolates the encoder backward, including
// the normalization Jacobian, from any loss structure.
double encoder_cases(const GradCheckOptions& opt, GradCheckReport::Kind& kind) {
  auto rng = make_rng(mix64(opt.seed, 30));
  double worst = 0.0;
  for (int n = 0; n < opt.cases_encoder; ++n) {
    for (int attempts = 0;; ++attempts) {
      if (attempts > kMaxAttempts)
        throw std::logic_error("gradcheck: encoder case generation stalled");
      const EncoderSpec spec = rand_encoder_spec(rng);
      Encoder enc(spec, mix64(opt.seed, 31, static_cast<std::uint64_t>(n)));
      const std::size_t batch = 4;
      std::vector<Vec> inputs;
      for (std::size_t i = 0; i < batch; ++i)
        inputs.push_back(rand_vec(rng, spec.input_dim, 1.5));
      std::vector<Vec> ws, wu;
      for (std::size_t i = 0; i < batch; ++i) {
        ws.push_back(rand_vec(rng, spec.semantic_dim, 1.0));
        wu.push_back(rand_vec(rng, spec.uncertainty_dim, 1.0));
      }

      Encoder::Trace trace;
      enc.forward(inputs, &trace);
      if (!trace_away_from_kinks(trace)) continue;

      std::vector<Tensor> grads = make_like(enc.params());
      enc.backward(inputs, trace, ws, wu, grads);

      FlatCase c;
      for (std::size_t t = 0; t < enc.params().size(); ++t) {
        for (std::size_t i = 0; i < enc.params()[t].data.size(); ++i) {
          c.x.push_back(&enc.params()[t].data[i]);
          c.analytic.push_back(grads[t].data[i]);
        }
      }
      c.eval = [&] {
        const auto out = enc.forward(inputs);
        double v = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
          for (std::size_t d = 0; d < ws[i].size(); ++d)
            v += ws[i][d] * out[i].semantic[d];
          for (std::size_t d = 0; d < wu[i].size(); ++d)
            v += wu[i][d] * out[i].uncertainty[d];
        }
        return v;
      };
      worst = std::max(worst, check_case(c, opt.fd_step));
      ++kind.cases;
      break;
    }
  }
  return worst;
}

// Full chain: encoder forward into the contrastive loss, differentiated with
// respect to the encoder parameters.
double composed_cases(const GradCheckOptions& opt, GradCheckReport::Kind& kind) {
  auto rng = make_rng(mix64(opt.seed, 32));
  const LossConfig cfg = LossConfig::defaults_for(LossVariant::kContrastive);
  double worst = 0.0;
  for (int n = 0; n < opt.cases_composed; ++n) {
    for (int attempts = 0;; ++attempts) {
      if (attempts > kMaxAttempts)
        throw std::logic_error("gradcheck: composed case generation stalled");
      const EncoderSpec spec = rand_encoder_spec(rng);
      Encoder enc(spec, mix64(opt.seed, 33, static_cast<std::uint64_t>(n)));
      const std::size_t batch = 6;
      std::vector<Vec> inputs;
      std::vector<LabelSet> labels;
      for (std::size_t i = 0; i < batch; ++i) {
        inputs.push_back(rand_vec(rng, spec.input_dim, 1.5));
        labels.push_back(LabelSet(static_cast<int>(i % 2)));
      }
      const MetricParams p = rand_params(rng);

      Encoder::Trace trace;
      const auto embeddings = enc.forward(inputs, &trace);
      if (!trace_away_from_kinks(trace)) continue;
      bool ok = true;
      for (std::size_t i = 0; i < batch && ok; ++i) {
        for (std::size_t j = i + 1; j < batch && ok; ++j) {
          if (!pair_ok_distance(embeddings[i], embeddings[j])) ok = false;
          else if (!label_equal(labels[i], labels[j]) &&
                   std::abs(cfg.delta - introspective_distance(
                                            embeddings[i], embeddings[j], p)) <
                       1e-3)
            ok = false;
        }
      }
      if (!ok) continue;

      const LossResult res = contrastive_loss(embeddings, labels, p, cfg);
      std::vector<Tensor> grads = make_like(enc.params());
      enc.backward(inputs, trace, res.d_sem, res.d_unc, grads);

      FlatCase c;
      for (std::size_t t = 0; t < enc.params().size(); ++t) {
        for (std::size_t i = 0; i < enc.params()[t].data.size(); ++i) {
          c.x.push_back(&enc.params()[t].data[i]);
          c.analytic.push_back(grads[t].data[i]);
        }
      }
      c.eval = [&] {
        const auto out = enc.forward(inputs);
        return contrastive_loss(out, labels, p, cfg).value;
      };
      worst = std::max(worst, check_case(c, opt.fd_step));
      ++kind.cases;
      break;
    }
  }
  return worst;
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckOptions& opt) {
  GradCheckReport report;
  report.tol = opt.tol;

  auto add = [&](const std::string& name, auto&& fn) {
    GradCheckReport::Kind kind;
    kind.name = name;
    kind.max_rel_err = fn(kind);
    report.total_cases += kind.cases;
    report.max_rel_err = std::max(report.max_rel_err, kind.max_rel_err);
    report.kinds.push_back(std::move(kind));
  };

  add("distance", [&](auto& k) { return distance_cases(opt, k); });
  add("cosine_similar",
      [&](auto& k) { return cosine_cases(opt, CosineVariant::kSimilar, k); });
  add("cosine_dissimilar", [&](auto& k) {
    return cosine_cases(opt, CosineVariant::kDissimilar, k);
  });
  for (LossVariant v :
       {LossVariant::kMarginDW, LossVariant::kTripletSemihard,
        LossVariant::kContrastive, LossVariant::kMultiSimilarity,
        LossVariant::kProxyNCA, LossVariant::kProxyAnchor,
        LossVariant::kSoftmax}) {
    add(loss_variant_name(v), [&](auto& k) { return loss_cases(opt, v, k); });
  }
  add("encoder", [&](auto& k) { return encoder_cases(opt, k); });
  add("encoder_composed", [&](auto& k) { return composed_cases(opt, k); });

  report.pass = report.max_rel_err <= opt.tol;
  return report;
}

}  // namespace ism

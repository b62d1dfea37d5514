#include "ism/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "ism/rng.hpp"

namespace ism {
namespace {

// Below this the semantic head output counts as zero and is not normalized.
constexpr double kNormFloor = 1e-12;

// y += W x + b
void affine(const Tensor& w, const Tensor& b, const Vec& x, Vec& y) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    double acc = b.data[r];
    for (std::size_t c = 0; c < w.cols; ++c) acc += w.at(r, c) * x[c];
    y[r] = acc;
  }
}

// Backward of y = W x + b: accumulates into dW, db and writes dx.
void affine_backward(const Tensor& w, const Vec& x, const Vec& dy, Tensor& dw,
                     Tensor& db, Vec* dx) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    db.data[r] += dy[r];
    for (std::size_t c = 0; c < w.cols; ++c) dw.at(r, c) += dy[r] * x[c];
  }
  if (dx != nullptr) {
    for (std::size_t c = 0; c < w.cols; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < w.rows; ++r) acc += w.at(r, c) * dy[r];
      (*dx)[c] = acc;
    }
  }
}

}  // namespace

std::vector<Tensor> make_like(const std::vector<Tensor>& shapes) {
  std::vector<Tensor> out;
  out.reserve(shapes.size());
  for (const auto& t : shapes) {
    Tensor z;
    z.name = t.name;
    z.rows = t.rows;
    z.cols = t.cols;
    z.data.assign(t.rows * t.cols, 0.0);
    out.push_back(std::move(z));
  }
  return out;
}

void EncoderSpec::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("encoder spec: ") + what);
  };
  need(input_dim >= 1, "input_dim must be >= 1");
  need(semantic_dim >= 1, "semantic_dim must be >= 1");
  need(uncertainty_dim >= 1, "uncertainty_dim must be >= 1");
  for (std::size_t h : hidden_dims) need(h >= 1, "hidden dims must be >= 1");
}

Encoder::Encoder(const EncoderSpec& spec, std::uint64_t init_seed)
    : spec_(spec) {
  spec_.validate();
  n_trunk_ = spec_.hidden_dims.size();
  std::size_t in = spec_.input_dim;
  auto add_layer = [&](const std::string& name, std::size_t out_dim,
                       std::size_t in_dim) {
    Tensor w;
    w.name = name + ".w";
    w.rows = out_dim;
    w.cols = in_dim;
    w.data.resize(out_dim * in_dim);
    Tensor b;
    b.name = name + ".b";
    b.rows = out_dim;
    b.cols = 1;
    b.data.assign(out_dim, 0.0);
    params_.push_back(std::move(w));
    params_.push_back(std::move(b));
  };
  for (std::size_t l = 0; l < n_trunk_; ++l) {
    add_layer("trunk" + std::to_string(l), spec_.hidden_dims[l], in);
    in = spec_.hidden_dims[l];
  }
  add_layer("sem", spec_.semantic_dim, in);
  add_layer("unc", spec_.uncertainty_dim, in);

  for (std::size_t idx = 0; idx < params_.size(); ++idx) {
    Tensor& t = params_[idx];
    if (t.cols == 1) continue;  // biases stay zero
    auto rng = make_rng(mix64(init_seed, idx));
    const double limit = std::sqrt(6.0 / static_cast<double>(t.cols));
    for (double& v : t.data) v = next_uniform(rng, -limit, limit);
  }
}

Encoder::Encoder(const EncoderSpec& spec, std::vector<Tensor> params)
    : spec_(spec), params_(std::move(params)) {
  spec_.validate();
  n_trunk_ = spec_.hidden_dims.size();
  const Encoder fresh(spec_, 0);
  if (params_.size() != fresh.params_.size())
    throw std::invalid_argument("encoder: wrong tensor count");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& got = params_[i];
    const Tensor& want = fresh.params_[i];
    if (got.name != want.name || got.rows != want.rows ||
        got.cols != want.cols || got.data.size() != want.data.size())
      throw std::invalid_argument("encoder: tensor mismatch at " + want.name);
  }
}

std::size_t Encoder::param_count() const {
  std::size_t n = 0;
  for (const auto& t : params_) n += t.data.size();
  return n;
}

void Encoder::check_input(const Vec& x) const {
  if (x.size() != spec_.input_dim)
    throw std::invalid_argument("encoder: input has wrong dimension");
}

std::vector<PairedEmbedding> Encoder::forward(const std::vector<Vec>& inputs,
                                              Trace* trace) const {
  std::vector<PairedEmbedding> out;
  out.reserve(inputs.size());
  if (trace != nullptr) {
    trace->samples.clear();
    trace->samples.reserve(inputs.size());
  }
  for (const Vec& x : inputs) {
    check_input(x);
    Trace::Sample s;
    const Vec* cur = &x;
    for (std::size_t l = 0; l < n_trunk_; ++l) {
      const Tensor& w = params_[2 * l];
      const Tensor& b = params_[2 * l + 1];
      Vec z(w.rows);
      affine(w, b, *cur, z);
      Vec a(w.rows);
      for (std::size_t r = 0; r < w.rows; ++r) a[r] = z[r] > 0.0 ? z[r] : 0.0;
      s.trunk_pre.push_back(std::move(z));
      s.trunk_post.push_back(std::move(a));
      cur = &s.trunk_post.back();
    }
    PairedEmbedding e;
    e.semantic.resize(spec_.semantic_dim);
    affine(params_[2 * n_trunk_], params_[2 * n_trunk_ + 1], *cur, e.semantic);
    if (spec_.normalize_semantic) {
      s.sem_raw = e.semantic;
      const double n = vec::norm(e.semantic);
      s.sem_norm = n;
      // A fully clipped trunk can emit an exact zero head output; leave it
      // untouched rather than dividing by zero. Backward mirrors this by
      // passing gradients straight through, so the bias can recover.
      if (n > kNormFloor)
        for (double& v : e.semantic) v /= n;
    }
    e.uncertainty.assign(spec_.uncertainty_dim, 0.0);
    if (!spec_.freeze_uncertainty) {
      affine(params_[2 * n_trunk_ + 2], params_[2 * n_trunk_ + 3], *cur,
             e.uncertainty);
    }
    if (trace != nullptr) trace->samples.push_back(std::move(s));
    out.push_back(std::move(e));
  }
  return out;
}

PairedEmbedding Encoder::forward_one(const Vec& input) const {
  return forward(std::vector<Vec>{input}).front();
}

void Encoder::backward(const std::vector<Vec>& inputs, const Trace& trace,
                       const std::vector<Vec>& d_sem,
                       const std::vector<Vec>& d_unc,
                       std::vector<Tensor>& grads) const {
  if (trace.samples.size() != inputs.size() || d_sem.size() != inputs.size() ||
      d_unc.size() != inputs.size())
    throw std::invalid_argument("encoder backward: size mismatch");
  if (grads.size() != params_.size())
    throw std::invalid_argument("encoder backward: bad grad store");
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    const Trace::Sample& s = trace.samples[n];
    const Vec& head_in = n_trunk_ > 0 ? s.trunk_post.back() : inputs[n];

    Vec d_head_in(head_in.size(), 0.0);

    // Semantic head, undoing the normalization first:
    // d/dv (v/||v||) = (I - s s^T) / ||v|| with s = v/||v||.
    Vec dv = d_sem[n];
    if (spec_.normalize_semantic && s.sem_norm > kNormFloor) {
      const double norm = s.sem_norm;
      double proj = 0.0;
      for (std::size_t i = 0; i < dv.size(); ++i)
        proj += dv[i] * s.sem_raw[i] / norm;
      for (std::size_t i = 0; i < dv.size(); ++i)
        dv[i] = (dv[i] - proj * s.sem_raw[i] / norm) / norm;
    }
    {
      Vec dx(head_in.size());
      affine_backward(params_[2 * n_trunk_], head_in, dv, grads[2 * n_trunk_],
                      grads[2 * n_trunk_ + 1], &dx);
      for (std::size_t i = 0; i < dx.size(); ++i) d_head_in[i] += dx[i];
    }
    if (!spec_.freeze_uncertainty) {
      Vec dx(head_in.size());
      affine_backward(params_[2 * n_trunk_ + 2], head_in, d_unc[n],
                      grads[2 * n_trunk_ + 2], grads[2 * n_trunk_ + 3], &dx);
      for (std::size_t i = 0; i < dx.size(); ++i) d_head_in[i] += dx[i];
    }

    // Trunk, last layer first. ReLU subgradient at z == 0 is zero.
    Vec da = std::move(d_head_in);
    for (std::size_t l = n_trunk_; l-- > 0;) {
      const Vec& z = s.trunk_pre[l];
      Vec dz(z.size());
      for (std::size_t r = 0; r < z.size(); ++r)
        dz[r] = z[r] > 0.0 ? da[r] : 0.0;
      const Vec& layer_in = l > 0 ? s.trunk_post[l - 1] : inputs[n];
      Vec dx(layer_in.size());
      affine_backward(params_[2 * l], layer_in, dz, grads[2 * l],
                      grads[2 * l + 1], &dx);
      da = std::move(dx);
    }
  }
}

void AdamWConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("adamw: ") + what);
  };
  need(lr > 0.0, "lr must be > 0");
  need(beta1 >= 0.0 && beta1 < 1.0, "beta1 must be in [0, 1)");
  need(beta2 >= 0.0 && beta2 < 1.0, "beta2 must be in [0, 1)");
  need(eps > 0.0, "eps must be > 0");
  need(weight_decay >= 0.0, "weight_decay must be >= 0");
  need(lr_schedule == "constant" || lr_schedule == "cosine" ||
           lr_schedule == "step",
       "lr_schedule must be \"constant\", \"cosine\", or \"step\"");
  need(lr_min >= 0.0 && lr_min <= lr, "lr_min must be in [0, lr]");
}

AdamW::AdamW(const std::vector<Tensor>& params, const AdamWConfig& cfg)
    : cfg_(cfg) {
  cfg_.validate();
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& t : params) {
    m_.emplace_back(t.data.size(), 0.0);
    v_.emplace_back(t.data.size(), 0.0);
  }
}

void AdamW::set_lr(double lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("adamw: lr must be >= 0");
  cfg_.lr = lr;
}

void AdamW::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::invalid_argument("adamw: tensor count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Vec& p = params[k].data;
    const Vec& g = grads[k].data;
    if (p.size() != m_[k].size() || g.size() != m_[k].size())
      throw std::invalid_argument("adamw: tensor shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
      v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double m_hat = m_[k][i] / bc1;
      const double v_hat = v_[k][i] / bc2;
      p[i] -= cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                         cfg_.weight_decay * p[i]);
    }
  }
}

}  // namespace ism

#pragma once

/// Small MLP encoder producing paired embeddings: a shared ReLU trunk with
/// two linear heads, one semantic and one uncertainty. Reverse-mode gradients
/// are exact, including the Jacobian of the optional L2 normalization of the
/// semantic head. Everything is plain double loops; batches at desk scale do
/// not justify a matrix library here.

#include <cstdint>
#include <string>
#include <vector>

#include "ism/metric.hpp"
#include "ism/vec.hpp"

namespace ism {

/// Row-major parameter block. cols == 1 for biases.
struct Tensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 1;
  Vec data;

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Zero-filled tensors with the same names and shapes.
std::vector<Tensor> make_like(const std::vector<Tensor>& shapes);

struct EncoderSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t semantic_dim = 0;
  std::size_t uncertainty_dim = 0;
  bool normalize_semantic = false;
  // Pins the uncertainty output to exactly zero and silences the head's
  // gradients; with gamma = 0 this turns the whole pipeline into the
  // classical baseline, bit for bit.
  bool freeze_uncertainty = false;

  void validate() const;
};

class Encoder {
 public:
  /// He-uniform weights (limit sqrt(6/fan_in)), zero biases, one rng
  /// substream per tensor so the draw order is layout independent.
  Encoder(const EncoderSpec& spec, std::uint64_t init_seed);
  /// Adopts existing parameters (checkpoint load). Shapes are checked.
  Encoder(const EncoderSpec& spec, std::vector<Tensor> params);

  const EncoderSpec& spec() const { return spec_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::size_t param_count() const;

  /// Saved activations of one forward pass, consumed by backward.
  struct Trace {
    struct Sample {
      std::vector<Vec> trunk_pre;   // z of each trunk layer
      std::vector<Vec> trunk_post;  // relu(z)
      Vec sem_raw;                  // semantic head before normalization
      double sem_norm = 0.0;
    };
    std::vector<Sample> samples;
  };

  std::vector<PairedEmbedding> forward(const std::vector<Vec>& inputs,
                                       Trace* trace = nullptr) const;
  PairedEmbedding forward_one(const Vec& input) const;

  /// Accumulates dL/d(params) into `grads` (shapes from make_like) given the
  /// loss gradients with respect to the emitted embeddings. Reductions run
  /// in sample order, then element order, so results are reproducible.
  void backward(const std::vector<Vec>& inputs, const Trace& trace,
                const std::vector<Vec>& d_sem, const std::vector<Vec>& d_unc,
                std::vector<Tensor>& grads) const;

 private:
  void check_input(const Vec& x) const;

  EncoderSpec spec_;
  std::vector<Tensor> params_;
  std::size_t n_trunk_ = 0;  // number of trunk layers
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: p -= lr * wd * p

  // Per-epoch learning-rate schedule, applied by the training loop rather
  // than by AdamW itself: "constant" keeps lr, "cosine" anneals lr down to
  // lr_min over the run, "step" drops lr to lr_min at the halfway epoch.
  std::string lr_schedule = "constant";
  double lr_min = 0.0;

  void validate() const;
};

class AdamW {
 public:
  AdamW(const std::vector<Tensor>& params, const AdamWConfig& cfg);

  /// One update with bias-corrected moments. `params` and `grads` must match
  /// the shapes given at construction.
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);

  /// Replaces the learning rate for subsequent steps. Zero is allowed so an
  /// annealed schedule can bottom out exactly.
  void set_lr(double lr);

  double lr() const { return cfg_.lr; }
  long step_count() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<Vec> m_, v_;
  long t_ = 0;
};

}  // namespace ism

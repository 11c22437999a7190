#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "scribe/attention.hpp"
#include "scribe/lstm.hpp"
#include "scribe/rng.hpp"
#include "scribe/tape.hpp"

namespace scribe {

struct DrawConfig {
  std::size_t glimpses = 8;   // timesteps T
  std::size_t hidden = 128;   // LSTM size, shared by encoder and decoder
  std::size_t latent = 32;
  std::size_t read_n = 2;
  std::size_t write_n = 5;
  bool attention = false;
  std::size_t width = 28, height = 28;

  std::size_t pixels() const { return width * height; }
  void validate() const;
};

struct LossBreakdown {
  real lx = 0, lz = 0, total = 0;  // nats per image
};

// Sequential auto-encoder that accumulates decoder writes onto a canvas;
// sigmoid(c_T) parameterises per-pixel Bernoulli means.
class DrawModel {
 public:
  DrawModel(DrawConfig cfg, std::uint64_t init_seed);

  const DrawConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  struct StepState {
    Value canvas;  // (batch, pixels), pre-sigmoid
    LstmCell::State enc, dec;
    Value mu, sigma, logsigma, z;
    int t = 0;
  };

  StepState initial_state(Tape& tape, std::size_t batch) const;

  struct Latent {
    Value z, mu, sigma, logsigma;
  };
  // z = mu + sigma * eps with eps held constant on the tape, so gradients
  // flow to (mu, sigma) only
  Latent sample_latent(Tape& tape, Value h_enc, const Tensor& eps) const;
  Latent sample_latent(Tape& tape, Value h_enc, Rng& rng) const;

  // error image, read, encoder, latent sample, decoder, canvas write --
  // one sweep in that fixed order
  StepState inference_step(Tape& tape, Value image, const StepState& prev,
                           const Tensor& eps) const;

  // stable binary cross-entropy against sigmoid(canvas), summed over the
  // batch; image values must lie in [0, 1]
  Value reconstruction_loss(Tape& tape, Value canvas, Value image) const;
  // one step's KL(Q||N(0,I)) summed over the batch
  Value latent_loss_term(Tape& tape, Value mu, Value logsigma) const;

  struct LossValues {
    Value lx, lz, total;          // per-image means
    std::vector<real> lz_steps;   // per-image mean KL per step
    StepState final_state;
  };
  // frozen_eps, when given, supplies the per-step noise (gradient checking);
  // otherwise eps is drawn fresh from rng
  LossValues build_loss(Tape& tape, const Tensor& images, Rng& rng,
                        const std::vector<Tensor>* frozen_eps = nullptr) const;

  // forward-only convenience
  LossBreakdown loss(const Tensor& images, Rng& rng) const;

  struct Generation {
    std::vector<Tensor> canvases;  // T tensors (count, pixels), pre-sigmoid
    std::vector<Tensor> deltas;    // write outputs, canvases[t] - canvases[t-1]
    std::vector<Tensor> means;     // sigmoid(canvases[t])
    Tensor samples;                // (count, pixels) Bernoulli draws from final means
    std::vector<std::vector<AttentionParams>> boxes;  // [t][sample], attention only
  };
  // decoder-only unroll from prior samples; the encoder plays no part
  Generation generate(std::size_t count, Rng& rng) const;

 private:
  Value read(Tape& tape, Value image, Value err, Value h_dec_prev) const;
  Value write(Tape& tape, Value h_dec, AttentionValues* window = nullptr) const;

  DrawConfig cfg_;
  ParamStore params_;
  std::optional<LstmCell> enc_, dec_;
  Param *qmu_w_, *qmu_b_, *qls_w_, *qls_b_;
  Param *write_w_, *write_b_;  // canvas map, or patch emission under attention
  Param *read_attn_w_ = nullptr, *read_attn_b_ = nullptr;
  Param *write_attn_w_ = nullptr, *write_attn_b_ = nullptr;
  Param *c0_, *h_enc0_, *h_dec0_;
};

}  // namespace scribe

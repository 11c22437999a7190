#include "scribe/model.hpp"

#include <cmath>
#include <stdexcept>

namespace scribe {

namespace {

void add_linear(ParamStore& store, const std::string& name, std::size_t out, std::size_t in,
                Rng& rng, Param** w, Param** b) {
  Tensor wt({out, in});
  const real s = 1.0 / std::sqrt(static_cast<real>(in));
  rng.fill_uniform(wt, -s, s);
  *w = &store.add(name + "/w", std::move(wt));
  *b = &store.add(name + "/b", Tensor({out}));
}

}  // namespace

void DrawConfig::validate() const {
  if (glimpses < 1 || hidden < 1 || latent < 1 || width < 1 || height < 1)
    throw std::invalid_argument("draw config: all dimensions must be positive");
  if (attention && (read_n < 2 || write_n < 2))
    throw std::invalid_argument("draw config: attentive read/write sizes must be >= 2");
}

DrawModel::DrawModel(DrawConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  const std::size_t read_len =
      cfg_.attention ? 2 * cfg_.read_n * cfg_.read_n : 2 * cfg_.pixels();
  enc_.emplace(params_, "enc", read_len + cfg_.hidden, cfg_.hidden, rng);
  dec_.emplace(params_, "dec", cfg_.latent, cfg_.hidden, rng);
  add_linear(params_, "q/mu", cfg_.latent, cfg_.hidden, rng, &qmu_w_, &qmu_b_);
  add_linear(params_, "q/logsigma", cfg_.latent, cfg_.hidden, rng, &qls_w_, &qls_b_);
  if (cfg_.attention) {
    add_linear(params_, "write/patch", cfg_.write_n * cfg_.write_n, cfg_.hidden, rng, &write_w_,
               &write_b_);
    add_linear(params_, "read/window", 5, cfg_.hidden, rng, &read_attn_w_, &read_attn_b_);
    add_linear(params_, "write/window", 5, cfg_.hidden, rng, &write_attn_w_, &write_attn_b_);
  } else {
    add_linear(params_, "write/canvas", cfg_.pixels(), cfg_.hidden, rng, &write_w_, &write_b_);
  }
  c0_ = &params_.add("init/canvas", Tensor({cfg_.pixels()}));
  h_enc0_ = &params_.add("init/h_enc", Tensor({cfg_.hidden}));
  h_dec0_ = &params_.add("init/h_dec", Tensor({cfg_.hidden}));
}

DrawModel::StepState DrawModel::initial_state(Tape& tape, std::size_t batch) const {
  StepState st;
  st.canvas = tape.repeat_rows(tape.param(*c0_), batch);
  st.enc.h = tape.repeat_rows(tape.param(*h_enc0_), batch);
  st.dec.h = tape.repeat_rows(tape.param(*h_dec0_), batch);
  st.enc.c = tape.constant(Tensor({batch, cfg_.hidden}));
  st.dec.c = tape.constant(Tensor({batch, cfg_.hidden}));
  st.t = 0;
  return st;
}

DrawModel::Latent DrawModel::sample_latent(Tape& tape, Value h_enc, const Tensor& eps) const {
  Latent lat;
  lat.mu = tape.linear(*qmu_w_, *qmu_b_, h_enc);
  lat.logsigma = tape.linear(*qls_w_, *qls_b_, h_enc);
  lat.sigma = tape.exp(lat.logsigma);
  if (!tape.value(lat.mu).same_shape(eps))
    throw std::invalid_argument("sample_latent: eps shape " + shape_str(eps.shape()) +
                                " does not match mu " + shape_str(tape.value(lat.mu).shape()));
  lat.z = tape.add(lat.mu, tape.mul(lat.sigma, tape.constant(eps)));
  return lat;
}

DrawModel::Latent DrawModel::sample_latent(Tape& tape, Value h_enc, Rng& rng) const {
  Tensor eps(tape.value(h_enc).rank() == 2
                 ? std::vector<std::size_t>{tape.value(h_enc).rows(), cfg_.latent}
                 : std::vector<std::size_t>{cfg_.latent});
  rng.fill_normal(eps);
  return sample_latent(tape, h_enc, eps);
}

Value DrawModel::read(Tape& tape, Value image, Value err, Value h_dec_prev) const {
  if (!cfg_.attention) return read_plain(tape, image, err);
  Value raw = tape.linear(*read_attn_w_, *read_attn_b_, h_dec_prev);
  AttentionValues p = attention_params(tape, raw, cfg_.width, cfg_.height, cfg_.read_n);
  Filterbanks f = filterbanks(tape, p, cfg_.read_n, cfg_.width, cfg_.height);
  return read_attn(tape, image, err, f, p.gamma);
}

Value DrawModel::write(Tape& tape, Value h_dec, AttentionValues* window) const {
  if (!cfg_.attention) return write_plain(tape, *write_w_, *write_b_, h_dec);
  Value patch = tape.linear(*write_w_, *write_b_, h_dec);
  Value raw = tape.linear(*write_attn_w_, *write_attn_b_, h_dec);
  AttentionValues p = attention_params(tape, raw, cfg_.width, cfg_.height, cfg_.write_n);
  Filterbanks f = filterbanks(tape, p, cfg_.write_n, cfg_.width, cfg_.height);
  if (window) *window = p;
  return write_attn(tape, patch, f, p.gamma);
}

DrawModel::StepState DrawModel::inference_step(Tape& tape, Value image, const StepState& prev,
                                               const Tensor& eps) const {
  if (prev.t >= static_cast<int>(cfg_.glimpses))
    throw std::logic_error("inference_step: all " + std::to_string(cfg_.glimpses) +
                           " steps already taken");
  StepState st;
  Value err = tape.sub(image, tape.logistic(prev.canvas));
  Value r = read(tape, image, err, prev.dec.h);
  st.enc = enc_->step(tape, tape.concat_cols(r, prev.dec.h), prev.enc);
  Latent lat = sample_latent(tape, st.enc.h, eps);
  st.mu = lat.mu;
  st.sigma = lat.sigma;
  st.logsigma = lat.logsigma;
  st.z = lat.z;
  st.dec = dec_->step(tape, lat.z, prev.dec);
  st.canvas = tape.add(prev.canvas, write(tape, st.dec.h));
  st.t = prev.t + 1;
  return st;
}

Value DrawModel::reconstruction_loss(Tape& tape, Value canvas, Value image) const {
  return tape.bce_with_logits(canvas, image);
}

Value DrawModel::latent_loss_term(Tape& tape, Value mu, Value logsigma) const {
  const Tensor& m = tape.value(mu);
  const std::size_t batch = m.rank() == 2 ? m.rows() : 1;
  Value two_ls = tape.affine(logsigma, 2.0, 0.0);
  Value terms = tape.add(tape.mul(mu, mu), tape.sub(tape.exp(two_ls), two_ls));
  // 0.5 sum(mu^2 + sigma^2 - log sigma^2) - batch * Z / 2
  return tape.affine(tape.sum(terms), 0.5,
                     -0.5 * static_cast<real>(cfg_.latent) * static_cast<real>(batch));
}

DrawModel::LossValues DrawModel::build_loss(Tape& tape, const Tensor& images, Rng& rng,
                                            const std::vector<Tensor>* frozen_eps) const {
  if (images.rank() != 2 || images.cols() != cfg_.pixels())
    throw std::invalid_argument("build_loss: images must be (batch, " +
                                std::to_string(cfg_.pixels()) + "), got " +
                                shape_str(images.shape()));
  if (frozen_eps && frozen_eps->size() != cfg_.glimpses)
    throw std::invalid_argument("build_loss: frozen noise must supply one tensor per step");
  const std::size_t batch = images.rows();
  const real inv_batch = 1.0 / static_cast<real>(batch);
  Value x = tape.input(images);
  LossValues out;
  StepState st = initial_state(tape, batch);
  Value lz_sum;
  for (std::size_t t = 0; t < cfg_.glimpses; ++t) {
    Tensor eps({batch, cfg_.latent});
    if (frozen_eps)
      eps = (*frozen_eps)[t];
    else
      rng.fill_normal(eps);
    st = inference_step(tape, x, st, eps);
    Value term = latent_loss_term(tape, st.mu, st.logsigma);
    out.lz_steps.push_back(tape.value(term).item() * inv_batch);
    lz_sum = lz_sum.valid() ? tape.add(lz_sum, term) : term;
  }
  Value lx_sum = reconstruction_loss(tape, st.canvas, x);
  out.lx = tape.affine(lx_sum, inv_batch, 0.0);
  out.lz = tape.affine(lz_sum, inv_batch, 0.0);
  out.total = tape.add(out.lx, out.lz);
  out.final_state = st;
  return out;
}

LossBreakdown DrawModel::loss(const Tensor& images, Rng& rng) const {
  Tape tape;
  LossValues v = build_loss(tape, images, rng);
  return LossBreakdown{tape.value(v.lx).item(), tape.value(v.lz).item(),
                       tape.value(v.total).item()};
}

DrawModel::Generation DrawModel::generate(std::size_t count, Rng& rng) const {
  Tape tape;
  Generation gen;
  Value canvas = tape.repeat_rows(tape.param(*c0_), count);
  LstmCell::State dec{tape.repeat_rows(tape.param(*h_dec0_), count),
                      tape.constant(Tensor({count, cfg_.hidden}))};
  for (std::size_t t = 0; t < cfg_.glimpses; ++t) {
    Tensor z({count, cfg_.latent});
    rng.fill_normal(z);
    dec = dec_->step(tape, tape.constant(std::move(z)), dec);
    AttentionValues window;
    Value delta = write(tape, dec.h, cfg_.attention ? &window : nullptr);
    canvas = tape.add(canvas, delta);
    gen.deltas.push_back(tape.value(delta));
    gen.canvases.push_back(tape.value(canvas));
    gen.means.push_back(tape.value(tape.logistic(canvas)));
    if (cfg_.attention) {
      std::vector<AttentionParams> boxes(count);
      for (std::size_t s = 0; s < count; ++s) {
        boxes[s] = AttentionParams{tape.value(window.gx)[s], tape.value(window.gy)[s],
                                   tape.value(window.sigma2)[s], tape.value(window.delta)[s],
                                   tape.value(window.gamma)[s], cfg_.write_n,
                                   cfg_.width, cfg_.height};
      }
      gen.boxes.push_back(std::move(boxes));
    }
  }
  const Tensor& mean = gen.means.back();
  gen.samples = Tensor({count, cfg_.pixels()});
  for (std::size_t i = 0; i < mean.size(); ++i)
    gen.samples[i] = rng.uniform() < mean[i] ? 1.0 : 0.0;
  return gen;
}

}  // namespace scribe

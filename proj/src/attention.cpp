#include "scribe/attention.hpp"

#include <algorithm>
#include <stdexcept>

namespace scribe {

namespace {
constexpr real kLogClampLo = -10.0;
constexpr real kLogClampHi = 10.0;
}  // namespace

AttentionValues attention_params(Tape& tape, Value raw5, std::size_t width, std::size_t height,
                                 std::size_t n) {
  if (n < 2)
    throw std::invalid_argument("attention_params: patch size n must be >= 2 (stride scaling "
                                "divides by n - 1), got n = " + std::to_string(n));
  const Tensor& raw = tape.value(raw5);
  if (raw.rank() != 2 || raw.cols() != 5)
    throw std::invalid_argument("attention_params: raw emissions must be (batch, 5), got " +
                                shape_str(raw.shape()));
  const std::size_t batch = raw.rows();
  auto col = [&](std::size_t c) {
    return tape.reshape(tape.slice_cols(raw5, c, c + 1), {batch});
  };
  AttentionValues p;
  const real ax = (static_cast<real>(width) + 1.0) / 2.0;
  const real ay = (static_cast<real>(height) + 1.0) / 2.0;
  p.gx = tape.affine(col(0), ax, ax);
  p.gy = tape.affine(col(1), ay, ay);
  p.sigma2 = tape.exp(tape.clamp(col(2), kLogClampLo, kLogClampHi));
  const real stride_scale =
      (static_cast<real>(std::max(width, height)) - 1.0) / (static_cast<real>(n) - 1.0);
  p.delta = tape.affine(tape.exp(tape.clamp(col(3), kLogClampLo, kLogClampHi)), stride_scale, 0.0);
  p.gamma = tape.exp(tape.clamp(col(4), kLogClampLo, kLogClampHi));
  return p;
}

std::vector<real> grid_centres(real g, real delta, std::size_t n) {
  std::vector<real> mu(n);
  for (std::size_t i = 0; i < n; ++i)
    mu[i] = g + (static_cast<real>(i + 1) - static_cast<real>(n) / 2.0 - 0.5) * delta;
  return mu;
}

Filterbanks filterbanks(Tape& tape, const AttentionValues& p, std::size_t n, std::size_t width,
                        std::size_t height) {
  Filterbanks f;
  f.n = n;
  f.fx = tape.gauss_filterbank(p.gx, p.sigma2, p.delta, n, width);
  f.fy = tape.gauss_filterbank(p.gy, p.sigma2, p.delta, n, height);
  return f;
}

Value read_attn_single(Tape& tape, Value image, const Filterbanks& f, Value gamma) {
  return tape.attn_patch(f.fx, f.fy, gamma, image);
}

Value read_attn(Tape& tape, Value image, Value err_image, const Filterbanks& f, Value gamma) {
  Value a = tape.attn_patch(f.fx, f.fy, gamma, image);
  Value b = tape.attn_patch(f.fx, f.fy, gamma, err_image);
  return tape.concat_cols(a, b);
}

Value write_attn(Tape& tape, Value patch, const Filterbanks& f, Value gamma) {
  return tape.attn_canvas(f.fx, f.fy, gamma, patch);
}

Value read_plain(Tape& tape, Value image, Value err_image) {
  return tape.concat_cols(image, err_image);
}

Value write_plain(Tape& tape, Param& w, Param& b, Value h_dec) {
  return tape.linear(w, b, h_dec);
}

}  // namespace scribe

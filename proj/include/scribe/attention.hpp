#pragma once

#include <cstddef>
#include <vector>

#include "scribe/tape.hpp"

namespace scribe {

// Plain-value view of one sample's attention window, used by generation
// traces and image annotation.
struct AttentionParams {
  real gx = 0, gy = 0, sigma2 = 1, delta = 1, gamma = 1;
  std::size_t n = 0, width = 0, height = 0;
};

// Tape handles for a batch of attention parameters, each shape (batch,).
struct AttentionValues {
  Value gx, gy, sigma2, delta, gamma;
};

// Filterbank pair: fx is (batch, n, width), fy is (batch, n, height).
struct Filterbanks {
  Value fx, fy;
  std::size_t n = 0;
};

// Maps raw emissions (batch, 5) = (gx~, gy~, log sigma2, log delta~,
// log gamma) to window parameters:
//   gx = (A+1)/2 (gx~ + 1), gy = (B+1)/2 (gy~ + 1),
//   delta = (max(A,B)-1)/(n-1) exp(log delta~),
// with the log-scale channels clamped to [-10, 10] before exp. n must be
// >= 2: the stride scaling is undefined at n = 1.
AttentionValues attention_params(Tape& tape, Value raw5, std::size_t width, std::size_t height,
                                 std::size_t n);

// Filter centre locations mu_i = g + (i - n/2 - 0.5) * delta, i = 1..n.
std::vector<real> grid_centres(real g, real delta, std::size_t n);

Filterbanks filterbanks(Tape& tape, const AttentionValues& p, std::size_t n, std::size_t width,
                        std::size_t height);

// gamma * Fy X Fx^T for one image stream, flattened: (batch, n^2)
Value read_attn_single(Tape& tape, Value image, const Filterbanks& f, Value gamma);
// concatenated patches from the image and the error image, sharing the
// same filterbanks and gamma: (batch, 2 n^2)
Value read_attn(Tape& tape, Value image, Value err_image, const Filterbanks& f, Value gamma);
// (1/gamma) Fy^T W Fx: (batch, height*width)
Value write_attn(Tape& tape, Value patch, const Filterbanks& f, Value gamma);

// [x, x_hat] flat concatenation; the decoder state plays no role here
Value read_plain(Tape& tape, Value image, Value err_image);
// reshaped linear map of the decoder state: (batch, height*width)
Value write_plain(Tape& tape, Param& w, Param& b, Value h_dec);

}  // namespace scribe

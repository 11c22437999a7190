#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "scribe/attention.hpp"
#include "scribe/lstm.hpp"
#include "scribe/rng.hpp"
#include "scribe/tape.hpp"

namespace scribe {

struct ClassifierConfig {
  std::size_t glimpses = 4;
  std::size_t hidden = 128;
  std::size_t read_n = 12;
  std::size_t width = 40, height = 40;
  std::size_t classes = 10;
  // when false, the per-step input is the whole (already downsampled)
  // image instead of an attended patch
  bool attention = true;

  std::size_t pixels() const { return width * height; }
  void validate() const;
};

// LSTM that takes a sequence of attended glimpses from a single image and
// classifies it through a softmax head on the final hidden state. Only the
// read path exists; there is no canvas and no write.
class GlimpseClassifier {
 public:
  GlimpseClassifier(ClassifierConfig cfg, std::uint64_t init_seed);

  const ClassifierConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // images: (batch, pixels); trace, when given, receives the per-glimpse
  // window parameters of sample 0
  Value logits(Tape& tape, Value images, std::vector<AttentionParams>* trace = nullptr) const;

  // class distribution for one image (row tensor of `classes` probabilities)
  Tensor classify(const Tensor& image_row, std::vector<AttentionParams>* trace = nullptr) const;

  // summed cross-entropy over the batch
  Value loss(Tape& tape, const Tensor& images, const std::vector<int>& labels) const;

  // fraction of misclassified images
  real error_rate(const Tensor& images, const std::vector<int>& labels,
                  std::size_t batch = 256) const;

 private:
  ClassifierConfig cfg_;
  ParamStore params_;
  std::optional<LstmCell> lstm_;
  Param *attn_w_ = nullptr, *attn_b_ = nullptr;
  Param *out_w_, *out_b_;
  Param *h0_;
};

}  // namespace scribe

#pragma once

#include <string>

#include "scribe/rng.hpp"
#include "scribe/tape.hpp"

namespace scribe {

// LSTM with forget gates. Gate blocks are packed in the order
// [input; forget; output; candidate] inside one fused weight acting on
// [x, h]. Forget biases start at 1.0, all other biases at 0; weights are
// uniform in [-s, s] with s = 1/sqrt(input + hidden).
class LstmCell {
 public:
  LstmCell(ParamStore& store, const std::string& name, std::size_t input, std::size_t hidden,
           Rng& rng);

  struct State {
    Value h, c;
  };

  // x: (batch, input) or (input); prev.h/prev.c shaped to match
  State step(Tape& tape, Value x, State prev) const;

  std::size_t input_size() const { return in_; }
  std::size_t hidden_size() const { return hidden_; }

 private:
  Param* w_;
  Param* b_;
  std::size_t in_, hidden_;
};

}  // namespace scribe

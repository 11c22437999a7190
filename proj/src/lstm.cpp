#include "scribe/lstm.hpp"

#include <cmath>

namespace scribe {

LstmCell::LstmCell(ParamStore& store, const std::string& name, std::size_t input,
                   std::size_t hidden, Rng& rng)
    : in_(input), hidden_(hidden) {
  Tensor w({4 * hidden, input + hidden});
  const real s = 1.0 / std::sqrt(static_cast<real>(input + hidden));
  rng.fill_uniform(w, -s, s);
  w_ = &store.add(name + "/w", std::move(w));
  Tensor b({4 * hidden});
  for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;  // forget block
  b_ = &store.add(name + "/b", std::move(b));
}

LstmCell::State LstmCell::step(Tape& tape, Value x, State prev) const {
  const std::size_t h = hidden_;
  Value gates = tape.linear(*w_, *b_, tape.concat_cols(x, prev.h));
  auto block = [&](std::size_t k) {
    return tape.slice_cols(gates, k * h, (k + 1) * h);
  };
  Value gi = tape.logistic(block(0));
  Value gf = tape.logistic(block(1));
  Value go = tape.logistic(block(2));
  Value gc = tape.tanh(block(3));
  Value c = tape.add(tape.mul(gf, prev.c), tape.mul(gi, gc));
  Value hout = tape.mul(go, tape.tanh(c));
  return State{hout, c};
}

}  // namespace scribe

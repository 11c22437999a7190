#include "scribe/tape.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "scribe/kernels.hpp"

namespace scribe {

namespace {

constexpr real kZFloor = 1e-9;     // filterbank normalizer guard
constexpr real kLogFloor = 1e-300; // release-mode log argument floor

real stable_logistic(real x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const real e = std::exp(x);
  return e / (1.0 + e);
}

real softplus(real x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
}

}  // namespace

// ---------------------------------------------------------------- ParamStore

Param& ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_[name] = params_.size();
  params_.push_back(Param{name, std::move(init), Tensor()});
  Param& p = params_.back();
  p.grad = Tensor(p.value.shape());
  return p;
}

Param& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return params_[it->second];
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const Param& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grads() {
  for (Param& p : params_)
    std::memset(p.grad.data(), 0, p.grad.size() * sizeof(real));
}

// ---------------------------------------------------------------------- Tape

Value Tape::push(Node n) {
  if (check_finite_ && !n.val.all_finite())
    throw std::runtime_error("non-finite value produced by tape op");
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::at(Value v) {
  if (!v.valid() || v.idx >= static_cast<int>(nodes_.size()))
    throw std::out_of_range("invalid tape value handle");
  return nodes_[v.idx];
}

const Tape::Node& Tape::at(Value v) const {
  if (!v.valid() || v.idx >= static_cast<int>(nodes_.size()))
    throw std::out_of_range("invalid tape value handle");
  return nodes_[v.idx];
}

const Tensor& Tape::value(Value v) const { return at(v).val; }

const Tensor& Tape::grad(Value v) const {
  const Node& n = at(v);
  if (!n.needs_grad) throw std::logic_error("node does not require gradients");
  if (!backward_done_) throw std::logic_error("grad() queried before backward()");
  return n.grad;
}

Value Tape::constant(Tensor v) {
  Node n;
  n.op = Op::kLeaf;
  n.val = std::move(v);
  return push(std::move(n));
}

Value Tape::input(Tensor v, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.val = std::move(v);
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

Value Tape::param(Param& p) {
  auto it = bound_.find(&p);
  if (it != bound_.end()) return Value{it->second};
  Node n;
  n.op = Op::kLeaf;
  n.val = p.value;  // immutable snapshot for this step
  n.needs_grad = true;
  n.bound = &p;
  Value v = push(std::move(n));
  bound_[&p] = v.idx;
  return v;
}

Value Tape::unary(Op op, Value a) {
  Node& na = at(a);
  Node n;
  n.op = op;
  n.in[0] = a.idx;
  n.nin = 1;
  n.needs_grad = na.needs_grad;
  n.val = Tensor(na.val.shape());
  const real* x = na.val.data();
  real* y = n.val.data();
  const std::size_t sz = na.val.size();
  switch (op) {
    case Op::kExp:
      for (std::size_t i = 0; i < sz; ++i) y[i] = std::exp(x[i]);
      break;
    case Op::kLog:
      if (check_finite_)
        for (std::size_t i = 0; i < sz; ++i) {
          if (x[i] <= 0) throw std::domain_error("log of non-positive value");
          y[i] = std::log(x[i]);
        }
      else
        for (std::size_t i = 0; i < sz; ++i) y[i] = std::log(std::max(x[i], kLogFloor));
      break;
    case Op::kTanh:
      for (std::size_t i = 0; i < sz; ++i) y[i] = std::tanh(x[i]);
      break;
    case Op::kLogistic:
      for (std::size_t i = 0; i < sz; ++i) y[i] = stable_logistic(x[i]);
      break;
    default:
      throw std::logic_error("unary: bad op");
  }
  return push(std::move(n));
}

Value Tape::binary(Op op, Value a, Value b) {
  Node& na = at(a);
  Node& nb = at(b);
  if (!na.val.same_shape(nb.val))
    shape_mismatch(op == Op::kAdd ? "add" : op == Op::kSub ? "sub" : "mul", na.val, nb.val);
  Node n;
  n.op = op;
  n.in[0] = a.idx;
  n.in[1] = b.idx;
  n.nin = 2;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.val = Tensor(na.val.shape());
  const real* x = na.val.data();
  const real* z = nb.val.data();
  real* y = n.val.data();
  const std::size_t sz = n.val.size();
  switch (op) {
    case Op::kAdd:
      for (std::size_t i = 0; i < sz; ++i) y[i] = x[i] + z[i];
      break;
    case Op::kSub:
      for (std::size_t i = 0; i < sz; ++i) y[i] = x[i] - z[i];
      break;
    case Op::kMul:
      for (std::size_t i = 0; i < sz; ++i) y[i] = x[i] * z[i];
      break;
    default:
      throw std::logic_error("binary: bad op");
  }
  return push(std::move(n));
}

Value Tape::add(Value a, Value b) { return binary(Op::kAdd, a, b); }
Value Tape::sub(Value a, Value b) { return binary(Op::kSub, a, b); }
Value Tape::mul(Value a, Value b) { return binary(Op::kMul, a, b); }
Value Tape::exp(Value a) { return unary(Op::kExp, a); }
Value Tape::log(Value a) { return unary(Op::kLog, a); }
Value Tape::tanh(Value a) { return unary(Op::kTanh, a); }
Value Tape::logistic(Value a) { return unary(Op::kLogistic, a); }

Value Tape::softmax(Value a) {
  Node& na = at(a);
  if (na.val.rank() != 1 && na.val.rank() != 2)
    throw std::invalid_argument("softmax: rank must be 1 or 2, got " + shape_str(na.val.shape()));
  const std::size_t rows = na.val.rank() == 2 ? na.val.rows() : 1;
  const std::size_t cols = na.val.rank() == 2 ? na.val.cols() : na.val.size();
  Node n;
  n.op = Op::kSoftmax;
  n.in[0] = a.idx;
  n.nin = 1;
  n.needs_grad = na.needs_grad;
  n.val = Tensor(na.val.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const real* x = na.val.data() + r * cols;
    real* y = n.val.data() + r * cols;
    real m = x[0];
    for (std::size_t j = 1; j < cols; ++j) m = std::max(m, x[j]);
    real s = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - m);
      s += y[j];
    }
    for (std::size_t j = 0; j < cols; ++j) y[j] /= s;
  }
  return push(std::move(n));
}

Value Tape::clamp(Value a, real lo, real hi) {
  Node& na = at(a);
  Node n;
  n.op = Op::kClamp;
  n.in[0] = a.idx;
  n.nin = 1;
  n.needs_grad = na.needs_grad;
  n.s0 = lo;
  n.s1 = hi;
  n.val = Tensor(na.val.shape());
  for (std::size_t i = 0; i < na.val.size(); ++i)
    n.val[i] = std::min(std::max(na.val[i], lo), hi);
  return push(std::move(n));
}

Value Tape::affine(Value a, real scale, real shift) {
  Node& na = at(a);
  Node n;
  n.op = Op::kAffine;
  n.in[0] = a.idx;
  n.nin = 1;
  n.needs_grad = na.needs_grad;
  n.s0 = scale;
  n.s1 = shift;
  n.val = Tensor(na.val.shape());
  for (std::size_t i = 0; i < na.val.size(); ++i) n.val[i] = scale * na.val[i] + shift;
  return push(std::move(n));
}

Value Tape::concat_cols(Value a, Value b) {
  Node& na = at(a);
  Node& nb = at(b);
  if (na.val.rank() != nb.val.rank()) shape_mismatch("concat_cols", na.val, nb.val);
  Node n;
  n.op = Op::kConcatCols;
  n.in[0] = a.idx;
  n.in[1] = b.idx;
  n.nin = 2;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  if (na.val.rank() == 1) {
    n.val = Tensor({na.val.size() + nb.val.size()});
    std::memcpy(n.val.data(), na.val.data(), na.val.size() * sizeof(real));
    std::memcpy(n.val.data() + na.val.size(), nb.val.data(), nb.val.size() * sizeof(real));
  } else if (na.val.rank() == 2) {
    if (na.val.rows() != nb.val.rows()) shape_mismatch("concat_cols", na.val, nb.val);
    const std::size_t r = na.val.rows(), ca = na.val.cols(), cb = nb.val.cols();
    n.val = Tensor({r, ca + cb});
    for (std::size_t i = 0; i < r; ++i) {
      std::memcpy(n.val.data() + i * (ca + cb), na.val.data() + i * ca, ca * sizeof(real));
      std::memcpy(n.val.data() + i * (ca + cb) + ca, nb.val.data() + i * cb, cb * sizeof(real));
    }
  } else {
    throw std::invalid_argument("concat_cols: rank must be 1 or 2");
  }
  return push(std::move(n));
}

Value Tape::slice_cols(Value a, std::size_t c0, std::size_t c1) {
  Node& na = at(a);
  const std::size_t width = na.val.rank() == 1 ? na.val.size() : na.val.cols();
  if (na.val.rank() > 2 || c0 >= c1 || c1 > width)
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + ", " +
                                std::to_string(c1) + ") for shape " + shape_str(na.val.shape()));
  Node n;
  n.op = Op::kSliceCols;
  n.in[0] = a.idx;
  n.nin = 1;
  n.needs_grad = na.needs_grad;
  n.i0 = c0;
  n.i1 = c1;
  const std::size_t w = c1 - c0;
  if (na.val.rank() == 1) {
    n.val = Tensor({w});
    std::memcpy(n.val.data(), na.val.data() + c0, w * sizeof(real));
  } else {
    const std::size_t r = na.val.rows();
    n.val = Tensor({r, w});
    for (std::size_t i = 0; i < r; ++i)
      std::memcpy(n.val.data() + i * w, na.val.data() + i * width + c0, w * sizeof(real));
  }
  return push(std::move(n));
}

Value Tape::reshape(Value a, std::vector<std::size_t> shape) {
  Node& na = at(a);
  Tensor t(std::move(shape));
  if (t.size() != na.val.size())
    throw std::invalid_argument("reshape: size mismatch " + shape_str(na.val.shape()) + " -> " +
                                shape_str(t.shape()));
  std::memcpy(t.data(), na.val.data(), t.size() * sizeof(real));
  Node n;
  n.op = Op::kReshape;
  n.in[0] = a.idx;
  n.nin = 1;
  n.needs_grad = na.needs_grad;
  n.val = std::move(t);
  return push(std::move(n));
}

Value Tape::repeat_rows(Value a, std::size_t rows) {
  Node& na = at(a);
  if (na.val.rank() != 1) throw std::invalid_argument("repeat_rows: input must be rank-1");
  const std::size_t w = na.val.size();
  Node n;
  n.op = Op::kRepeatRows;
  n.in[0] = a.idx;
  n.nin = 1;
  n.needs_grad = na.needs_grad;
  n.val = Tensor({rows, w});
  for (std::size_t r = 0; r < rows; ++r)
    std::memcpy(n.val.data() + r * w, na.val.data(), w * sizeof(real));
  return push(std::move(n));
}

Value Tape::sum(Value a) {
  Node& na = at(a);
  Node n;
  n.op = Op::kSum;
  n.in[0] = a.idx;
  n.nin = 1;
  n.needs_grad = na.needs_grad;
  real s = 0;
  for (std::size_t i = 0; i < na.val.size(); ++i) s += na.val[i];
  n.val = Tensor::scalar(s);
  return push(std::move(n));
}

Value Tape::matmul(Value a, Value b) {
  Node& na = at(a);
  Node& nb = at(b);
  if (na.val.rank() != 2 || nb.val.rank() != 2 || na.val.cols() != nb.val.rows())
    shape_mismatch("matmul", na.val, nb.val);
  Node n;
  n.op = Op::kMatMul;
  n.in[0] = a.idx;
  n.in[1] = b.idx;
  n.nin = 2;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.val = Tensor({na.val.rows(), nb.val.cols()});
  kernels::matmul_nn(na.val.data(), nb.val.data(), n.val.data(), na.val.rows(), na.val.cols(),
                     nb.val.cols());
  return push(std::move(n));
}

Value Tape::linear(Value w, Value b, Value a) {
  Node& nw = at(w);
  Node& nb = at(b);
  Node& na = at(a);
  if (nw.val.rank() != 2 || nb.val.rank() != 1) shape_mismatch("linear", nw.val, nb.val);
  const std::size_t out = nw.val.rows(), in = nw.val.cols();
  if (nb.val.size() != out) shape_mismatch("linear", nw.val, nb.val);
  Node n;
  n.op = Op::kLinear;
  n.in[0] = w.idx;
  n.in[1] = b.idx;
  n.in[2] = a.idx;
  n.nin = 3;
  n.needs_grad = nw.needs_grad || nb.needs_grad || na.needs_grad;
  if (na.val.rank() == 1) {
    if (na.val.size() != in) shape_mismatch("linear", nw.val, na.val);
    n.val = Tensor({out});
    kernels::matmul_nn(nw.val.data(), na.val.data(), n.val.data(), out, in, 1);
    for (std::size_t i = 0; i < out; ++i) n.val[i] += nb.val[i];
  } else if (na.val.rank() == 2) {
    if (na.val.cols() != in) shape_mismatch("linear", nw.val, na.val);
    const std::size_t batch = na.val.rows();
    n.val = Tensor({batch, out});
    kernels::matmul_nt(na.val.data(), nw.val.data(), n.val.data(), batch, in, out);
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t i = 0; i < out; ++i) n.val[r * out + i] += nb.val[i];
  } else {
    throw std::invalid_argument("linear: input rank must be 1 or 2");
  }
  return push(std::move(n));
}

Value Tape::linear(Param& w, Param& b, Value a) { return linear(param(w), param(b), a); }

Value Tape::bce_with_logits(Value logits, Value targets) {
  Node& nl = at(logits);
  Node& nt = at(targets);
  if (!nl.val.same_shape(nt.val)) shape_mismatch("bce_with_logits", nl.val, nt.val);
  for (std::size_t i = 0; i < nt.val.size(); ++i)
    if (nt.val[i] < 0.0 || nt.val[i] > 1.0)
      throw std::domain_error("bce_with_logits: target outside [0, 1]: " +
                              std::to_string(nt.val[i]));
  Node n;
  n.op = Op::kBceLogits;
  n.in[0] = logits.idx;
  n.in[1] = targets.idx;
  n.nin = 2;
  n.needs_grad = nl.needs_grad || nt.needs_grad;
  real s = 0;
  for (std::size_t i = 0; i < nl.val.size(); ++i)
    s += softplus(nl.val[i]) - nt.val[i] * nl.val[i];
  n.val = Tensor::scalar(s);
  return push(std::move(n));
}

Value Tape::softmax_xent(Value logits, std::vector<int> labels) {
  Node& nl = at(logits);
  if (nl.val.rank() != 2 || labels.size() != nl.val.rows())
    throw std::invalid_argument("softmax_xent: logits " + shape_str(nl.val.shape()) + " vs " +
                                std::to_string(labels.size()) + " labels");
  const std::size_t rows = nl.val.rows(), cols = nl.val.cols();
  Node n;
  n.op = Op::kSoftmaxXent;
  n.in[0] = logits.idx;
  n.nin = 1;
  n.needs_grad = nl.needs_grad;
  n.labels = std::move(labels);
  real loss = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int lab = n.labels[r];
    if (lab < 0 || static_cast<std::size_t>(lab) >= cols)
      throw std::invalid_argument("softmax_xent: label out of range: " + std::to_string(lab));
    const real* x = nl.val.data() + r * cols;
    real m = x[0];
    for (std::size_t j = 1; j < cols; ++j) m = std::max(m, x[j]);
    real s = 0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(x[j] - m);
    loss += m + std::log(s) - x[lab];
  }
  n.val = Tensor::scalar(loss);
  return push(std::move(n));
}

// Rows are Gaussians over pixel coordinates 1..extent, centred at
// mu_i = centre + (i - n/2 - 0.5) * stride (i = 1..n), normalized to sum
// to 1. The exponent is shifted by the row minimum before exp so the
// normalizer stays in [1, extent] even for far off-image centres; the
// shift cancels exactly in the quotient.
Value Tape::gauss_filterbank(Value centre, Value sigma2, Value stride, std::size_t n,
                             std::size_t extent) {
  Node& ng = at(centre);
  Node& ns = at(sigma2);
  Node& nd = at(stride);
  if (ng.val.rank() != 1 || !ng.val.same_shape(ns.val) || !ng.val.same_shape(nd.val))
    throw std::invalid_argument("gauss_filterbank: parameter vectors must share shape (batch,)");
  if (n < 1 || extent < 1) throw std::invalid_argument("gauss_filterbank: n and extent must be >= 1");
  const std::size_t batch = ng.val.size();
  Node node;
  node.op = Op::kFilterbank;
  node.in[0] = centre.idx;
  node.in[1] = sigma2.idx;
  node.in[2] = stride.idx;
  node.nin = 3;
  node.needs_grad = ng.needs_grad || ns.needs_grad || nd.needs_grad;
  node.i0 = n;
  node.i1 = extent;
  node.val = Tensor({batch, n, extent});
  const real* g = ng.val.data();
  const real* s2 = ns.val.data();
  const real* dl = nd.val.data();
  real* out = node.val.data();
#pragma omp parallel for schedule(static) if (batch > 1)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batch); ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const real mu = g[b] + (static_cast<real>(i + 1) - static_cast<real>(n) / 2.0 - 0.5) * dl[b];
      real* row = out + (b * n + i) * extent;
      real mind = std::numeric_limits<real>::infinity();
      for (std::size_t a = 0; a < extent; ++a) {
        const real e = static_cast<real>(a + 1) - mu;
        row[a] = e * e;
        mind = std::min(mind, row[a]);
      }
      real z = 0;
      for (std::size_t a = 0; a < extent; ++a) {
        row[a] = std::exp(-(row[a] - mind) / (2.0 * s2[b]));
        z += row[a];
      }
      z = std::max(z, kZFloor);
      for (std::size_t a = 0; a < extent; ++a) row[a] /= z;
    }
  }
  return push(std::move(node));
}

Value Tape::attn_patch(Value fx, Value fy, Value gamma, Value image) {
  Node& nx = at(fx);
  Node& ny = at(fy);
  Node& ng = at(gamma);
  Node& ni = at(image);
  if (nx.val.rank() != 3 || ny.val.rank() != 3 || ng.val.rank() != 1 || ni.val.rank() != 2)
    throw std::invalid_argument("attn_patch: bad ranks");
  const std::size_t batch = nx.val.dim(0), n = nx.val.dim(1), aw = nx.val.dim(2),
                    bh = ny.val.dim(2);
  if (ny.val.dim(0) != batch || ny.val.dim(1) != n || ng.val.size() != batch ||
      ni.val.rows() != batch || ni.val.cols() != bh * aw)
    shape_mismatch("attn_patch", nx.val, ni.val);
  Node node;
  node.op = Op::kAttnPatch;
  node.in[0] = fx.idx;
  node.in[1] = fy.idx;
  node.in[2] = gamma.idx;
  node.in[3] = image.idx;
  node.nin = 4;
  node.needs_grad = nx.needs_grad || ny.needs_grad || ng.needs_grad || ni.needs_grad;
  node.val = Tensor({batch, n * n});
#pragma omp parallel for schedule(static) if (batch > 1)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batch); ++b) {
    std::vector<real> t1(bh * n), p(n * n);
    const real* img = ni.val.data() + b * bh * aw;
    const real* fxb = nx.val.data() + b * n * aw;
    const real* fyb = ny.val.data() + b * n * bh;
    kernels::matmul_nt(img, fxb, t1.data(), bh, aw, n);   // X Fx^T
    kernels::matmul_nn(fyb, t1.data(), p.data(), n, bh, n);  // Fy (X Fx^T)
    real* out = node.val.data() + b * n * n;
    const real gm = ng.val[b];
    for (std::size_t i = 0; i < n * n; ++i) out[i] = gm * p[i];
  }
  return push(std::move(node));
}

Value Tape::attn_canvas(Value fx, Value fy, Value gamma, Value patch) {
  Node& nx = at(fx);
  Node& ny = at(fy);
  Node& ng = at(gamma);
  Node& np = at(patch);
  if (nx.val.rank() != 3 || ny.val.rank() != 3 || ng.val.rank() != 1 || np.val.rank() != 2)
    throw std::invalid_argument("attn_canvas: bad ranks");
  const std::size_t batch = nx.val.dim(0), n = nx.val.dim(1), aw = nx.val.dim(2),
                    bh = ny.val.dim(2);
  if (ny.val.dim(0) != batch || ny.val.dim(1) != n || ng.val.size() != batch ||
      np.val.rows() != batch || np.val.cols() != n * n)
    shape_mismatch("attn_canvas", nx.val, np.val);
  Node node;
  node.op = Op::kAttnCanvas;
  node.in[0] = fx.idx;
  node.in[1] = fy.idx;
  node.in[2] = gamma.idx;
  node.in[3] = patch.idx;
  node.nin = 4;
  node.needs_grad = nx.needs_grad || ny.needs_grad || ng.needs_grad || np.needs_grad;
  node.val = Tensor({batch, bh * aw});
#pragma omp parallel for schedule(static) if (batch > 1)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batch); ++b) {
    std::vector<real> t2(bh * n), c0(bh * aw);
    const real* w = np.val.data() + b * n * n;
    const real* fxb = nx.val.data() + b * n * aw;
    const real* fyb = ny.val.data() + b * n * bh;
    kernels::matmul_tn(fyb, w, t2.data(), bh, n, n);          // Fy^T W
    kernels::matmul_nn(t2.data(), fxb, c0.data(), bh, n, aw); // (Fy^T W) Fx
    real* out = node.val.data() + b * bh * aw;
    const real inv = 1.0 / ng.val[b];
    for (std::size_t i = 0; i < bh * aw; ++i) out[i] = inv * c0[i];
  }
  return push(std::move(node));
}

// ------------------------------------------------------------------ backward

void Tape::backward(Value root) {
  Node& r = at(root);
  if (r.val.size() != 1)
    throw std::invalid_argument("backward: root must be a scalar, got " + shape_str(r.val.shape()));
  if (backward_done_) throw std::logic_error("backward: tape already swept");
  backward_done_ = true;
  for (Node& n : nodes_)
    if (n.needs_grad) n.grad = Tensor(n.val.shape());
  if (r.needs_grad) r.grad[0] = 1.0;
  for (int i = root.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.nin == 0) continue;
    backprop(n);
  }
  for (Node& n : nodes_)
    if (n.bound)
      for (std::size_t i = 0; i < n.grad.size(); ++i) n.bound->grad[i] += n.grad[i];
}

void Tape::backprop(Node& n) {
  const real* dy = n.grad.data();
  auto in_node = [&](int slot) -> Node& { return nodes_[n.in[slot]]; };
  auto wants = [&](int slot) { return in_node(slot).needs_grad; };

  switch (n.op) {
    case Op::kAdd: {
      for (int s = 0; s < 2; ++s)
        if (wants(s)) {
          real* da = in_node(s).grad.data();
          for (std::size_t i = 0; i < n.grad.size(); ++i) da[i] += dy[i];
        }
      break;
    }
    case Op::kSub: {
      if (wants(0)) {
        real* da = in_node(0).grad.data();
        for (std::size_t i = 0; i < n.grad.size(); ++i) da[i] += dy[i];
      }
      if (wants(1)) {
        real* db = in_node(1).grad.data();
        for (std::size_t i = 0; i < n.grad.size(); ++i) db[i] -= dy[i];
      }
      break;
    }
    case Op::kMul: {
      if (wants(0)) {
        real* da = in_node(0).grad.data();
        const real* b = in_node(1).val.data();
        for (std::size_t i = 0; i < n.grad.size(); ++i) da[i] += dy[i] * b[i];
      }
      if (wants(1)) {
        real* db = in_node(1).grad.data();
        const real* a = in_node(0).val.data();
        for (std::size_t i = 0; i < n.grad.size(); ++i) db[i] += dy[i] * a[i];
      }
      break;
    }
    case Op::kExp: {
      real* da = in_node(0).grad.data();
      const real* y = n.val.data();
      for (std::size_t i = 0; i < n.grad.size(); ++i) da[i] += dy[i] * y[i];
      break;
    }
    case Op::kLog: {
      real* da = in_node(0).grad.data();
      const real* x = in_node(0).val.data();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        da[i] += dy[i] / std::max(x[i], kLogFloor);
      break;
    }
    case Op::kTanh: {
      real* da = in_node(0).grad.data();
      const real* y = n.val.data();
      for (std::size_t i = 0; i < n.grad.size(); ++i) da[i] += dy[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::kLogistic: {
      real* da = in_node(0).grad.data();
      const real* y = n.val.data();
      for (std::size_t i = 0; i < n.grad.size(); ++i) da[i] += dy[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case Op::kSoftmax: {
      real* da = in_node(0).grad.data();
      const real* y = n.val.data();
      const std::size_t rows = n.val.rank() == 2 ? n.val.rows() : 1;
      const std::size_t cols = n.val.rank() == 2 ? n.val.cols() : n.val.size();
      for (std::size_t r = 0; r < rows; ++r) {
        const real* yr = y + r * cols;
        const real* dr = dy + r * cols;
        real dotp = 0;
        for (std::size_t j = 0; j < cols; ++j) dotp += dr[j] * yr[j];
        for (std::size_t j = 0; j < cols; ++j) da[r * cols + j] += yr[j] * (dr[j] - dotp);
      }
      break;
    }
    case Op::kClamp: {
      real* da = in_node(0).grad.data();
      const real* x = in_node(0).val.data();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        if (x[i] >= n.s0 && x[i] <= n.s1) da[i] += dy[i];
      break;
    }
    case Op::kAffine: {
      real* da = in_node(0).grad.data();
      for (std::size_t i = 0; i < n.grad.size(); ++i) da[i] += n.s0 * dy[i];
      break;
    }
    case Op::kConcatCols: {
      Node& a = in_node(0);
      Node& b = in_node(1);
      if (n.val.rank() == 1) {
        if (a.needs_grad) kernels::axpy(1.0, dy, a.grad.data(), a.val.size());
        if (b.needs_grad) kernels::axpy(1.0, dy + a.val.size(), b.grad.data(), b.val.size());
      } else {
        const std::size_t rows = n.val.rows(), ca = a.val.cols(), cb = b.val.cols();
        for (std::size_t r = 0; r < rows; ++r) {
          if (a.needs_grad)
            kernels::axpy(1.0, dy + r * (ca + cb), a.grad.data() + r * ca, ca);
          if (b.needs_grad)
            kernels::axpy(1.0, dy + r * (ca + cb) + ca, b.grad.data() + r * cb, cb);
        }
      }
      break;
    }
    case Op::kSliceCols: {
      Node& a = in_node(0);
      const std::size_t w = n.i1 - n.i0;
      if (a.val.rank() == 1) {
        kernels::axpy(1.0, dy, a.grad.data() + n.i0, w);
      } else {
        const std::size_t rows = a.val.rows(), width = a.val.cols();
        for (std::size_t r = 0; r < rows; ++r)
          kernels::axpy(1.0, dy + r * w, a.grad.data() + r * width + n.i0, w);
      }
      break;
    }
    case Op::kReshape: {
      kernels::axpy(1.0, dy, in_node(0).grad.data(), n.grad.size());
      break;
    }
    case Op::kRepeatRows: {
      Node& a = in_node(0);
      const std::size_t rows = n.val.rows(), w = a.val.size();
      real* da = a.grad.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j) da[j] += dy[r * w + j];
      break;
    }
    case Op::kSum: {
      Node& a = in_node(0);
      real* da = a.grad.data();
      const real d = dy[0];
      for (std::size_t i = 0; i < a.val.size(); ++i) da[i] += d;
      break;
    }
    case Op::kMatMul: {
      Node& a = in_node(0);
      Node& b = in_node(1);
      const std::size_t m = a.val.rows(), k = a.val.cols(), nn = b.val.cols();
      if (a.needs_grad) kernels::matmul_nt_acc(dy, b.val.data(), a.grad.data(), m, nn, k);
      if (b.needs_grad) kernels::matmul_tn_acc(a.val.data(), dy, b.grad.data(), k, m, nn);
      break;
    }
    case Op::kLinear: {
      Node& w = in_node(0);
      Node& b = in_node(1);
      Node& a = in_node(2);
      const std::size_t out = w.val.rows(), in = w.val.cols();
      if (a.val.rank() == 1) {
        if (a.needs_grad) kernels::matmul_tn_acc(w.val.data(), dy, a.grad.data(), in, out, 1);
        if (w.needs_grad) kernels::matmul_nn_acc(dy, a.val.data(), w.grad.data(), out, 1, in);
        if (b.needs_grad) kernels::axpy(1.0, dy, b.grad.data(), out);
      } else {
        const std::size_t batch = a.val.rows();
        if (a.needs_grad)
          kernels::matmul_nn_acc(dy, w.val.data(), a.grad.data(), batch, out, in);
        if (w.needs_grad)
          kernels::matmul_tn_acc(dy, a.val.data(), w.grad.data(), out, batch, in);
        if (b.needs_grad) {
          real* db = b.grad.data();
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t i = 0; i < out; ++i) db[i] += dy[r * out + i];
        }
      }
      break;
    }
    case Op::kBceLogits: {
      Node& l = in_node(0);
      Node& t = in_node(1);
      const real d = dy[0];
      if (l.needs_grad) {
        real* dl = l.grad.data();
        for (std::size_t i = 0; i < l.val.size(); ++i)
          dl[i] += d * (stable_logistic(l.val[i]) - t.val[i]);
      }
      if (t.needs_grad) {
        real* dt = t.grad.data();
        for (std::size_t i = 0; i < t.val.size(); ++i) dt[i] -= d * l.val[i];
      }
      break;
    }
    case Op::kSoftmaxXent: {
      Node& l = in_node(0);
      const std::size_t rows = l.val.rows(), cols = l.val.cols();
      const real d = dy[0];
      real* dl = l.grad.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const real* x = l.val.data() + r * cols;
        real m = x[0];
        for (std::size_t j = 1; j < cols; ++j) m = std::max(m, x[j]);
        real s = 0;
        for (std::size_t j = 0; j < cols; ++j) s += std::exp(x[j] - m);
        for (std::size_t j = 0; j < cols; ++j)
          dl[r * cols + j] += d * (std::exp(x[j] - m) / s);
        dl[r * cols + n.labels[r]] -= d;
      }
      break;
    }
    case Op::kFilterbank: {
      Node& g = in_node(0);
      Node& s2 = in_node(1);
      Node& dl = in_node(2);
      const std::size_t batch = g.val.size(), nf = n.i0, extent = n.i1;
      const bool wg = g.needs_grad, ws = s2.needs_grad, wd = dl.needs_grad;
#pragma omp parallel for schedule(static) if (batch > 1)
      for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batch); ++b) {
        std::vector<real> u(extent);
        real dgb = 0, dsb = 0, ddb = 0;
        const real sig = s2.val[b];
        for (std::size_t i = 0; i < nf; ++i) {
          const real coef = static_cast<real>(i + 1) - static_cast<real>(nf) / 2.0 - 0.5;
          const real mu = g.val[b] + coef * dl.val[b];
          real mind = std::numeric_limits<real>::infinity();
          for (std::size_t a = 0; a < extent; ++a) {
            const real e = static_cast<real>(a + 1) - mu;
            u[a] = e * e;
            mind = std::min(mind, u[a]);
          }
          real z = 0;
          for (std::size_t a = 0; a < extent; ++a) {
            u[a] = std::exp(-(u[a] - mind) / (2.0 * sig));
            z += u[a];
          }
          const bool floored = z < kZFloor;
          const real zf = std::max(z, kZFloor);
          const real* grow = n.grad.data() + (b * nf + i) * extent;
          const real* frow = n.val.data() + (b * nf + i) * extent;
          real gdotf = 0;
          if (!floored)
            for (std::size_t a = 0; a < extent; ++a) gdotf += grow[a] * frow[a];
          real dmu = 0;
          for (std::size_t a = 0; a < extent; ++a) {
            const real dLdu = (grow[a] - gdotf) / zf;
            const real e = static_cast<real>(a + 1) - mu;
            dmu += dLdu * u[a] * e / sig;
            if (ws) dsb += dLdu * u[a] * (e * e - mind) / (2.0 * sig * sig);
          }
          if (wg) dgb += dmu;
          if (wd) ddb += dmu * coef;
        }
        if (wg) g.grad[b] += dgb;
        if (ws) s2.grad[b] += dsb;
        if (wd) dl.grad[b] += ddb;
      }
      break;
    }
    case Op::kAttnPatch: {
      Node& fx = in_node(0);
      Node& fy = in_node(1);
      Node& gm = in_node(2);
      Node& im = in_node(3);
      const std::size_t batch = fx.val.dim(0), nf = fx.val.dim(1), aw = fx.val.dim(2),
                        bh = fy.val.dim(2);
#pragma omp parallel for schedule(static) if (batch > 1)
      for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batch); ++b) {
        std::vector<real> t1(bh * nf), p(nf * nf), dp(nf * nf), dt1(bh * nf);
        const real* img = im.val.data() + b * bh * aw;
        const real* fxb = fx.val.data() + b * nf * aw;
        const real* fyb = fy.val.data() + b * nf * bh;
        const real* dout = n.grad.data() + b * nf * nf;
        kernels::matmul_nt(img, fxb, t1.data(), bh, aw, nf);
        kernels::matmul_nn(fyb, t1.data(), p.data(), nf, bh, nf);
        const real gmb = gm.val[b];
        if (gm.needs_grad) {
          real dg = 0;
          for (std::size_t i = 0; i < nf * nf; ++i) dg += dout[i] * p[i];
          gm.grad[b] += dg;
        }
        for (std::size_t i = 0; i < nf * nf; ++i) dp[i] = gmb * dout[i];
        kernels::matmul_tn(fyb, dp.data(), dt1.data(), bh, nf, nf);
        if (fy.needs_grad)
          kernels::matmul_nt_acc(dp.data(), t1.data(), fy.grad.data() + b * nf * bh, nf, nf, bh);
        if (fx.needs_grad)
          kernels::matmul_tn_acc(dt1.data(), img, fx.grad.data() + b * nf * aw, nf, bh, aw);
        if (im.needs_grad)
          kernels::matmul_nn_acc(dt1.data(), fxb, im.grad.data() + b * bh * aw, bh, nf, aw);
      }
      break;
    }
    case Op::kAttnCanvas: {
      Node& fx = in_node(0);
      Node& fy = in_node(1);
      Node& gm = in_node(2);
      Node& pt = in_node(3);
      const std::size_t batch = fx.val.dim(0), nf = fx.val.dim(1), aw = fx.val.dim(2),
                        bh = fy.val.dim(2);
#pragma omp parallel for schedule(static) if (batch > 1)
      for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batch); ++b) {
        std::vector<real> t2(bh * nf), c0(bh * aw), dc0(bh * aw), dt2(bh * nf);
        const real* w = pt.val.data() + b * nf * nf;
        const real* fxb = fx.val.data() + b * nf * aw;
        const real* fyb = fy.val.data() + b * nf * bh;
        const real* dout = n.grad.data() + b * bh * aw;
        kernels::matmul_tn(fyb, w, t2.data(), bh, nf, nf);
        kernels::matmul_nn(t2.data(), fxb, c0.data(), bh, nf, aw);
        const real inv = 1.0 / gm.val[b];
        if (gm.needs_grad) {
          real dg = 0;
          for (std::size_t i = 0; i < bh * aw; ++i) dg += dout[i] * c0[i];
          gm.grad[b] -= dg * inv * inv;
        }
        for (std::size_t i = 0; i < bh * aw; ++i) dc0[i] = inv * dout[i];
        kernels::matmul_nt(dc0.data(), fxb, dt2.data(), bh, aw, nf);
        if (fx.needs_grad)
          kernels::matmul_tn_acc(t2.data(), dc0.data(), fx.grad.data() + b * nf * aw, nf, bh, aw);
        if (fy.needs_grad)
          kernels::matmul_nt_acc(w, dt2.data(), fy.grad.data() + b * nf * bh, nf, nf, bh);
        if (pt.needs_grad)
          kernels::matmul_nn_acc(fyb, dt2.data(), pt.grad.data() + b * nf * nf, nf, bh, nf);
      }
      break;
    }
    case Op::kLeaf:
      break;
  }
}

}  // namespace scribe

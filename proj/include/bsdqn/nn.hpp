#pragma once

#include <Eigen/Core>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsdqn/rng.hpp"

namespace bsdqn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Dense Q-network: rectifier hidden layers, linear output. With the dueling
// flag the output layer is replaced by a scalar value head plus an advantage
// head combined as Q = V + A - mean(A). All parameters live in one flat
// vector (row-major weights, then biases, block by block) so optimizers and
// persistence can treat the network as a single array. A network value is
// immutable during forward passes and safe to share across threads.
class QNetwork {
 public:
  struct Block {
    std::ptrdiff_t w_off = 0;
    int rows = 0, cols = 0;
    std::ptrdiff_t b_off = 0;
  };

  QNetwork() = default;

  // dims = {input, hidden..., actions}; deterministic per seed. Weights are
  // uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  static QNetwork init(const std::vector<int>& dims, bool dueling,
                       std::uint64_t seed) {
    QNetwork net = zeros(dims, dueling);
    Rng rng = make_rng(seed);
    for (const Block& blk : net.blocks_) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(blk.cols));
      double* w = net.params_.data() + blk.w_off;
      for (int i = 0; i < blk.rows * blk.cols; ++i)
        w[i] = (2.0 * uniform01(rng) - 1.0) * scale;
    }
    return net;
  }

  static QNetwork zeros(const std::vector<int>& dims, bool dueling) {
    if (dims.size() < 2)
      throw std::domain_error("QNetwork: need at least input and output dims");
    for (int d : dims)
      if (d < 1) throw std::domain_error("QNetwork: dims must be positive");
    QNetwork net;
    net.dims_ = dims;
    net.dueling_ = dueling;
    const int last_hidden = dims[dims.size() - 2];
    std::ptrdiff_t off = 0;
    auto add_block = [&](int rows, int cols) {
      Block b;
      b.rows = rows;
      b.cols = cols;
      b.w_off = off;
      off += static_cast<std::ptrdiff_t>(rows) * cols;
      b.b_off = off;
      off += rows;
      net.blocks_.push_back(b);
    };
    for (std::size_t i = 0; i + 2 < dims.size(); ++i)
      add_block(dims[i + 1], dims[i]);
    if (dueling) {
      add_block(1, last_hidden);                 // value head
      add_block(dims.back(), last_hidden);       // advantage head
    } else {
      add_block(dims.back(), last_hidden);
    }
    net.params_ = Eigen::VectorXd::Zero(off);
    return net;
  }

  const std::vector<int>& dims() const { return dims_; }
  bool dueling() const { return dueling_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  int hidden_layers() const { return static_cast<int>(dims_.size()) - 2; }
  std::ptrdiff_t param_count() const { return params_.size(); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  MapMat weight(std::size_t block) {
    const Block& b = blocks_.at(block);
    return MapMat(params_.data() + b.w_off, b.rows, b.cols);
  }
  CMapMat weight(std::size_t block) const {
    const Block& b = blocks_.at(block);
    return CMapMat(params_.data() + b.w_off, b.rows, b.cols);
  }
  MapVec bias(std::size_t block) {
    const Block& b = blocks_.at(block);
    return MapVec(params_.data() + b.b_off, b.rows);
  }
  CMapVec bias(std::size_t block) const {
    const Block& b = blocks_.at(block);
    return CMapVec(params_.data() + b.b_off, b.rows);
  }

  // Activations of every hidden layer for a batch (columns are samples);
  // acts[0] is the input, acts.back() feeds the output head.
  struct Trace {
    std::vector<Eigen::MatrixXd> acts;
  };

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const {
    check_input(static_cast<int>(x.size()));
    Eigen::VectorXd h = x;
    for (int i = 0; i < hidden_layers(); ++i)
      h = ((weight(static_cast<std::size_t>(i)) * h +
            bias(static_cast<std::size_t>(i)))
               .cwiseMax(0.0))
              .eval();
    if (!dueling_) {
      const std::size_t o = blocks_.size() - 1;
      return weight(o) * h + bias(o);
    }
    const std::size_t vi = blocks_.size() - 2, ai = blocks_.size() - 1;
    const double v = (weight(vi) * h + bias(vi))(0);
    Eigen::VectorXd adv = weight(ai) * h + bias(ai);
    return (adv.array() - adv.mean() + v).matrix();
  }

  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const {
    Trace t;
    return forward_batch(x, t);
  }

  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x, Trace& trace) const {
    const Eigen::MatrixXd& h = forward_hidden(x, trace);
    if (!dueling_) {
      const std::size_t o = blocks_.size() - 1;
      return ((weight(o) * h).colwise() + bias(o)).eval();
    }
    const std::size_t vi = blocks_.size() - 2, ai = blocks_.size() - 1;
    Eigen::RowVectorXd v =
        (weight(vi) * h).row(0).array() + bias(vi)(0);
    Eigen::MatrixXd adv = (weight(ai) * h).colwise() + bias(ai);
    Eigen::RowVectorXd mean = adv.colwise().mean();
    adv.rowwise() += v - mean;
    return adv;
  }

  // Runs the shared hidden stack only; returns the head input.
  const Eigen::MatrixXd& forward_hidden(const Eigen::MatrixXd& x,
                                        Trace& trace) const {
    check_input(static_cast<int>(x.rows()));
    trace.acts.assign(1, x);
    for (int i = 0; i < hidden_layers(); ++i) {
      const std::size_t b = static_cast<std::size_t>(i);
      trace.acts.push_back(
          ((weight(b) * trace.acts.back()).colwise() + bias(b)).cwiseMax(0.0));
    }
    return trace.acts.back();
  }

  // Q-values of one chosen action per sample (plain head only).
  Eigen::VectorXd selected_q(const Eigen::MatrixXd& head_in,
                             const std::vector<int>& actions) const {
    if (dueling_)
      throw std::domain_error("selected_q: plain output head only");
    const std::size_t o = blocks_.size() - 1;
    const auto w = weight(o);
    const auto b = bias(o);
    Eigen::VectorXd q(static_cast<Eigen::Index>(actions.size()));
    for (std::size_t i = 0; i < actions.size(); ++i)
      q(static_cast<Eigen::Index>(i)) =
          w.row(actions[i]).dot(head_in.col(static_cast<Eigen::Index>(i))) +
          b(actions[i]);
    return q;
  }

  // Exact parameter gradient for the batch in `trace` given the gradient of
  // the loss w.r.t. the network outputs. Rectifier subgradient at 0 is 0.
  Eigen::VectorXd backward(const Trace& trace,
                           const Eigen::MatrixXd& dq) const {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
    const Eigen::MatrixXd& h = trace.acts.back();
    Eigen::MatrixXd dh;
    if (!dueling_) {
      const std::size_t o = blocks_.size() - 1;
      grad_block(grad, o).noalias() = dq * h.transpose();
      grad_bias(grad, o) = dq.rowwise().sum();
      dh.noalias() = weight(o).transpose() * dq;
    } else {
      const std::size_t vi = blocks_.size() - 2, ai = blocks_.size() - 1;
      const Eigen::RowVectorXd colsum = dq.colwise().sum();
      Eigen::MatrixXd dadv =
          dq - Eigen::VectorXd::Ones(dq.rows()) * colsum /
                   static_cast<double>(dq.rows());
      grad_block(grad, vi).noalias() = colsum * h.transpose();
      grad_bias(grad, vi)(0) = colsum.sum();
      grad_block(grad, ai).noalias() = dadv * h.transpose();
      grad_bias(grad, ai) = dadv.rowwise().sum();
      dh.noalias() = weight(vi).transpose() * colsum;
      dh.noalias() += weight(ai).transpose() * dadv;
    }
    backward_hidden(trace, std::move(dh), grad);
    return grad;
  }

  // Fused sparse backward for the TD loss: the output gradient is nonzero
  // only at each sample's taken action (plain head).
  Eigen::VectorXd backward_selected(const Trace& trace,
                                    const std::vector<int>& actions,
                                    const Eigen::VectorXd& dq_taken) const {
    if (dueling_)
      throw std::domain_error("backward_selected: plain output head only");
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
    const std::size_t o = blocks_.size() - 1;
    const Eigen::MatrixXd& h = trace.acts.back();
    auto gw = grad_block(grad, o);
    auto gb = grad_bias(grad, o);
    const auto w = weight(o);
    Eigen::MatrixXd dh(h.rows(), h.cols());
    for (std::size_t i = 0; i < actions.size(); ++i) {
      const Eigen::Index col = static_cast<Eigen::Index>(i);
      const double g = dq_taken(col);
      gw.row(actions[i]) += g * h.col(col).transpose();
      gb(actions[i]) += g;
      dh.col(col) = g * w.row(actions[i]).transpose();
    }
    backward_hidden(trace, std::move(dh), grad);
    return grad;
  }

 private:
  void check_input(int rows) const {
    if (rows != input_dim())
      throw std::domain_error("QNetwork: input dimension mismatch");
  }

  MapMat grad_block(Eigen::VectorXd& g, std::size_t block) const {
    const Block& b = blocks_[block];
    return MapMat(g.data() + b.w_off, b.rows, b.cols);
  }
  MapVec grad_bias(Eigen::VectorXd& g, std::size_t block) const {
    const Block& b = blocks_[block];
    return MapVec(g.data() + b.b_off, b.rows);
  }

  void backward_hidden(const Trace& trace, Eigen::MatrixXd dh,
                       Eigen::VectorXd& grad) const {
    for (int i = hidden_layers() - 1; i >= 0; --i) {
      const std::size_t b = static_cast<std::size_t>(i);
      const Eigen::MatrixXd& act = trace.acts[b + 1];
      dh = dh.cwiseProduct((act.array() > 0.0).cast<double>().matrix());
      grad_block(grad, b).noalias() = dh * trace.acts[b].transpose();
      grad_bias(grad, b) = dh.rowwise().sum();
      if (i > 0) dh = (weight(b).transpose() * dh).eval();
    }
  }

  std::vector<int> dims_;
  bool dueling_ = false;
  Eigen::VectorXd params_;
  std::vector<Block> blocks_;
};

// Mean-squared TD loss over a batch. `pred` holds the full output batch
// (actions x samples); the gradient flows only through each sample's taken
// action with value -2 (y_i - Q_i) / batch.
struct TdLoss {
  double loss = 0.0;
  Eigen::MatrixXd grad;
};

inline TdLoss td_loss(const Eigen::MatrixXd& pred,
                      const std::vector<int>& actions,
                      const Eigen::VectorXd& targets) {
  const Eigen::Index batch = pred.cols();
  if (static_cast<Eigen::Index>(actions.size()) != batch ||
      targets.size() != batch)
    throw std::domain_error("td_loss: batch size mismatch");
  TdLoss out;
  out.grad = Eigen::MatrixXd::Zero(pred.rows(), pred.cols());
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double q = pred(actions[static_cast<std::size_t>(i)], i);
    const double err = targets(i) - q;
    out.loss += err * err;
    out.grad(actions[static_cast<std::size_t>(i)], i) =
        -2.0 * err / static_cast<double>(batch);
  }
  out.loss /= static_cast<double>(batch);
  return out;
}

enum class OptimizerKind { sgd, adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  Eigen::VectorXd m, v;  // adam moment accumulators, parameter-shaped

  static OptimizerState sgd(double lr) {
    OptimizerState s;
    s.kind = OptimizerKind::sgd;
    s.lr = lr;
    return s;
  }
  static OptimizerState adam(double lr, std::ptrdiff_t param_count) {
    OptimizerState s;
    s.kind = OptimizerKind::adam;
    s.lr = lr;
    s.m = Eigen::VectorXd::Zero(param_count);
    s.v = Eigen::VectorXd::Zero(param_count);
    return s;
  }
};

inline void sgd_step(QNetwork& net, const Eigen::VectorXd& grad,
                     OptimizerState& state) {
  if (grad.size() != net.param_count())
    throw std::domain_error("sgd_step: gradient shape mismatch");
  state.step += 1;
  net.params() -= state.lr * grad;
}

inline void adam_step(QNetwork& net, const Eigen::VectorXd& grad,
                      OptimizerState& state) {
  if (grad.size() != net.param_count() || state.m.size() != grad.size())
    throw std::domain_error("adam_step: shape mismatch");
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v.array() =
      state.beta2 * state.v.array() + (1.0 - state.beta2) * grad.array().square();
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  net.params().array() -=
      state.lr * (state.m.array() / bc1) /
      ((state.v.array() / bc2).sqrt() + state.eps);
}

inline void apply_gradient(QNetwork& net, const Eigen::VectorXd& grad,
                           OptimizerState& state) {
  if (state.kind == OptimizerKind::sgd)
    sgd_step(net, grad, state);
  else
    adam_step(net, grad, state);
}

// Weight file: magic "BSDQN1\n", a text header naming layer count, dims and
// the dueling flag, then little-endian float64 parameters (row-major weights
// then biases, block by block), then Adam state (m, v, step count) when
// present. Round trips are bit-exact.
namespace detail {
constexpr char kWeightMagic[] = "BSDQN1\n";

inline void write_doubles(std::ostream& os, const double* p, std::size_t n) {
  static_assert(std::endian::native == std::endian::little,
                "weight files are little-endian");
  os.write(reinterpret_cast<const char*>(p),
           static_cast<std::streamsize>(n * sizeof(double)));
}

inline void read_doubles(std::istream& is, double* p, std::size_t n,
                         std::size_t offset) {
  is.read(reinterpret_cast<char*>(p),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(is.gcount()) != n * sizeof(double))
    throw FormatError("weight file truncated at offset " +
                      std::to_string(offset + static_cast<std::size_t>(
                                                  std::max<std::streamsize>(
                                                      is.gcount(), 0))));
}
}  // namespace detail

inline void save_weights(std::ostream& os, const QNetwork& net,
                         const OptimizerState& opt) {
  os.write(detail::kWeightMagic, 7);
  std::ostringstream header;
  header << "layers=" << net.dims().size() - 1 << " dims=";
  for (std::size_t i = 0; i < net.dims().size(); ++i)
    header << (i ? "," : "") << net.dims()[i];
  header << " dueling=" << (net.dueling() ? 1 : 0) << "\n";
  const std::string h = header.str();
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  detail::write_doubles(os, net.params().data(),
                        static_cast<std::size_t>(net.param_count()));
  if (opt.kind == OptimizerKind::adam) {
    detail::write_doubles(os, opt.m.data(), static_cast<std::size_t>(opt.m.size()));
    detail::write_doubles(os, opt.v.data(), static_cast<std::size_t>(opt.v.size()));
    const double steps = static_cast<double>(opt.step);
    detail::write_doubles(os, &steps, 1);
  }
  if (!os) throw std::runtime_error("save_weights: write failed");
}

inline void save_weights(const std::string& path, const QNetwork& net,
                         const OptimizerState& opt) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_weights: cannot open " + path);
  save_weights(f, net, opt);
}

struct WeightFile {
  QNetwork net;
  bool has_adam_state = false;
  Eigen::VectorXd m, v;
  std::int64_t step = 0;
};

inline WeightFile load_weights(std::istream& is) {
  char magic[7];
  is.read(magic, 7);
  if (is.gcount() != 7 || std::memcmp(magic, detail::kWeightMagic, 7) != 0)
    throw FormatError("bad magic at offset 0");
  std::string header;
  if (!std::getline(is, header))
    throw FormatError("missing header line at offset 7");
  std::size_t offset = 7 + header.size() + 1;

  std::size_t layers = 0;
  std::vector<int> dims;
  int dueling = -1;
  try {
    std::istringstream hs(header);
    std::string tok;
    while (hs >> tok) {
      if (tok.rfind("layers=", 0) == 0) {
        layers = static_cast<std::size_t>(std::stoll(tok.substr(7)));
      } else if (tok.rfind("dims=", 0) == 0) {
        std::istringstream ds(tok.substr(5));
        std::string d;
        while (std::getline(ds, d, ',')) dims.push_back(std::stoi(d));
      } else if (tok.rfind("dueling=", 0) == 0) {
        dueling = std::stoi(tok.substr(8));
      } else {
        throw FormatError("unknown header field '" + tok + "' at offset 7");
      }
    }
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception&) {
    throw FormatError("unparsable header '" + header + "' at offset 7");
  }
  if (dims.size() < 2 || dueling < 0 || dueling > 1 ||
      layers != dims.size() - 1)
    throw FormatError("inconsistent header '" + header + "' at offset 7");

  WeightFile wf;
  wf.net = QNetwork::zeros(dims, dueling == 1);
  const std::size_t n = static_cast<std::size_t>(wf.net.param_count());
  detail::read_doubles(is, wf.net.params().data(), n, offset);
  offset += n * sizeof(double);

  // Trailing bytes, if any, are Adam state: m, v, then the step counter.
  std::istream::int_type peek = is.peek();
  if (peek != std::istream::traits_type::eof()) {
    wf.m.resize(static_cast<Eigen::Index>(n));
    wf.v.resize(static_cast<Eigen::Index>(n));
    detail::read_doubles(is, wf.m.data(), n, offset);
    offset += n * sizeof(double);
    detail::read_doubles(is, wf.v.data(), n, offset);
    offset += n * sizeof(double);
    double steps = 0.0;
    detail::read_doubles(is, &steps, 1, offset);
    offset += sizeof(double);
    wf.step = static_cast<std::int64_t>(steps);
    wf.has_adam_state = true;
  }
  if (is.peek() != std::istream::traits_type::eof())
    throw FormatError("trailing bytes at offset " + std::to_string(offset));
  return wf;
}

inline WeightFile load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_weights: cannot open " + path);
  return load_weights(f);
}

}  // namespace bsdqn

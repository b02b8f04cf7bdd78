#include "dqnas/neural_core.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dqnas/error.hpp"

namespace dqnas::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::RowVectorXd;
using ConstMat = Eigen::Map<const RowMat>;
using MutMat = Eigen::Map<RowMat>;
using ConstVec = Eigen::Map<const Vec>;
using MutVec = Eigen::Map<Vec>;

constexpr char kMagic[8] = {'D', 'Q', 'N', 'A', 'S', 'Q', 'N', '1'};

ConstMat cmat(const QNetParams& p, Block b) {
  const auto& l = p.layout(b);
  return ConstMat(p.values().data() + l.offset, static_cast<Eigen::Index>(l.rows),
                  static_cast<Eigen::Index>(l.cols));
}

ConstVec cvec(const QNetParams& p, Block b) {
  const auto& l = p.layout(b);
  return ConstVec(p.values().data() + l.offset, static_cast<Eigen::Index>(l.size()));
}

MutMat gmat(const QNetParams& p, std::vector<double>& grad, Block b) {
  const auto& l = p.layout(b);
  return MutMat(grad.data() + l.offset, static_cast<Eigen::Index>(l.rows),
                static_cast<Eigen::Index>(l.cols));
}

MutVec gvec(const QNetParams& p, std::vector<double>& grad, Block b) {
  const auto& l = p.layout(b);
  return MutVec(grad.data() + l.offset, static_cast<Eigen::Index>(l.size()));
}

struct LstmBlocks {
  Block kernel, recurrent, bias;
};
constexpr LstmBlocks kLstm1{Block::Lstm1Kernel, Block::Lstm1Recurrent, Block::Lstm1Bias};
constexpr LstmBlocks kLstm2{Block::Lstm2Kernel, Block::Lstm2Recurrent, Block::Lstm2Bias};

Vec sigmoid(const Vec& z) { return ((-z.array()).exp() + 1.0).inverse().matrix(); }

struct LstmStep {
  Vec x, h_prev, c_prev, i, f, g, o, c, tc, h;
};

std::vector<LstmStep> lstm_forward(const QNetParams& p, const LstmBlocks& blk,
                                   const std::vector<Vec>& xs) {
  const auto H = static_cast<Eigen::Index>(p.shape().hidden);
  const ConstMat W = cmat(p, blk.kernel);
  const ConstMat U = cmat(p, blk.recurrent);
  const ConstVec b = cvec(p, blk.bias);

  std::vector<LstmStep> steps(xs.size());
  Vec h = Vec::Zero(H);
  Vec c = Vec::Zero(H);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    LstmStep& s = steps[t];
    s.x = xs[t];
    s.h_prev = h;
    s.c_prev = c;
    const Vec z = s.x * W + h * U + b;
    s.i = sigmoid(z.segment(0, H));
    s.f = sigmoid(z.segment(H, H));
    s.g = z.segment(2 * H, H).array().tanh().matrix();
    s.o = sigmoid(z.segment(3 * H, H));
    s.c = s.f.cwiseProduct(s.c_prev) + s.i.cwiseProduct(s.g);
    s.tc = s.c.array().tanh().matrix();
    s.h = s.o.cwiseProduct(s.tc);
    h = s.h;
    c = s.c;
  }
  return steps;
}

// Backpropagation through time. `dh_ext[t]` is the loss gradient arriving at h_t
// from above; returns the gradient w.r.t. each input x_t.
std::vector<Vec> lstm_backward(const QNetParams& p, const LstmBlocks& blk,
                               const std::vector<LstmStep>& steps, const std::vector<Vec>& dh_ext,
                               std::vector<double>& grad) {
  const auto H = static_cast<Eigen::Index>(p.shape().hidden);
  const ConstMat W = cmat(p, blk.kernel);
  const ConstMat U = cmat(p, blk.recurrent);
  MutMat dW = gmat(p, grad, blk.kernel);
  MutMat dU = gmat(p, grad, blk.recurrent);
  MutVec db = gvec(p, grad, blk.bias);

  std::vector<Vec> dx(steps.size());
  Vec dh_next = Vec::Zero(H);
  Vec dc_next = Vec::Zero(H);
  Vec dz(4 * H);
  for (std::size_t t = steps.size(); t-- > 0;) {
    const LstmStep& s = steps[t];
    const Vec dh = dh_ext[t] + dh_next;
    const Vec d_o = dh.cwiseProduct(s.tc);
    const Vec dc = dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tc.array().square()).matrix()) + dc_next;
    const Vec d_i = dc.cwiseProduct(s.g);
    const Vec d_g = dc.cwiseProduct(s.i);
    const Vec d_f = dc.cwiseProduct(s.c_prev);

    dz.segment(0, H) = d_i.array() * s.i.array() * (1.0 - s.i.array());
    dz.segment(H, H) = d_f.array() * s.f.array() * (1.0 - s.f.array());
    dz.segment(2 * H, H) = d_g.array() * (1.0 - s.g.array().square());
    dz.segment(3 * H, H) = d_o.array() * s.o.array() * (1.0 - s.o.array());

    dW.noalias() += s.x.transpose() * dz;
    dU.noalias() += s.h_prev.transpose() * dz;
    db += dz;
    dx[t] = dz * W.transpose();
    dh_next = dz * U.transpose();
    dc_next = dc.cwiseProduct(s.f);
  }
  return dx;
}

// Inverted dropout mask: kept units are scaled by 1 / (1 - rate).
Vec dropout_mask(Eigen::Index n, double rate, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double scale = 1.0 / (1.0 - rate);
  Vec m(n);
  for (Eigen::Index i = 0; i < n; ++i) m[i] = u(rng) < rate ? 0.0 : scale;
  return m;
}

std::vector<Vec> state_rows(const QNetParams& p, const Tensor& state) {
  const std::size_t W = p.shape().input_width;
  std::size_t T = 0;
  if (state.rank() == 1 && state.dims()[0] == W) {
    T = 1;
  } else if (state.rank() == 2 && state.dims()[1] == W && state.dims()[0] >= 1) {
    T = state.dims()[0];
  } else {
    std::string got;
    for (auto d : state.dims()) got += std::to_string(d) + " ";
    throw DimensionMismatch("state dims [" + got + "] do not match input width " + std::to_string(W));
  }
  std::vector<Vec> rows(T);
  for (std::size_t t = 0; t < T; ++t) {
    rows[t] = ConstVec(state.data().data() + t * W, static_cast<Eigen::Index>(W));
  }
  return rows;
}

struct ForwardTrace {
  std::vector<LstmStep> l1, l2;
  std::vector<Vec> mask1;  // per time step, empty without dropout
  Vec mask2;
  Vec head_in;  // last hidden state after dropout
};

ForwardTrace run_body(const QNetParams& p, const Tensor& state, Rng* dropout_rng) {
  const auto H = static_cast<Eigen::Index>(p.shape().hidden);
  const double rate = p.shape().dropout_rate;
  const bool drop = dropout_rng != nullptr && rate > 0.0;

  ForwardTrace tr;
  tr.l1 = lstm_forward(p, kLstm1, state_rows(p, state));
  std::vector<Vec> seq(tr.l1.size());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    seq[t] = tr.l1[t].h;
    if (drop) {
      tr.mask1.push_back(dropout_mask(H, rate, *dropout_rng));
      seq[t] = seq[t].cwiseProduct(tr.mask1.back());
    }
  }
  tr.l2 = lstm_forward(p, kLstm2, seq);
  tr.head_in = tr.l2.back().h;
  if (drop) {
    tr.mask2 = dropout_mask(H, rate, *dropout_rng);
    tr.head_in = tr.head_in.cwiseProduct(tr.mask2);
  }
  return tr;
}

double q_of(const QNetParams& p, const Vec& head_in, std::size_t action) {
  const auto& kl = p.layout(Block::OutputKernel);
  const std::size_t V = kl.cols;
  const double* w = p.values().data() + kl.offset;
  double q = p.values()[p.layout(Block::OutputBias).offset + action];
  for (std::size_t r = 0; r < kl.rows; ++r) q += head_in[static_cast<Eigen::Index>(r)] * w[r * V + action];
  return q;
}

void check_action(const QNetParams& p, std::size_t action) {
  if (action >= p.shape().output_width) {
    throw DimensionMismatch("action " + std::to_string(action) + " outside Q-network output width " +
                            std::to_string(p.shape().output_width));
  }
}

void put_u64(Blob& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | in[at + static_cast<std::size_t>(i)];
  return v;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims, double fill) : dims_(std::move(dims)) {
  const std::size_t n =
      std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
  data_.assign(n, fill);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  const std::size_t n =
      std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
  if (n != data_.size()) throw DimensionMismatch("tensor data length does not match its dims");
}

QNetParams::QNetParams(const QNetShape& shape) : shape_(shape) {
  if (shape.input_width == 0 || shape.hidden == 0 || shape.output_width == 0) {
    throw DimensionMismatch("Q-network widths must be positive");
  }
  if (!(shape.dropout_rate >= 0.0 && shape.dropout_rate < 1.0)) {
    throw DimensionMismatch("dropout rate must lie in [0, 1)");
  }
  const std::size_t W = shape.input_width, H = shape.hidden, V = shape.output_width;
  const std::array<std::pair<std::size_t, std::size_t>, kBlockCount> dims = {{
      {W, 4 * H}, {H, 4 * H}, {1, 4 * H}, {H, 4 * H}, {H, 4 * H}, {1, 4 * H}, {H, V}, {1, V},
  }};
  constexpr std::array<std::string_view, kBlockCount> names = {
      "lstm.kernel",   "lstm.recurrent_kernel",   "lstm.bias",          "lstm_1.kernel",
      "lstm_1.recurrent_kernel", "lstm_1.bias", "main_output.kernel", "main_output.bias"};
  std::size_t offset = 0;
  for (std::size_t i = 0; i < kBlockCount; ++i) {
    layouts_[i] = BlockLayout{names[i], offset, dims[i].first, dims[i].second};
    offset += layouts_[i].size();
  }
  values_.assign(offset, 0.0);
}

QNetParams QNetParams::uniform(const QNetShape& shape, std::uint64_t seed, double scale) {
  QNetParams p(shape);
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : p.values_) v = u(rng);
  return p;
}

std::array<std::size_t, 3> QNetParams::layer_parameter_counts() const {
  auto sum = [&](Block a, Block b, Block c) {
    return layout(a).size() + layout(b).size() + layout(c).size();
  };
  return {sum(Block::Lstm1Kernel, Block::Lstm1Recurrent, Block::Lstm1Bias),
          sum(Block::Lstm2Kernel, Block::Lstm2Recurrent, Block::Lstm2Bias),
          layout(Block::OutputKernel).size() + layout(Block::OutputBias).size()};
}

Blob QNetParams::serialize() const {
  nlohmann::json header{{"format", "dqnas-qnet"},
                        {"version", 1},
                        {"input_width", shape_.input_width},
                        {"hidden", shape_.hidden},
                        {"output_width", shape_.output_width},
                        {"dropout_rate", shape_.dropout_rate},
                        {"count", values_.size()}};
  for (const auto& l : layouts_) {
    header["layers"].push_back({{"name", l.name}, {"dims", {l.rows, l.cols}}});
  }
  const std::string text = header.dump();
  Blob out(kMagic, kMagic + 8);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + 8 * values_.size());
  for (double v : values_) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

QNetParams QNetParams::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw ParseError("not a Q-network blob");
  }
  const std::uint64_t hlen = get_u64(bytes, 8);
  if (hlen > bytes.size() - 16) throw ParseError("truncated Q-network header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad Q-network header: ") + e.what());
  }
  QNetShape shape;
  shape.input_width = header.at("input_width").get<std::size_t>();
  shape.hidden = header.at("hidden").get<std::size_t>();
  shape.output_width = header.at("output_width").get<std::size_t>();
  shape.dropout_rate = header.at("dropout_rate").get<double>();
  QNetParams p(shape);
  const std::size_t start = 16 + hlen;
  if (header.at("count").get<std::size_t>() != p.size() || bytes.size() - start != 8 * p.size()) {
    throw ParseError("Q-network blob size does not match its header");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    p.values_[i] = std::bit_cast<double>(get_u64(bytes, start + 8 * i));
  }
  return p;
}

Tensor qnet_forward(const QNetParams& p, const Tensor& state, bool train_mode, Rng* rng) {
  if (train_mode && rng == nullptr) throw Error("training-mode forward pass needs an RNG");
  const ForwardTrace tr = run_body(p, state, train_mode ? rng : nullptr);
  const std::size_t V = p.shape().output_width;
  Tensor q({V});
  MutVec out(q.data().data(), static_cast<Eigen::Index>(V));
  out.noalias() = tr.head_in * cmat(p, Block::OutputKernel);
  out += cvec(p, Block::OutputBias);
  return q;
}

void adam_update(std::span<double> params, std::span<const double> grad, AdamState& opt) {
  if (opt.m.size() != params.size()) {
    opt.m.assign(params.size(), 0.0);
    opt.v.assign(params.size(), 0.0);
  }
  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  const double lr = opt.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
    params[i] -= lr * (opt.m[i] / c1) / (std::sqrt(opt.v[i] / c2) + opt.epsilon);
  }
}

double qnet_loss(const QNetParams& p, std::span<const TrainSample> batch) {
  if (batch.empty()) return 0.0;
  double loss = 0.0;
  for (const auto& s : batch) {
    check_action(p, s.action);
    const ForwardTrace tr = run_body(p, s.state, nullptr);
    const double d = q_of(p, tr.head_in, s.action) - s.target;
    loss += d * d;
  }
  return loss / static_cast<double>(batch.size());
}

double qnet_loss_and_gradient(const QNetParams& p, std::span<const TrainSample> batch,
                              std::vector<double>& grad, Rng* dropout_rng) {
  grad.assign(p.size(), 0.0);
  if (batch.empty()) return 0.0;
  const auto H = static_cast<Eigen::Index>(p.shape().hidden);
  const std::size_t V = p.shape().output_width;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const auto& kl = p.layout(Block::OutputKernel);
  const std::size_t bias_off = p.layout(Block::OutputBias).offset;

  double loss = 0.0;
  for (const auto& s : batch) {
    check_action(p, s.action);
    const ForwardTrace tr = run_body(p, s.state, dropout_rng);
    const double diff = q_of(p, tr.head_in, s.action) - s.target;
    loss += diff * diff;
    const double dq = 2.0 * diff * inv_n;

    // Only the selected action's output column receives gradient.
    Vec dh(H);
    const double* w = p.values().data() + kl.offset;
    for (Eigen::Index r = 0; r < H; ++r) {
      const std::size_t at = static_cast<std::size_t>(r) * V + s.action;
      grad[kl.offset + at] += dq * tr.head_in[r];
      dh[r] = dq * w[at];
    }
    grad[bias_off + s.action] += dq;

    if (tr.mask2.size() != 0) dh = dh.cwiseProduct(tr.mask2);
    std::vector<Vec> dh2(tr.l2.size(), Vec::Zero(H));
    dh2.back() = dh;
    std::vector<Vec> dseq = lstm_backward(p, kLstm2, tr.l2, dh2, grad);
    for (std::size_t t = 0; t < dseq.size() && !tr.mask1.empty(); ++t) {
      dseq[t] = dseq[t].cwiseProduct(tr.mask1[t]);
    }
    lstm_backward(p, kLstm1, tr.l1, dseq, grad);
  }
  return loss * inv_n;
}

double qnet_train_step(QNetParams& p, std::span<const TrainSample> batch, AdamState& opt,
                       Rng* dropout_rng) {
  if (batch.empty()) throw Error("training batch is empty");
  for (const auto& s : batch) {
    if (!std::isfinite(s.target)) throw NonFiniteLoss("training target is not finite");
  }
  std::vector<double> grad;
  const double loss = qnet_loss_and_gradient(p, batch, grad, dropout_rng);
  if (!std::isfinite(loss) ||
      !std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); })) {
    throw NonFiniteLoss("loss or gradient is not finite");
  }
  adam_update(p.values(), grad, opt);
  return loss;
}

GradientCheckResult gradient_check(const QNetParams& p, const TrainSample& sample,
                                   std::size_t num_params, std::uint64_t seed, double step) {
  std::vector<double> analytic;
  const std::span<const TrainSample> one(&sample, 1);
  qnet_loss_and_gradient(p, one, analytic, nullptr);

  // Spread the probes evenly over the blocks so small blocks are not missed.
  Rng rng(seed);
  std::vector<std::size_t> probes;
  const std::size_t per_block = (num_params + kBlockCount - 1) / kBlockCount;
  for (const auto& l : p.layouts()) {
    std::uniform_int_distribution<std::size_t> pick(0, l.size() - 1);
    for (std::size_t k = 0; k < per_block; ++k) probes.push_back(l.offset + pick(rng));
  }
  // The output column of the chosen action is where the signal is.
  const auto& kl = p.layout(Block::OutputKernel);
  std::uniform_int_distribution<std::size_t> row(0, kl.rows - 1);
  for (std::size_t k = 0; k < per_block; ++k) {
    probes.push_back(kl.offset + row(rng) * kl.cols + sample.action);
  }

  QNetParams probe = p;
  GradientCheckResult res;
  for (std::size_t idx : probes) {
    const double orig = probe.values()[idx];
    probe.values()[idx] = orig + step;
    const double up = qnet_loss(probe, one);
    probe.values()[idx] = orig - step;
    const double down = qnet_loss(probe, one);
    probe.values()[idx] = orig;

    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[idx];
    const double abs_err = std::abs(a - numeric);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    res.max_absolute_error = std::max(res.max_absolute_error, abs_err);
    res.max_relative_error = std::max(res.max_relative_error, abs_err / denom);
    ++res.checked;
  }
  return res;
}

}  // namespace dqnas::nn

#include "motionhint/ppnet.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace motionhint {
namespace {

using HiddenVec = Eigen::Matrix<double, kHiddenUnits, 1>;
using GateVec = Eigen::Matrix<double, kGateRows, 1>;

// Keeps the derivative of S^k finite at zero residual when k < 1.
constexpr double kResidualFloor = 1e-12;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct StepCache {
  Vector6d x;
  HiddenVec h_prev, c_prev;
  HiddenVec i, f, g, o;
  HiddenVec c, tanh_c, h;
};

// Forward pass keeping every intermediate needed by backprop.
HiddenVec run_lstm(const PPnetParams& p, const PoseWindow& w, std::vector<StepCache>* cache) {
  HiddenVec h = HiddenVec::Zero();
  HiddenVec c = HiddenVec::Zero();
  if (cache) cache->resize(w.inputs.size());
  for (std::size_t s = 0; s < w.inputs.size(); ++s) {
    const Vector6d x = w.inputs[s].vector();
    const GateVec pre = p.w_input * x + p.w_recurrent * h + p.b_gates;
    HiddenVec i, f, g, o;
    for (int u = 0; u < kHiddenUnits; ++u) {
      i(u) = sigmoid(pre(u));
      f(u) = sigmoid(pre(kHiddenUnits + u));
      g(u) = std::tanh(pre(2 * kHiddenUnits + u));
      o(u) = sigmoid(pre(3 * kHiddenUnits + u));
    }
    const HiddenVec c_new = f.cwiseProduct(c) + i.cwiseProduct(g);
    const HiddenVec tanh_c = c_new.array().tanh().matrix();
    const HiddenVec h_new = o.cwiseProduct(tanh_c);
    if (cache) {
      auto& sc = (*cache)[s];
      sc.x = x;
      sc.h_prev = h;
      sc.c_prev = c;
      sc.i = i;
      sc.f = f;
      sc.g = g;
      sc.o = o;
      sc.c = c_new;
      sc.tanh_c = tanh_c;
      sc.h = h_new;
    }
    h = h_new;
    c = c_new;
  }
  return h;
}

// Per-window loss and gradient, accumulated into `grad`.
double accumulate_window(const PPnetParams& p, const PoseWindow& w, const NllConfig& nll,
                         std::vector<StepCache>& cache, PPnetParams& grad) {
  const HiddenVec h_last = run_lstm(p, w, &cache);
  const Vector6d y = p.w_pose * h_last + p.b_pose;
  const Vector6d logvar = p.w_logvar * h_last + p.b_logvar;
  const Vector6d inv_sigma = (-logvar).array().exp().matrix();
  const Vector6d r = w.target.vector() - y;
  const double S = r.cwiseAbs2().dot(inv_sigma);
  const double loss = nll.gamma * logvar.sum() + std::pow(S, nll.k);
  if (!std::isfinite(loss) || !inv_sigma.allFinite()) {
    throw NumericError("PPnet loss overflow (non-finite NLL)");
  }
  const double dS = nll.k * std::pow(std::max(S, kResidualFloor), nll.k - 1.0);
  const Vector6d d_y = -2.0 * dS * r.cwiseProduct(inv_sigma);
  const Vector6d d_logvar =
      Vector6d::Constant(nll.gamma) - dS * r.cwiseAbs2().cwiseProduct(inv_sigma);

  grad.w_pose.noalias() += d_y * h_last.transpose();
  grad.b_pose += d_y;
  grad.w_logvar.noalias() += d_logvar * h_last.transpose();
  grad.b_logvar += d_logvar;

  HiddenVec dh = p.w_pose.transpose() * d_y + p.w_logvar.transpose() * d_logvar;
  HiddenVec dc_next = HiddenVec::Zero();
  for (std::size_t s = cache.size(); s-- > 0;) {
    const auto& sc = cache[s];
    const HiddenVec d_o = dh.cwiseProduct(sc.tanh_c);
    const HiddenVec dc = dc_next + dh.cwiseProduct(sc.o).cwiseProduct(
                                       (1.0 - sc.tanh_c.array().square()).matrix());
    const HiddenVec d_i = dc.cwiseProduct(sc.g);
    const HiddenVec d_g = dc.cwiseProduct(sc.i);
    const HiddenVec d_f = dc.cwiseProduct(sc.c_prev);
    dc_next = dc.cwiseProduct(sc.f);

    GateVec d_pre;
    d_pre.segment<kHiddenUnits>(0) =
        d_i.array() * sc.i.array() * (1.0 - sc.i.array());
    d_pre.segment<kHiddenUnits>(kHiddenUnits) =
        d_f.array() * sc.f.array() * (1.0 - sc.f.array());
    d_pre.segment<kHiddenUnits>(2 * kHiddenUnits) =
        d_g.array() * (1.0 - sc.g.array().square());
    d_pre.segment<kHiddenUnits>(3 * kHiddenUnits) =
        d_o.array() * sc.o.array() * (1.0 - sc.o.array());

    grad.w_input.noalias() += d_pre * sc.x.transpose();
    grad.w_recurrent.noalias() += d_pre * sc.h_prev.transpose();
    grad.b_gates += d_pre;
    dh.noalias() = p.w_recurrent.transpose() * d_pre;
  }
  return loss;
}

template <typename M>
void fill_uniform(M& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

// Visits every parameter block in a fixed order shared by flatten, unflatten and the file
// format.
template <typename Params, typename Fn>
void for_each_block(Params& p, Fn&& fn) {
  fn("w_input", p.w_input);
  fn("w_recurrent", p.w_recurrent);
  fn("b_gates", p.b_gates);
  fn("w_pose", p.w_pose);
  fn("b_pose", p.b_pose);
  fn("w_logvar", p.w_logvar);
  fn("b_logvar", p.b_logvar);
}

}  // namespace

PPnetParams PPnetParams::Zero() {
  PPnetParams p;
  for_each_block(p, [](const char*, auto& m) { m.setZero(); });
  return p;
}

PPnetParams PPnetParams::Initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PPnetParams p = Zero();
  const double bound = 1.0 / std::sqrt(static_cast<double>(kHiddenUnits));
  fill_uniform(p.w_input, bound, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int gate = 0; gate < 4; ++gate) {
    Eigen::Matrix<double, kHiddenUnits, kHiddenUnits> a;
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
    Eigen::HouseholderQR<Eigen::Matrix<double, kHiddenUnits, kHiddenUnits>> qr(a);
    Eigen::Matrix<double, kHiddenUnits, kHiddenUnits> q = qr.householderQ();
    // Sign fix makes the draw uniform over the orthogonal group.
    for (int j = 0; j < kHiddenUnits; ++j) {
      if (qr.matrixQR()(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    p.w_recurrent.block<kHiddenUnits, kHiddenUnits>(gate * kHiddenUnits, 0) = q;
  }
  p.b_gates.segment<kHiddenUnits>(kHiddenUnits).setOnes();
  fill_uniform(p.w_pose, bound, rng);
  fill_uniform(p.w_logvar, bound, rng);
  return p;
}

Eigen::VectorXd PPnetParams::flatten() const {
  Eigen::VectorXd v(kSize);
  Eigen::Index offset = 0;
  for_each_block(*this, [&](const char*, const auto& m) {
    v.segment(offset, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    offset += m.size();
  });
  return v;
}

PPnetParams PPnetParams::unflatten(const Eigen::VectorXd& v) {
  if (v.size() != kSize) throw InvalidArgumentError("PPnet parameter vector has wrong size");
  PPnetParams p;
  Eigen::Index offset = 0;
  for_each_block(p, [&](const char*, auto& m) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = v.segment(offset, m.size());
    offset += m.size();
  });
  return p;
}

bool PPnetParams::allFinite() const {
  bool ok = true;
  for_each_block(*this, [&](const char*, const auto& m) { ok = ok && m.allFinite(); });
  return ok;
}

PPnetParams& PPnetParams::operator+=(const PPnetParams& o) {
  w_input += o.w_input;
  w_recurrent += o.w_recurrent;
  b_gates += o.b_gates;
  w_pose += o.w_pose;
  b_pose += o.b_pose;
  w_logvar += o.w_logvar;
  b_logvar += o.b_logvar;
  return *this;
}

PPnetParams& PPnetParams::operator*=(double s) {
  for_each_block(*this, [s](const char*, auto& m) { m *= s; });
  return *this;
}

Prediction forward(const PPnetParams& params, const PoseWindow& window) {
  if (!params.allFinite()) throw NumericError("PPnet parameters are not finite");
  const HiddenVec h = run_lstm(params, window, nullptr);
  Prediction pred;
  pred.pose_m = Pose6d::FromVector(params.w_pose * h + params.b_pose);
  pred.sigma = (params.w_logvar * h + params.b_logvar).array().exp().matrix();
  if (!pred.sigma.allFinite() || !(pred.sigma.array() > 0.0).all()) {
    throw NumericError("PPnet uncertainty head overflowed");
  }
  return pred;
}

double nll_loss(const Prediction& pred, const Pose6d& target, double gamma, double k) {
  if (!(pred.sigma.array() > 0.0).all()) {
    throw InvalidArgumentError("nll_loss: uncertainty must be strictly positive");
  }
  const Vector6d r = target.vector() - pred.pose_m.vector();
  const double S = (r.array().square() / pred.sigma.array()).sum();
  return gamma * pred.sigma.array().log().sum() + std::pow(S, k);
}

double total_uncertainty(const Prediction& pred) { return pred.sigma.sum(); }

LossGradient loss_gradient(const PPnetParams& params, std::span<const PoseWindow> batch,
                           const NllConfig& nll) {
  if (batch.empty()) throw InvalidArgumentError("loss_gradient: empty batch");
  const std::size_t len = batch.front().inputs.size();
  LossGradient out{0.0, PPnetParams::Zero()};
  std::vector<StepCache> cache;
  cache.reserve(len);
  for (const auto& w : batch) {
    if (w.inputs.size() != len) {
      throw InvalidArgumentError("loss_gradient: windows differ in length");
    }
    out.loss += accumulate_window(params, w, nll, cache, out.grad);
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv_n;
  out.grad *= inv_n;
  if (!std::isfinite(out.loss) || !out.grad.allFinite()) {
    throw NumericError("PPnet gradient is not finite");
  }
  return out;
}

double mean_nll(const PPnetParams& params, std::span<const PoseWindow> windows,
                const NllConfig& nll) {
  if (windows.empty()) throw InvalidArgumentError("mean_nll: no windows");
  double sum = 0.0;
  for (const auto& w : windows) sum += nll_loss(forward(params, w), w.target, nll);
  return sum / static_cast<double>(windows.size());
}

void adam_step(PPnetParams& params, const PPnetParams& grads, AdamState& state,
               const AdamConfig& config) {
  Eigen::VectorXd x = params.flatten();
  adam_update(x, grads.flatten(), state, config);
  params = PPnetParams::unflatten(x);
}

void TrainConfig::validate() const {
  if (window < 2) throw InvalidArgumentError("window length must be at least 2");
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgumentError("gamma must lie in (0, 1)");
  if (!(k > 0.0)) throw InvalidArgumentError("k must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgumentError("learning rate must be positive");
  if (batch_size == 0) throw InvalidArgumentError("batch size must be positive");
  if (!(scale_min > 0.0 && scale_max >= scale_min)) {
    throw InvalidArgumentError("scale range must satisfy 0 < min <= max");
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw InvalidArgumentError("validation fraction must lie in (0, 1)");
  }
}

PoseWindow prepare_window(const PoseWindow& raw, double scale, bool centralize_window) {
  PoseWindow w = scale == 1.0 ? raw : scale_augment(raw, scale);
  return centralize_window ? centralize(w) : w;
}

TrainResult train(std::span<const Trajectory> dataset, const TrainConfig& config,
                  std::span<const Trajectory> validation) {
  config.validate();
  if (dataset.empty()) throw InvalidArgumentError("train: empty dataset");

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> log_scale(std::log(config.scale_min),
                                                   std::log(config.scale_max));
  auto draw_scale = [&] { return config.scale_augment ? std::exp(log_scale(rng)) : 1.0; };

  std::vector<PoseWindow> train_windows;
  std::vector<PoseWindow> raw_val;
  for (const auto& traj : dataset) {
    auto windows = sliding_windows(traj, config.window);
    std::size_t n_val = 0;
    if (validation.empty() && windows.size() >= 2) {
      n_val = std::max<std::size_t>(
          1, static_cast<std::size_t>(config.validation_fraction *
                                      static_cast<double>(windows.size())));
    }
    const std::size_t n_train = windows.size() - n_val;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      (i < n_train ? train_windows : raw_val).push_back(std::move(windows[i]));
    }
  }
  if (train_windows.size() < config.batch_size) {
    throw InvalidArgumentError("train: fewer training windows than the batch size");
  }

  TrainResult result;
  if (validation.empty()) {
    for (const auto& w : raw_val) {
      result.validation.push_back(prepare_window(w, draw_scale(), config.centralize));
    }
  } else {
    for (const auto& traj : validation) {
      for (const auto& w : sliding_windows(traj, config.window)) {
        result.validation.push_back(prepare_window(w, 1.0, config.centralize));
      }
    }
  }
  if (result.validation.empty()) throw InvalidArgumentError("train: no validation windows");

  const NllConfig nll = config.nll();
  const AdamConfig adam{config.learning_rate, config.beta1, config.beta2, config.adam_epsilon};
  PPnetParams params = PPnetParams::Initialize(rng());
  AdamState state;

  double best = mean_nll(params, result.validation, nll);
  result.params = params;
  result.best_epoch = 0;
  result.history.push_back({0, std::numeric_limits<double>::quiet_NaN(), best});

  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<PoseWindow> batch;
  batch.reserve(config.batch_size);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    // Trailing partial batch is dropped so every step sees the same batch size.
    for (std::size_t start = 0; start + config.batch_size <= order.size();
         start += config.batch_size) {
      batch.clear();
      for (std::size_t j = start; j < start + config.batch_size; ++j) {
        batch.push_back(prepare_window(train_windows[order[j]], draw_scale(), config.centralize));
      }
      const LossGradient lg = loss_gradient(params, batch, nll);
      adam_step(params, lg.grad, state, adam);
      loss_sum += lg.loss;
      ++n_batches;
    }
    const double val = mean_nll(params, result.validation, nll);
    result.history.push_back({epoch, loss_sum / static_cast<double>(n_batches), val});
    if (val < best) {
      best = val;
      result.params = params;
      result.best_epoch = epoch;
    }
  }
  return result;
}

double zero_predictor_nll(std::span<const PoseWindow> windows, const NllConfig& nll) {
  if (windows.empty()) throw InvalidArgumentError("zero_predictor_nll: no windows");
  const auto n = static_cast<Eigen::Index>(windows.size());
  Eigen::Matrix<double, Eigen::Dynamic, kPoseDim> sq(n, kPoseDim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const PoseWindow& w = windows[static_cast<std::size_t>(i)];
    const Vector6d motion = w.target.vector() - w.inputs[w.center_index()].vector();
    sq.row(i) = motion.cwiseAbs2().transpose();
  }
  const double inv_n = 1.0 / static_cast<double>(n);

  auto objective = [&](const Vector6d& l) {
    const Vector6d inv = (-l).array().exp().matrix();
    return nll.gamma * l.sum() + (sq * inv).array().pow(nll.k).sum() * inv_n;
  };

  // The objective is convex in the log-uncertainties; damped Newton from the per-dimension
  // second moments.
  Vector6d l = (sq.colwise().mean().transpose().array() + 1e-300).log().matrix();
  double f = objective(l);
  for (int iter = 0; iter < 100; ++iter) {
    const Vector6d inv = (-l).array().exp().matrix();
    Vector6d g = Vector6d::Constant(nll.gamma);
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector6d b = sq.row(i).transpose().cwiseProduct(inv);
      const double S = std::max(b.sum(), 1e-300);
      const double s1 = nll.k * std::pow(S, nll.k - 1.0);
      const double s2 = nll.k * (nll.k - 1.0) * std::pow(S, nll.k - 2.0);
      g -= inv_n * s1 * b;
      H.noalias() += inv_n * (s2 * b * b.transpose());
      H.diagonal() += inv_n * s1 * b;
    }
    using Matrix6d = Eigen::Matrix<double, 6, 6>;
    Eigen::LDLT<Matrix6d> ldlt(H + 1e-12 * Matrix6d::Identity());
    Vector6d step = ldlt.solve(-g);
    if (!step.allFinite() || step.dot(g) >= 0.0) step = -g;
    double t = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      const Vector6d cand = l + t * step;
      const double fc = objective(cand);
      if (fc < f) {
        l = cand;
        improved = f - fc > 1e-14 * std::abs(f);
        f = fc;
        break;
      }
    }
    if (!improved) break;
  }
  return f;
}

void save_model(std::ostream& out, const PPnetParams& params) {
  out << "motionhint-ppnet " << PPnetParams::kFormatVersion << '\n';
  out << "shape input " << kPoseDim << " hidden " << kHiddenUnits << " output " << kPoseDim
      << '\n';
  char buf[64];
  for_each_block(params, [&](const char* name, const auto& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%a", m(r, c));
        out << buf << (c + 1 == m.cols() ? '\n' : ' ');
      }
    }
  });
  out << "end\n";
}

PPnetParams load_model(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "motionhint-ppnet") {
    throw ParseError("not a PPnet model file");
  }
  if (version != PPnetParams::kFormatVersion) {
    throw ParseError("unsupported model version " + std::to_string(version));
  }
  std::string kw_shape, kw_in, kw_hidden, kw_out;
  int n_in = 0, n_hidden = 0, n_out = 0;
  if (!(in >> kw_shape >> kw_in >> n_in >> kw_hidden >> n_hidden >> kw_out >> n_out) ||
      kw_shape != "shape" || kw_in != "input" || kw_hidden != "hidden" || kw_out != "output") {
    throw ParseError("malformed shape header");
  }
  if (n_in != kPoseDim || n_hidden != kHiddenUnits || n_out != kPoseDim) {
    throw ParseError("model shape does not match this build (input 6, hidden 8, output 6)");
  }
  PPnetParams p;
  for_each_block(p, [&](const char* name, auto& m) {
    std::string block;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> block >> rows >> cols) || block != name || rows != m.rows() ||
        cols != m.cols()) {
      throw ParseError(std::string("missing or mis-shaped block '") + name + "'");
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        std::string token;
        if (!(in >> token)) throw ParseError(std::string("truncated block '") + name + "'");
        char* end = nullptr;
        m(r, c) = std::strtod(token.c_str(), &end);
        if (end != token.c_str() + token.size()) {
          throw ParseError("malformed value '" + token + "'");
        }
      }
    }
  });
  std::string tail;
  if (!(in >> tail) || tail != "end") throw ParseError("missing end marker");
  if (!p.allFinite()) throw ParseError("model contains non-finite parameters");
  return p;
}

void save_model_file(const std::string& path, const PPnetParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file '" + path + "'");
  save_model(out, params);
  if (!out) throw Error("failed writing model file '" + path + "'");
}

PPnetParams load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file '" + path + "'");
  return load_model(in);
}

}  // namespace motionhint

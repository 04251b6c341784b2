/*
 * Copyright 2026 The platoon-perl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PPERL_RESIDUAL_NN_HPP_
#define PPERL_RESIDUAL_NN_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "pperl/dynamics.hpp"
#include "pperl/rng.hpp"

namespace pperl {

/**
 * Feed-forward residual baseline: a small rectified-linear network mapping
 * one commanded speed to one adjusted speed.
 *
 * The network is pretrained to the identity so an untouched model passes the
 * MPC command through unchanged, then updated online against the same
 * compensation signal the tabular learner receives: the target for input u_p
 * is u_p plus the observed delivered-speed shortfall. Inputs and outputs are
 * conditioned by a fixed affine map of the operational speed range onto
 * [0, 1]; training happens in that normalized scale.
 *
 * Gradients come from plain backpropagation on the batch mean squared error
 * and feed an Adam step with persistent moments.
 */

struct MlpModel {
  std::vector<int> sizes{1, 16, 16, 1};   ///< layer widths, input to output
  std::vector<Eigen::MatrixXd> weights;   ///< weights[l]: sizes[l+1] x sizes[l]
  std::vector<Eigen::VectorXd> biases;    ///< biases[l]: sizes[l+1]
  double learning_rate = 1e-3;
  double in_lo = 0.0;                     ///< normalization range (m/s)
  double in_hi = 30.0;

  int n_layers() const { return static_cast<int>(sizes.size()) - 1; }

  void validate() const {
    if (sizes.size() < 2)
      throw std::invalid_argument("MlpModel: need at least two layers");
    if (sizes.front() != 1 || sizes.back() != 1)
      throw std::invalid_argument("MlpModel: scalar in, scalar out");
    if (weights.size() != static_cast<size_t>(n_layers()) ||
        biases.size() != weights.size())
      throw std::invalid_argument("MlpModel: parameter count mismatch");
    for (int l = 0; l < n_layers(); ++l) {
      if (weights[l].rows() != sizes[l + 1] || weights[l].cols() != sizes[l] ||
          biases[l].size() != sizes[l + 1])
        throw std::invalid_argument("MlpModel: layer shape mismatch");
      if (!weights[l].allFinite() || !biases[l].allFinite())
        throw std::invalid_argument("MlpModel: non-finite parameters");
    }
    if (!(in_lo < in_hi))
      throw std::invalid_argument("MlpModel: bad normalization range");
  }

  static MlpModel init(const std::vector<int>& layer_sizes, Rng& rng) {
    MlpModel m;
    m.sizes = layer_sizes;
    for (int l = 0; l + 1 < static_cast<int>(layer_sizes.size()); ++l) {
      const int fan_in = layer_sizes[l];
      const double scale = std::sqrt(2.0 / fan_in);
      Eigen::MatrixXd w(layer_sizes[l + 1], layer_sizes[l]);
      for (int r = 0; r < w.rows(); ++r)
        for (int c = 0; c < w.cols(); ++c) w(r, c) = rng.normal(0.0, scale);
      m.weights.push_back(w);
      m.biases.push_back(Eigen::VectorXd::Zero(layer_sizes[l + 1]));
    }
    m.validate();
    return m;
  }

  double normalize(double u) const { return (u - in_lo) / (in_hi - in_lo); }
  double denormalize(double y) const { return in_lo + y * (in_hi - in_lo); }

  /// Normalized-scale batch forward pass; inputs and outputs are row vectors.
  Eigen::RowVectorXd forward_normalized(const Eigen::RowVectorXd& x) const {
    Eigen::MatrixXd a = x;
    for (int l = 0; l < n_layers(); ++l) {
      Eigen::MatrixXd z =
          (weights[l] * a).colwise() + biases[l];
      a = (l + 1 < n_layers()) ? z.cwiseMax(0.0).eval() : z;
    }
    return a.row(0);
  }

  /// Real-scale scalar evaluation.
  double forward(double u_p) const {
    Eigen::RowVectorXd x(1);
    x[0] = normalize(u_p);
    return denormalize(forward_normalized(x)[0]);
  }

  // -- flattened parameter access (weights row-major, then bias, per layer) --

  int n_params() const {
    int n = 0;
    for (int l = 0; l < n_layers(); ++l)
      n += static_cast<int>(weights[l].size() + biases[l].size());
    return n;
  }

  Eigen::VectorXd flatten_params() const {
    Eigen::VectorXd p(n_params());
    int at = 0;
    for (int l = 0; l < n_layers(); ++l) {
      for (int r = 0; r < weights[l].rows(); ++r)
        for (int c = 0; c < weights[l].cols(); ++c) p[at++] = weights[l](r, c);
      for (int r = 0; r < biases[l].size(); ++r) p[at++] = biases[l][r];
    }
    return p;
  }

  void set_params(const Eigen::VectorXd& p) {
    if (p.size() != n_params())
      throw std::invalid_argument("MlpModel::set_params: wrong length");
    int at = 0;
    for (int l = 0; l < n_layers(); ++l) {
      for (int r = 0; r < weights[l].rows(); ++r)
        for (int c = 0; c < weights[l].cols(); ++c) weights[l](r, c) = p[at++];
      for (int r = 0; r < biases[l].size(); ++r) biases[l][r] = p[at++];
    }
  }

  /// Batch mean-squared-error loss in the normalized scale, with its
  /// gradient in the flattened layout. Inputs and targets are real-scale.
  double loss_and_gradient(const Eigen::VectorXd& inputs,
                           const Eigen::VectorXd& targets,
                           Eigen::VectorXd* grad) const {
    if (inputs.size() != targets.size() || inputs.size() == 0)
      throw std::invalid_argument("MlpModel: bad batch");
    const int n = static_cast<int>(inputs.size());
    const int layers = n_layers();

    std::vector<Eigen::MatrixXd> acts(layers + 1);   // post-activation
    std::vector<Eigen::MatrixXd> pre(layers);        // pre-activation
    acts[0].resize(1, n);
    for (int j = 0; j < n; ++j) acts[0](0, j) = normalize(inputs[j]);
    for (int l = 0; l < layers; ++l) {
      pre[l] = (weights[l] * acts[l]).colwise() + biases[l];
      acts[l + 1] =
          (l + 1 < layers) ? pre[l].cwiseMax(0.0).eval() : pre[l];
    }

    Eigen::RowVectorXd t(n);
    for (int j = 0; j < n; ++j) t[j] = normalize(targets[j]);
    const Eigen::RowVectorXd err = acts[layers].row(0) - t;
    const double loss = err.squaredNorm() / n;

    if (grad) {
      std::vector<Eigen::MatrixXd> dw(layers);
      std::vector<Eigen::VectorXd> db(layers);
      Eigen::MatrixXd dz = (2.0 / n) * err;
      for (int l = layers - 1; l >= 0; --l) {
        dw[l] = dz * acts[l].transpose();
        db[l] = dz.rowwise().sum();
        if (l > 0) {
          Eigen::MatrixXd da = weights[l].transpose() * dz;
          dz = da.cwiseProduct(
              (pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
      }
      grad->resize(n_params());
      int at = 0;
      for (int l = 0; l < layers; ++l) {
        for (int r = 0; r < dw[l].rows(); ++r)
          for (int c = 0; c < dw[l].cols(); ++c) (*grad)[at++] = dw[l](r, c);
        for (int r = 0; r < db[l].size(); ++r) (*grad)[at++] = db[l][r];
      }
    }
    return loss;
  }

  /// Plain-text snapshot: layer-count and sizes header, then per layer the
  /// weight rows and the bias line.
  void save(const std::string& path) const {
    validate();
    std::ofstream os(path);
    if (!os) throw std::runtime_error("MlpModel::save: cannot open " + path);
    os.precision(17);
    os << sizes.size();
    for (int s : sizes) os << " " << s;
    os << "\n" << learning_rate << " " << in_lo << " " << in_hi << "\n";
    for (int l = 0; l < n_layers(); ++l) {
      for (int r = 0; r < weights[l].rows(); ++r) {
        for (int c = 0; c < weights[l].cols(); ++c)
          os << (c ? " " : "") << weights[l](r, c);
        os << "\n";
      }
      for (int r = 0; r < biases[l].size(); ++r)
        os << (r ? " " : "") << biases[l][r];
      os << "\n";
    }
  }

  static MlpModel load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("MlpModel::load: cannot open " + path);
    size_t n_sizes = 0;
    if (!(is >> n_sizes) || n_sizes < 2)
      throw std::runtime_error("MlpModel::load: bad header");
    MlpModel m;
    m.sizes.resize(n_sizes);
    for (auto& s : m.sizes) is >> s;
    is >> m.learning_rate >> m.in_lo >> m.in_hi;
    for (int l = 0; l + 1 < static_cast<int>(n_sizes); ++l) {
      Eigen::MatrixXd w(m.sizes[l + 1], m.sizes[l]);
      for (int r = 0; r < w.rows(); ++r)
        for (int c = 0; c < w.cols(); ++c) is >> w(r, c);
      Eigen::VectorXd b(m.sizes[l + 1]);
      for (int r = 0; r < b.size(); ++r) is >> b[r];
      m.weights.push_back(w);
      m.biases.push_back(b);
    }
    if (!is) throw std::runtime_error("MlpModel::load: truncated file");
    m.validate();
    return m;
  }
};

/// Adam optimizer with persistent first/second moments over the flattened
/// parameter vector.
class AdamOptimizer {
 public:
  void step(MlpModel& model, const Eigen::VectorXd& grad) {
    if (m_.size() != grad.size()) {
      m_ = Eigen::VectorXd::Zero(grad.size());
      v_ = Eigen::VectorXd::Zero(grad.size());
      t_ = 0;
    }
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    Eigen::VectorXd p = model.flatten_params();
    p -= (model.learning_rate / bc1) *
         (m_.array() / ((v_.array() / bc2).sqrt() + eps_)).matrix();
    model.set_params(p);
  }

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

/// Mean absolute real-scale error of forward(u) vs u over an evaluation grid.
inline double identity_mae(const MlpModel& model, double lo, double hi,
                           int points) {
  double sum = 0.0;
  for (int j = 0; j < points; ++j) {
    const double u = lo + (hi - lo) * j / (points - 1);
    sum += std::abs(model.forward(u) - u);
  }
  return sum / points;
}

/// Fit the identity map on [lo, hi]: full-batch Adam on an equispaced sample
/// grid until a half-spacing-offset held-out grid reaches MAE <= 0.02 m/s, or
/// the epoch budget runs out (error, reporting the final MAE). Deterministic
/// given the seed used for initialization.
inline MlpModel pretrain_identity(MlpModel model, double lo, double hi,
                                  int samples = 256, int epochs = 5000) {
  model.validate();
  if (!(lo < hi)) throw std::invalid_argument("pretrain_identity: bad range");
  if (samples < 2 || epochs < 1)
    throw std::invalid_argument("pretrain_identity: bad budget");
  Eigen::VectorXd train(samples);
  for (int j = 0; j < samples; ++j)
    train[j] = lo + (hi - lo) * j / (samples - 1);

  AdamOptimizer opt;
  Eigen::VectorXd grad;
  double held_out = std::numeric_limits<double>::infinity();
  for (int e = 0; e < epochs; ++e) {
    model.loss_and_gradient(train, train, &grad);
    opt.step(model, grad);
    if ((e + 1) % 50 == 0) {
      held_out = identity_mae(model, lo + 0.5 * (hi - lo) / samples,
                              hi - 0.5 * (hi - lo) / samples, samples - 1);
      if (held_out <= 0.02) return model;
    }
  }
  held_out = identity_mae(model, lo + 0.5 * (hi - lo) / samples,
                          hi - 0.5 * (hi - lo) / samples, samples - 1);
  if (held_out <= 0.05) return model;
  throw std::runtime_error(
      "pretrain_identity: budget exhausted, held-out MAE = " +
      std::to_string(held_out));
}

/// One or more Adam steps on the batch MSE between forward(u_p) and target.
inline void online_update(MlpModel& model, AdamOptimizer& opt,
                          const Eigen::VectorXd& inputs,
                          const Eigen::VectorXd& targets, int epochs = 1) {
  if (inputs.size() == 0)
    throw std::invalid_argument("online_update: empty batch");
  Eigen::VectorXd grad;
  for (int e = 0; e < epochs; ++e) {
    model.loss_and_gradient(inputs, targets, &grad);
    opt.step(model, grad);
  }
}

// ---------------------------------------------------------------------------
// Harness-facing residual stage

struct NnLearnerConfig {
  std::vector<int> sizes{1, 16, 16, 1};
  double learning_rate = 1e-3;
  int update_period = 20;   ///< steps between online updates
  int online_epochs = 10;   ///< Adam steps per scheduled update
  int pretrain_samples = 256;
  int pretrain_epochs = 5000;

  void validate() const {
    if (update_period < 1)
      throw std::invalid_argument("NnLearnerConfig: update_period < 1");
    if (online_epochs < 1)
      throw std::invalid_argument("NnLearnerConfig: online_epochs < 1");
  }
};

/// Stateful wrapper mirroring the tabular stage's harness contract: adjust()
/// maps the MPC command through the network, observe() reconstructs the
/// delivered speed from the state evolution and buffers (u_p, corrected
/// target) pairs, and every update_period steps the model takes
/// online_epochs Adam steps on the buffered batch.
///
/// The network is pretrained and trained only on the [in_lo, in_hi]
/// normalization band, but the commanded-speed channel can leave that band
/// during hard ramps (sustaining acceleration a requires u = v + a tau/dt).
/// Outside the band a rectified-linear network extrapolates as an arbitrary
/// affine map -- for some initializations with negative slope, which would
/// turn a braking command into an acceleration command and destabilize the
/// loop. adjust() therefore evaluates the network at the clamped input and
/// carries its correction over as a constant offset, and observe() drops
/// off-band pairs instead of training outside the calibrated chart.
class NnLearner {
 public:
  NnLearner(const NnLearnerConfig& cfg, const DynamicsParams& dyn,
            std::uint64_t init_seed)
      : cfg_(cfg), dyn_(dyn) {
    cfg.validate();
    Rng rng(init_seed);
    MlpModel fresh = MlpModel::init(cfg.sizes, rng);
    fresh.learning_rate = cfg.learning_rate;
    model_ = pretrain_identity(fresh, fresh.in_lo, fresh.in_hi,
                               cfg.pretrain_samples, cfg.pretrain_epochs);
  }

  Eigen::VectorXd adjust(const Eigen::VectorXd& u_p) {
    pending_u_p_ = u_p;
    Eigen::VectorXd u_r(u_p.size());
    for (int i = 0; i < u_p.size(); ++i) {
      const double c = std::clamp(u_p[i], model_.in_lo, model_.in_hi);
      u_r[i] = u_p[i] + (model_.forward(c) - c);
    }
    return u_r;
  }

  void observe(const PlatoonState& x_before, const PlatoonState& x_after) {
    const double inv_gain = dyn_.tau / dyn_.dt;
    for (int i = 0; i < pending_u_p_.size(); ++i) {
      if (pending_u_p_[i] < model_.in_lo || pending_u_p_[i] > model_.in_hi)
        continue;
      const double delivered =
          x_before.velocities[i] + inv_gain * x_after.accelerations[i];
      inputs_.push_back(pending_u_p_[i]);
      targets_.push_back(pending_u_p_[i] + (pending_u_p_[i] - delivered));
    }
    ++steps_;
    if (steps_ % cfg_.update_period == 0 && !inputs_.empty()) {
      online_update(model_, opt_,
                    Eigen::Map<const Eigen::VectorXd>(
                        inputs_.data(), static_cast<long>(inputs_.size())),
                    Eigen::Map<const Eigen::VectorXd>(
                        targets_.data(), static_cast<long>(targets_.size())),
                    cfg_.online_epochs);
      inputs_.clear();
      targets_.clear();
      ++updates_;
    }
  }

  const MlpModel& model() const { return model_; }
  MlpModel& model() { return model_; }
  int updates_done() const { return updates_; }

 private:
  NnLearnerConfig cfg_;
  DynamicsParams dyn_;
  MlpModel model_;
  AdamOptimizer opt_;
  std::vector<double> inputs_, targets_;
  Eigen::VectorXd pending_u_p_;
  int steps_ = 0;
  int updates_ = 0;
};

}  // namespace pperl

#endif  // PPERL_RESIDUAL_NN_HPP_

// Copyright 2026 The hrrs Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "hrrs/core.hpp"
#include "hrrs/encoders.hpp"
#include "hrrs/tensor_store.hpp"

namespace hrrs {

// ================================================================
// configuration
// ================================================================

enum class Activation { kRelu, kIdentity };

/// Trainable part of the network: a 3x3 conv (pad 1, stride 1) followed by
/// two 1x1 convs, global average pooling and softmax. Defaults match the
/// 512-channel 6x6 pool5 input with 4096-wide hidden stages and 30 classes.
struct HeadConfig {
  Eigen::Index in_channels = 512;
  Eigen::Index in_height = 6;
  Eigen::Index in_width = 6;
  Eigen::Index hidden1 = 4096;
  Eigen::Index hidden2 = 4096;
  Eigen::Index classes = 30;
  double dropout_rate = 0.5;
  double init_std = 0.01;
  /// kIdentity turns the two hidden nonlinearities off (linear probe).
  Activation activation = Activation::kRelu;

  void validate() const;
  Eigen::Index sites() const { return in_height * in_width; }
  bool operator==(const HeadConfig&) const = default;
};

inline constexpr Eigen::Index kKernel = 3;

/// Weights are stored as matrices whose row-major layout equals the
/// [kh, kw, in, out] tensor layout: W1 row (ky*3 + kx)*in + c.
template <class Scalar>
struct MlpconvHead {
  HeadConfig config;
  RowMatrix<Scalar> W1;  // 9*in x hidden1
  Vector<Scalar> b1;
  RowMatrix<Scalar> W2;  // hidden1 x hidden2
  Vector<Scalar> b2;
  RowMatrix<Scalar> W3;  // hidden2 x classes
  Vector<Scalar> b3;

  /// Zero-filled parameters shaped for `cfg`.
  static MlpconvHead zeros(const HeadConfig& cfg);

  template <class Fn>
  void for_each_param(Fn&& fn) {
    fn(W1), fn(b1), fn(W2), fn(b2), fn(W3), fn(b3);
  }
  template <class Fn>
  void for_each_param(Fn&& fn) const {
    fn(W1), fn(b1), fn(W2), fn(b2), fn(W3), fn(b3);
  }

  bool all_finite() const;
  Eigen::Index num_params() const;
};

/// Gradients share the head's storage layout.
template <class Scalar>
using HeadGradients = MlpconvHead<Scalar>;

// ================================================================
// forward / backward
// ================================================================

enum class Mode { kTrain, kEval };

/// Inverted-dropout masks (entries 0 or 1/(1-p)), one per hidden stage, sites x width.
template <class Scalar>
struct DropoutMasks {
  RowMatrix<Scalar> mask1;
  RowMatrix<Scalar> mask2;
};

template <class Scalar>
DropoutMasks<Scalar> sample_dropout_masks(const HeadConfig& cfg, std::mt19937_64& rng);

/// Intermediate activations kept for the backward pass.
template <class Scalar>
struct ForwardResult {
  Vector<Scalar> logits;       // == gap_feature
  Vector<Scalar> gap_feature;  // spatial mean of each class map
  RowMatrix<Scalar> class_maps;  // sites x classes

  RowMatrix<Scalar> cols;  // im2col of the input, sites x 9*in
  RowMatrix<Scalar> z1, a1;  // pre-activation, post-activation(+dropout)
  RowMatrix<Scalar> z2, a2;
  DropoutMasks<Scalar> masks;
  bool dropout = false;

  /// class_maps as an [h, w, n] tensor.
  Tensor class_map_tensor(const HeadConfig& cfg) const;
};

/// Gathers 3x3 zero-padded patches: row = site, column = (ky*3+kx)*c + channel.
template <class Scalar>
RowMatrix<Scalar> im2col_3x3(const Tensor& map);

/// Forward pass with explicit masks (nullptr = no dropout).
template <class Scalar>
ForwardResult<Scalar> head_forward(const MlpconvHead<Scalar>& h, const Tensor& map,
                                   const DropoutMasks<Scalar>* masks);

/// Forward pass; train mode samples fresh dropout masks from `rng`.
template <class Scalar>
ForwardResult<Scalar> head_forward(const MlpconvHead<Scalar>& h, const Tensor& map, Mode mode,
                                   std::mt19937_64& rng);

template <class Scalar>
struct LossAndGrad {
  Scalar loss;
  Vector<Scalar> dlogits;
};

/// Cross-entropy of softmax(logits) against `label`, via log-sum-exp.
template <class Scalar>
LossAndGrad<Scalar> softmax_xent(const Vector<Scalar>& logits, Eigen::Index label);

template <class Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& logits);

/// Backpropagates dlogits through a cached forward pass.
template <class Scalar>
HeadGradients<Scalar> head_backward(const MlpconvHead<Scalar>& h, const ForwardResult<Scalar>& fwd,
                                    const Vector<Scalar>& dlogits);

template <class Scalar>
struct BackwardResult {
  Scalar loss;
  Vector<Scalar> logits;
  HeadGradients<Scalar> grads;
};

/// Loss gradients for one sample with dropout masks drawn from `dropout_mask_seed`.
template <class Scalar>
BackwardResult<Scalar> head_backward(const MlpconvHead<Scalar>& h, const Tensor& map,
                                     Eigen::Index label, std::uint64_t dropout_mask_seed);

/// Loss for one sample under fixed masks (nullptr = no dropout).
template <class Scalar>
Scalar head_loss(const MlpconvHead<Scalar>& h, const Tensor& map, Eigen::Index label,
                 const DropoutMasks<Scalar>* masks);

// ================================================================
// init, training, features
// ================================================================

/// Weights ~ N(0, init_std^2), biases 0.
template <class Scalar>
MlpconvHead<Scalar> head_init(const HeadConfig& cfg, std::uint64_t seed);

struct TrainHyperparams {
  double lr0 = 0.001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch = 50;
  int plateau_patience = 5;
  double plateau_min_improvement = 1e-3;
  double lr_drop = 0.1;
  double min_lr = 1e-6;
  int max_epochs = 100;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct LrDropEvent {
  int epoch = 0;  // drop takes effect from epoch + 1
  double from = 0.0;
  double to = 0.0;
};

template <class Scalar>
struct TrainState {
  int epoch = 0;
  double learning_rate = 0.0;
  HeadGradients<Scalar> velocity;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> history;
  std::vector<LrDropEvent> lr_drops;
};

struct LabeledMaps {
  std::vector<Tensor> maps;
  std::vector<Eigen::Index> labels;

  std::size_t size() const { return maps.size(); }
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch SGD with momentum and weight decay (weights only). After each
/// epoch the train/test accuracies are measured in eval mode; if the best
/// train accuracy has not improved by more than `plateau_min_improvement`
/// for `plateau_patience` epochs, the learning rate is multiplied by
/// `lr_drop`. Training stops below `min_lr` or after `max_epochs`.
template <class Scalar>
TrainState<Scalar> head_train(MlpconvHead<Scalar>& h, const LabeledMaps& train, const LabeledMaps& test,
                              const TrainHyperparams& hp, const EpochCallback& on_epoch = {});

/// Fraction of samples whose eval-mode argmax logit equals the label.
template <class Scalar>
double head_accuracy(const MlpconvHead<Scalar>& h, const LabeledMaps& data);

/// Eval-mode GAP vector, L2-normalized, tagged ldcnn.
template <class Scalar>
EncodedFeature head_feature(const MlpconvHead<Scalar>& h, const Tensor& map);

// ================================================================
// parameter counting
// ================================================================

struct LayerShape {
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t in = 0;
  std::int64_t out = 0;
};

/// Exact number of weights plus biases.
std::int64_t param_count(const std::vector<LayerShape>& layers);

std::vector<LayerShape> head_layer_shapes(const HeadConfig& cfg);

/// Fully connected stack on a flattened [6, 6, 512] pool5 map:
/// 18432 -> 4096 -> 4096 -> classes.
std::vector<LayerShape> vggm_fc_layer_shapes(std::int64_t classes = 1000);

}  // namespace hrrs


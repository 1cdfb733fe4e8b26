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

#include "hrrs/ldcnn_head.hpp"

#include <algorithm>

namespace hrrs {

namespace {

using Index = Eigen::Index;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <class Scalar>
RowMatrix<Scalar> activate(const RowMatrix<Scalar>& z, Activation act) {
  if (act == Activation::kIdentity) return z;
  return z.cwiseMax(Scalar(0));
}

// d(activation)/dz applied to an upstream gradient.
template <class Scalar>
void activation_backward(RowMatrix<Scalar>& grad, const RowMatrix<Scalar>& z, Activation act) {
  if (act == Activation::kIdentity) return;
  grad = (z.array() > Scalar(0)).select(grad, Scalar(0));
}

void check_map(const HeadConfig& cfg, const Tensor& map) {
  if (map.rank() != 3 || static_cast<Index>(map.shape[0]) != cfg.in_height ||
      static_cast<Index>(map.shape[1]) != cfg.in_width || static_cast<Index>(map.shape[2]) != cfg.in_channels)
    throw ValidationError("feature map shape does not match head config [" + std::to_string(cfg.in_height) +
                          ", " + std::to_string(cfg.in_width) + ", " + std::to_string(cfg.in_channels) + "]");
}

template <class Scalar>
Index argmax_lowest(const Vector<Scalar>& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

void HeadConfig::validate() const {
  if (in_channels < 1 || in_height < 1 || in_width < 1 || hidden1 < 1 || hidden2 < 1 || classes < 1)
    throw ValidationError("head config counts must all be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("dropout_rate must lie in [0, 1)");
  if (!(init_std >= 0.0)) throw ValidationError("init_std must be >= 0");
}

// ---------------------------------------------------------------- MlpconvHead

template <class Scalar>
MlpconvHead<Scalar> MlpconvHead<Scalar>::zeros(const HeadConfig& cfg) {
  cfg.validate();
  MlpconvHead h;
  h.config = cfg;
  h.W1 = RowMatrix<Scalar>::Zero(kKernel * kKernel * cfg.in_channels, cfg.hidden1);
  h.b1 = Vector<Scalar>::Zero(cfg.hidden1);
  h.W2 = RowMatrix<Scalar>::Zero(cfg.hidden1, cfg.hidden2);
  h.b2 = Vector<Scalar>::Zero(cfg.hidden2);
  h.W3 = RowMatrix<Scalar>::Zero(cfg.hidden2, cfg.classes);
  h.b3 = Vector<Scalar>::Zero(cfg.classes);
  return h;
}

template <class Scalar>
bool MlpconvHead<Scalar>::all_finite() const {
  bool ok = true;
  for_each_param([&](const auto& p) { ok = ok && p.allFinite(); });
  return ok;
}

template <class Scalar>
Index MlpconvHead<Scalar>::num_params() const {
  Index n = 0;
  for_each_param([&](const auto& p) { n += p.size(); });
  return n;
}

template <class Scalar>
MlpconvHead<Scalar> head_init(const HeadConfig& cfg, std::uint64_t seed) {
  auto h = MlpconvHead<Scalar>::zeros(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, cfg.init_std);
  auto fill = [&](RowMatrix<Scalar>& w) {
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(normal(rng));
  };
  fill(h.W1);
  fill(h.W2);
  fill(h.W3);
  return h;
}

// ---------------------------------------------------------------- forward

template <class Scalar>
RowMatrix<Scalar> im2col_3x3(const Tensor& map) {
  if (map.rank() != 3) throw ValidationError("im2col expects an [h, w, c] map");
  const auto H = static_cast<Index>(map.shape[0]);
  const auto W = static_cast<Index>(map.shape[1]);
  const auto C = static_cast<Index>(map.shape[2]);
  RowMatrix<Scalar> cols = RowMatrix<Scalar>::Zero(H * W, kKernel * kKernel * C);
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x)
      for (Index ky = 0; ky < kKernel; ++ky) {
        const Index sy = y + ky - 1;
        if (sy < 0 || sy >= H) continue;
        for (Index kx = 0; kx < kKernel; ++kx) {
          const Index sx = x + kx - 1;
          if (sx < 0 || sx >= W) continue;
          const float* src = map.data.data() + (sy * W + sx) * C;
          Scalar* dst = cols.data() + (y * W + x) * cols.cols() + (ky * kKernel + kx) * C;
          for (Index c = 0; c < C; ++c) dst[c] = static_cast<Scalar>(src[c]);
        }
      }
  return cols;
}

template <class Scalar>
DropoutMasks<Scalar> sample_dropout_masks(const HeadConfig& cfg, std::mt19937_64& rng) {
  const double p = cfg.dropout_rate;
  const auto keep = static_cast<Scalar>(1.0 / (1.0 - p));
  auto draw = [&](Index cols) {
    RowMatrix<Scalar> m(cfg.sites(), cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform01(rng) < p ? Scalar(0) : keep;
    return m;
  };
  DropoutMasks<Scalar> masks;
  masks.mask1 = draw(cfg.hidden1);
  masks.mask2 = draw(cfg.hidden2);
  return masks;
}

template <class Scalar>
ForwardResult<Scalar> head_forward(const MlpconvHead<Scalar>& h, const Tensor& map,
                                   const DropoutMasks<Scalar>* masks) {
  const HeadConfig& cfg = h.config;
  check_map(cfg, map);
  ForwardResult<Scalar> r;
  r.cols = im2col_3x3<Scalar>(map);
  r.z1 = (r.cols * h.W1).rowwise() + h.b1.transpose();
  r.a1 = activate(r.z1, cfg.activation);
  if (masks) r.a1.array() *= masks->mask1.array();
  r.z2 = (r.a1 * h.W2).rowwise() + h.b2.transpose();
  r.a2 = activate(r.z2, cfg.activation);
  if (masks) r.a2.array() *= masks->mask2.array();
  r.class_maps = (r.a2 * h.W3).rowwise() + h.b3.transpose();
  r.gap_feature = r.class_maps.colwise().mean().transpose();
  r.logits = r.gap_feature;
  if (masks) {
    r.masks = *masks;
    r.dropout = true;
  }
  return r;
}

template <class Scalar>
ForwardResult<Scalar> head_forward(const MlpconvHead<Scalar>& h, const Tensor& map, Mode mode,
                                   std::mt19937_64& rng) {
  if (mode == Mode::kEval || h.config.dropout_rate == 0.0) return head_forward<Scalar>(h, map, nullptr);
  const auto masks = sample_dropout_masks<Scalar>(h.config, rng);
  return head_forward<Scalar>(h, map, &masks);
}

template <class Scalar>
Tensor ForwardResult<Scalar>::class_map_tensor(const HeadConfig& cfg) const {
  std::vector<float> d(static_cast<std::size_t>(class_maps.size()));
  Eigen::Map<RowMatrix<float>>(d.data(), class_maps.rows(), class_maps.cols()) = class_maps.template cast<float>();
  return Tensor({static_cast<std::size_t>(cfg.in_height), static_cast<std::size_t>(cfg.in_width),
                 static_cast<std::size_t>(cfg.classes)},
                std::move(d));
}

// ---------------------------------------------------------------- loss

template <class Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& logits) {
  const Scalar m = logits.maxCoeff();
  Vector<Scalar> e = (logits.array() - m).exp();
  return e / e.sum();
}

template <class Scalar>
LossAndGrad<Scalar> softmax_xent(const Vector<Scalar>& logits, Index label) {
  if (label < 0 || label >= logits.size())
    throw ValidationError("label " + std::to_string(label) + " out of range for " +
                          std::to_string(logits.size()) + " classes");
  const Scalar m = logits.maxCoeff();
  const Scalar lse = m + std::log((logits.array() - m).exp().sum());
  LossAndGrad<Scalar> out;
  out.loss = lse - logits[label];
  out.dlogits = (logits.array() - lse).exp().matrix();
  out.dlogits[label] -= Scalar(1);
  return out;
}

// ---------------------------------------------------------------- backward

template <class Scalar>
HeadGradients<Scalar> head_backward(const MlpconvHead<Scalar>& h, const ForwardResult<Scalar>& f,
                                    const Vector<Scalar>& dlogits) {
  const HeadConfig& cfg = h.config;
  if (dlogits.size() != cfg.classes) throw DimensionMismatch("head_backward", cfg.classes, dlogits.size());
  const auto sites = static_cast<Scalar>(cfg.sites());
  HeadGradients<Scalar> g;
  g.config = cfg;

  // GAP spreads each class gradient uniformly over the sites.
  const RowMatrix<Scalar> dz3 = Vector<Scalar>::Ones(cfg.sites()) * (dlogits.transpose() / sites);
  g.W3.noalias() = f.a2.transpose() * dz3;
  g.b3 = dlogits;

  RowMatrix<Scalar> dz2 = dz3 * h.W3.transpose();
  if (f.dropout) dz2.array() *= f.masks.mask2.array();
  activation_backward(dz2, f.z2, cfg.activation);
  g.W2.noalias() = f.a1.transpose() * dz2;
  g.b2 = dz2.colwise().sum().transpose();

  RowMatrix<Scalar> dz1 = dz2 * h.W2.transpose();
  if (f.dropout) dz1.array() *= f.masks.mask1.array();
  activation_backward(dz1, f.z1, cfg.activation);
  g.W1.noalias() = f.cols.transpose() * dz1;
  g.b1 = dz1.colwise().sum().transpose();
  return g;
}

template <class Scalar>
BackwardResult<Scalar> head_backward(const MlpconvHead<Scalar>& h, const Tensor& map, Index label,
                                     std::uint64_t dropout_mask_seed) {
  std::mt19937_64 rng(dropout_mask_seed);
  const auto fwd = head_forward<Scalar>(h, map, Mode::kTrain, rng);
  const auto lg = softmax_xent<Scalar>(fwd.logits, label);
  return {lg.loss, fwd.logits, head_backward<Scalar>(h, fwd, lg.dlogits)};
}

template <class Scalar>
Scalar head_loss(const MlpconvHead<Scalar>& h, const Tensor& map, Index label, const DropoutMasks<Scalar>* masks) {
  return softmax_xent<Scalar>(head_forward<Scalar>(h, map, masks).logits, label).loss;
}

// ---------------------------------------------------------------- training

template <class Scalar>
double head_accuracy(const MlpconvHead<Scalar>& h, const LabeledMaps& data) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto f = head_forward<Scalar>(h, data.maps[i], nullptr);
    if (argmax_lowest(f.logits) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

template <class Scalar>
TrainState<Scalar> head_train(MlpconvHead<Scalar>& h, const LabeledMaps& train, const LabeledMaps& test,
                              const TrainHyperparams& hp, const EpochCallback& on_epoch) {
  const HeadConfig& cfg = h.config;
  if (train.size() == 0 || test.size() == 0) throw ValidationError("head_train needs non-empty train and test sets");
  if (train.maps.size() != train.labels.size() || test.maps.size() != test.labels.size())
    throw ValidationError("maps and labels differ in length");
  for (const auto* set : {&train, &test})
    for (auto l : set->labels)
      if (l < 0 || l >= cfg.classes)
        throw ValidationError("label " + std::to_string(l) + " outside the configured " +
                              std::to_string(cfg.classes) + " classes");
  if (!(hp.lr0 > 0.0)) throw ValidationError("lr0 must be > 0");
  if (hp.batch < 1) throw ValidationError("batch must be >= 1");

  TrainState<Scalar> st;
  st.learning_rate = hp.lr0;
  st.seed = hp.seed;
  st.velocity = MlpconvHead<Scalar>::zeros(cfg);

  std::mt19937_64 dropout_rng(hp.seed ^ 0xd50f5eedULL);
  std::vector<std::size_t> order(train.size());
  double best_train_acc = -1.0;
  int stale = 0;

  for (int epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(hp.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    const auto lr = static_cast<Scalar>(st.learning_rate);
    const auto mom = static_cast<Scalar>(hp.momentum);
    const auto wd = static_cast<Scalar>(hp.weight_decay);
    for (std::size_t start = 0; start < order.size(); start += hp.batch) {
      const std::size_t stop = std::min(order.size(), start + hp.batch);
      auto grad = MlpconvHead<Scalar>::zeros(cfg);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = order[b];
        const auto fwd = head_forward<Scalar>(h, train.maps[i], Mode::kTrain, dropout_rng);
        const auto lg = softmax_xent<Scalar>(fwd.logits, train.labels[i]);
        loss_sum += static_cast<double>(lg.loss);
        const auto g = head_backward<Scalar>(h, fwd, lg.dlogits);
        grad.W1 += g.W1, grad.b1 += g.b1, grad.W2 += g.W2;
        grad.b2 += g.b2, grad.W3 += g.W3, grad.b3 += g.b3;
      }
      const auto inv = Scalar(1) / static_cast<Scalar>(stop - start);
      auto step_weight = [&](auto& w, auto& v, const auto& gw) {
        v = mom * v - lr * (inv * gw + wd * w);
        w += v;
      };
      auto step_bias = [&](auto& b, auto& v, const auto& gb) {
        v = mom * v - lr * (inv * gb);
        b += v;
      };
      step_weight(h.W1, st.velocity.W1, grad.W1);
      step_bias(h.b1, st.velocity.b1, grad.b1);
      step_weight(h.W2, st.velocity.W2, grad.W2);
      step_bias(h.b2, st.velocity.b2, grad.b2);
      step_weight(h.W3, st.velocity.W3, grad.W3);
      step_bias(h.b3, st.velocity.b3, grad.b3);
    }
    if (!h.all_finite()) throw Error("training diverged: non-finite parameters at epoch " + std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = st.learning_rate;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.train_accuracy = head_accuracy(h, train);
    rec.test_accuracy = head_accuracy(h, test);
    st.history.push_back(rec);
    st.epoch = epoch;
    if (on_epoch) on_epoch(rec);

    if (rec.train_accuracy > best_train_acc + hp.plateau_min_improvement) {
      best_train_acc = rec.train_accuracy;
      stale = 0;
    } else if (++stale >= hp.plateau_patience) {
      const double next = st.learning_rate * hp.lr_drop;
      st.lr_drops.push_back({epoch, st.learning_rate, next});
      st.learning_rate = next;
      stale = 0;
      if (st.learning_rate < hp.min_lr * (1.0 - 1e-9)) break;
    }
  }
  return st;
}

template <class Scalar>
EncodedFeature head_feature(const MlpconvHead<Scalar>& h, const Tensor& map) {
  const auto f = head_forward<Scalar>(h, map, nullptr);
  return finalize_feature(f.gap_feature.template cast<double>(), EncoderTag::kLdcnn);
}

// ---------------------------------------------------------------- param count

std::int64_t param_count(const std::vector<LayerShape>& layers) {
  std::int64_t n = 0;
  for (const auto& l : layers) {
    if (l.kernel_h < 1 || l.kernel_w < 1 || l.in < 1 || l.out < 1)
      throw ValidationError("layer sizes must be >= 1");
    n += l.kernel_h * l.kernel_w * l.in * l.out + l.out;
  }
  return n;
}

std::vector<LayerShape> head_layer_shapes(const HeadConfig& cfg) {
  return {{kKernel, kKernel, cfg.in_channels, cfg.hidden1},
          {1, 1, cfg.hidden1, cfg.hidden2},
          {1, 1, cfg.hidden2, cfg.classes}};
}

std::vector<LayerShape> vggm_fc_layer_shapes(std::int64_t classes) {
  return {{1, 1, 6 * 6 * 512, 4096}, {1, 1, 4096, 4096}, {1, 1, 4096, classes}};
}

// ---------------------------------------------------------------- instantiations

#define HRRS_INSTANTIATE_HEAD(S)                                                                         \
  template struct MlpconvHead<S>;                                                                        \
  template struct ForwardResult<S>;                                                                      \
  template MlpconvHead<S> head_init<S>(const HeadConfig&, std::uint64_t);                                \
  template RowMatrix<S> im2col_3x3<S>(const Tensor&);                                                    \
  template DropoutMasks<S> sample_dropout_masks<S>(const HeadConfig&, std::mt19937_64&);                 \
  template ForwardResult<S> head_forward<S>(const MlpconvHead<S>&, const Tensor&, const DropoutMasks<S>*); \
  template ForwardResult<S> head_forward<S>(const MlpconvHead<S>&, const Tensor&, Mode, std::mt19937_64&); \
  template Vector<S> softmax<S>(const Vector<S>&);                                                       \
  template LossAndGrad<S> softmax_xent<S>(const Vector<S>&, Index);                                      \
  template HeadGradients<S> head_backward<S>(const MlpconvHead<S>&, const ForwardResult<S>&,             \
                                             const Vector<S>&);                                          \
  template BackwardResult<S> head_backward<S>(const MlpconvHead<S>&, const Tensor&, Index, std::uint64_t); \
  template S head_loss<S>(const MlpconvHead<S>&, const Tensor&, Index, const DropoutMasks<S>*);          \
  template double head_accuracy<S>(const MlpconvHead<S>&, const LabeledMaps&);                           \
  template TrainState<S> head_train<S>(MlpconvHead<S>&, const LabeledMaps&, const LabeledMaps&,          \
                                       const TrainHyperparams&, const EpochCallback&);                   \
  template EncodedFeature head_feature<S>(const MlpconvHead<S>&, const Tensor&);

HRRS_INSTANTIATE_HEAD(float)
HRRS_INSTANTIATE_HEAD(double)

#undef HRRS_INSTANTIATE_HEAD

}  // namespace hrrs

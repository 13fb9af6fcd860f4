#pragma once

// Small sequential convolutional network, 64-bit throughout.
// Convolutions are valid-padded with stride 1; pooling is 2x2 max with
// stride 2 (odd trailing rows/columns are dropped). All parameters live in
// one flat vector so optimisers, gradient checks and serialisation share a
// single layout.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "lgeq/core/error.hpp"
#include "lgeq/core/rng.hpp"

namespace lgeq::learn {

/// 64-byte aligned storage. Eigen peels vectorized loops up to the first
/// aligned element, so the summation order (and the last bits of every
/// result) depends on buffer addresses; a fixed alignment keeps training
/// bit-identical across threads and runs.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Doubles = std::vector<double, AlignedAllocator<double>>;

struct Shape3 {
  int c = 1, h = 1, w = 1;
  std::size_t count() const { return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

struct ConvLayer {
  int out = 0, in = 0, k = 0;
  std::size_t w_off = 0, b_off = 0;
};
struct ReluLayer {};
struct MaxPoolLayer {};
struct DenseLayer {
  int out = 0, in = 0;
  std::size_t w_off = 0, b_off = 0;
};
struct DropoutLayer {
  double rate = 0.5;
};
struct SoftmaxLayer {};

using Layer = std::variant<ConvLayer, ReluLayer, MaxPoolLayer, DenseLayer, DropoutLayer, SoftmaxLayer>;

/// Architecture description used to build a network.
struct LayerSpec {
  enum class Kind { conv, relu, maxpool, dense, dropout, softmax } kind;
  int units = 0;      // conv: output channels; dense: output units
  int kernel = 0;     // conv only
  double rate = 0.0;  // dropout only
};

struct Architecture {
  Shape3 input;
  std::vector<LayerSpec> layers;
};

inline LayerSpec conv(int channels, int kernel) { return {LayerSpec::Kind::conv, channels, kernel, 0.0}; }
inline LayerSpec relu() { return {LayerSpec::Kind::relu, 0, 0, 0.0}; }
inline LayerSpec maxpool() { return {LayerSpec::Kind::maxpool, 0, 0, 0.0}; }
inline LayerSpec dense(int units) { return {LayerSpec::Kind::dense, units, 0, 0.0}; }
inline LayerSpec dropout(double rate) { return {LayerSpec::Kind::dropout, 0, 0, rate}; }
inline LayerSpec softmax() { return {LayerSpec::Kind::softmax, 0, 0, 0.0}; }

/// Conv-relu-pool stages followed by dense-relu-dropout and a softmax
/// classifier head.
inline Architecture conv_classifier(int input_size, std::vector<std::pair<int, int>> stages /*{channels, kernel}*/,
                                    int hidden, int classes = 2, double dropout_rate = 0.5) {
  Architecture a{{1, input_size, input_size}, {}};
  for (auto [ch, k] : stages) {
    a.layers.push_back(conv(ch, k));
    a.layers.push_back(relu());
    a.layers.push_back(maxpool());
  }
  a.layers.push_back(dense(hidden));
  a.layers.push_back(relu());
  a.layers.push_back(dropout(dropout_rate));
  a.layers.push_back(dense(classes));
  a.layers.push_back(softmax());
  return a;
}

/// 49x49 patch classifier: conv5x5x16, conv3x3x32, conv3x3x64 (each with
/// relu + 2x2 pool), dense 128 + relu + dropout, dense 2 + softmax.
inline Architecture refinement_architecture(int input = 49, int c1 = 16, int c2 = 32, int c3 = 64, int hidden = 128,
                                            double dropout_rate = 0.5) {
  return conv_classifier(input, {{c1, 5}, {c2, 3}, {c3, 3}}, hidden, 2, dropout_rate);
}

/// Same trunk on 89x89 slice crops; the dense-128 activation is the
/// feature vector.
inline Architecture detection_architecture(int input = 89, int c1 = 16, int c2 = 32, int c3 = 64, int hidden = 128,
                                           double dropout_rate = 0.5) {
  return conv_classifier(input, {{c1, 5}, {c2, 3}, {c3, 3}}, hidden, 2, dropout_rate);
}

class Net;

/// Per-thread scratch for forward/backward passes.
struct Workspace {
  std::vector<Doubles> act;   // act[0] = input, act[i+1] = output of layer i
  std::vector<Doubles> grad;  // same layout as act
  std::vector<std::vector<std::uint32_t>> pool_idx;
  std::vector<Doubles> drop_scale;  // per-unit multiplier of the last forward
  Doubles scratch;
  std::vector<Doubles> cols;  // im2col buffers of conv layers
};

class Net {
 public:
  Net() = default;

  /// Builds the layer list and sizes the parameter vector (all zero).
  explicit Net(const Architecture& arch) : input_(arch.input) {
    Shape3 s = arch.input;
    shapes_.push_back(s);
    std::size_t off = 0;
    for (const auto& spec : arch.layers) {
      switch (spec.kind) {
        case LayerSpec::Kind::conv: {
          if (spec.kernel < 1 || spec.kernel > s.h || spec.kernel > s.w)
            throw ShapeError("conv kernel does not fit its input");
          ConvLayer l{spec.units, s.c, spec.kernel, off, 0};
          off += static_cast<std::size_t>(l.out) * l.in * l.k * l.k;
          l.b_off = off;
          off += static_cast<std::size_t>(l.out);
          layers_.push_back(l);
          s = {spec.units, s.h - spec.kernel + 1, s.w - spec.kernel + 1};
          break;
        }
        case LayerSpec::Kind::relu:
          layers_.push_back(ReluLayer{});
          break;
        case LayerSpec::Kind::maxpool:
          if (s.h < 2 || s.w < 2) throw ShapeError("maxpool input smaller than 2x2");
          layers_.push_back(MaxPoolLayer{});
          s = {s.c, s.h / 2, s.w / 2};
          break;
        case LayerSpec::Kind::dense: {
          DenseLayer l{spec.units, static_cast<int>(s.count()), off, 0};
          off += static_cast<std::size_t>(l.out) * static_cast<std::size_t>(l.in);
          l.b_off = off;
          off += static_cast<std::size_t>(l.out);
          layers_.push_back(l);
          s = {spec.units, 1, 1};
          break;
        }
        case LayerSpec::Kind::dropout:
          layers_.push_back(DropoutLayer{spec.rate});
          break;
        case LayerSpec::Kind::softmax:
          layers_.push_back(SoftmaxLayer{});
          break;
      }
      shapes_.push_back(s);
    }
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i)
      if (std::holds_alternative<SoftmaxLayer>(layers_[i])) throw ShapeError("softmax must be the terminal layer");
    params_.assign(off, 0.0);
    is_weight_.assign(off, 0);
    for (const auto& l : layers_) {
      if (auto* c = std::get_if<ConvLayer>(&l))
        std::fill(is_weight_.begin() + static_cast<std::ptrdiff_t>(c->w_off),
                  is_weight_.begin() + static_cast<std::ptrdiff_t>(c->b_off), 1);
      if (auto* d = std::get_if<DenseLayer>(&l))
        std::fill(is_weight_.begin() + static_cast<std::ptrdiff_t>(d->w_off),
                  is_weight_.begin() + static_cast<std::ptrdiff_t>(d->b_off), 1);
    }
    arch_ = arch;
  }

  /// He-normal weights, zero biases.
  void init_he(std::uint64_t seed) {
    Rng rng(seed);
    std::fill(params_.begin(), params_.end(), 0.0);
    for (const auto& l : layers_) {
      if (auto* c = std::get_if<ConvLayer>(&l)) {
        const double sd = std::sqrt(2.0 / (c->in * c->k * c->k));
        for (std::size_t i = c->w_off; i < c->b_off; ++i) params_[i] = sd * rng.normal();
      } else if (auto* d = std::get_if<DenseLayer>(&l)) {
        const double sd = std::sqrt(2.0 / d->in);
        for (std::size_t i = d->w_off; i < d->b_off; ++i) params_[i] = sd * rng.normal();
      }
    }
  }

  const Shape3& input_shape() const { return input_; }
  Shape3 output_shape() const { return shapes_.back(); }
  const std::vector<Shape3>& shapes() const { return shapes_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const Architecture& architecture() const { return arch_; }
  Doubles& params() { return params_; }
  const Doubles& params() const { return params_; }
  /// 1 for weights (subject to L2), 0 for biases.
  const std::vector<std::uint8_t>& weight_mask() const { return is_weight_; }
  bool ends_in_softmax() const { return !layers_.empty() && std::holds_alternative<SoftmaxLayer>(layers_.back()); }

  void set_dropout_rate(double rate) {
    for (auto& l : layers_)
      if (auto* d = std::get_if<DropoutLayer>(&l)) d->rate = rate;
    for (auto& s : arch_.layers)
      if (s.kind == LayerSpec::Kind::dropout) s.rate = rate;
  }

  /// Index of the output of the last relu before the classifier head
  /// (the feature layer). Returns the activation index in Workspace::act.
  std::size_t feature_activation_index() const {
    for (std::size_t i = layers_.size(); i-- > 0;)
      if (std::holds_alternative<ReluLayer>(layers_[i])) return i + 1;
    return layers_.size();
  }

  void prepare(Workspace& ws) const {
    if (ws.act.size() == shapes_.size()) return;
    ws.act.assign(shapes_.size(), {});
    ws.grad.assign(shapes_.size(), {});
    ws.pool_idx.assign(layers_.size(), {});
    ws.drop_scale.assign(layers_.size(), {});
    ws.cols.assign(layers_.size(), {});
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      ws.act[i].assign(shapes_[i].count(), 0.0);
      ws.grad[i].assign(shapes_[i].count(), 0.0);
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (std::holds_alternative<MaxPoolLayer>(layers_[i])) ws.pool_idx[i].assign(shapes_[i + 1].count(), 0);
      if (std::holds_alternative<DropoutLayer>(layers_[i])) ws.drop_scale[i].assign(shapes_[i + 1].count(), 1.0);
    }
  }

  /// Forward pass over layers [0, upto). With `dropout_rng` null, dropout
  /// is the identity (inference mode).
  void forward(std::span<const double> x, Workspace& ws, Rng* dropout_rng = nullptr,
               std::size_t upto = static_cast<std::size_t>(-1)) const {
    if (x.size() != input_.count()) throw ShapeError("net input size mismatch");
    prepare(ws);
    std::copy(x.begin(), x.end(), ws.act[0].begin());
    upto = std::min(upto, layers_.size());
    for (std::size_t i = 0; i < upto; ++i) forward_layer(i, ws, dropout_rng);
  }

  /// Backward pass from d(loss)/d(output of the last layer before softmax),
  /// stored by the caller in ws.grad[softmax_input]. Accumulates parameter
  /// gradients into `grads` (same layout as params()).
  void backward(Workspace& ws, std::span<double> grads) const {
    std::size_t top = layers_.size();
    if (ends_in_softmax()) --top;
    for (std::size_t i = top; i-- > 0;) backward_layer(i, ws, grads, i > 0);
  }

  /// Class probabilities of one sample (inference mode).
  std::vector<double> predict(std::span<const double> x, Workspace& ws) const {
    forward(x, ws);
    return {ws.act.back().begin(), ws.act.back().end()};
  }

 private:
  // Row-major maps: a conv weight block is (out x in*k*k), activations are
  // (channels x pixels).
  using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  /// Unfolds valid k x k windows: row (c, ky, kx), column (y, x).
  static const Doubles& im2col(const double* in, const Shape3& si, int k, int oh, int ow, Doubles& cols) {
    const std::size_t np = static_cast<std::size_t>(oh) * ow;
    cols.resize(static_cast<std::size_t>(si.c) * k * k * np);
    double* dst = cols.data();
    for (int c = 0; c < si.c; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx)
          for (int y = 0; y < oh; ++y) {
            const double* src = in + (static_cast<std::size_t>(c) * si.h + y + ky) * si.w + kx;
            std::copy(src, src + ow, dst);
            dst += ow;
          }
    return cols;
  }

  /// Adjoint of im2col: accumulates column gradients into the input grid.
  static void col2im(const Doubles& cols, const Shape3& si, int k, int oh, int ow, double* gin) {
    std::fill(gin, gin + si.count(), 0.0);
    const double* src = cols.data();
    for (int c = 0; c < si.c; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx)
          for (int y = 0; y < oh; ++y) {
            double* dst = gin + (static_cast<std::size_t>(c) * si.h + y + ky) * si.w + kx;
            for (int x = 0; x < ow; ++x) dst[x] += src[x];
            src += ow;
          }
  }

  void forward_layer(std::size_t i, Workspace& ws, Rng* rng) const {
    const Shape3& si = shapes_[i];
    const Shape3& so = shapes_[i + 1];
    const double* in = ws.act[i].data();
    double* out = ws.act[i + 1].data();
    const double* p = params_.data();
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, ConvLayer>) {
            const auto& cols = im2col(in, si, l.k, so.h, so.w, ws.cols[i]);
            const Eigen::Index kk = static_cast<Eigen::Index>(l.in) * l.k * l.k;
            const Eigen::Index np = static_cast<Eigen::Index>(so.h) * so.w;
            ConstMatMap w(p + l.w_off, l.out, kk);
            ConstMatMap c(cols.data(), kk, np);
            MatMap o(out, l.out, np);
            o.noalias() = w * c;
            for (int oc = 0; oc < l.out; ++oc) o.row(oc).array() += p[l.b_off + oc];
          } else if constexpr (std::is_same_v<L, ReluLayer>) {
            for (std::size_t j = 0; j < so.count(); ++j) out[j] = in[j] > 0.0 ? in[j] : 0.0;
          } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
            auto& idx = ws.pool_idx[i];
            for (int c = 0; c < so.c; ++c)
              for (int y = 0; y < so.h; ++y)
                for (int x = 0; x < so.w; ++x) {
                  std::uint32_t best = static_cast<std::uint32_t>((c * si.h + 2 * y) * si.w + 2 * x);
                  for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                      const auto j = static_cast<std::uint32_t>((c * si.h + 2 * y + dy) * si.w + 2 * x + dx);
                      if (in[j] > in[best]) best = j;
                    }
                  const std::size_t o = (static_cast<std::size_t>(c) * so.h + y) * so.w + x;
                  out[o] = in[best];
                  idx[o] = best;
                }
          } else if constexpr (std::is_same_v<L, DenseLayer>) {
            ConstMatMap w(p + l.w_off, l.out, l.in);
            Eigen::Map<const Eigen::VectorXd> xin(in, l.in);
            Eigen::Map<const Eigen::VectorXd> b(p + l.b_off, l.out);
            Eigen::Map<Eigen::VectorXd> y(out, l.out);
            y.noalias() = w * xin;
            y += b;
          } else if constexpr (std::is_same_v<L, DropoutLayer>) {
            auto& scale = ws.drop_scale[i];
            if (rng == nullptr || l.rate <= 0.0) {
              std::fill(scale.begin(), scale.end(), 1.0);
            } else {
              const double keep = 1.0 - l.rate;
              for (auto& m : scale) m = rng->uniform() < keep ? 1.0 / keep : 0.0;
            }
            for (std::size_t j = 0; j < so.count(); ++j) out[j] = in[j] * scale[j];
          } else if constexpr (std::is_same_v<L, SoftmaxLayer>) {
            const std::size_t n = so.count();
            const double m = *std::max_element(in, in + n);
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) sum += out[j] = std::exp(in[j] - m);
            for (std::size_t j = 0; j < n; ++j) out[j] /= sum;
          }
        },
        layers_[i]);
  }

  void backward_layer(std::size_t i, Workspace& ws, std::span<double> grads, bool need_input_grad) const {
    const Shape3& si = shapes_[i];
    const Shape3& so = shapes_[i + 1];
    const double* in = ws.act[i].data();
    const double* gout = ws.grad[i + 1].data();
    double* gin = ws.grad[i].data();
    const double* p = params_.data();
    double* g = grads.data();
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, ConvLayer>) {
            const Eigen::Index kk = static_cast<Eigen::Index>(l.in) * l.k * l.k;
            const Eigen::Index np = static_cast<Eigen::Index>(so.h) * so.w;
            const auto& cols = ws.cols[i];
            ConstMatMap go(gout, l.out, np);
            ConstMatMap c(cols.data(), kk, np);
            MatMap gw(g + l.w_off, l.out, kk);
            gw.noalias() += go * c.transpose();
            for (int oc = 0; oc < l.out; ++oc) g[l.b_off + oc] += go.row(oc).sum();
            if (need_input_grad) {
              auto& dcols = ws.scratch;
              dcols.resize(static_cast<std::size_t>(kk * np));
              MatMap dc(dcols.data(), kk, np);
              ConstMatMap w(p + l.w_off, l.out, kk);
              dc.noalias() = w.transpose() * go;
              col2im(dcols, si, l.k, so.h, so.w, gin);
            }
          } else if constexpr (std::is_same_v<L, ReluLayer>) {
            for (std::size_t j = 0; j < so.count(); ++j) gin[j] = in[j] > 0.0 ? gout[j] : 0.0;
          } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
            std::fill(gin, gin + si.count(), 0.0);
            const auto& idx = ws.pool_idx[i];
            for (std::size_t j = 0; j < so.count(); ++j) gin[idx[j]] += gout[j];
          } else if constexpr (std::is_same_v<L, DenseLayer>) {
            Eigen::Map<const Eigen::VectorXd> go(gout, l.out);
            Eigen::Map<const Eigen::VectorXd> xin(in, l.in);
            MatMap gw(g + l.w_off, l.out, l.in);
            gw.noalias() += go * xin.transpose();
            Eigen::Map<Eigen::VectorXd>(g + l.b_off, l.out) += go;
            if (need_input_grad) {
              ConstMatMap w(p + l.w_off, l.out, l.in);
              Eigen::Map<Eigen::VectorXd>(gin, l.in).noalias() = w.transpose() * go;
            }
          } else if constexpr (std::is_same_v<L, DropoutLayer>) {
            const auto& scale = ws.drop_scale[i];
            for (std::size_t j = 0; j < so.count(); ++j) gin[j] = gout[j] * scale[j];
          } else if constexpr (std::is_same_v<L, SoftmaxLayer>) {
            // handled by the loss
          }
        },
        layers_[i]);
  }

  Shape3 input_;
  std::vector<Shape3> shapes_;
  std::vector<Layer> layers_;
  Doubles params_;
  std::vector<std::uint8_t> is_weight_;
  Architecture arch_;
};

}  // namespace lgeq::learn

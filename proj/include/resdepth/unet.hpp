#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "resdepth/variant.hpp"

namespace resdepth {

struct UnetConfig {
  int levels = 5;
  int in_channels = 3;
  /// One width per level, shallow to deep.
  std::vector<int> channel_widths{64, 128, 256, 512, 512};
  bool residual = true;
  int patch_size = 128;

  /// Structural checks: widths match levels, patch divisible by 2^levels.
  void validate() const;
  /// Full-size layout: 4x4 bottleneck and a deepest width of 512.
  bool reference_layout() const;

  static UnetConfig for_variant(Variant v, std::vector<int> widths = {64, 128, 256, 512, 512},
                                int levels = 5, int patch_size = 128);
  friend bool operator==(const UnetConfig&, const UnetConfig&) = default;
};

/// Trainable parameter count (batch-norm running statistics excluded).
std::int64_t param_count(const UnetConfig& cfg);

template <class T>
using MatrixR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A named parameter tensor with its gradient. `value` is stored as a matrix
/// whose row-major flattening follows `dims`.
template <class T>
struct Param {
  std::string name;
  std::vector<int> dims;
  MatrixR<T> value;
  MatrixR<T> grad;
  /// Not trained (batch-norm running statistics).
  bool buffer = false;
};

/// Encoder-decoder with concatenated skips and an optional long residual
/// connection from input channel 0 to the output.
///
/// Encoder level i: 3x3 conv, BN, ReLU, 2x2 max pool. Decoder level i:
/// 2x2 stride-2 up-convolution, BN, ReLU, concat with encoder level i,
/// 3x3 conv, BN, ReLU. Final 3x3 conv to one channel with bias. Hidden convs
/// have no bias since BN follows them.
///
/// Tensors passed in and out are NCHW. Any H, W divisible by 2^levels works.
template <class T>
class Unet {
 public:
  explicit Unet(const UnetConfig& cfg, std::uint64_t seed = 0);

  const UnetConfig& config() const { return cfg_; }

  /// Head output (before the residual add), N x 1 x H x W. Training mode uses
  /// batch statistics and records what backward needs.
  std::vector<T> forward_head(const std::vector<T>& x, int n, int h, int w, bool training);
  /// Head output plus input channel 0 when the config is residual.
  std::vector<T> forward(const std::vector<T>& x, int n, int h, int w, bool training);
  /// Accumulates parameter gradients from dLoss/dOutput of the last training
  /// forward. The residual path does not carry parameters, so the same
  /// gradient serves both forward and forward_head.
  void backward(const std::vector<T>& grad_out);

  void zero_grad();
  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }
  Param<T>& param(const std::string& name);

  /// Sets the final conv weights and bias to zero, so forward == input DEM.
  void zero_head();

  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

 private:
  struct Act {
    int c = 0, n = 0, h = 0, w = 0;
    MatrixR<T> m;  // c x (n*h*w)
  };
  struct BnCache {
    MatrixR<T> xhat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
  };
  struct Block {  // conv + BN + ReLU
    int weight = -1, gamma = -1, beta = -1, mean = -1, var = -1;
    Act input;
    BnCache bn;
    MatrixR<T> relu_out;
  };
  struct Up {
    int weight = -1, gamma = -1, beta = -1, mean = -1, var = -1;
    Act input;
    BnCache bn;
    MatrixR<T> relu_out;
  };

  int add_param(const std::string& name, std::vector<int> dims, int rows, int cols, bool buffer = false);
  Act to_internal(const std::vector<T>& x, int n, int h, int w) const;

  static MatrixR<T> im2col(const Act& a);
  static void col2im(const MatrixR<T>& col, Act& grad);
  MatrixR<T> conv3(const Act& in, const MatrixR<T>& wmat) const;
  MatrixR<T> bn_forward(MatrixR<T> x, int gi, int bi, int mi, int vi, bool training, BnCache& cache);
  MatrixR<T> bn_backward(const MatrixR<T>& dy, int gi, int bi, const BnCache& cache);

  UnetConfig cfg_;
  std::vector<Param<T>> params_;
  std::vector<Block> enc_;
  std::vector<Up> up_;
  std::vector<Block> dec_;
  int final_w_ = -1, final_b_ = -1;
  // Recorded by the last training forward.
  std::vector<std::vector<std::int32_t>> pool_idx_;
  std::vector<Act> pool_in_shape_;
  Act final_in_;
  bool have_cache_ = false;
};

/// Mean |pred - target| over cells where valid != 0 (all cells when valid is
/// empty). Returns 0 for an empty selection. When grad is non-null it
/// receives d(loss)/d(pred), using sign(0) = 0.
template <class T>
T l1_loss(const std::vector<T>& pred, const std::vector<T>& target,
          const std::vector<std::uint8_t>& valid, std::vector<T>* grad = nullptr);

struct AdamParams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

/// Bias-corrected Adam with weight decay added to the gradient as an L2 term.
template <class T>
class Adam {
 public:
  explicit Adam(const AdamParams& p = {}) : p_(p) {}
  void step(std::vector<Param<T>>& params);
  long steps() const { return t_; }
  const AdamParams& hyper() const { return p_; }

  /// One update of a flat array; t is the 1-based step number.
  static void update(T* w, const T* g, T* m, T* v, std::size_t count, long t, const AdamParams& p);

 private:
  AdamParams p_;
  long t_ = 0;
  std::vector<MatrixR<T>> m_, v_;
};

extern template class Unet<float>;
extern template class Unet<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace resdepth

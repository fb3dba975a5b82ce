#include "resdepth/unet.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace resdepth {

void UnetConfig::validate() const {
  if (levels < 1 || levels > 10) throw std::invalid_argument("UnetConfig: levels must be in 1..10");
  if (in_channels < 1) throw std::invalid_argument("UnetConfig: in_channels must be >= 1");
  if (static_cast<int>(channel_widths.size()) != levels)
    throw std::invalid_argument("UnetConfig: need one channel width per level");
  for (int w : channel_widths)
    if (w < 1) throw std::invalid_argument("UnetConfig: channel widths must be positive");
  if (patch_size < 1 || patch_size % (1 << levels) != 0)
    throw std::invalid_argument("UnetConfig: patch_size must be a multiple of 2^levels");
}

bool UnetConfig::reference_layout() const {
  return patch_size == 4 * (1 << levels) && !channel_widths.empty() && channel_widths.back() == 512;
}

UnetConfig UnetConfig::for_variant(Variant v, std::vector<int> widths, int levels, int patch_size) {
  UnetConfig c;
  c.levels = levels;
  c.in_channels = variant_channels(v);
  c.channel_widths = std::move(widths);
  c.residual = variant_has_dem(v);
  c.patch_size = patch_size;
  c.validate();
  return c;
}

std::int64_t param_count(const UnetConfig& cfg) {
  cfg.validate();
  const auto& w = cfg.channel_widths;
  const int L = cfg.levels;
  std::int64_t n = 0;
  for (int i = 0; i < L; ++i) {
    const std::int64_t cin = i == 0 ? cfg.in_channels : w[i - 1];
    n += cin * w[i] * 9 + 2 * w[i];
    const std::int64_t up_in = i == L - 1 ? w[L - 1] : w[i + 1];
    n += up_in * w[i] * 4 + 2 * w[i];
    n += std::int64_t{2} * w[i] * w[i] * 9 + 2 * w[i];
  }
  n += std::int64_t{w[0]} * 9 + 1;
  return n;
}

template <class T>
int Unet<T>::add_param(const std::string& name, std::vector<int> dims, int rows, int cols, bool buffer) {
  Param<T> p;
  p.name = name;
  p.dims = std::move(dims);
  p.value = MatrixR<T>::Zero(rows, cols);
  p.grad = MatrixR<T>::Zero(rows, cols);
  p.buffer = buffer;
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

template <class T>
Unet<T>::Unet(const UnetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto init = [&](int idx, double stddev) {
    auto& v = params_[idx].value;
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<T>(stddev * normal(rng));
  };
  const int L = cfg_.levels;
  const auto& w = cfg_.channel_widths;
  auto add_bn = [&](const std::string& prefix, int c, auto& blk) {
    blk.gamma = add_param(prefix + ".bn.weight", {c}, c, 1);
    params_[blk.gamma].value.setOnes();
    blk.beta = add_param(prefix + ".bn.bias", {c}, c, 1);
    blk.mean = add_param(prefix + ".bn.running_mean", {c}, c, 1, true);
    blk.var = add_param(prefix + ".bn.running_var", {c}, c, 1, true);
    params_[blk.var].value.setOnes();
  };
  enc_.resize(L);
  up_.resize(L);
  dec_.resize(L);
  for (int i = 0; i < L; ++i) {
    const int cin = i == 0 ? cfg_.in_channels : w[i - 1];
    const std::string p = "enc" + std::to_string(i);
    enc_[i].weight = add_param(p + ".conv.weight", {w[i], cin, 3, 3}, w[i], cin * 9);
    init(enc_[i].weight, std::sqrt(2.0 / (cin * 9)));
    add_bn(p, w[i], enc_[i]);
  }
  for (int i = L - 1; i >= 0; --i) {
    const int up_in = i == L - 1 ? w[L - 1] : w[i + 1];
    const std::string p = "dec" + std::to_string(i);
    up_[i].weight = add_param(p + ".up.weight", {w[i], 2, 2, up_in}, w[i] * 4, up_in);
    init(up_[i].weight, std::sqrt(2.0 / up_in));
    add_bn(p + ".up", w[i], up_[i]);
    dec_[i].weight = add_param(p + ".conv.weight", {w[i], 2 * w[i], 3, 3}, w[i], 2 * w[i] * 9);
    init(dec_[i].weight, std::sqrt(2.0 / (2 * w[i] * 9)));
    add_bn(p, w[i], dec_[i]);
  }
  final_w_ = add_param("head.conv.weight", {1, w[0], 3, 3}, 1, w[0] * 9);
  init(final_w_, 1e-3 * std::sqrt(2.0 / (w[0] * 9)));
  final_b_ = add_param("head.conv.bias", {1}, 1, 1);
}

template <class T>
Param<T>& Unet<T>::param(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::invalid_argument("Unet: no parameter named '" + name + "'");
}

template <class T>
void Unet<T>::zero_head() {
  params_[final_w_].value.setZero();
  params_[final_b_].value.setZero();
}

template <class T>
void Unet<T>::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

template <class T>
typename Unet<T>::Act Unet<T>::to_internal(const std::vector<T>& x, int n, int h, int w) const {
  const int c = cfg_.in_channels;
  if (n < 1 || h < 1 || w < 1) throw std::invalid_argument("Unet: empty input");
  if (x.size() != static_cast<std::size_t>(n) * c * h * w)
    throw std::invalid_argument("Unet: input size does not match " + std::to_string(c) + " channels");
  const int div = 1 << cfg_.levels;
  if (h % div != 0 || w % div != 0)
    throw std::invalid_argument("Unet: spatial size must be a multiple of " + std::to_string(div));
  Act a{c, n, h, w, MatrixR<T>(c, static_cast<Eigen::Index>(n) * h * w)};
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      std::copy_n(x.data() + (static_cast<std::size_t>(ni) * c + ci) * hw, hw, a.m.data() + ci * a.m.cols() + ni * hw);
  return a;
}

template <class T>
MatrixR<T> Unet<T>::im2col(const Act& a) {
  const Eigen::Index cols = a.m.cols();
  MatrixR<T> col(static_cast<Eigen::Index>(a.c) * 9, cols);
  for (int ci = 0; ci < a.c; ++ci) {
    const T* src = a.m.data() + ci * cols;
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col.data() + (ci * 9 + ky * 3 + kx) * cols;
        const int ox = kx - 1;
        for (int ni = 0; ni < a.n; ++ni)
          for (int y = 0; y < a.h; ++y) {
            T* row = dst + (static_cast<std::size_t>(ni) * a.h + y) * a.w;
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= a.h) {
              std::fill_n(row, a.w, T(0));
              continue;
            }
            const T* s = src + (static_cast<std::size_t>(ni) * a.h + sy) * a.w;
            const int x0 = std::max(0, -ox), x1 = std::min(a.w, a.w - ox);
            for (int x = 0; x < x0; ++x) row[x] = T(0);
            std::copy(s + x0 + ox, s + x1 + ox, row + x0);
            for (int x = x1; x < a.w; ++x) row[x] = T(0);
          }
      }
  }
  return col;
}

template <class T>
void Unet<T>::col2im(const MatrixR<T>& col, Act& g) {
  const Eigen::Index cols = g.m.cols();
  for (int ci = 0; ci < g.c; ++ci) {
    T* dst = g.m.data() + ci * cols;
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col.data() + (ci * 9 + ky * 3 + kx) * cols;
        const int ox = kx - 1;
        for (int ni = 0; ni < g.n; ++ni)
          for (int y = 0; y < g.h; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= g.h) continue;
            const T* row = src + (static_cast<std::size_t>(ni) * g.h + y) * g.w;
            T* d = dst + (static_cast<std::size_t>(ni) * g.h + sy) * g.w;
            const int x0 = std::max(0, -ox), x1 = std::min(g.w, g.w - ox);
            for (int x = x0; x < x1; ++x) d[x + ox] += row[x];
          }
      }
  }
}

template <class T>
MatrixR<T> Unet<T>::conv3(const Act& in, const MatrixR<T>& wmat) const {
  const MatrixR<T> col = im2col(in);
  MatrixR<T> out(wmat.rows(), col.cols());
  out.noalias() = wmat * col;
  return out;
}

template <class T>
MatrixR<T> Unet<T>::bn_forward(MatrixR<T> x, int gi, int bi, int mi, int vi, bool training, BnCache& cache) {
  const auto& gamma = params_[gi].value;
  const auto& beta = params_[bi].value;
  auto& rmean = params_[mi].value;
  auto& rvar = params_[vi].value;
  const Eigen::Index c = x.rows(), m = x.cols();
  if (training) {
    cache.inv_std.resize(c);
    for (Eigen::Index r = 0; r < c; ++r) {
      auto row = x.row(r);
      const T mean = row.mean();
      row.array() -= mean;
      const T var = row.squaredNorm() / static_cast<T>(m);
      const T inv = T(1) / std::sqrt(var + static_cast<T>(bn_eps));
      cache.inv_std(r) = inv;
      row *= inv;
      const T mom = static_cast<T>(bn_momentum);
      rmean(r, 0) = (T(1) - mom) * rmean(r, 0) + mom * mean;
      const T unbiased = m > 1 ? var * static_cast<T>(m) / static_cast<T>(m - 1) : var;
      rvar(r, 0) = (T(1) - mom) * rvar(r, 0) + mom * unbiased;
    }
    cache.xhat = x;
  } else {
    for (Eigen::Index r = 0; r < c; ++r) {
      x.row(r).array() -= rmean(r, 0);
      x.row(r) *= T(1) / std::sqrt(rvar(r, 0) + static_cast<T>(bn_eps));
    }
  }
  for (Eigen::Index r = 0; r < c; ++r) {
    x.row(r) *= gamma(r, 0);
    x.row(r).array() += beta(r, 0);
  }
  return x;
}

template <class T>
MatrixR<T> Unet<T>::bn_backward(const MatrixR<T>& dy, int gi, int bi, const BnCache& cache) {
  const auto& gamma = params_[gi].value;
  auto& dgamma = params_[gi].grad;
  auto& dbeta = params_[bi].grad;
  const Eigen::Index c = dy.rows(), m = dy.cols();
  MatrixR<T> dx(c, m);
  for (Eigen::Index r = 0; r < c; ++r) {
    const T dg = dy.row(r).dot(cache.xhat.row(r));
    const T db = dy.row(r).sum();
    dgamma(r, 0) += dg;
    dbeta(r, 0) += db;
    const T k = gamma(r, 0) * cache.inv_std(r) / static_cast<T>(m);
    dx.row(r) = k * (static_cast<T>(m) * dy.row(r).array() - db - cache.xhat.row(r).array() * dg).matrix();
  }
  return dx;
}

template <class T>
std::vector<T> Unet<T>::forward_head(const std::vector<T>& x, int n, int h, int w, bool training) {
  Act a = to_internal(x, n, h, w);
  const int L = cfg_.levels;
  const auto& widths = cfg_.channel_widths;
  std::vector<Act> skips(L);
  if (training) {
    pool_idx_.assign(L, {});
    pool_in_shape_.assign(L, {});
  }
  BnCache scratch;

  for (int i = 0; i < L; ++i) {
    Block& b = enc_[i];
    MatrixR<T> z = conv3(a, params_[b.weight].value);
    z = bn_forward(std::move(z), b.gamma, b.beta, b.mean, b.var, training, training ? b.bn : scratch);
    z = z.cwiseMax(T(0));
    if (training) {
      b.input = std::move(a);
      b.relu_out = z;
    }
    Act s{widths[i], a.n, a.h, a.w, std::move(z)};
    // Max pool 2x2.
    const int oh = s.h / 2, ow = s.w / 2;
    Act p{s.c, s.n, oh, ow, MatrixR<T>(s.c, static_cast<Eigen::Index>(s.n) * oh * ow)};
    std::vector<std::int32_t> idx;
    if (training) idx.resize(static_cast<std::size_t>(p.m.size()));
    for (int ci = 0; ci < s.c; ++ci)
      for (int ni = 0; ni < s.n; ++ni)
        for (int y = 0; y < oh; ++y)
          for (int xx = 0; xx < ow; ++xx) {
            const std::int32_t base = (ni * s.h + 2 * y) * s.w + 2 * xx;
            std::int32_t best = base;
            T bv = s.m(ci, base);
            for (std::int32_t off : {1, s.w, s.w + 1}) {
              const T v = s.m(ci, base + off);
              if (v > bv) {
                bv = v;
                best = base + off;
              }
            }
            const Eigen::Index o = (static_cast<Eigen::Index>(ni) * oh + y) * ow + xx;
            p.m(ci, o) = bv;
            if (training) idx[static_cast<std::size_t>(ci) * p.m.cols() + o] = best;
          }
    if (training) {
      pool_idx_[i] = std::move(idx);
      pool_in_shape_[i] = Act{s.c, s.n, s.h, s.w, {}};
    }
    skips[i] = std::move(s);
    a = std::move(p);
  }

  for (int i = L - 1; i >= 0; --i) {
    Up& u = up_[i];
    const int c = widths[i];
    const MatrixR<T>& wu = params_[u.weight].value;
    MatrixR<T> y(wu.rows(), a.m.cols());
    y.noalias() = wu * a.m;
    const int oh = a.h * 2, ow = a.w * 2;
    MatrixR<T> z(c, static_cast<Eigen::Index>(a.n) * oh * ow);
    for (int co = 0; co < c; ++co)
      for (int ki = 0; ki < 2; ++ki)
        for (int kj = 0; kj < 2; ++kj) {
          const T* src = y.data() + (co * 4 + ki * 2 + kj) * y.cols();
          T* dst = z.data() + co * z.cols();
          for (int ni = 0; ni < a.n; ++ni)
            for (int yy = 0; yy < a.h; ++yy)
              for (int xx = 0; xx < a.w; ++xx)
                dst[(static_cast<std::size_t>(ni) * oh + 2 * yy + ki) * ow + 2 * xx + kj] =
                    src[(static_cast<std::size_t>(ni) * a.h + yy) * a.w + xx];
        }
    z = bn_forward(std::move(z), u.gamma, u.beta, u.mean, u.var, training, training ? u.bn : scratch);
    z = z.cwiseMax(T(0));
    const int n_ = a.n;
    if (training) {
      u.input = std::move(a);
      u.relu_out = z;
    }
    Act cat{2 * c, n_, oh, ow, MatrixR<T>(2 * c, z.cols())};
    cat.m.topRows(c) = z;
    cat.m.bottomRows(c) = skips[i].m;
    skips[i] = Act{};
    Block& d = dec_[i];
    MatrixR<T> o = conv3(cat, params_[d.weight].value);
    o = bn_forward(std::move(o), d.gamma, d.beta, d.mean, d.var, training, training ? d.bn : scratch);
    o = o.cwiseMax(T(0));
    if (training) {
      d.input = std::move(cat);
      d.relu_out = o;
    }
    a = Act{c, n_, oh, ow, std::move(o)};
  }

  MatrixR<T> out = conv3(a, params_[final_w_].value);
  out.array() += params_[final_b_].value(0, 0);
  if (training) {
    final_in_ = std::move(a);
    have_cache_ = true;
  }
  return std::vector<T>(out.data(), out.data() + out.size());
}

template <class T>
std::vector<T> Unet<T>::forward(const std::vector<T>& x, int n, int h, int w, bool training) {
  std::vector<T> out = forward_head(x, n, h, w, training);
  if (cfg_.residual) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ni = 0; ni < n; ++ni) {
      const T* dem = x.data() + static_cast<std::size_t>(ni) * cfg_.in_channels * hw;
      T* o = out.data() + static_cast<std::size_t>(ni) * hw;
      for (std::size_t i = 0; i < hw; ++i) o[i] = dem[i] + o[i];
    }
  }
  return out;
}

template <class T>
void Unet<T>::backward(const std::vector<T>& grad_out) {
  if (!have_cache_) throw std::logic_error("Unet::backward: no training forward to differentiate");
  const int L = cfg_.levels;
  const auto& widths = cfg_.channel_widths;
  if (grad_out.size() != static_cast<std::size_t>(final_in_.m.cols()))
    throw std::invalid_argument("Unet::backward: gradient size mismatch");
  Eigen::Map<const MatrixR<T>> g(grad_out.data(), 1, final_in_.m.cols());

  auto conv_backward = [&](const Act& input, int wi, const MatrixR<T>& dz) {
    const MatrixR<T> col = im2col(input);
    params_[wi].grad.noalias() += dz * col.transpose();
    MatrixR<T> dcol(col.rows(), col.cols());
    dcol.noalias() = params_[wi].value.transpose() * dz;
    Act da{input.c, input.n, input.h, input.w, MatrixR<T>::Zero(input.c, input.m.cols())};
    col2im(dcol, da);
    return da;
  };

  params_[final_b_].grad(0, 0) += g.sum();
  Act da = conv_backward(final_in_, final_w_, g);
  std::vector<MatrixR<T>> dskip(L);

  for (int i = 0; i < L; ++i) {
    const int c = widths[i];
    Block& d = dec_[i];
    MatrixR<T> dz = da.m.cwiseProduct((d.relu_out.array() > T(0)).template cast<T>().matrix());
    dz = bn_backward(dz, d.gamma, d.beta, d.bn);
    Act dcat = conv_backward(d.input, d.weight, dz);
    dskip[i] = dcat.m.bottomRows(c);
    Up& u = up_[i];
    MatrixR<T> dup = dcat.m.topRows(c).cwiseProduct((u.relu_out.array() > T(0)).template cast<T>().matrix());
    dup = bn_backward(dup, u.gamma, u.beta, u.bn);
    const Act& in = u.input;
    const int oh = in.h * 2, ow = in.w * 2;
    MatrixR<T> dy(c * 4, in.m.cols());
    for (int co = 0; co < c; ++co)
      for (int ki = 0; ki < 2; ++ki)
        for (int kj = 0; kj < 2; ++kj) {
          T* dst = dy.data() + (co * 4 + ki * 2 + kj) * dy.cols();
          const T* src = dup.data() + co * dup.cols();
          for (int ni = 0; ni < in.n; ++ni)
            for (int yy = 0; yy < in.h; ++yy)
              for (int xx = 0; xx < in.w; ++xx)
                dst[(static_cast<std::size_t>(ni) * in.h + yy) * in.w + xx] =
                    src[(static_cast<std::size_t>(ni) * oh + 2 * yy + ki) * ow + 2 * xx + kj];
        }
    params_[u.weight].grad.noalias() += dy * in.m.transpose();
    MatrixR<T> dx(in.c, in.m.cols());
    dx.noalias() = params_[u.weight].value.transpose() * dy;
    da = Act{in.c, in.n, in.h, in.w, std::move(dx)};
  }

  for (int i = L - 1; i >= 0; --i) {
    const Act& shape = pool_in_shape_[i];
    MatrixR<T> ds = std::move(dskip[i]);
    const auto& idx = pool_idx_[i];
    for (int ci = 0; ci < shape.c; ++ci)
      for (Eigen::Index o = 0; o < da.m.cols(); ++o)
        ds(ci, idx[static_cast<std::size_t>(ci) * da.m.cols() + o]) += da.m(ci, o);
    Block& b = enc_[i];
    MatrixR<T> dz = ds.cwiseProduct((b.relu_out.array() > T(0)).template cast<T>().matrix());
    dz = bn_backward(dz, b.gamma, b.beta, b.bn);
    if (i > 0) {
      da = conv_backward(b.input, b.weight, dz);
    } else {
      params_[b.weight].grad.noalias() += dz * im2col(b.input).transpose();
    }
  }
}

template <class T>
T l1_loss(const std::vector<T>& pred, const std::vector<T>& target,
          const std::vector<std::uint8_t>& valid, std::vector<T>* grad) {
  if (pred.size() != target.size() || (!valid.empty() && valid.size() != pred.size()))
    throw std::invalid_argument("l1_loss: size mismatch");
  std::size_t count = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (valid.empty() || valid[i]) {
      sum += std::abs(static_cast<double>(pred[i]) - static_cast<double>(target[i]));
      ++count;
    }
  if (grad) {
    grad->assign(pred.size(), T(0));
    if (count > 0) {
      const T inv = T(1) / static_cast<T>(count);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!valid.empty() && !valid[i]) continue;
        const T r = pred[i] - target[i];
        (*grad)[i] = r > T(0) ? inv : (r < T(0) ? -inv : T(0));
      }
    }
  }
  return count == 0 ? T(0) : static_cast<T>(sum / static_cast<double>(count));
}

template <class T>
void Adam<T>::update(T* w, const T* g, T* m, T* v, std::size_t count, long t, const AdamParams& p) {
  const T b1 = static_cast<T>(p.beta1), b2 = static_cast<T>(p.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(p.beta1, static_cast<double>(t)));
  const T c2 = static_cast<T>(1.0 - std::pow(p.beta2, static_cast<double>(t)));
  const T lr = static_cast<T>(p.lr), eps = static_cast<T>(p.eps), wd = static_cast<T>(p.weight_decay);
  for (std::size_t i = 0; i < count; ++i) {
    const T gi = g[i] + wd * w[i];
    m[i] = b1 * m[i] + (T(1) - b1) * gi;
    v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
    const T mh = m[i] / c1, vh = v[i] / c2;
    w[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

template <class T>
void Adam<T>::step(std::vector<Param<T>>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(MatrixR<T>::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(MatrixR<T>::Zero(p.value.rows(), p.value.cols()));
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("Adam: parameter list changed");
  ++t_;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (p.buffer) continue;
    update(p.value.data(), p.grad.data(), m_[k].data(), v_[k].data(),
           static_cast<std::size_t>(p.value.size()), t_, p_);
  }
}

template class Unet<float>;
template class Unet<double>;
template class Adam<float>;
template class Adam<double>;
template float l1_loss<float>(const std::vector<float>&, const std::vector<float>&,
                              const std::vector<std::uint8_t>&, std::vector<float>*);
template double l1_loss<double>(const std::vector<double>&, const std::vector<double>&,
                                const std::vector<std::uint8_t>&, std::vector<double>*);

}  // namespace resdepth

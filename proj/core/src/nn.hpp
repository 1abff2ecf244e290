#pragma once

// Transformer building blocks with explicit reverse-mode gradients.
// Internal header: Eigen types never cross the public API.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace simulrl::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using ColVec = Eigen::VectorXd;
using CMap = Eigen::Map<const Mat>;
using MMap = Eigen::Map<Mat>;
using CRowMap = Eigen::Map<const RowVec>;
using MRowMap = Eigen::Map<RowVec>;

inline constexpr double kNormEps = 1e-6;

inline CMap cmap(const double* p, int rows, int cols) { return CMap(p, rows, cols); }
inline MMap mmap(double* p, int rows, int cols) { return MMap(p, rows, cols); }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Weights of one pre-norm transformer block (attention + gated SiLU FFN).
template <typename Ptr>
struct BlockTensors {
  int dim = 0;
  int heads = 0;
  int ffn = 0;
  Ptr attn_norm = nullptr;  // 1 x dim
  Ptr wqkv = nullptr;       // dim x 3dim
  Ptr wo = nullptr;         // dim x dim
  Ptr ffn_norm = nullptr;   // 1 x dim
  Ptr w_gate = nullptr;     // dim x ffn
  Ptr w_up = nullptr;       // dim x ffn
  Ptr w_down = nullptr;     // ffn x dim
};
using BlockParams = BlockTensors<const double*>;
using BlockGrads = BlockTensors<double*>;

struct Rope {
  bool enabled = false;
  double base = 10000.0;

  // Rotates consecutive pairs of every head slice of `x` by position angles.
  // sign = +1 applies the rotation, -1 its transpose (used in backward).
  void apply(Eigen::Ref<RowVec> x, int heads, int position, double sign) const {
    if (!enabled) return;
    const int head_dim = static_cast<int>(x.size()) / heads;
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < head_dim / 2; ++i) {
        const double freq = std::pow(base, -2.0 * i / head_dim);
        const double angle = position * freq;
        const double c = std::cos(angle);
        const double s = sign * std::sin(angle);
        const int a = h * head_dim + 2 * i;
        const double x0 = x(a);
        const double x1 = x(a + 1);
        x(a) = x0 * c - x1 * s;
        x(a + 1) = x0 * s + x1 * c;
      }
    }
  }
};

// y = x / rms(x) * gain, row-wise.
struct NormCache {
  Mat unit;       // x / rms(x)
  ColVec inv_rms;
};

inline void rmsnorm_forward(const Mat& x, const double* gain, NormCache& cache, Mat& y) {
  const int d = static_cast<int>(x.cols());
  cache.inv_rms.resize(x.rows());
  cache.unit.resize(x.rows(), d);
  y.resize(x.rows(), d);
  CRowMap g(gain, d);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double ms = x.row(r).squaredNorm() / d;
    const double inv = 1.0 / std::sqrt(ms + kNormEps);
    cache.inv_rms(r) = inv;
    cache.unit.row(r) = x.row(r) * inv;
    y.row(r) = cache.unit.row(r).cwiseProduct(g);
  }
}

inline void rmsnorm_backward(const NormCache& cache, const double* gain, double* dgain, const Mat& dy,
                             Mat& dx) {
  const int d = static_cast<int>(dy.cols());
  CRowMap g(gain, d);
  MRowMap dg(dgain, d);
  dx.resize(dy.rows(), d);
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    dg += dy.row(r).cwiseProduct(cache.unit.row(r));
    const RowVec dn = dy.row(r).cwiseProduct(g);
    const double proj = dn.dot(cache.unit.row(r)) / d;
    dx.row(r) = cache.inv_rms(r) * (dn - proj * cache.unit.row(r));
  }
}

struct BlockCache {
  NormCache norm1;
  Mat n1;         // normed input to attention
  Mat q, k, v;    // projections, rotary applied to q and k
  std::vector<Mat> probs;  // attention probabilities per (segment, head)
  Mat attn;       // concatenated head outputs
  Mat h;          // residual after attention
  NormCache norm2;
  Mat n2;
  Mat a, b;       // gate / up pre-activations
  Mat g;          // silu(a) * b
};

// Causal attention within consecutive segments of `seg_len` rows; row r sits
// at position r % seg_len.
inline void block_forward(const BlockParams& p, const Rope& rope, int seg_len, const Mat& x, Mat& y,
                          BlockCache& c) {
  const int d = p.dim;
  const int heads = p.heads;
  const int hd = d / heads;
  const int n = static_cast<int>(x.rows());
  const int segments = n / seg_len;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  rmsnorm_forward(x, p.attn_norm, c.norm1, c.n1);
  const Mat qkv = c.n1 * cmap(p.wqkv, d, 3 * d);
  c.q = qkv.leftCols(d);
  c.k = qkv.middleCols(d, d);
  c.v = qkv.rightCols(d);
  for (int r = 0; r < n; ++r) {
    rope.apply(c.q.row(r), heads, r % seg_len, 1.0);
    rope.apply(c.k.row(r), heads, r % seg_len, 1.0);
  }

  c.attn.setZero(n, d);
  c.probs.resize(static_cast<std::size_t>(segments) * heads);
  for (int s = 0; s < segments; ++s) {
    const int r0 = s * seg_len;
    for (int hh = 0; hh < heads; ++hh) {
      Mat& P = c.probs[static_cast<std::size_t>(s) * heads + hh];
      P = c.q.block(r0, hh * hd, seg_len, hd) * c.k.block(r0, hh * hd, seg_len, hd).transpose() * scale;
      for (int i = 0; i < seg_len; ++i) {
        const double mx = P.row(i).head(i + 1).maxCoeff();
        double sum = 0.0;
        for (int j = 0; j <= i; ++j) {
          P(i, j) = std::exp(P(i, j) - mx);
          sum += P(i, j);
        }
        for (int j = 0; j <= i; ++j) P(i, j) /= sum;
        for (int j = i + 1; j < seg_len; ++j) P(i, j) = 0.0;
      }
      c.attn.block(r0, hh * hd, seg_len, hd) = P * c.v.block(r0, hh * hd, seg_len, hd);
    }
  }
  c.h = x + c.attn * cmap(p.wo, d, d);

  rmsnorm_forward(c.h, p.ffn_norm, c.norm2, c.n2);
  c.a = c.n2 * cmap(p.w_gate, d, p.ffn);
  c.b = c.n2 * cmap(p.w_up, d, p.ffn);
  c.g.resize(n, p.ffn);
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < p.ffn; ++j) {
      const double a = c.a(r, j);
      c.g(r, j) = a * sigmoid(a) * c.b(r, j);
    }
  y = c.h + c.g * cmap(p.w_down, p.ffn, d);
}

inline void block_backward(const BlockParams& p, const BlockGrads& gp, const Rope& rope, int seg_len,
                           const BlockCache& c, const Mat& dy, Mat& dx) {
  const int d = p.dim;
  const int heads = p.heads;
  const int hd = d / heads;
  const int n = static_cast<int>(dy.rows());
  const int segments = n / seg_len;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  // Feed-forward branch.
  mmap(gp.w_down, p.ffn, d).noalias() += c.g.transpose() * dy;
  const Mat dg = dy * cmap(p.w_down, p.ffn, d).transpose();
  Mat da(n, p.ffn), db(n, p.ffn);
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < p.ffn; ++j) {
      const double a = c.a(r, j);
      const double sg = sigmoid(a);
      db(r, j) = dg(r, j) * a * sg;
      da(r, j) = dg(r, j) * c.b(r, j) * sg * (1.0 + a * (1.0 - sg));
    }
  mmap(gp.w_gate, d, p.ffn).noalias() += c.n2.transpose() * da;
  mmap(gp.w_up, d, p.ffn).noalias() += c.n2.transpose() * db;
  const Mat dn2 = da * cmap(p.w_gate, d, p.ffn).transpose() + db * cmap(p.w_up, d, p.ffn).transpose();
  Mat dh;
  rmsnorm_backward(c.norm2, p.ffn_norm, gp.ffn_norm, dn2, dh);
  dh += dy;

  // Attention branch.
  mmap(gp.wo, d, d).noalias() += c.attn.transpose() * dh;
  const Mat dattn = dh * cmap(p.wo, d, d).transpose();
  Mat dq = Mat::Zero(n, d), dk = Mat::Zero(n, d), dv = Mat::Zero(n, d);
  for (int s = 0; s < segments; ++s) {
    const int r0 = s * seg_len;
    for (int hh = 0; hh < heads; ++hh) {
      const Mat& P = c.probs[static_cast<std::size_t>(s) * heads + hh];
      const auto dO = dattn.block(r0, hh * hd, seg_len, hd);
      dv.block(r0, hh * hd, seg_len, hd) = P.transpose() * dO;
      Mat dP = dO * c.v.block(r0, hh * hd, seg_len, hd).transpose();
      for (int i = 0; i < seg_len; ++i) {
        const double dot = dP.row(i).dot(P.row(i));
        for (int j = 0; j < seg_len; ++j) dP(i, j) = P(i, j) * (dP(i, j) - dot);
      }
      dq.block(r0, hh * hd, seg_len, hd) = dP * c.k.block(r0, hh * hd, seg_len, hd) * scale;
      dk.block(r0, hh * hd, seg_len, hd) = dP.transpose() * c.q.block(r0, hh * hd, seg_len, hd) * scale;
    }
  }
  for (int r = 0; r < n; ++r) {
    rope.apply(dq.row(r), heads, r % seg_len, -1.0);
    rope.apply(dk.row(r), heads, r % seg_len, -1.0);
  }
  Mat dqkv(n, 3 * d);
  dqkv << dq, dk, dv;
  mmap(gp.wqkv, d, 3 * d).noalias() += c.n1.transpose() * dqkv;
  const Mat dn1 = dqkv * cmap(p.wqkv, d, 3 * d).transpose();
  rmsnorm_backward(c.norm1, p.attn_norm, gp.attn_norm, dn1, dx);
  dx += dh;
}

// Key/value cache for incremental decoding of one block.
struct KVCache {
  Mat k;
  Mat v;
  int length = 0;

  void reset(int capacity, int dim) {
    k.setZero(capacity, dim);
    v.setZero(capacity, dim);
    length = 0;
  }
};

inline RowVec rmsnorm_row(const RowVec& x, const double* gain) {
  const int d = static_cast<int>(x.size());
  const double inv = 1.0 / std::sqrt(x.squaredNorm() / d + kNormEps);
  return (x * inv).cwiseProduct(CRowMap(gain, d));
}

// One new row at position cache.length; mirrors block_forward exactly.
inline RowVec block_step(const BlockParams& p, const Rope& rope, const RowVec& x, KVCache& cache) {
  const int d = p.dim;
  const int heads = p.heads;
  const int hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const int pos = cache.length;

  const RowVec n1 = rmsnorm_row(x, p.attn_norm);
  const RowVec qkv = n1 * cmap(p.wqkv, d, 3 * d);
  RowVec q = qkv.leftCols(d);
  RowVec k = qkv.middleCols(d, d);
  rope.apply(q, heads, pos, 1.0);
  rope.apply(k, heads, pos, 1.0);
  cache.k.row(pos) = k;
  cache.v.row(pos) = qkv.rightCols(d);
  cache.length = pos + 1;

  RowVec attn(d);
  for (int hh = 0; hh < heads; ++hh) {
    RowVec scores = q.segment(hh * hd, hd) * cache.k.block(0, hh * hd, pos + 1, hd).transpose() * scale;
    const double mx = scores.maxCoeff();
    double sum = 0.0;
    for (int j = 0; j <= pos; ++j) {
      scores(j) = std::exp(scores(j) - mx);
      sum += scores(j);
    }
    scores /= sum;
    attn.segment(hh * hd, hd) = scores * cache.v.block(0, hh * hd, pos + 1, hd);
  }
  const RowVec h = x + attn * cmap(p.wo, d, d);
  const RowVec n2 = rmsnorm_row(h, p.ffn_norm);
  const RowVec a = n2 * cmap(p.w_gate, d, p.ffn);
  const RowVec b = n2 * cmap(p.w_up, d, p.ffn);
  RowVec g(p.ffn);
  for (int j = 0; j < p.ffn; ++j) g(j) = a(j) * sigmoid(a(j)) * b(j);
  return h + g * cmap(p.w_down, p.ffn, d);
}

// Row-wise log-softmax.
inline void log_softmax_rows(const Mat& logits, Mat& out) {
  out.resize(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
}

}  // namespace simulrl::nn

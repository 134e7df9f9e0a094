// Brute-force reference computations used across the test suites. These are
// deliberately independent of the library kernels: plain loops, explicit
// softmax, no shared helpers beyond raw vectors.

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat matmul(const Mat& a, const Mat& b) {
  const std::size_t m = a.size(), k = b.size(), n = b[0].size();
  Mat c(m, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t = 0; t < k; ++t) c[i][j] += a[i][t] * b[t][j];
  return c;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> y(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    sum += y[i];
  }
  for (double& v : y) v /= sum;
  return y;
}

inline double gelu_tanh(double x) {
  return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
}

// Spatial attention pooling over one grid stored row-major as [(h*w) x d]:
// explicit region loop, explicit two-layer mlp, explicit softmax, explicit
// weighted sum.
inline std::vector<double> sap(const std::vector<double>& features, int h, int w, int d, int s,
                               const std::vector<double>& w1, const std::vector<double>& b1,
                               int d_hidden, const std::vector<double>& w2, double b2) {
  const int oh = h / s, ow = w / s;
  std::vector<double> out(static_cast<std::size_t>(oh) * ow * d, 0.0);
  for (int ri = 0; ri < oh; ++ri)
    for (int rj = 0; rj < ow; ++rj) {
      std::vector<double> logits;
      std::vector<int> rows;
      for (int a = 0; a < s; ++a)
        for (int b = 0; b < s; ++b) {
          const int row = (ri * s + a) * w + (rj * s + b);
          rows.push_back(row);
          std::vector<double> hidden(static_cast<std::size_t>(d_hidden), 0.0);
          for (int hcol = 0; hcol < d_hidden; ++hcol) {
            double acc = b1[static_cast<std::size_t>(hcol)];
            for (int f = 0; f < d; ++f)
              acc += features[static_cast<std::size_t>(row) * d + f] *
                     w1[static_cast<std::size_t>(f) * d_hidden + hcol];
            hidden[static_cast<std::size_t>(hcol)] = gelu_tanh(acc);
          }
          double logit = b2;
          for (int hcol = 0; hcol < d_hidden; ++hcol)
            logit += hidden[static_cast<std::size_t>(hcol)] * w2[static_cast<std::size_t>(hcol)];
          logits.push_back(logit);
        }
      const std::vector<double> alpha = softmax(logits);
      const std::size_t out_row = (static_cast<std::size_t>(ri) * ow + rj) * d;
      for (std::size_t t = 0; t < rows.size(); ++t)
        for (int f = 0; f < d; ++f)
          out[out_row + f] += alpha[t] * features[static_cast<std::size_t>(rows[t]) * d + f];
    }
  return out;
}

// Single-head cross attention, explicit loops: softmax((Q Wq)(K Wk)^T / sqrt(de)) (K Wv).
inline Mat cross_attention(const Mat& queries, const Mat& keys, const Mat& wq, const Mat& wk,
                           const Mat& wv) {
  const Mat q = matmul(queries, wq);
  const Mat k = matmul(keys, wk);
  const Mat v = matmul(keys, wv);
  const std::size_t de = q[0].size();
  Mat out(q.size(), std::vector<double>(de, 0.0));
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<double> scores(k.size(), 0.0);
    for (std::size_t j = 0; j < k.size(); ++j) {
      for (std::size_t t = 0; t < de; ++t) scores[j] += q[i][t] * k[j][t];
      scores[j] /= std::sqrt(static_cast<double>(de));
    }
    const std::vector<double> w = softmax(scores);
    for (std::size_t j = 0; j < k.size(); ++j)
      for (std::size_t t = 0; t < de; ++t) out[i][t] += w[j] * v[j][t];
  }
  return out;
}

// One EmbQ pass with add fusion: text stage, visual stage, up-projection,
// residual.
inline Mat embq_add(const Mat& fq, const Mat& ft, const Mat& fv, const Mat& t_wq, const Mat& t_wk,
                    const Mat& t_wv, const Mat& v_wq, const Mat& v_wk, const Mat& v_wv,
                    const Mat& up) {
  const Mat ftq = cross_attention(fq, ft, t_wq, t_wk, t_wv);
  const Mat fvq = cross_attention(ftq, fv, v_wq, v_wk, v_wv);
  const Mat delta = matmul(fvq, up);
  Mat out = fq;
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < out[i].size(); ++j) out[i][j] += delta[i][j];
  return out;
}

}  // namespace oracle

#pragma once

// Plain-loop reference implementations used as test oracles. They share no
// code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  const std::size_t m = a.size(), k = b.size(), n = b[0].size();
  Matrix c(m, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i][j] += a[i][p] * b[p][j];
  return c;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One GRU step for a single row.
//   z = sigmoid(Wz [x, h] + bz)
//   r = sigmoid(Wr [x, h] + br)
//   n = tanh(Wn [x, r*h] + bn)
//   h' = (1 - z) * n + z * h
struct Gru {
  Matrix wz, wr, wn;  // [hidden][input + hidden]
  std::vector<double> bz, br, bn;
};

inline std::vector<double> gru_step(const Gru& g, const std::vector<double>& x, const std::vector<double>& h) {
  const std::size_t hid = h.size(), in = x.size();
  std::vector<double> z(hid), r(hid), out(hid);
  for (std::size_t i = 0; i < hid; ++i) {
    double sz = g.bz[i], sr = g.br[i];
    for (std::size_t j = 0; j < in; ++j) {
      sz += g.wz[i][j] * x[j];
      sr += g.wr[i][j] * x[j];
    }
    for (std::size_t j = 0; j < hid; ++j) {
      sz += g.wz[i][in + j] * h[j];
      sr += g.wr[i][in + j] * h[j];
    }
    z[i] = sigmoid(sz);
    r[i] = sigmoid(sr);
  }
  for (std::size_t i = 0; i < hid; ++i) {
    double sn = g.bn[i];
    for (std::size_t j = 0; j < in; ++j) sn += g.wn[i][j] * x[j];
    for (std::size_t j = 0; j < hid; ++j) sn += g.wn[i][in + j] * r[j] * h[j];
    const double n = std::tanh(sn);
    out[i] = (1.0 - z[i]) * n + z[i] * h[i];
  }
  return out;
}

// Additive attention over the states whose mask entry is true:
//   u_k = omega . tanh(W h_k + b),  alpha = softmax over unmasked u,
//   out = sum_k alpha_k h_k.
struct Attention {
  Matrix w;  // [proj][input]
  std::vector<double> b, omega;
};

inline std::vector<double> attend(const Attention& a, const Matrix& states, const std::vector<bool>& mask,
                                  std::vector<double>* weights = nullptr) {
  const std::size_t n = states.size(), dim = states[0].size();
  std::vector<double> u(n, 0.0), alpha(n, 0.0);
  double mx = -1e300;
  for (std::size_t k = 0; k < n; ++k) {
    if (!mask[k]) continue;
    for (std::size_t p = 0; p < a.b.size(); ++p) {
      double s = a.b[p];
      for (std::size_t j = 0; j < dim; ++j) s += a.w[p][j] * states[k][j];
      u[k] += a.omega[p] * std::tanh(s);
    }
    mx = std::max(mx, u[k]);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (mask[k]) total += (alpha[k] = std::exp(u[k] - mx));
  std::vector<double> out(dim, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    alpha[k] /= total;
    for (std::size_t j = 0; j < dim; ++j) out[j] += alpha[k] * states[k][j];
  }
  if (weights) *weights = alpha;
  return out;
}

// Bidirectional GRU over an unpadded sequence; each output is
// [forward_k, backward_k].
inline Matrix bigru(const Gru& fwd, const Gru& bwd, const Matrix& xs) {
  const std::size_t n = xs.size(), hid = fwd.bz.size();
  Matrix f(n), b(n);
  std::vector<double> h(hid, 0.0);
  for (std::size_t k = 0; k < n; ++k) f[k] = h = gru_step(fwd, xs[k], h);
  h.assign(hid, 0.0);
  for (std::size_t k = n; k-- > 0;) b[k] = h = gru_step(bwd, xs[k], h);
  Matrix out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = f[k];
    out[k].insert(out[k].end(), b[k].begin(), b[k].end());
  }
  return out;
}

// Hierarchical encoder for one document of token ids.
struct Han {
  Matrix embedding;
  Gru word_fwd, word_bwd, sent_fwd, sent_bwd;
  Attention word_att, sent_att;
};

inline std::vector<double> han_forward(const Han& m, const std::vector<std::vector<long>>& doc) {
  Matrix sentences;
  for (const auto& sentence : doc) {
    Matrix xs;
    for (long id : sentence) xs.push_back(m.embedding[static_cast<std::size_t>(id)]);
    const Matrix hs = bigru(m.word_fwd, m.word_bwd, xs);
    sentences.push_back(attend(m.word_att, hs, std::vector<bool>(hs.size(), true)));
  }
  const Matrix hs = bigru(m.sent_fwd, m.sent_bwd, sentences);
  return attend(m.sent_att, hs, std::vector<bool>(hs.size(), true));
}

// Adam with bias correction, one scalar parameter, written out step by step.
struct ScalarAdam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0;
  int t = 0;

  double step(double param, double grad) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad * grad;
    const double m_hat = m / (1.0 - std::pow(beta1, t));
    const double v_hat = v / (1.0 - std::pow(beta2, t));
    return param - lr * m_hat / (std::sqrt(v_hat) + eps);
  }
};

// Multinomial logistic regression over bag-of-words counts, trained by
// full-batch gradient descent with a small L2 penalty.
class BowLogistic {
 public:
  using Doc = std::vector<std::string>;  // flattened tokens

  BowLogistic(int classes, double lr = 0.5, int epochs = 300, double l2 = 1e-4)
      : classes_(classes), lr_(lr), epochs_(epochs), l2_(l2) {}

  void fit(const std::vector<Doc>& docs, const std::vector<int>& labels) {
    for (const auto& d : docs)
      for (const auto& t : d) index_.emplace(t, index_.size());
    const std::size_t f = index_.size();
    w_.assign(static_cast<std::size_t>(classes_), std::vector<double>(f + 1, 0.0));
    std::vector<std::vector<std::pair<std::size_t, double>>> xs;
    for (const auto& d : docs) xs.push_back(features(d));
    for (int epoch = 0; epoch < epochs_; ++epoch) {
      Matrix grad(static_cast<std::size_t>(classes_), std::vector<double>(f + 1, 0.0));
      for (std::size_t i = 0; i < docs.size(); ++i) {
        auto p = probabilities(xs[i]);
        p[static_cast<std::size_t>(labels[i] - 1)] -= 1.0;
        for (int c = 0; c < classes_; ++c) {
          auto& g = grad[static_cast<std::size_t>(c)];
          for (auto [j, v] : xs[i]) g[j] += p[static_cast<std::size_t>(c)] * v;
          g[f] += p[static_cast<std::size_t>(c)];
        }
      }
      const double n = static_cast<double>(docs.size());
      for (int c = 0; c < classes_; ++c)
        for (std::size_t j = 0; j <= f; ++j) {
          auto& w = w_[static_cast<std::size_t>(c)][j];
          w -= lr_ * (grad[static_cast<std::size_t>(c)][j] / n + l2_ * w);
        }
    }
  }

  int predict(const Doc& d) const {
    const auto p = probabilities(features(d));
    int best = 0;
    for (int c = 1; c < classes_; ++c)
      if (p[static_cast<std::size_t>(c)] > p[static_cast<std::size_t>(best)]) best = c;
    return best + 1;
  }

  double accuracy(const std::vector<Doc>& docs, const std::vector<int>& labels) const {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) hits += predict(docs[i]) == labels[i];
    return static_cast<double>(hits) / static_cast<double>(docs.size());
  }

 private:
  // Counts normalized by document length; unseen tokens are dropped.
  std::vector<std::pair<std::size_t, double>> features(const Doc& d) const {
    std::map<std::size_t, double> counts;
    for (const auto& t : d)
      if (auto it = index_.find(t); it != index_.end()) counts[it->second] += 1.0;
    std::vector<std::pair<std::size_t, double>> out;
    const double len = static_cast<double>(d.size());
    for (auto [j, c] : counts) out.emplace_back(j, 10.0 * c / len);
    return out;
  }

  std::vector<double> probabilities(const std::vector<std::pair<std::size_t, double>>& x) const {
    const std::size_t f = index_.size();
    std::vector<double> s(static_cast<std::size_t>(classes_));
    double mx = -1e300;
    for (int c = 0; c < classes_; ++c) {
      double v = w_[static_cast<std::size_t>(c)][f];
      for (auto [j, xv] : x) v += w_[static_cast<std::size_t>(c)][j] * xv;
      s[static_cast<std::size_t>(c)] = v;
      mx = std::max(mx, v);
    }
    double total = 0.0;
    for (double& v : s) total += (v = std::exp(v - mx));
    for (double& v : s) v /= total;
    return s;
  }

  int classes_;
  double lr_;
  int epochs_;
  double l2_;
  std::map<std::string, std::size_t> index_;
  Matrix w_;
};

}  // namespace oracle

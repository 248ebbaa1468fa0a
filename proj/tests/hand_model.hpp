// Shared by the unit and acceptance suites: a hand-set single-block model and
// an independent straight-line arithmetic recomputation of its forward pass.
#pragma once

#include <cmath>
#include <utility>

#include "layerlens/model.hpp"

namespace layerlens::testsupport {

// n_layers=1, n_heads=1, d_model=2; every weight from the table below.
inline ModelWeights hand_model() {
  ModelConfig c;
  c.vocab_size = 4;
  c.d_model = 2;
  c.n_heads = 1;
  c.n_layers = 1;
  c.d_ff = 2;
  c.max_len = 2;
  ModelWeights w = make_weight_shapes(c);
  const double tok[4][2] = {{0.1, -0.2}, {0.3, 0.4}, {-0.5, 0.6}, {0.7, -0.8}};
  const double pos[2][2] = {{0.01, 0.02}, {-0.03, 0.04}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) w.token_embeddings(i, j) = tok[i][j];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) w.position_embeddings(i, j) = pos[i][j];
  LayerWeights& l = w.layers[0];
  const double wq[2][2] = {{0.2, -0.1}, {0.4, 0.3}};
  const double wk[2][2] = {{-0.3, 0.5}, {0.2, 0.1}};
  const double wv[2][2] = {{0.6, -0.4}, {-0.2, 0.25}};
  const double wo[2][2] = {{0.5, 0.3}, {-0.6, 0.2}};
  const double w1[2][2] = {{0.7, -0.5}, {0.1, 0.8}};
  const double w2[2][2] = {{0.4, -0.3}, {-0.7, 0.6}};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      l.wq(i, j) = wq[i][j];
      l.wk(i, j) = wk[i][j];
      l.wv(i, j) = wv[i][j];
      l.wo(i, j) = wo[i][j];
      l.ff_w1(i, j) = w1[i][j];
      l.ff_w2(i, j) = w2[i][j];
    }
  l.bq(0, 0) = 0.01; l.bq(0, 1) = -0.02;
  l.bk(0, 0) = 0.03; l.bk(0, 1) = 0.00;
  l.bv(0, 0) = -0.01; l.bv(0, 1) = 0.02;
  l.bo(0, 0) = 0.02; l.bo(0, 1) = -0.03;
  l.ln1_gain(0, 0) = 1.1; l.ln1_gain(0, 1) = 0.9;
  l.ln1_bias(0, 0) = 0.05; l.ln1_bias(0, 1) = -0.05;
  l.ln2_gain(0, 0) = 0.95; l.ln2_gain(0, 1) = 1.05;
  l.ln2_bias(0, 0) = 0.0; l.ln2_bias(0, 1) = 0.01;
  l.ff_b1(0, 0) = 0.05; l.ff_b1(0, 1) = -0.05;
  l.ff_b2(0, 0) = 0.01; l.ff_b2(0, 1) = 0.02;
  w.classifier_w(0, 0) = 0.9; w.classifier_w(0, 1) = -0.8;
  w.classifier_w(1, 0) = -0.4; w.classifier_w(1, 1) = 0.7;
  w.classifier_b(0, 0) = 0.05; w.classifier_b(0, 1) = -0.05;
  return w;
}

// Scalar-by-scalar recomputation of hand_model()'s forward on ids {1, 2};
// shares no code with the Matrix-based implementation.
inline std::pair<double, double> hand_oracle_logits() {
  auto ln = [](double x0, double x1, double g0, double g1, double b0, double b1, double* y0,
               double* y1) {
    const double mu = (x0 + x1) / 2.0;
    const double var = ((x0 - mu) * (x0 - mu) + (x1 - mu) * (x1 - mu)) / 2.0;
    const double s = std::sqrt(var + 1e-5);
    *y0 = g0 * (x0 - mu) / s + b0;
    *y1 = g1 * (x1 - mu) / s + b1;
  };

  // embedding: token + position
  const double e00 = 0.3 + 0.01, e01 = 0.4 + 0.02;
  const double e10 = -0.5 + -0.03, e11 = 0.6 + 0.04;

  // pre-attention layer norm
  double a00, a01, a10, a11;
  ln(e00, e01, 1.1, 0.9, 0.05, -0.05, &a00, &a01);
  ln(e10, e11, 1.1, 0.9, 0.05, -0.05, &a10, &a11);

  // q/k/v projections (x * W + b, column j of W)
  const double q00 = a00 * 0.2 + a01 * 0.4 + 0.01, q01 = a00 * -0.1 + a01 * 0.3 + -0.02;
  const double q10 = a10 * 0.2 + a11 * 0.4 + 0.01, q11 = a10 * -0.1 + a11 * 0.3 + -0.02;
  const double k00 = a00 * -0.3 + a01 * 0.2 + 0.03, k01 = a00 * 0.5 + a01 * 0.1 + 0.00;
  const double k10 = a10 * -0.3 + a11 * 0.2 + 0.03, k11 = a10 * 0.5 + a11 * 0.1 + 0.00;
  const double v00 = a00 * 0.6 + a01 * -0.2 + -0.01, v01 = a00 * -0.4 + a01 * 0.25 + 0.02;
  const double v10 = a10 * 0.6 + a11 * -0.2 + -0.01, v11 = a10 * -0.4 + a11 * 0.25 + 0.02;

  // scaled dot-product attention, one head
  const double scale = 1.0 / std::sqrt(2.0);
  const double s00 = (q00 * k00 + q01 * k01) * scale, s01 = (q00 * k10 + q01 * k11) * scale;
  const double s10 = (q10 * k00 + q11 * k01) * scale, s11 = (q10 * k10 + q11 * k11) * scale;
  auto softmax2 = [](double x0, double x1, double* p0, double* p1) {
    const double m = std::max(x0, x1);
    const double z0 = std::exp(x0 - m), z1 = std::exp(x1 - m);
    *p0 = z0 / (z0 + z1);
    *p1 = z1 / (z0 + z1);
  };
  double p00, p01, p10, p11;
  softmax2(s00, s01, &p00, &p01);
  softmax2(s10, s11, &p10, &p11);
  const double o00 = p00 * v00 + p01 * v10, o01 = p00 * v01 + p01 * v11;
  const double o10 = p10 * v00 + p11 * v10, o11 = p10 * v01 + p11 * v11;

  // output projection + residual
  const double m00 = e00 + (o00 * 0.5 + o01 * -0.6 + 0.02);
  const double m01 = e01 + (o00 * 0.3 + o01 * 0.2 + -0.03);
  const double m10 = e10 + (o10 * 0.5 + o11 * -0.6 + 0.02);
  const double m11 = e11 + (o10 * 0.3 + o11 * 0.2 + -0.03);

  // pre-feed-forward layer norm
  double f00, f01, f10, f11;
  ln(m00, m01, 0.95, 1.05, 0.0, 0.01, &f00, &f01);
  ln(m10, m11, 0.95, 1.05, 0.0, 0.01, &f10, &f11);

  auto relu = [](double x) { return x > 0.0 ? x : 0.0; };
  const double h00 = relu(f00 * 0.7 + f01 * 0.1 + 0.05), h01 = relu(f00 * -0.5 + f01 * 0.8 - 0.05);
  const double x00 = m00 + (h00 * 0.4 + h01 * -0.7 + 0.01);
  const double x01 = m01 + (h00 * -0.3 + h01 * 0.6 + 0.02);
  (void)f10; (void)f11; (void)m10; (void)m11;

  // classifier reads position 0
  const double z0 = x00 * 0.9 + x01 * -0.4 + 0.05;
  const double z1 = x00 * -0.8 + x01 * 0.7 + -0.05;
  return {z0, z1};
}

}  // namespace layerlens::testsupport

// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

namespace testutil {

const CrossEncoder& shared_trained_model(conductor::train::TrainReport* report) {
  static conductor::train::TrainReport cached_report;
  static const CrossEncoder cached = [] {
    conductor::model::ModelConfig cfg;  // defaults: 2 layers, d 32, 4 heads, d_ff 64
    cfg.max_seq_len = 32;
    cfg.seed = 1;
    conductor::train::TrainSpec spec;  // frozen default budget
    return conductor::train::train_toy(cfg, spec, &cached_report);
  }();
  if (report) *report = cached_report;
  return cached;
}

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

void add_bias(Mat& a, const Tensor& b) {
  for (auto& row : a)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b.at(j);
}

void zero_masked(Mat& a, const conductor::model::PruningMask* mask, int layer,
                 conductor::model::Site site) {
  if (!mask) return;
  for (const auto& n : mask->neurons) {
    if (n.layer == layer && n.site == site) {
      for (auto& row : a) row[static_cast<std::size_t>(n.unit)] = 0.0;
    }
  }
}

void layer_norm_affine(Mat& a, const Tensor& gamma, const Tensor& beta) {
  for (auto& row : a) {
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= double(row.size());
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= double(row.size());
    double inv = 1.0 / std::sqrt(var + 1e-12);
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] = ((row[j] - mean) * inv) * gamma.at(j) + beta.at(j);
    }
  }
}

}  // namespace

std::vector<double> reference_forward(const CrossEncoder& m, const Tensor& embeddings,
                                      const conductor::model::PruningMask* mask) {
  using conductor::model::Site;
  const auto& cfg = m.config();
  const std::size_t seq = embeddings.rows();
  const std::size_t d = cfg.d_model;
  const std::size_t heads = cfg.num_heads;
  const std::size_t dh = d / heads;

  Mat x = to_mat(embeddings);
  for (int l = 0; l < cfg.num_layers; ++l) {
    std::string p = "L" + std::to_string(l) + ".";
    Mat q = matmul(x, to_mat(m.param(p + "Wq")));
    add_bias(q, m.param(p + "bq"));
    zero_masked(q, mask, l, Site::query_proj);
    Mat k = matmul(x, to_mat(m.param(p + "Wk")));
    add_bias(k, m.param(p + "bk"));
    zero_masked(k, mask, l, Site::key_proj);
    Mat v = matmul(x, to_mat(m.param(p + "Wv")));
    add_bias(v, m.param(p + "bv"));
    zero_masked(v, mask, l, Site::value_proj);

    Mat ctx(seq, std::vector<double>(d, 0.0));
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < seq; ++i) {
        std::vector<double> scores(seq);
        double mx = -1e300;
        for (std::size_t j = 0; j < seq; ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += q[i][h * dh + c] * k[j][h * dh + c];
          scores[j] = s / std::sqrt(double(dh));
          mx = std::max(mx, scores[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < seq; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          z += scores[j];
        }
        for (std::size_t j = 0; j < seq; ++j) {
          double w = scores[j] / z;
          for (std::size_t c = 0; c < dh; ++c) ctx[i][h * dh + c] += w * v[j][h * dh + c];
        }
      }
    }
    Mat ao = matmul(ctx, to_mat(m.param(p + "Wo")));
    add_bias(ao, m.param(p + "bo"));
    zero_masked(ao, mask, l, Site::attention_output);

    for (std::size_t i = 0; i < seq; ++i)
      for (std::size_t j = 0; j < d; ++j) ao[i][j] += x[i][j];
    layer_norm_affine(ao, m.param(p + "ln1_g"), m.param(p + "ln1_b"));

    Mat fi = matmul(ao, to_mat(m.param(p + "W1")));
    add_bias(fi, m.param(p + "b1"));
    zero_masked(fi, mask, l, Site::ffn_intermediate);
    for (auto& row : fi)
      for (double& u : row) u = 0.5 * u * (1.0 + std::erf(u * 0.7071067811865475244));
    Mat fo = matmul(fi, to_mat(m.param(p + "W2")));
    add_bias(fo, m.param(p + "b2"));
    zero_masked(fo, mask, l, Site::ffn_output);

    for (std::size_t i = 0; i < seq; ++i)
      for (std::size_t j = 0; j < d; ++j) fo[i][j] += ao[i][j];
    layer_norm_affine(fo, m.param(p + "ln2_g"), m.param(p + "ln2_b"));
    x = fo;
  }

  Mat cls = {x[0]};
  Mat logits = matmul(cls, to_mat(m.param("cls_W")));
  add_bias(logits, m.param("cls_b"));
  return logits[0];
}

}  // namespace testutil

/* Copyright 2026 The stylectl Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Minimal reverse-mode autodiff over row-major matrices. Feature maps are
// stored as channels x (height * width) with positions flattened row-major.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stylectl/attention_control.hpp"
#include "stylectl/errors.hpp"

namespace stylectl::nn {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape {
 public:
  using Id = std::size_t;

  explicit Tape(bool record = false) : record_(record) { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  const Matrix& value(Id id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.owned;
  }

  Id input(Matrix m) { return push(std::move(m)); }

  // Parameter leaf. Without recording the value is referenced, not copied.
  Id param(Parameter& p) {
    Node n;
    n.external = &p.value;
    n.param = record_ ? &p : nullptr;
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }
  Id param(const Parameter& p) {
    if (record_) throw ArgumentError("recording tape needs mutable parameters");
    Node n;
    n.external = &p.value;
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  Id matmul(Id a, Id b) {
    Matrix out = value(a) * value(b);
    const Id id = push(std::move(out));
    if (record_)
      nodes_[id].back = [this, a, b, id] {
        const Matrix& g = nodes_[id].grad;
        accumulate(a, g * value(b).transpose());
        accumulate(b, value(a).transpose() * g);
      };
    return id;
  }

  Id add(Id a, Id b) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw ArgumentError("tape add: shape mismatch");
    const Id id = push(value(a) + value(b));
    if (record_)
      nodes_[id].back = [this, a, b, id] {
        accumulate(a, nodes_[id].grad);
        accumulate(b, nodes_[id].grad);
      };
    return id;
  }

  // x (rows x n) plus a column vector broadcast over columns.
  Id add_bias(Id x, Id bias) {
    const Matrix& b = value(bias);
    if (b.cols() != 1 || b.rows() != value(x).rows())
      throw ArgumentError("tape add_bias: bias must be rows x 1");
    Matrix out = value(x);
    out.colwise() += b.col(0);
    const Id id = push(std::move(out));
    if (record_)
      nodes_[id].back = [this, x, bias, id] {
        const Matrix& g = nodes_[id].grad;
        accumulate(x, g);
        accumulate(bias, g.rowwise().sum());
      };
    return id;
  }

  Id silu(Id x) {
    const Matrix& v = value(x);
    Matrix out = v.array() / (1.0 + (-v.array()).exp());
    const Id id = push(std::move(out));
    if (record_)
      nodes_[id].back = [this, x, id] {
        const auto& v = value(x).array();
        const Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> sig = 1.0 / (1.0 + (-v).exp());
        Matrix d = nodes_[id].grad.array() * (sig * (1.0 + v * (1.0 - sig)));
        accumulate(x, d);
      };
    return id;
  }

  Id scale(Id x, double s) {
    const Id id = push(value(x) * s);
    if (record_)
      nodes_[id].back = [this, x, s, id] { accumulate(x, nodes_[id].grad * s); };
    return id;
  }

  Id transpose(Id x) {
    const Id id = push(value(x).transpose());
    if (record_)
      nodes_[id].back = [this, x, id] { accumulate(x, nodes_[id].grad.transpose()); };
    return id;
  }

  Id softmax_rows(Id x) {
    Matrix out = value(x);
    softmax_rows_inplace(out);
    const Id id = push(std::move(out));
    if (record_)
      nodes_[id].back = [this, x, id] {
        const Matrix& y = value(id);
        const Matrix& g = nodes_[id].grad;
        const Eigen::VectorXd dot = (g.array() * y.array()).rowwise().sum();
        Matrix d = y.array() * (g.colwise() - dot).array();
        accumulate(x, d);
      };
    return id;
  }

  Id slice_rows(Id x, Eigen::Index first, Eigen::Index count) {
    const Id id = push(value(x).middleRows(first, count));
    if (record_)
      nodes_[id].back = [this, x, first, count, id] {
        Matrix d = Matrix::Zero(value(x).rows(), value(x).cols());
        d.middleRows(first, count) = nodes_[id].grad;
        accumulate(x, d);
      };
    return id;
  }

  Id concat_rows(std::span<const Id> parts) {
    Eigen::Index rows = 0;
    const Eigen::Index cols = value(parts.front()).cols();
    for (Id p : parts) rows += value(p).rows();
    Matrix out(rows, cols);
    Eigen::Index r = 0;
    for (Id p : parts) {
      out.middleRows(r, value(p).rows()) = value(p);
      r += value(p).rows();
    }
    const Id id = push(std::move(out));
    if (record_) {
      std::vector<Id> ps(parts.begin(), parts.end());
      nodes_[id].back = [this, ps, id] {
        Eigen::Index r = 0;
        for (Id p : ps) {
          const Eigen::Index n = value(p).rows();
          accumulate(p, nodes_[id].grad.middleRows(r, n));
          r += n;
        }
      };
    }
    return id;
  }

  // 3x3 convolution, stride 1, zero padding 1. x: Cin x (h*w),
  // weight: Cout x (Cin*9) ordered (c, ky, kx), bias: Cout x 1.
  Id conv3x3(Id x, Id weight, Id bias, int h, int w) {
    const Matrix& xv = value(x);
    if (xv.cols() != static_cast<Eigen::Index>(h) * w)
      throw ArgumentError("conv3x3: spatial size mismatch");
    if (value(weight).cols() != xv.rows() * 9)
      throw ArgumentError("conv3x3: weight does not match input channels");
    Matrix cols = im2col(xv, h, w);
    Matrix out = value(weight) * cols;
    out.colwise() += value(bias).col(0);
    const Id id = push(std::move(out));
    if (record_)
      nodes_[id].back = [this, x, weight, bias, id, h, w, cols = std::move(cols)] {
        const Matrix& g = nodes_[id].grad;
        accumulate(weight, g * cols.transpose());
        accumulate(bias, g.rowwise().sum());
        accumulate(x, col2im(value(weight).transpose() * g, value(x).rows(), h, w));
      };
    return id;
  }

  Id avgpool2(Id x, int h, int w) {
    const Matrix& v = value(x);
    const int oh = h / 2, ow = w / 2;
    Matrix out(v.rows(), static_cast<Eigen::Index>(oh) * ow);
    for (Eigen::Index c = 0; c < v.rows(); ++c)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          const auto base = static_cast<Eigen::Index>(2 * y) * w + 2 * xx;
          out(c, static_cast<Eigen::Index>(y) * ow + xx) =
              0.25 * (v(c, base) + v(c, base + 1) + v(c, base + w) + v(c, base + w + 1));
        }
    const Id id = push(std::move(out));
    if (record_)
      nodes_[id].back = [this, x, id, h, w] {
        const Matrix& g = nodes_[id].grad;
        const int oh = h / 2, ow = w / 2;
        Matrix d = Matrix::Zero(g.rows(), static_cast<Eigen::Index>(h) * w);
        for (Eigen::Index c = 0; c < g.rows(); ++c)
          for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
              const double q = 0.25 * g(c, static_cast<Eigen::Index>(y) * ow + xx);
              const auto base = static_cast<Eigen::Index>(2 * y) * w + 2 * xx;
              d(c, base) += q;
              d(c, base + 1) += q;
              d(c, base + w) += q;
              d(c, base + w + 1) += q;
            }
        accumulate(x, d);
      };
    return id;
  }

  // Nearest-neighbour 2x upsampling of an h x w grid.
  Id upsample2(Id x, int h, int w) {
    const Matrix& v = value(x);
    const int oh = h * 2, ow = w * 2;
    Matrix out(v.rows(), static_cast<Eigen::Index>(oh) * ow);
    for (Eigen::Index c = 0; c < v.rows(); ++c)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx)
          out(c, static_cast<Eigen::Index>(y) * ow + xx) =
              v(c, static_cast<Eigen::Index>(y / 2) * w + xx / 2);
    const Id id = push(std::move(out));
    if (record_)
      nodes_[id].back = [this, x, id, h, w] {
        const Matrix& g = nodes_[id].grad;
        const int ow = w * 2;
        Matrix d = Matrix::Zero(g.rows(), static_cast<Eigen::Index>(h) * w);
        for (Eigen::Index c = 0; c < g.rows(); ++c)
          for (int y = 0; y < h * 2; ++y)
            for (int xx = 0; xx < ow; ++xx)
              d(c, static_cast<Eigen::Index>(y / 2) * w + xx / 2) +=
                  g(c, static_cast<Eigen::Index>(y) * ow + xx);
        accumulate(x, d);
      };
    return id;
  }

  // Propagates `seed` (d out / d value(out)) back to every parameter leaf,
  // adding into Parameter::grad.
  void backward(Id out, const Matrix& seed) {
    if (!record_) throw ArgumentError("backward on a non-recording tape");
    accumulate(out, seed);
    for (Id i = out + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.back) n.back();
      if (n.param) n.param->grad += n.grad;
    }
  }

  static Matrix im2col(const Matrix& x, int h, int w) {
    const Eigen::Index cin = x.rows();
    const Eigen::Index len = static_cast<Eigen::Index>(h) * w;
    Matrix cols(cin * 9, len);
    for (Eigen::Index c = 0; c < cin; ++c) {
      const double* src = x.data() + c * len;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          double* dst = cols.data() + ((c * 3 + ky) * 3 + kx) * len;
          const int dy = ky - 1, dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int y = 0; y < h; ++y) {
            double* row = dst + static_cast<Eigen::Index>(y) * w;
            const int sy = y + dy;
            if (sy < 0 || sy >= h) {
              std::fill(row, row + w, 0.0);
              continue;
            }
            const double* srow = src + static_cast<Eigen::Index>(sy) * w + dx;
            for (int xx = 0; xx < x0; ++xx) row[xx] = 0.0;
            for (int xx = x0; xx < x1; ++xx) row[xx] = srow[xx];
            for (int xx = x1; xx < w; ++xx) row[xx] = 0.0;
          }
        }
    }
    return cols;
  }

  static Matrix col2im(const Matrix& cols, Eigen::Index cin, int h, int w) {
    const Eigen::Index len = static_cast<Eigen::Index>(h) * w;
    Matrix x = Matrix::Zero(cin, len);
    for (Eigen::Index c = 0; c < cin; ++c) {
      double* dst = x.data() + c * len;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const double* src = cols.data() + ((c * 3 + ky) * 3 + kx) * len;
          const int dy = ky - 1, dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int y = 0; y < h; ++y) {
            const int sy = y + dy;
            if (sy < 0 || sy >= h) continue;
            const double* row = src + static_cast<Eigen::Index>(y) * w;
            double* drow = dst + static_cast<Eigen::Index>(sy) * w + dx;
            for (int xx = x0; xx < x1; ++xx) drow[xx] += row[xx];
          }
        }
    }
    return x;
  }

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    std::function<void()> back;
    Parameter* param = nullptr;
  };

  Id push(Matrix m) {
    Node n;
    n.owned = std::move(m);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  template <typename Derived>
  void accumulate(Id id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace stylectl::nn

// Copyright 2026 The qsurf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef QSURF_AUTODIFF_HPP
#define QSURF_AUTODIFF_HPP

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace qsurf {

// Reverse-mode tape over dense matrices. Values are computed eagerly on op
// construction; backward() replays the recorded closures in reverse. The
// scalar type is templated so the same graph can run in float (training)
// and double (the gradient-check oracle).
template <typename T>
class Tape {
  public:
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    struct Node {
        Mat val;
        Mat grad;
        std::function<void(Tape &)> back;
    };

    std::vector<Node> nodes;

    int leaf(Mat v) {
        nodes.push_back(Node{std::move(v), Mat(), nullptr});
        return static_cast<int>(nodes.size()) - 1;
    }

    const Mat &val(int id) const { return nodes[id].val; }
    Mat &grad(int id) { return nodes[id].grad; }

    void accum(int id, const Mat &g) {
        Mat &dst = nodes[id].grad;
        if (dst.size() == 0) {
            dst = g;
        } else {
            dst += g;
        }
    }

    // out = a @ b
    int matmul(int a, int b) {
        int id = leaf(val(a) * val(b));
        nodes[id].back = [a, b, id](Tape &t) {
            const Mat &g = t.grad(id);
            t.accum(a, g * t.val(b).transpose());
            t.accum(b, t.val(a).transpose() * g);
        };
        return id;
    }

    // out = alpha*a + beta*b (same shape)
    int axpy(int a, int b, T alpha = 1, T beta = 1) {
        int id = leaf(alpha * val(a) + beta * val(b));
        nodes[id].back = [a, b, id, alpha, beta](Tape &t) {
            t.accum(a, (alpha * t.grad(id)).eval());
            t.accum(b, (beta * t.grad(id)).eval());
        };
        return id;
    }

    int add(int a, int b) { return axpy(a, b); }

    int scale(int a, T alpha) {
        int id = leaf(alpha * val(a));
        nodes[id].back = [a, id, alpha](Tape &t) { t.accum(a, (alpha * t.grad(id)).eval()); };
        return id;
    }

    // Broadcast a 1 x D row over all rows of a.
    int add_row(int a, int row) {
        Mat v = val(a);
        v.rowwise() += val(row).row(0);
        int id = leaf(std::move(v));
        nodes[id].back = [a, row, id](Tape &t) {
            t.accum(a, t.grad(id));
            t.accum(row, t.grad(id).colwise().sum().eval());
        };
        return id;
    }

    int mul(int a, int b) {
        int id = leaf(val(a).cwiseProduct(val(b)));
        nodes[id].back = [a, b, id](Tape &t) {
            t.accum(a, t.grad(id).cwiseProduct(t.val(b)).eval());
            t.accum(b, t.grad(id).cwiseProduct(t.val(a)).eval());
        };
        return id;
    }

    int gelu(int a) {
        const Mat &x = val(a);
        Mat y = x.unaryExpr([](T v) {
            return static_cast<T>(0.5) * v * (1 + std::erf(v * static_cast<T>(M_SQRT1_2)));
        });
        int id = leaf(std::move(y));
        nodes[id].back = [a, id](Tape &t) {
            const Mat &x = t.val(a);
            Mat d = x.unaryExpr([](T v) {
                T phi = std::exp(static_cast<T>(-0.5) * v * v) * static_cast<T>(0.3989422804014327);
                return static_cast<T>(0.5) * (1 + std::erf(v * static_cast<T>(M_SQRT1_2))) + v * phi;
            });
            t.accum(a, t.grad(id).cwiseProduct(d).eval());
        };
        return id;
    }

    int sigmoid(int a) {
        Mat y = val(a).unaryExpr([](T v) { return static_cast<T>(1) / (1 + std::exp(-v)); });
        int id = leaf(std::move(y));
        nodes[id].back = [a, id](Tape &t) {
            const Mat &y = t.val(id);
            t.accum(a, t.grad(id).cwiseProduct((y.array() * (1 - y.array())).matrix()).eval());
        };
        return id;
    }

    // Row-wise layer normalization with learned 1 x D gain and offset.
    int layernorm(int a, int gamma, int beta, T eps = static_cast<T>(1e-5)) {
        const Mat &x = val(a);
        const auto rows = x.rows();
        const auto cols = x.cols();
        Mat xhat(rows, cols);
        Mat inv_sigma(rows, 1);
        for (Eigen::Index r = 0; r < rows; r++) {
            T mu = x.row(r).mean();
            T var = (x.row(r).array() - mu).square().mean();
            T is = 1 / std::sqrt(var + eps);
            inv_sigma(r, 0) = is;
            xhat.row(r) = (x.row(r).array() - mu) * is;
        }
        Mat y = xhat;
        y.array().rowwise() *= val(gamma).row(0).array();
        y.rowwise() += val(beta).row(0);
        int id = leaf(std::move(y));
        // xhat and inv_sigma are captured for the backward pass.
        auto xh = std::make_shared<Mat>(std::move(xhat));
        auto is = std::make_shared<Mat>(std::move(inv_sigma));
        nodes[id].back = [a, gamma, beta, id, xh, is](Tape &t) {
            const Mat &g = t.grad(id);
            const auto cols = g.cols();
            t.accum(beta, g.colwise().sum().eval());
            t.accum(gamma, g.cwiseProduct(*xh).colwise().sum().eval());
            Mat gx(g.rows(), cols);
            for (Eigen::Index r = 0; r < g.rows(); r++) {
                // dL/dxhat for this row.
                Eigen::Array<T, 1, Eigen::Dynamic> dxh =
                    g.row(r).array() * t.val(gamma).row(0).array();
                T m1 = dxh.mean();
                T m2 = (dxh * xh->row(r).array()).mean();
                gx.row(r) = ((dxh - m1 - xh->row(r).array() * m2) * (*is)(r, 0)).matrix();
            }
            t.accum(a, gx);
        };
        return id;
    }

    // im2col-style gather: out row r is the concatenation of k source rows
    // given by indices[r * k .. r * k + k - 1]; index -1 reads the 1 x D
    // padding row (pad >= 0) or zeros (pad < 0).
    int gather_concat(int a, int pad, const std::vector<int> &indices, int k) {
        const Mat &x = val(a);
        const Eigen::Index d = x.cols();
        const Eigen::Index rows = static_cast<Eigen::Index>(indices.size()) / k;
        Mat y(rows, k * d);
        for (Eigen::Index r = 0; r < rows; r++) {
            for (int j = 0; j < k; j++) {
                int src = indices[r * k + j];
                if (src >= 0) {
                    y.block(r, j * d, 1, d) = x.row(src);
                } else if (pad >= 0) {
                    y.block(r, j * d, 1, d) = val(pad).row(0);
                } else {
                    y.block(r, j * d, 1, d).setZero();
                }
            }
        }
        int id = leaf(std::move(y));
        auto idx = std::make_shared<std::vector<int>>(indices);
        nodes[id].back = [a, pad, idx, k, id, d](Tape &t) {
            const Mat &g = t.grad(id);
            Mat gx = Mat::Zero(t.val(a).rows(), d);
            Mat gp = Mat::Zero(1, d);
            bool pad_touched = false;
            for (Eigen::Index r = 0; r < g.rows(); r++) {
                for (int j = 0; j < k; j++) {
                    int src = (*idx)[r * k + j];
                    if (src >= 0) {
                        gx.row(src) += g.block(r, j * d, 1, d);
                    } else if (pad >= 0) {
                        gp += g.block(r, j * d, 1, d);
                        pad_touched = true;
                    }
                }
            }
            t.accum(a, gx);
            if (pad_touched) {
                t.accum(pad, gp);
            }
        };
        return id;
    }

    // out row r = mean of the source rows listed in groups[r].
    int group_mean(int a, const std::vector<std::vector<int>> &groups) {
        const Mat &x = val(a);
        Mat y(static_cast<Eigen::Index>(groups.size()), x.cols());
        for (size_t r = 0; r < groups.size(); r++) {
            y.row(static_cast<Eigen::Index>(r)).setZero();
            for (int src : groups[r]) {
                y.row(static_cast<Eigen::Index>(r)) += x.row(src);
            }
            y.row(static_cast<Eigen::Index>(r)) /= static_cast<T>(groups[r].size());
        }
        int id = leaf(std::move(y));
        auto grp = std::make_shared<std::vector<std::vector<int>>>(groups);
        nodes[id].back = [a, grp, id](Tape &t) {
            const Mat &g = t.grad(id);
            Mat gx = Mat::Zero(t.val(a).rows(), t.val(a).cols());
            for (size_t r = 0; r < grp->size(); r++) {
                T inv = 1 / static_cast<T>((*grp)[r].size());
                for (int src : (*grp)[r]) {
                    gx.row(src) += inv * g.row(static_cast<Eigen::Index>(r));
                }
            }
            t.accum(a, gx);
        };
        return id;
    }

    // Multi-head scaled dot-product attention over B independent blocks of S
    // tokens. q, k, v are (B*S) x (H*dk). Logits get a learned static bias
    // (S*S) x H plus, when dynamic pair features are supplied, a per-feature
    // projection w_ind (F x H) of the constant feature maps feats[f]
    // ((B*S) x S). Output is (B*S) x (H*dk).
    int attention(int q, int k, int v, int static_bias, int w_ind,
                  const std::vector<Mat> *feats, int batch, int tokens, int heads, int key) {
        const Mat &Q = val(q);
        const Mat &K = val(k);
        const Mat &V = val(v);
        const T inv_sqrt = 1 / std::sqrt(static_cast<T>(key));
        Mat out(Q.rows(), Q.cols());
        // Softmax weights cached for backward: rows (b*H + h)*S + i.
        auto attn = std::make_shared<Mat>(static_cast<Eigen::Index>(batch) * heads * tokens, tokens);
        for (int b = 0; b < batch; b++) {
            for (int h = 0; h < heads; h++) {
                auto Qb = Q.block(b * tokens, h * key, tokens, key);
                auto Kb = K.block(b * tokens, h * key, tokens, key);
                auto Vb = V.block(b * tokens, h * key, tokens, key);
                Mat logits = (Qb * Kb.transpose()) * inv_sqrt;
                for (int i = 0; i < tokens; i++) {
                    for (int j = 0; j < tokens; j++) {
                        logits(i, j) += val(static_bias)(i * tokens + j, h);
                    }
                }
                if (feats) {
                    for (size_t f = 0; f < feats->size(); f++) {
                        logits += val(w_ind)(static_cast<Eigen::Index>(f), h) *
                                  (*feats)[f].block(b * tokens, 0, tokens, tokens);
                    }
                }
                // Row-wise softmax.
                for (int i = 0; i < tokens; i++) {
                    auto row = logits.row(i).array();
                    T mx = row.maxCoeff();
                    Eigen::Array<T, 1, Eigen::Dynamic> e = (row - mx).exp();
                    attn->row((static_cast<Eigen::Index>(b) * heads + h) * tokens + i) =
                        (e / e.sum()).matrix();
                }
                out.block(b * tokens, h * key, tokens, key) =
                    attn->block((static_cast<Eigen::Index>(b) * heads + h) * tokens, 0, tokens, tokens) * Vb;
            }
        }
        int id = leaf(std::move(out));
        nodes[id].back = [q, k, v, static_bias, w_ind, feats, batch, tokens, heads, key, inv_sqrt, attn,
                          id](Tape &t) {
            const Mat &g = t.grad(id);
            const Mat &Q = t.val(q);
            const Mat &K = t.val(k);
            const Mat &V = t.val(v);
            Mat gQ = Mat::Zero(Q.rows(), Q.cols());
            Mat gK = Mat::Zero(K.rows(), K.cols());
            Mat gV = Mat::Zero(V.rows(), V.cols());
            Mat gBias = Mat::Zero(static_cast<Eigen::Index>(tokens) * tokens, heads);
            Mat gW = feats ? Mat::Zero(static_cast<Eigen::Index>(feats->size()), heads) : Mat();
            for (int b = 0; b < batch; b++) {
                for (int h = 0; h < heads; h++) {
                    auto A = attn->block((static_cast<Eigen::Index>(b) * heads + h) * tokens, 0, tokens, tokens);
                    auto Qb = Q.block(b * tokens, h * key, tokens, key);
                    auto Kb = K.block(b * tokens, h * key, tokens, key);
                    auto Vb = V.block(b * tokens, h * key, tokens, key);
                    auto gOut = g.block(b * tokens, h * key, tokens, key);
                    Mat dA = gOut * Vb.transpose();
                    gV.block(b * tokens, h * key, tokens, key) += A.transpose() * gOut;
                    // Softmax backward.
                    Mat dL(tokens, tokens);
                    for (int i = 0; i < tokens; i++) {
                        T dot = dA.row(i).dot(A.row(i));
                        dL.row(i) = A.row(i).cwiseProduct(dA.row(i) - Mat::Constant(1, tokens, dot));
                    }
                    gQ.block(b * tokens, h * key, tokens, key) += inv_sqrt * dL * Kb;
                    gK.block(b * tokens, h * key, tokens, key) += inv_sqrt * dL.transpose() * Qb;
                    for (int i = 0; i < tokens; i++) {
                        for (int j = 0; j < tokens; j++) {
                            gBias(i * tokens + j, h) += dL(i, j);
                        }
                    }
                    if (feats) {
                        for (size_t f = 0; f < feats->size(); f++) {
                            gW(static_cast<Eigen::Index>(f), h) +=
                                dL.cwiseProduct((*feats)[f].block(b * tokens, 0, tokens, tokens)).sum();
                        }
                    }
                }
            }
            t.accum(q, gQ);
            t.accum(k, gK);
            t.accum(v, gV);
            t.accum(static_bias, gBias);
            if (feats) {
                t.accum(w_ind, gW);
            }
        };
        return id;
    }

    // Mean binary cross-entropy with logits over all entries; targets is a
    // constant matrix of the same shape. Returns a 1x1 node.
    int bce_mean(int logits, const Mat &targets) {
        const Mat &z = val(logits);
        if (z.rows() != targets.rows() || z.cols() != targets.cols()) {
            throw std::invalid_argument("bce_mean: shape mismatch");
        }
        T total = 0;
        for (Eigen::Index r = 0; r < z.rows(); r++) {
            for (Eigen::Index c = 0; c < z.cols(); c++) {
                T x = z(r, c);
                // softplus(x) - x*y, stable form.
                T sp = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
                total += sp - x * targets(r, c);
            }
        }
        T n = static_cast<T>(z.size());
        Mat out(1, 1);
        out(0, 0) = total / n;
        int id = leaf(std::move(out));
        auto tgt = std::make_shared<Mat>(targets);
        nodes[id].back = [logits, id, tgt, n](Tape &t) {
            T g = t.grad(id)(0, 0) / n;
            const Mat &z = t.val(logits);
            Mat gz = z.unaryExpr([](T x) { return static_cast<T>(1) / (1 + std::exp(-x)); }) - *tgt;
            t.accum(logits, (g * gz).eval());
        };
        return id;
    }

    int mean_all(int a) {
        Mat out(1, 1);
        out(0, 0) = val(a).mean();
        int id = leaf(std::move(out));
        nodes[id].back = [a, id](Tape &t) {
            T g = t.grad(id)(0, 0) / static_cast<T>(t.val(a).size());
            t.accum(a, Mat::Constant(t.val(a).rows(), t.val(a).cols(), g));
        };
        return id;
    }

    void backward(int loss) {
        if (val(loss).size() != 1) {
            throw std::invalid_argument("backward: loss must be scalar");
        }
        nodes[loss].grad = Mat::Constant(1, 1, static_cast<T>(1));
        for (int i = loss; i >= 0; i--) {
            if (nodes[i].back && nodes[i].grad.size() != 0) {
                nodes[i].back(*this);
            }
        }
    }
};

}  // namespace qsurf

#endif

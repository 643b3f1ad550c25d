#include "maccap/nn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace maccap::nn {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

MatrixXd gelu(const MatrixXd& x) {
    return x.unaryExpr([](double v) { return gelu(v); });
}

LayerNormParams LayerNormParams::ones(int d) {
    return LayerNormParams{VectorXd::Ones(d), VectorXd::Zero(d)};
}

MatrixXd layer_norm(const MatrixXd& x, const LayerNormParams& p, LayerNormCache* cache) {
    const Eigen::Index n = x.rows(), d = x.cols();
    MatrixXd y(n, d);
    MatrixXd x_hat(n, d);
    VectorXd inv_std(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        const double is = 1.0 / std::sqrt(var + 1e-8);
        inv_std[r] = is;
        x_hat.row(r) = (x.row(r).array() - mean) * is;
        y.row(r) = x_hat.row(r).cwiseProduct(p.gamma.transpose()) + p.beta.transpose();
    }
    if (cache) {
        cache->x_hat = x_hat;
        cache->inv_std = inv_std;
    }
    return y;
}

MatrixXd layer_norm_backward(const MatrixXd& dy, const LayerNormParams& p,
                             const LayerNormCache& cache, LayerNormParams* dp) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    MatrixXd dx(n, d);
    if (dp) {
        for (Eigen::Index r = 0; r < n; ++r) {
            dp->gamma += dy.row(r).cwiseProduct(cache.x_hat.row(r)).transpose();
            dp->beta += dy.row(r).transpose();
        }
    }
    const double inv_d = 1.0 / static_cast<double>(d);
    for (Eigen::Index r = 0; r < n; ++r) {
        const Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(p.gamma.transpose());
        const double m1 = dxhat.mean();
        const double m2 = dxhat.cwiseProduct(cache.x_hat.row(r)).mean();
        dx.row(r) = cache.inv_std[r] *
                    (dxhat.array() - m1 - cache.x_hat.row(r).array() * m2);
        (void)inv_d;
    }
    return dx;
}

MatrixXd affine(const MatrixXd& x, const AffineParams& p) {
    return (x * p.w).rowwise() + p.b.transpose();
}

MatrixXd affine_backward(const MatrixXd& x, const MatrixXd& dy,
                         const AffineParams& p, AffineParams* dp) {
    if (dp) {
        dp->w += x.transpose() * dy;
        dp->b += dy.colwise().sum().transpose();
    }
    return dy * p.w.transpose();
}

MatrixXd attention(const MatrixXd& xq, const MatrixXd& xkv, const AttentionParams& p,
                   int n_heads, bool causal, AttentionCache* cache) {
    const Eigen::Index d = p.q.w.cols();
    if (xq.cols() != p.q.w.rows() || xkv.cols() != p.k.w.rows())
        throw std::invalid_argument("attention: input width mismatch");
    if (d % n_heads != 0)
        throw std::invalid_argument("attention: n_heads must divide model width");
    const Eigen::Index dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const MatrixXd q = affine(xq, p.q);
    const MatrixXd k = affine(xkv, p.k);
    const MatrixXd v = affine(xkv, p.v);
    const Eigen::Index lq = q.rows(), lk = k.rows();

    MatrixXd concat(lq, d);
    std::vector<MatrixXd> probs(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        const auto qh = q.middleCols(h * dh, dh);
        const auto kh = k.middleCols(h * dh, dh);
        const auto vh = v.middleCols(h * dh, dh);
        MatrixXd s = qh * kh.transpose() * scale;
        if (causal) {
            for (Eigen::Index r = 0; r < lq; ++r)
                for (Eigen::Index c = 0; c < lk; ++c)
                    if (c > r + (lk - lq))
                        s(r, c) = -std::numeric_limits<double>::infinity();
        }
        MatrixXd prob(lq, lk);
        for (Eigen::Index r = 0; r < lq; ++r) {
            const double mx = s.row(r).maxCoeff();
            Eigen::RowVectorXd e = (s.row(r).array() - mx).exp();
            prob.row(r) = e / e.sum();
        }
        concat.middleCols(h * dh, dh) = prob * vh;
        probs[static_cast<std::size_t>(h)] = std::move(prob);
    }
    if (cache) {
        cache->xq = xq;
        cache->xkv = xkv;
        cache->q = q;
        cache->k = k;
        cache->v = v;
        cache->probs = probs;
        cache->concat = concat;
    }
    return affine(concat, p.out);
}

MatrixXd attention_backward(const MatrixXd& dy, const AttentionParams& p, int n_heads,
                            const AttentionCache& cache, AttentionParams* dp,
                            MatrixXd* dxkv_out) {
    const Eigen::Index d = p.q.w.cols();
    const Eigen::Index dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const MatrixXd dconcat =
        affine_backward(cache.concat, dy, p.out, dp ? &dp->out : nullptr);

    MatrixXd dq = MatrixXd::Zero(cache.q.rows(), d);
    MatrixXd dk = MatrixXd::Zero(cache.k.rows(), d);
    MatrixXd dv = MatrixXd::Zero(cache.v.rows(), d);
    for (int h = 0; h < n_heads; ++h) {
        const auto prob = cache.probs[static_cast<std::size_t>(h)];
        const auto doh = dconcat.middleCols(h * dh, dh);
        const auto vh = cache.v.middleCols(h * dh, dh);
        const auto qh = cache.q.middleCols(h * dh, dh);
        const auto kh = cache.k.middleCols(h * dh, dh);

        dv.middleCols(h * dh, dh) = prob.transpose() * doh;
        MatrixXd dprob = doh * vh.transpose();
        MatrixXd ds(prob.rows(), prob.cols());
        for (Eigen::Index r = 0; r < prob.rows(); ++r) {
            const double dot = dprob.row(r).dot(prob.row(r));
            ds.row(r) = prob.row(r).array() * (dprob.row(r).array() - dot);
        }
        dq.middleCols(h * dh, dh) = ds * kh * scale;
        dk.middleCols(h * dh, dh) = ds.transpose() * qh * scale;
    }

    const MatrixXd dxq = affine_backward(cache.xq, dq, p.q, dp ? &dp->q : nullptr);
    const MatrixXd dxkv_k = affine_backward(cache.xkv, dk, p.k, dp ? &dp->k : nullptr);
    const MatrixXd dxkv_v = affine_backward(cache.xkv, dv, p.v, dp ? &dp->v : nullptr);
    if (dxkv_out) *dxkv_out += dxkv_k + dxkv_v;
    return dxq;
}

MatrixXd feed_forward(const MatrixXd& x, const FeedForwardParams& p, FeedForwardCache* cache) {
    const MatrixXd pre = affine(x, p.in);
    if (cache) {
        cache->x = x;
        cache->pre = pre;
    }
    return affine(gelu(pre), p.out);
}

MatrixXd feed_forward_backward(const MatrixXd& dy, const FeedForwardParams& p,
                               const FeedForwardCache& cache, FeedForwardParams* dp) {
    const MatrixXd hidden = gelu(cache.pre);
    const MatrixXd dhidden = affine_backward(hidden, dy, p.out, dp ? &dp->out : nullptr);
    const MatrixXd dpre =
        dhidden.cwiseProduct(cache.pre.unaryExpr([](double v) { return gelu_grad(v); }));
    return affine_backward(cache.x, dpre, p.in, dp ? &dp->in : nullptr);
}

VectorXd log_softmax(const VectorXd& logits) {
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    return logits.array() - lse;
}

}  // namespace maccap::nn

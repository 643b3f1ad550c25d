#pragma once

#include <Eigen/Core>
#include <vector>

namespace maccap::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double gelu(double x);
double gelu_grad(double x);
MatrixXd gelu(const MatrixXd& x);

struct LayerNormParams {
    VectorXd gamma, beta;
    static LayerNormParams ones(int d);
};

struct LayerNormCache {
    MatrixXd x_hat;
    VectorXd inv_std;
};

// Row-wise layer normalization: y_r = gamma .* (x_r - mean) * inv_std + beta.
MatrixXd layer_norm(const MatrixXd& x, const LayerNormParams& p,
                    LayerNormCache* cache = nullptr);
MatrixXd layer_norm_backward(const MatrixXd& dy, const LayerNormParams& p,
                             const LayerNormCache& cache, LayerNormParams* dp);

struct AffineParams {
    MatrixXd w;  // d_in x d_out
    VectorXd b;  // d_out
};

MatrixXd affine(const MatrixXd& x, const AffineParams& p);
// Returns dx; accumulates into dp when non-null.
MatrixXd affine_backward(const MatrixXd& x, const MatrixXd& dy,
                         const AffineParams& p, AffineParams* dp);

struct AttentionParams {
    AffineParams q, k, v, out;  // all d x d maps
};

struct AttentionCache {
    MatrixXd xq, xkv;
    MatrixXd q, k, v;                // L x d, head-concatenated columns
    std::vector<MatrixXd> probs;     // per head, Lq x Lk softmax rows
    MatrixXd concat;                 // Lq x d, pre-output-projection
};

// Scaled dot-product multi-head attention. Rows are tokens.
MatrixXd attention(const MatrixXd& xq, const MatrixXd& xkv,
                   const AttentionParams& p, int n_heads, bool causal,
                   AttentionCache* cache = nullptr);
// Returns d(xq); writes d(xkv) and accumulates parameter grads when non-null.
MatrixXd attention_backward(const MatrixXd& dy, const AttentionParams& p,
                            int n_heads, const AttentionCache& cache,
                            AttentionParams* dp, MatrixXd* dxkv);

struct FeedForwardParams {
    AffineParams in, out;  // d -> hidden -> d_out, gelu between
};

struct FeedForwardCache {
    MatrixXd x, pre;  // pre = x * w_in + b_in (before gelu)
};

MatrixXd feed_forward(const MatrixXd& x, const FeedForwardParams& p,
                      FeedForwardCache* cache = nullptr);
MatrixXd feed_forward_backward(const MatrixXd& dy, const FeedForwardParams& p,
                               const FeedForwardCache& cache, FeedForwardParams* dp);

// log-softmax of one row vector.
VectorXd log_softmax(const VectorXd& logits);

}  // namespace maccap::nn

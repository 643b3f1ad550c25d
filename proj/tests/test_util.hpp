#pragma once

#include <stdexcept>
#include <vector>

#include "maccap/langmodel.hpp"

namespace maccap::testing {

// LM with the same fixed logits at every step; prefix is ignored.
class FixedLogitsLm : public LanguageModel {
public:
    FixedLogitsLm(const LanguageModelSpec& spec, Eigen::VectorXd logits)
        : spec_(spec), logits_(std::move(logits)) {
        spec_.validate();
        if (logits_.size() != spec_.vocab_size)
            throw std::invalid_argument("FixedLogitsLm: logits size mismatch");
    }

    const LanguageModelSpec& spec() const override { return spec_; }

    Eigen::VectorXd next_token_logits(const Eigen::MatrixXd&,
                                      const std::vector<int>&) const override {
        return logits_;
    }

    double sequence_log_prob_with_grad(const Eigen::MatrixXd& prefix,
                                       const std::vector<int>& target,
                                       Eigen::MatrixXd* dprefix) const override {
        if (target.empty()) throw std::invalid_argument("empty target");
        const Eigen::VectorXd logp = nn::log_softmax(logits_);
        double total = 0.0;
        for (int t : target) total += logp[t];
        if (dprefix) *dprefix = Eigen::MatrixXd::Zero(prefix.rows(), prefix.cols());
        return total;
    }

    std::uint64_t weight_checksum() const override { return 0x1; }

private:
    LanguageModelSpec spec_;
    Eigen::VectorXd logits_;
};

inline FixedLogitsLm uniform_lm(int vocab, int bos = 0, int eos = 1) {
    LanguageModelSpec spec;
    spec.vocab_size = vocab;
    spec.bos = bos;
    spec.eos = eos;
    spec.d_l = 4;
    return FixedLogitsLm(spec, Eigen::VectorXd::Zero(vocab));
}

}  // namespace maccap::testing

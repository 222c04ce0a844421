#pragma once

#include "vecspace/rng.hpp"
#include "vecspace/toy_world.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace vecspace::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Glorot-uniform fill.
void init_glorot(Matrix& m, Rng& rng);

// Fully connected layer; batches are stored column-wise.
struct Dense {
    Matrix weight;  // out x in
    Matrix bias;    // out x 1

    Dense() = default;
    Dense(Index out, Index in) : weight(Matrix::Zero(out, in)), bias(Matrix::Zero(out, 1)) {}

    void init(Rng& rng);
    Matrix forward(const Matrix& x) const;
    // Accumulates parameter gradients into `grad` (when non-null) and returns
    // the gradient with respect to `x` (empty when need_dx is false).
    Matrix backward(const Matrix& x, const Matrix& dy, Dense* grad, bool need_dx = true) const;

    template <class F>
    void for_each_param(const std::string& prefix, F&& f) {
        f(prefix + ".weight", weight);
        f(prefix + ".bias", bias);
    }
    template <class F>
    void for_each_param(const std::string& prefix, F&& f) const {
        f(prefix + ".weight", weight);
        f(prefix + ".bias", bias);
    }
};

struct LstmStep {
    Matrix input, h_prev, c_prev;
    Matrix gates;  // activated i, f, g, o stacked (4H x B)
    Matrix c, tanh_c, h;
};

// LSTM cell, gate order i, f, g, o.
struct Lstm {
    Matrix w_input;   // 4H x I
    Matrix w_hidden;  // 4H x H
    Matrix bias;      // 4H x 1

    Lstm() = default;
    Lstm(Index input, Index hidden)
        : w_input(Matrix::Zero(4 * hidden, input)), w_hidden(Matrix::Zero(4 * hidden, hidden)),
          bias(Matrix::Zero(4 * hidden, 1)) {}

    Index hidden_size() const { return w_hidden.cols(); }
    Index input_size() const { return w_input.cols(); }

    void init(Rng& rng);  // forget-gate bias starts at 1
    void forward(const Matrix& x, const Matrix& h, const Matrix& c, LstmStep& step) const;
    void backward(const LstmStep& step, const Matrix& dh, const Matrix& dc, Lstm* grad, Matrix* dx,
                  Matrix& dh_prev, Matrix& dc_prev) const;

    template <class F>
    void for_each_param(const std::string& prefix, F&& f) {
        f(prefix + ".w_input", w_input);
        f(prefix + ".w_hidden", w_hidden);
        f(prefix + ".bias", bias);
    }
    template <class F>
    void for_each_param(const std::string& prefix, F&& f) const {
        f(prefix + ".w_input", w_input);
        f(prefix + ".w_hidden", w_hidden);
        f(prefix + ".bias", bias);
    }
};

// Decoders never emit PAD or BOS; their probability is fixed at zero.
inline constexpr TokenId kFirstEmittable = kEos;

// Column-wise log-softmax over the emittable rows; masked rows get -inf.
Matrix masked_log_softmax(const Matrix& logits);

inline Matrix sigmoid(const Matrix& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

// Recurrent decoder conditioned on a context vector: the initial hidden state
// is tanh(init(context)) and the context is appended to every step's input.
struct Decoder {
    Dense init;    // H x C
    Lstm cell;     // input E + C
    Dense output;  // V x H

    Decoder() = default;
    Decoder(Index vocab, Index embed, Index context, Index hidden)
        : init(hidden, context), cell(embed + context, hidden), output(vocab, hidden) {}

    Index context_size() const { return init.weight.cols(); }
    Index hidden_size() const { return cell.hidden_size(); }
    Index vocab_size() const { return output.weight.rows(); }

    void init_params(Rng& rng);

    template <class F>
    void for_each_param(const std::string& prefix, F&& f) {
        init.for_each_param(prefix + ".init", f);
        cell.for_each_param(prefix + ".cell", f);
        output.for_each_param(prefix + ".output", f);
    }
    template <class F>
    void for_each_param(const std::string& prefix, F&& f) const {
        init.for_each_param(prefix + ".init", f);
        cell.for_each_param(prefix + ".cell", f);
        output.for_each_param(prefix + ".output", f);
    }
};

struct TeacherForcing {
    double loss = 0.0;                  // sum of weight_b * sequence_loss[b]
    std::vector<double> sequence_loss;  // per column, unweighted
    Matrix d_context;                   // C x B, only when requested
};

// Teacher-forced negative log-likelihood. `targets[b]` is the full target
// sequence for column b, including the terminating EOS; inputs are BOS
// followed by the targets shifted right. Every target position is one summand.
TeacherForcing teacher_force(const Decoder& decoder, const Matrix& embedding, const Matrix& context,
                             std::span<const std::vector<TokenId>> targets, std::span<const double> weights,
                             Decoder* decoder_grad, Matrix* embedding_grad, bool want_d_context);

// Step-wise evaluation of a decoder for a single context vector.
class DecoderRunner {
public:
    struct State {
        Vector h;
        Vector c;
    };

    DecoderRunner(const Decoder& decoder, const Matrix& embedding, Vector context);

    State initial() const;
    // Feeds `token` and returns log-probabilities of the next token.
    Vector advance(State& state, TokenId token) const;

private:
    const Decoder& decoder_;
    const Matrix& embedding_;
    Vector context_;
};

struct Hypothesis {
    Caption caption;  // ends with EOS unless cut at the length limit
    double log_prob = 0.0;
};

inline constexpr std::size_t kMaxDecodeLength = 20;

Caption decode_greedy(const DecoderRunner& runner, std::size_t max_length = kMaxDecodeLength);
Caption decode_sample(const DecoderRunner& runner, Rng& rng, double temperature,
                      std::size_t max_length = kMaxDecodeLength);
// Returns the k best finished hypotheses under unnormalized log-probability,
// sorted non-increasing. Hypotheses reaching max_length are finished as-is.
std::vector<Hypothesis> decode_beam(const DecoderRunner& runner, std::size_t beam_width, std::size_t k,
                                    std::size_t max_length = kMaxDecodeLength);

class SgdMomentum {
public:
    SgdMomentum(double learning_rate, double momentum, double clip_norm)
        : learning_rate_(learning_rate), momentum_(momentum), clip_norm_(clip_norm) {}

    // Returns the gradient norm before clipping.
    double step(const std::vector<Matrix*>& params, const std::vector<Matrix*>& grads);
    void set_learning_rate(double lr) { learning_rate_ = lr; }

private:
    double learning_rate_;
    double momentum_;
    double clip_norm_;
    std::vector<Matrix> velocity_;
};

template <class Model>
std::vector<Matrix*> parameter_list(Model& model) {
    std::vector<Matrix*> out;
    model.for_each_param([&](const std::string&, Matrix& m) { out.push_back(&m); });
    return out;
}

template <class Model>
Model zeros_like(const Model& model) {
    Model out = model;
    out.for_each_param([](const std::string&, Matrix& m) { m.setZero(); });
    return out;
}

template <class Model>
void set_zero(Model& model) {
    model.for_each_param([](const std::string&, Matrix& m) { m.setZero(); });
}

} // namespace vecspace::nn

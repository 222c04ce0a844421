#include "vecspace/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vecspace::nn {

void init_glorot(Matrix& m, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Index j = 0; j < m.cols(); ++j)
        for (Index i = 0; i < m.rows(); ++i) m(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
}

void Dense::init(Rng& rng) {
    init_glorot(weight, rng);
    bias.setZero();
}

Matrix Dense::forward(const Matrix& x) const {
    Matrix y = weight * x;
    y.colwise() += bias.col(0);
    return y;
}

Matrix Dense::backward(const Matrix& x, const Matrix& dy, Dense* grad, bool need_dx) const {
    if (grad) {
        grad->weight.noalias() += dy * x.transpose();
        grad->bias.col(0) += dy.rowwise().sum();
    }
    if (!need_dx) return {};
    return weight.transpose() * dy;
}

void Lstm::init(Rng& rng) {
    init_glorot(w_input, rng);
    init_glorot(w_hidden, rng);
    bias.setZero();
    const Index h = hidden_size();
    bias.block(h, 0, h, 1).setOnes();
}

void Lstm::forward(const Matrix& x, const Matrix& h, const Matrix& c, LstmStep& s) const {
    const Index H = hidden_size();
    s.input = x;
    s.h_prev = h;
    s.c_prev = c;
    Matrix z = w_input * x;
    z.noalias() += w_hidden * h;
    z.colwise() += bias.col(0);
    s.gates.resize(z.rows(), z.cols());
    s.gates.topRows(2 * H) = sigmoid(z.topRows(2 * H));
    s.gates.middleRows(2 * H, H) = z.middleRows(2 * H, H).array().tanh().matrix();
    s.gates.bottomRows(H) = sigmoid(z.bottomRows(H));
    const auto i = s.gates.topRows(H).array();
    const auto f = s.gates.middleRows(H, H).array();
    const auto g = s.gates.middleRows(2 * H, H).array();
    const auto o = s.gates.bottomRows(H).array();
    s.c = (f * c.array() + i * g).matrix();
    s.tanh_c = s.c.array().tanh().matrix();
    s.h = (o * s.tanh_c.array()).matrix();
}

void Lstm::backward(const LstmStep& s, const Matrix& dh, const Matrix& dc, Lstm* grad, Matrix* dx,
                    Matrix& dh_prev, Matrix& dc_prev) const {
    const Index H = hidden_size();
    const auto i = s.gates.topRows(H).array();
    const auto f = s.gates.middleRows(H, H).array();
    const auto g = s.gates.middleRows(2 * H, H).array();
    const auto o = s.gates.bottomRows(H).array();
    const auto tc = s.tanh_c.array();

    const Eigen::ArrayXXd dc_total = dc.array() + dh.array() * o * (1.0 - tc * tc);
    Matrix dz(4 * H, dh.cols());
    dz.topRows(H) = (dc_total * g * i * (1.0 - i)).matrix();
    dz.middleRows(H, H) = (dc_total * s.c_prev.array() * f * (1.0 - f)).matrix();
    dz.middleRows(2 * H, H) = (dc_total * i * (1.0 - g * g)).matrix();
    dz.bottomRows(H) = (dh.array() * tc * o * (1.0 - o)).matrix();
    dc_prev = (dc_total * f).matrix();

    if (grad) {
        grad->w_input.noalias() += dz * s.input.transpose();
        grad->w_hidden.noalias() += dz * s.h_prev.transpose();
        grad->bias.col(0) += dz.rowwise().sum();
    }
    if (dx) *dx = w_input.transpose() * dz;
    dh_prev = w_hidden.transpose() * dz;
}

Matrix masked_log_softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    const Index first = kFirstEmittable;
    const Index n = logits.rows() - first;
    for (Index b = 0; b < logits.cols(); ++b) {
        const auto col = logits.col(b).tail(n);
        const double m = col.maxCoeff();
        const double lse = m + std::log((col.array() - m).exp().sum());
        out.col(b).head(first).setConstant(-std::numeric_limits<double>::infinity());
        out.col(b).tail(n) = (col.array() - lse).matrix();
    }
    return out;
}

void Decoder::init_params(Rng& rng) {
    init.init(rng);
    cell.init(rng);
    output.init(rng);
}

TeacherForcing teacher_force(const Decoder& dec, const Matrix& embedding, const Matrix& context,
                             std::span<const std::vector<TokenId>> targets, std::span<const double> weights,
                             Decoder* dec_grad, Matrix* emb_grad, bool want_d_context) {
    const Index B = context.cols();
    if (static_cast<std::size_t>(B) != targets.size() || weights.size() != targets.size())
        throw std::invalid_argument("teacher_force: batch size mismatch");
    const Index E = embedding.rows();
    const Index C = context.rows();
    const Index H = dec.hidden_size();
    const Index V = dec.vocab_size();
    std::size_t T = 0;
    for (const auto& t : targets) T = std::max(T, t.size());

    auto input_token = [&](std::size_t t, Index b) -> TokenId {
        if (t == 0) return kBos;
        const auto& seq = targets[static_cast<std::size_t>(b)];
        return t - 1 < seq.size() ? seq[t - 1] : kPad;
    };

    TeacherForcing out;
    out.sequence_loss.assign(static_cast<std::size_t>(B), 0.0);

    const Matrix init_pre = dec.init.forward(context);
    const Matrix h0 = init_pre.array().tanh().matrix();
    Matrix h = h0;
    Matrix c = Matrix::Zero(H, B);
    std::vector<LstmStep> steps(T);
    std::vector<Matrix> log_probs(T);
    Matrix x(E + C, B);
    x.bottomRows(C) = context;
    for (std::size_t t = 0; t < T; ++t) {
        for (Index b = 0; b < B; ++b) x.col(b).head(E) = embedding.col(input_token(t, b));
        dec.cell.forward(x, h, c, steps[t]);
        h = steps[t].h;
        c = steps[t].c;
        log_probs[t] = masked_log_softmax(dec.output.forward(h));
        for (Index b = 0; b < B; ++b) {
            const auto& seq = targets[static_cast<std::size_t>(b)];
            if (t >= seq.size()) continue;
            const double nll = -log_probs[t](seq[t], b);
            out.sequence_loss[static_cast<std::size_t>(b)] += nll;
            out.loss += weights[static_cast<std::size_t>(b)] * nll;
        }
    }

    if (!dec_grad && !emb_grad && !want_d_context) return out;

    Matrix d_context = Matrix::Zero(C, B);
    Matrix dh_next = Matrix::Zero(H, B);
    Matrix dc_next = Matrix::Zero(H, B);
    Matrix dx, dh_prev, dc_prev;
    for (std::size_t t = T; t-- > 0;) {
        Matrix dlogits = Matrix::Zero(V, B);
        for (Index b = 0; b < B; ++b) {
            const auto& seq = targets[static_cast<std::size_t>(b)];
            if (t >= seq.size()) continue;
            const double w = weights[static_cast<std::size_t>(b)];
            dlogits.col(b) = log_probs[t].col(b).array().exp().matrix() * w;
            dlogits(seq[t], b) -= w;
        }
        Matrix dh = dec.output.backward(steps[t].h, dlogits, dec_grad ? &dec_grad->output : nullptr);
        dh += dh_next;
        dec.cell.backward(steps[t], dh, dc_next, dec_grad ? &dec_grad->cell : nullptr, &dx, dh_prev, dc_prev);
        d_context += dx.bottomRows(C);
        if (emb_grad)
            for (Index b = 0; b < B; ++b) emb_grad->col(input_token(t, b)) += dx.col(b).head(E);
        dh_next = std::move(dh_prev);
        dc_next = std::move(dc_prev);
    }
    const Matrix d_init_pre = (dh_next.array() * (1.0 - h0.array() * h0.array())).matrix();
    d_context += dec.init.backward(context, d_init_pre, dec_grad ? &dec_grad->init : nullptr);
    if (want_d_context) out.d_context = std::move(d_context);
    return out;
}

DecoderRunner::DecoderRunner(const Decoder& decoder, const Matrix& embedding, Vector context)
    : decoder_(decoder), embedding_(embedding), context_(std::move(context)) {}

DecoderRunner::State DecoderRunner::initial() const {
    State s;
    s.h = decoder_.init.forward(context_).col(0).array().tanh().matrix();
    s.c = Vector::Zero(decoder_.hidden_size());
    return s;
}

Vector DecoderRunner::advance(State& state, TokenId token) const {
    const Index E = embedding_.rows();
    Matrix x(E + context_.size(), 1);
    x.col(0).head(E) = embedding_.col(token);
    x.col(0).tail(context_.size()) = context_;
    LstmStep step;
    decoder_.cell.forward(x, state.h, state.c, step);
    state.h = step.h.col(0);
    state.c = step.c.col(0);
    return masked_log_softmax(decoder_.output.forward(step.h)).col(0);
}

namespace {

TokenId argmax_emittable(const Vector& log_probs) {
    TokenId best = kFirstEmittable;
    for (Index i = kFirstEmittable + 1; i < log_probs.size(); ++i)
        if (log_probs(i) > log_probs(best)) best = static_cast<TokenId>(i);
    return best;
}

} // namespace

Caption decode_greedy(const DecoderRunner& runner, std::size_t max_length) {
    Caption out;
    auto state = runner.initial();
    TokenId token = kBos;
    while (out.ids.size() < max_length) {
        token = argmax_emittable(runner.advance(state, token));
        out.ids.push_back(token);
        if (token == kEos) break;
    }
    return out;
}

Caption decode_sample(const DecoderRunner& runner, Rng& rng, double temperature, std::size_t max_length) {
    if (!(temperature > 0.0)) throw std::invalid_argument("sampling temperature must be positive");
    Caption out;
    auto state = runner.initial();
    TokenId token = kBos;
    while (out.ids.size() < max_length) {
        const Vector lp = runner.advance(state, token);
        const Index n = lp.size() - kFirstEmittable;
        Eigen::ArrayXd w = lp.tail(n).array() / temperature;
        w = (w - w.maxCoeff()).exp();
        double u = rng.uniform() * w.sum();
        token = static_cast<TokenId>(lp.size() - 1);
        for (Index i = 0; i < n; ++i) {
            u -= w(i);
            if (u < 0.0) {
                token = static_cast<TokenId>(i + kFirstEmittable);
                break;
            }
        }
        out.ids.push_back(token);
        if (token == kEos) break;
    }
    return out;
}

std::vector<Hypothesis> decode_beam(const DecoderRunner& runner, std::size_t beam_width, std::size_t k,
                                    std::size_t max_length) {
    if (k == 0 || beam_width < k) throw std::invalid_argument("beam search needs beam_width >= k >= 1");
    if (max_length == 0) throw std::invalid_argument("max_length must be positive");

    struct Live {
        Caption caption;
        double log_prob;
        DecoderRunner::State state;
    };
    struct Candidate {
        std::size_t parent;
        TokenId token;
        double log_prob;
    };
    // Stable ordering: score descending, then lexicographic token sequence.
    auto better = [](const Hypothesis& a, const Hypothesis& b) {
        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
        return a.caption.ids < b.caption.ids;
    };

    std::vector<Live> live{{Caption{}, 0.0, runner.initial()}};
    std::vector<Hypothesis> finished;
    for (std::size_t length = 1; length <= max_length && !live.empty(); ++length) {
        std::vector<Vector> next_lp(live.size());
        std::vector<DecoderRunner::State> next_state(live.size());
        std::vector<Candidate> candidates;
        for (std::size_t p = 0; p < live.size(); ++p) {
            next_state[p] = live[p].state;
            const TokenId last = live[p].caption.ids.empty() ? kBos : live[p].caption.ids.back();
            next_lp[p] = runner.advance(next_state[p], last);
            for (Index t = kFirstEmittable; t < next_lp[p].size(); ++t)
                candidates.push_back({p, static_cast<TokenId>(t), live[p].log_prob + next_lp[p](t)});
        }

        std::vector<Live> next_live;
        const bool last_step = length == max_length;
        std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
            if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
            if (a.parent != b.parent) return a.parent < b.parent;
            return a.token < b.token;
        });
        // The best beam_width expansions survive; at the length limit every
        // expansion is finished as-is.
        const std::size_t keep = last_step ? candidates.size() : std::min(beam_width, candidates.size());
        for (std::size_t ci = 0; ci < keep; ++ci) {
            const auto& cand = candidates[ci];
            Caption cap = live[cand.parent].caption;
            cap.ids.push_back(cand.token);
            if (cand.token == kEos || last_step) {
                finished.push_back({std::move(cap), cand.log_prob});
            } else {
                next_live.push_back({std::move(cap), cand.log_prob, next_state[cand.parent]});
            }
        }
        live = std::move(next_live);

        std::sort(finished.begin(), finished.end(), better);
        if (finished.size() > k) finished.resize(k);
        // Log-probabilities only decrease with length, so no live hypothesis
        // can overtake the current k-th finished one.
        if (finished.size() == k) {
            const double floor = finished.back().log_prob;
            std::erase_if(live, [&](const Live& l) { return l.log_prob <= floor; });
        }
    }
    return finished;
}

double SgdMomentum::step(const std::vector<Matrix*>& params, const std::vector<Matrix*>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("parameter/gradient count mismatch");
    if (velocity_.empty()) {
        velocity_.reserve(params.size());
        for (const Matrix* p : params) velocity_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
    double sq = 0.0;
    for (const Matrix* g : grads) sq += g->squaredNorm();
    const double norm = std::sqrt(sq);
    const double scale = (clip_norm_ > 0.0 && norm > clip_norm_) ? clip_norm_ / norm : 1.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity_[i] = momentum_ * velocity_[i] + scale * (*grads[i]);
        *params[i] -= learning_rate_ * velocity_[i];
    }
    return norm;
}

} // namespace vecspace::nn

#include "doctest.h"

#include "gradcheck.hpp"
#include "vecspace/errors.hpp"
#include "vecspace/latent_engine.hpp"
#include "vecspace/nn/checkpoint.hpp"
#include "vecspace/text_metrics.hpp"

#include <cmath>

using namespace vecspace;
using nn::Matrix;
using nn::Vector;

namespace {

// Randomly initialized networks on 8x8 images; big enough to exercise every
// path, small enough for finite differences.
struct SmallModels {
    nn::Autoencoder ae{3 * 8 * 8, 24, 6};
    nn::Captioner cap{3 * 8 * 8, 16, 8, static_cast<nn::Index>(Vocabulary::toy().size()), 6, 12};

    SmallModels() {
        Rng rng(2024);
        ae.init(rng);
        cap.init(rng);
    }
    EngineModels engine() const { return {&ae, &cap}; }
};

const SmallModels& small() {
    static const SmallModels m;
    return m;
}

ImageTensor random_image(Rng& rng) {
    ImageTensor img(3, 8, 8);
    for (auto& v : img.storage()) v = rng.uniform();
    return img;
}

UpdateConfig zero_config() {
    UpdateConfig c;
    c.gamma2 = c.gamma3 = c.gamma4 = 0.0;
    c.word_term_scale = 0.0;
    return c;
}

// Worst relative error over 20 random coordinates of h.
double worst_fd_error(const LatentVector& h0, const std::function<TermGradient(const LatentVector&)>& term,
                      Rng& rng) {
    LatentVector h = h0;
    const LatentVector analytic = term(h).grad;
    double worst = 0.0;
    for (int s = 0; s < 20; ++s) {
        const auto i = static_cast<nn::Index>(rng.below(static_cast<std::uint64_t>(h.size())));
        const double numeric = gradcheck::central_difference(h(i), [&] { return term(h).loss; });
        worst = std::max(worst, gradcheck::relative_error(analytic(i), numeric));
    }
    return worst;
}

} // namespace

TEST_CASE("init_h is standard normal and seeded") {
    CHECK(init_h(64, 5) == init_h(64, 5));
    CHECK(init_h(64, 5) != init_h(64, 6));
    CHECK(init_h(nn::kDefaultLatentDim, 1).size() == 64);
    const LatentVector v = init_h(100000, 11);
    const double mean = v.mean();
    const double var = (v.array() - mean).square().sum() / static_cast<double>(v.size());
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.05);
    CHECK_THROWS_AS(init_h(0, 1), std::invalid_argument);
}

TEST_CASE("every update term matches central finite differences") {
    const auto& m = small();
    const auto models = m.engine();
    Rng rng(31);
    const Caption caption = Vocabulary::toy().encode("a red circle left of a blue square");
    const ImageTensor target = random_image(rng);
    for (int trial = 0; trial < 5; ++trial) {
        const LatentVector h = init_h(m.ae.latent_dim(), 500 + static_cast<std::uint64_t>(trial));
        CHECK(worst_fd_error(h, [&](const LatentVector& x) { return word_term(models, x, caption); }, rng) <
              gradcheck::kTolerance);
        CHECK(worst_fd_error(h, [&](const LatentVector& x) { return image_term(models, x, target); }, rng) <
              gradcheck::kTolerance);
        CHECK(worst_fd_error(h, [&](const LatentVector& x) { return latent_term(models, x, false); }, rng) <
              gradcheck::kTolerance);
    }
}

TEST_CASE("stop-gradient latent term pulls toward the fixed re-encoding") {
    const auto& m = small();
    const LatentVector h = init_h(m.ae.latent_dim(), 3);
    const TermGradient t = latent_term(m.engine(), h, true);
    const LatentVector e = m.ae.encode(m.ae.generate(h));
    CHECK(t.grad == 2.0 * (h - e));
    CHECK(t.loss == (h - e).squaredNorm());
    CHECK(latent_term(m.engine(), h, false).loss == t.loss);
}

TEST_CASE("a zero configuration leaves h untouched") {
    const auto& m = small();
    const Caption caption = Vocabulary::toy().encode("a red circle");
    const LatentVector h0 = init_h(m.ae.latent_dim(), 9);
    UpdateState state = make_state(m.engine(), h0, {caption}, std::nullopt);
    Rng rng(1);
    for (int i = 0; i < 5; ++i) step(state, m.engine(), zero_config(), rng);
    CHECK(state.h == h0);
    CHECK(state.generated == m.ae.generate(h0));
}

TEST_CASE("noise-only steps have the configured moments") {
    const auto& m = small();
    Rng trng(2);
    UpdateConfig c = zero_config();
    c.gamma4 = 0.05;
    UpdateState state = make_state(m.engine(), init_h(m.ae.latent_dim(), 4), {}, random_image(trng));
    Rng rng(noise_seed(77));
    const std::size_t n = 10000;
    const auto D = m.ae.latent_dim();
    Vector sum = Vector::Zero(D), sumsq = Vector::Zero(D);
    for (std::size_t i = 0; i < n; ++i) {
        const LatentVector before = state.h;
        step(state, m.engine(), c, rng);
        const Vector d = state.h - before;
        sum += d;
        sumsq += d.cwiseProduct(d);
    }
    const double var_target = c.gamma4 * c.gamma4;
    for (nn::Index i = 0; i < D; ++i) {
        const double mean = sum(i) / static_cast<double>(n);
        const double var = sumsq(i) / static_cast<double>(n) - mean * mean;
        CHECK(std::abs(mean) < 4.0 * c.gamma4 / std::sqrt(static_cast<double>(n)));
        CHECK(std::abs(var - var_target) / var_target < 0.05);
    }
}

TEST_CASE("the combined word term is the mean of the per-caption terms") {
    const auto& m = small();
    const auto models = m.engine();
    const auto& vocab = Vocabulary::toy();
    const std::vector<Caption> captions{vocab.encode("a red circle left of a blue square"),
                                        vocab.encode("there is a blue square right of a red circle"),
                                        vocab.encode("a picture of a red circle")};
    const Caption predicted = vocab.encode("a red circle and a green square");
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const LatentVector h = init_h(m.ae.latent_dim(), seed);
        const WordGradient w = word_gradient(models, h, predicted, captions);
        LatentVector expected = LatentVector::Zero(h.size());
        for (std::size_t j = 0; j < captions.size(); ++j) {
            const double g1 = gamma1(predicted, captions[j]);
            CHECK(w.gamma1[j] == g1);
            const LatentVector term = g1 * word_term(models, h, captions[j]).grad;
            CHECK(w.terms[j] == term);
            expected = j == 0 ? term : LatentVector(expected + term);
        }
        expected /= static_cast<double>(captions.size());
        CHECK(w.combined == expected);
    }
}

TEST_CASE("repeating a caption does not change the word term") {
    const auto& m = small();
    const auto& vocab = Vocabulary::toy();
    const Caption c = vocab.encode("a blue triangle above a red square");
    const Caption predicted = vocab.encode("a blue square");
    const LatentVector h = init_h(m.ae.latent_dim(), 12);
    const std::vector<Caption> once{c};
    const std::vector<Caption> thrice{c, c, c};
    CHECK(word_gradient(m.engine(), h, predicted, thrice).combined ==
          word_gradient(m.engine(), h, predicted, once).combined);
    const std::vector<LatentVector> same(4, h);
    CHECK(mean_of_terms(same) == h);
}

TEST_CASE("captions with no unigram overlap contribute nothing") {
    const auto& m = small();
    const auto& vocab = Vocabulary::toy();
    const Caption predicted = vocab.encode("red circle");
    const std::vector<Caption> targets{vocab.encode("there is"), vocab.encode("a red square")};
    const WordGradient w = word_gradient(m.engine(), init_h(m.ae.latent_dim(), 1), predicted, targets);
    CHECK(w.gamma1[0] == 0.0);
    CHECK(w.terms[0] == LatentVector::Zero(m.ae.latent_dim()));
    CHECK(w.gamma1[1] > 0.0);
    CHECK(w.terms[1].norm() > 0.0);
    const WordGradient empty = word_gradient(m.engine(), init_h(m.ae.latent_dim(), 1), Caption{{kEos}}, targets);
    CHECK(empty.gamma1 == std::vector<double>{0.0, 0.0});
    CHECK(empty.combined == LatentVector::Zero(m.ae.latent_dim()));
}

TEST_CASE("run is deterministic and leaves the models untouched") {
    const auto& m = small();
    const auto& vocab = Vocabulary::toy();
    const std::string ae_before = nn::serialize(nn::to_checkpoint(m.ae, 0));
    const std::string cap_before = nn::serialize(nn::to_checkpoint(m.cap, 0));
    const std::vector<Caption> captions{vocab.encode("a red circle left of a blue square")};
    Rng rng(5);
    const ImageTensor target = random_image(rng);
    UpdateConfig c;
    c.iterations = 30;
    c.seed = 17;
    const RunResult a = run(init_h(m.ae.latent_dim(), 1), captions, target, m.engine(), c);
    const RunResult b = run(init_h(m.ae.latent_dim(), 1), captions, target, m.engine(), c);
    CHECK(a.image == b.image);
    CHECK(a.h == b.h);
    CHECK(trace_to_jsonl(a.trace, vocab) == trace_to_jsonl(b.trace, vocab));
    CHECK(nn::serialize(nn::to_checkpoint(m.ae, 0)) == ae_before);
    CHECK(nn::serialize(nn::to_checkpoint(m.cap, 0)) == cap_before);

    c.gamma4 = 0.0;
    c.seed = 1;
    const RunResult d1 = run(init_h(m.ae.latent_dim(), 1), captions, target, m.engine(), c);
    c.seed = 2;
    const RunResult d2 = run(init_h(m.ae.latent_dim(), 1), captions, target, m.engine(), c);
    CHECK(d1.h == d2.h);
}

TEST_CASE("trace records one entry per executed iteration") {
    const auto& m = small();
    const auto& vocab = Vocabulary::toy();
    const std::vector<Caption> captions{vocab.encode("a cyan square")};
    UpdateConfig c;
    c.iterations = 1;
    const RunResult one = run(init_h(m.ae.latent_dim(), 2), captions, std::nullopt, m.engine(), c);
    REQUIRE(one.trace.records.size() == 1);
    const auto& r = one.trace.records[0];
    CHECK(r.word_loss.size() == 1);
    CHECK(r.bleu1.size() == 1);
    CHECK(r.gamma1.size() == 1);
    CHECK(!r.image_loss.has_value());
    CHECK(r.warnings == std::vector<std::string>{"no target image; image term skipped"});
    CHECK(r.noise_norm > 0.0);

    c.iterations = 7;
    const RunResult seven = run(init_h(m.ae.latent_dim(), 2), captions, std::nullopt, m.engine(), c);
    CHECK(seven.trace.records.size() == 7);
    std::size_t lines = 0;
    for (char ch : trace_to_jsonl(seven.trace, vocab)) lines += ch == '\n' ? 1 : 0;
    CHECK(lines == 7);
}

TEST_CASE("a perfect prediction stops the run before any update") {
    const auto& m = small();
    const LatentVector h0 = init_h(m.ae.latent_dim(), 6);
    const Caption predicted = nn::caption_greedy(m.cap, m.ae.generate(h0));
    UpdateConfig c;
    if (strip_framing(predicted).ids.empty()) return;
    const std::vector<Caption> targets{predicted};
    const RunResult r = run(h0, targets, std::nullopt, m.engine(), c);
    REQUIRE(r.trace.records.size() == 1);
    CHECK(r.trace.records[0].stopped);
    CHECK(r.h == h0);
    c.stop_on_perfect_bleu = false;
    c.iterations = 3;
    CHECK(run(h0, targets, std::nullopt, m.engine(), c).trace.records.size() == 3);
}

TEST_CASE("ascent reverses the structured update") {
    const auto& m = small();
    Rng rng(8);
    const ImageTensor target = random_image(rng);
    UpdateConfig c = zero_config();
    c.gamma2 = 1.0;
    c.gamma3 = 0.5;
    c.iterations = 1;
    const LatentVector h0 = init_h(m.ae.latent_dim(), 8);
    const LatentVector down = run(h0, {}, target, m.engine(), c).h - h0;
    c.ascent = true;
    const LatentVector up = run(h0, {}, target, m.engine(), c).h - h0;
    CHECK((down + up).norm() < 1e-12 * down.norm());
    CHECK(down.norm() > 0.0);
}

TEST_CASE("update configs validate and round-trip") {
    UpdateConfig c;
    c.gamma3 = 0.25;
    c.iterations = 9;
    c.ascent = true;
    c.seed = 123;
    const UpdateConfig back = update_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(update_config_from_json("{\"gamma2\": 0.5}").gamma2 == 0.5);
    CHECK(update_config_from_json("").iterations == 200);
    CHECK_THROWS_AS(update_config_from_json("{\"gamma5\": 1}"), FormatError);
    CHECK_THROWS_AS(update_config_from_json("{\"gamma2\": \"x\"}"), FormatError);
    CHECK_THROWS_AS(update_config_from_json("{\"iterations\": 0}"), std::invalid_argument);
    CHECK_THROWS_AS(update_config_from_json("{\"step_size\": 0}"), std::invalid_argument);
    CHECK_THROWS_AS(update_config_from_json("{\"gamma4\": -1}"), std::invalid_argument);

    const auto& m = small();
    CHECK_THROWS_AS(run(init_h(m.ae.latent_dim(), 1), {}, std::nullopt, m.engine(), UpdateConfig{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_state(m.engine(), init_h(3, 1), {}, std::nullopt), std::invalid_argument);
}

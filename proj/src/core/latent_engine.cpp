#include "vecspace/latent_engine.hpp"

#include "json_io.hpp"
#include "vecspace/text_metrics.hpp"

#include <stdexcept>

namespace vecspace {

using nn::Matrix;
using nn::Vector;
using detail::Json;

namespace {

const nn::Autoencoder& autoencoder_of(const EngineModels& m) {
    if (!m.autoencoder) throw std::invalid_argument("latent engine needs an autoencoder");
    return *m.autoencoder;
}

const nn::Captioner& captioner_of(const EngineModels& m) {
    if (!m.captioner) throw std::invalid_argument("caption targets need a captioner");
    return *m.captioner;
}

ImageTensor generate(const nn::Autoencoder& ae, const Matrix& h, nn::ImageGenerator::Cache* cache) {
    const auto shape = ae.image_shape();
    const Matrix y = ae.generator.forward(h, cache);
    return nn::column_to_image(y.col(0), shape.channels, shape.height, shape.width);
}

} // namespace

void validate(const UpdateConfig& c) {
    if (c.gamma2 < 0.0 || c.gamma3 < 0.0 || c.gamma4 < 0.0) throw std::invalid_argument("gammas must be non-negative");
    if (c.word_term_scale < 0.0) throw std::invalid_argument("word_term_scale must be non-negative");
    if (!(c.step_size > 0.0)) throw std::invalid_argument("step_size must be positive");
    if (c.iterations == 0) throw std::invalid_argument("iterations must be at least 1");
}

std::string to_json(const UpdateConfig& c) {
    Json j;
    j["gamma2"] = c.gamma2;
    j["gamma3"] = c.gamma3;
    j["gamma4"] = c.gamma4;
    j["word_term_scale"] = c.word_term_scale;
    j["step_size"] = c.step_size;
    j["iterations"] = c.iterations;
    j["stop_on_perfect_bleu"] = c.stop_on_perfect_bleu;
    j["encoder_branch_stop_gradient"] = c.encoder_branch_stop_gradient;
    j["ascent"] = c.ascent;
    j["seed"] = c.seed;
    return j.dump(2);
}

UpdateConfig update_config_from_json(const std::string& text, UpdateConfig c) {
    if (text.empty()) return c;
    try {
        const Json j = Json::parse(text);
        if (!j.is_object()) throw FormatError("update config must be a JSON object");
        for (const auto& [key, value] : j.items()) {
            if (key == "gamma2") c.gamma2 = value.get<double>();
            else if (key == "gamma3") c.gamma3 = value.get<double>();
            else if (key == "gamma4") c.gamma4 = value.get<double>();
            else if (key == "word_term_scale") c.word_term_scale = value.get<double>();
            else if (key == "step_size") c.step_size = value.get<double>();
            else if (key == "iterations") c.iterations = value.get<std::size_t>();
            else if (key == "stop_on_perfect_bleu") c.stop_on_perfect_bleu = value.get<bool>();
            else if (key == "encoder_branch_stop_gradient") c.encoder_branch_stop_gradient = value.get<bool>();
            else if (key == "ascent") c.ascent = value.get<bool>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else throw FormatError("unknown update config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed update config: ") + e.what());
    }
    validate(c);
    return c;
}

LatentVector init_h(Index dim, std::uint64_t seed) {
    if (dim < 1) throw std::invalid_argument("latent dimension must be positive");
    Rng rng(seed);
    LatentVector h(dim);
    for (Index i = 0; i < dim; ++i) h(i) = rng.normal();
    return h;
}

TermGradient word_term(const EngineModels& models, const LatentVector& h, const Caption& caption) {
    const auto& ae = autoencoder_of(models);
    const auto& cap = captioner_of(models);
    nn::ImageGenerator::Cache cache;
    const ImageTensor img = generate(ae, h, &cache);
    const nn::WordLoss w = nn::word_loss(cap, img, caption, true);
    TermGradient out;
    out.loss = w.loss;
    out.grad = ae.generator.backward(cache, nn::image_to_column(w.grad), nullptr, true).col(0);
    return out;
}

TermGradient image_term(const EngineModels& models, const LatentVector& h, const ImageTensor& target) {
    const auto& ae = autoencoder_of(models);
    if (static_cast<Index>(target.size()) != ae.generator.pixel_count())
        throw std::invalid_argument("target image does not match the generator output");
    nn::ImageGenerator::Cache cache;
    const Matrix y = ae.generator.forward(h, &cache);
    const Matrix diff = y - nn::image_to_column(target);
    TermGradient out;
    out.loss = diff.squaredNorm();
    out.grad = ae.generator.backward(cache, 2.0 * diff, nullptr, true).col(0);
    return out;
}

TermGradient latent_term(const EngineModels& models, const LatentVector& h, bool stop_gradient) {
    const auto& ae = autoencoder_of(models);
    nn::ImageGenerator::Cache gen_cache;
    nn::ImageEncoder::Cache enc_cache;
    const Matrix y = ae.generator.forward(h, &gen_cache);
    const Matrix e = ae.encoder.forward(y, &enc_cache);
    const Vector diff = h - e.col(0);
    TermGradient out;
    out.loss = diff.squaredNorm();
    out.grad = 2.0 * diff;
    if (!stop_gradient) {
        const Matrix d_image = ae.encoder.backward(enc_cache, -2.0 * diff, nullptr, true);
        out.grad += ae.generator.backward(gen_cache, d_image, nullptr, true).col(0);
    }
    return out;
}

LatentVector mean_of_terms(std::span<const LatentVector> terms) {
    if (terms.empty()) throw std::invalid_argument("mean of an empty term list");
    bool identical = true;
    for (std::size_t j = 1; j < terms.size() && identical; ++j)
        identical = terms[j].size() == terms[0].size() && (terms[j].array() == terms[0].array()).all();
    if (identical) return terms[0];
    LatentVector sum = terms[0];
    for (std::size_t j = 1; j < terms.size(); ++j) sum += terms[j];
    return sum / static_cast<double>(terms.size());
}

WordGradient word_gradient(const EngineModels& models, const LatentVector& h, const Caption& predicted,
                           std::span<const Caption> targets) {
    if (targets.empty()) throw std::invalid_argument("word gradient needs at least one caption");
    const auto& ae = autoencoder_of(models);
    const auto& cap = captioner_of(models);
    const ImageTensor img = ae.generate(h);
    const bool empty_prediction = strip_framing(predicted).ids.empty();

    WordGradient out;
    for (const auto& target : targets) {
        double b1 = 0.0;
        double g1 = 0.0;
        if (!empty_prediction) {
            const Caption refs[] = {target};
            b1 = bleu(predicted, refs, 1).score;
            g1 = gamma1(predicted, target);
        }
        out.bleu1.push_back(b1);
        out.gamma1.push_back(g1);
        if (g1 == 0.0) {
            out.loss.push_back(nn::word_loss(cap, img, target, false).loss);
            out.terms.push_back(LatentVector::Zero(h.size()));
        } else {
            TermGradient t = word_term(models, h, target);
            out.loss.push_back(t.loss);
            out.terms.push_back(g1 * t.grad);
        }
    }
    out.combined = mean_of_terms(out.terms);
    return out;
}

UpdateState make_state(const EngineModels& models, LatentVector h, std::vector<Caption> targets,
                       std::optional<ImageTensor> target_image) {
    const auto& ae = autoencoder_of(models);
    if (h.size() != ae.latent_dim()) throw std::invalid_argument("latent vector has the wrong dimension");
    if (!targets.empty()) captioner_of(models);
    UpdateState s;
    s.h = std::move(h);
    s.targets = std::move(targets);
    s.target_image = std::move(target_image);
    s.generated = ae.generate(s.h);
    if (models.captioner) s.predicted = nn::caption_greedy(*models.captioner, s.generated);
    return s;
}

IterationRecord step(UpdateState& state, const EngineModels& models, const UpdateConfig& config, Rng& rng) {
    validate(config);
    const auto& ae = autoencoder_of(models);
    const Index dim = state.h.size();
    IterationRecord rec;
    rec.predicted = state.predicted;

    Vector direction = Vector::Zero(dim);
    if (!state.targets.empty()) {
        WordGradient w = word_gradient(models, state.h, state.predicted, state.targets);
        rec.word_loss = std::move(w.loss);
        rec.bleu1 = std::move(w.bleu1);
        rec.gamma1 = std::move(w.gamma1);
        if (config.word_term_scale > 0.0) {
            rec.word_grad_norm = w.combined.norm();
            direction += config.word_term_scale * w.combined;
        }
    }
    if (state.target_image) {
        const TermGradient t = image_term(models, state.h, *state.target_image);
        rec.image_loss = t.loss;
        if (config.gamma2 > 0.0) {
            rec.image_grad_norm = t.grad.norm();
            direction += config.gamma2 * t.grad;
        }
    } else if (config.gamma2 > 0.0) {
        rec.warnings.push_back("no target image; image term skipped");
    }
    const TermGradient lat = latent_term(models, state.h, config.encoder_branch_stop_gradient);
    rec.latent_loss = lat.loss;
    if (config.gamma3 > 0.0) {
        rec.latent_grad_norm = lat.grad.norm();
        direction += config.gamma3 * lat.grad;
    }

    Vector noise(dim);
    for (Index i = 0; i < dim; ++i) noise(i) = config.gamma4 * rng.normal();
    rec.noise_norm = noise.norm();

    const double sign = config.ascent ? 1.0 : -1.0;
    state.h += sign * config.step_size * direction;
    state.h += noise;
    state.generated = ae.generate(state.h);
    if (models.captioner) state.predicted = nn::caption_greedy(*models.captioner, state.generated);
    return rec;
}

RunResult run(const LatentVector& h0, std::span<const Caption> targets, const std::optional<ImageTensor>& target_image,
              const EngineModels& models, const UpdateConfig& config) {
    validate(config);
    if (targets.empty() && !target_image) throw std::invalid_argument("run needs a target caption or image");
    UpdateState state =
        make_state(models, h0, std::vector<Caption>(targets.begin(), targets.end()), target_image);
    Rng rng(noise_seed(config.seed));
    RunResult out;
    for (std::size_t it = 0; it < config.iterations; ++it) {
        if (config.stop_on_perfect_bleu && !state.targets.empty()) {
            const bool empty_prediction = strip_framing(state.predicted).ids.empty();
            bool perfect = !empty_prediction;
            for (std::size_t j = 0; j < state.targets.size() && perfect; ++j) {
                const Caption refs[] = {state.targets[j]};
                perfect = bleu(state.predicted, refs, 1).score == 1.0;
            }
            if (perfect) {
                IterationRecord rec;
                rec.iteration = it;
                rec.predicted = state.predicted;
                const WordGradient w = word_gradient(models, state.h, state.predicted, state.targets);
                rec.word_loss = w.loss;
                rec.bleu1 = w.bleu1;
                rec.gamma1 = w.gamma1;
                if (state.target_image) rec.image_loss = image_term(models, state.h, *state.target_image).loss;
                rec.latent_loss = latent_term(models, state.h, config.encoder_branch_stop_gradient).loss;
                rec.stopped = true;
                out.trace.records.push_back(std::move(rec));
                break;
            }
        }
        IterationRecord rec = step(state, models, config, rng);
        rec.iteration = it;
        out.trace.records.push_back(std::move(rec));
    }
    out.image = std::move(state.generated);
    out.h = std::move(state.h);
    return out;
}

std::string trace_to_jsonl(const UpdateTrace& trace, const Vocabulary& vocab) {
    std::string out;
    for (const auto& r : trace.records) {
        Json j;
        j["iteration"] = r.iteration;
        j["predicted"] = vocab.decode(r.predicted);
        j["word_loss"] = r.word_loss;
        j["bleu1"] = r.bleu1;
        j["gamma1"] = r.gamma1;
        j["image_loss"] = r.image_loss ? Json(*r.image_loss) : Json(nullptr);
        j["latent_loss"] = r.latent_loss;
        j["grad_norm"] = {{"word", r.word_grad_norm}, {"image", r.image_grad_norm}, {"latent", r.latent_grad_norm}};
        j["noise_norm"] = r.noise_norm;
        j["stopped"] = r.stopped;
        j["warnings"] = r.warnings;
        out += j.dump();
        out += '\n';
    }
    return out;
}

void write_trace(const UpdateTrace& trace, const Vocabulary& vocab, const std::filesystem::path& path) {
    detail::write_text_file(path, trace_to_jsonl(trace, vocab));
}

} // namespace vecspace

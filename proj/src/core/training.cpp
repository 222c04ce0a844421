#include "vecspace/nn/training.hpp"

#include "json_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string_view>
#include <stdexcept>

namespace vecspace::nn {

using detail::Json;

namespace {

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<std::size_t> iota_order(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

void validate(const SgdRecipe& r) {
    if (r.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (r.learning_rate < 0.0) throw std::invalid_argument("learning_rate must be non-negative");
}

Json recipe_json(const SgdRecipe& r) {
    return {{"optimizer", "sgd-momentum"}, {"epochs", r.epochs},           {"seed", r.seed},
            {"learning_rate", r.learning_rate}, {"momentum", r.momentum}, {"batch_size", r.batch_size},
            {"clip_norm", r.clip_norm},         {"lr_decay", r.lr_decay}};
}

// Unknown keys are almost always typos; reject them rather than train with defaults.
void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, const char* what) {
    if (!j.is_object()) throw FormatError(std::string(what) + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw FormatError(std::string("unknown key in ") + what + ": " + key);
}

template <class F>
auto json_errors_as_format(F&& f) {
    try {
        return f();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed training config: ") + e.what());
    }
}

SgdRecipe recipe_from(const Json& j, SgdRecipe r) {
    check_keys(j, {"optimizer", "epochs", "seed", "learning_rate", "momentum", "batch_size", "clip_norm", "lr_decay"},
               "recipe");
    if (j.value("optimizer", std::string("sgd-momentum")) != "sgd-momentum")
        throw FormatError("the only supported optimizer is sgd-momentum");
    r.epochs = j.value("epochs", r.epochs);
    r.seed = j.value("seed", r.seed);
    r.learning_rate = j.value("learning_rate", r.learning_rate);
    r.momentum = j.value("momentum", r.momentum);
    r.batch_size = j.value("batch_size", r.batch_size);
    r.clip_norm = j.value("clip_norm", r.clip_norm);
    r.lr_decay = j.value("lr_decay", r.lr_decay);
    return r;
}

Json parse_or_empty(const std::string& text) {
    if (text.empty()) return Json::object();
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed training config: ") + e.what());
    }
}

struct CaptionBatch {
    Matrix images;
    std::vector<std::vector<TokenId>> targets;
    std::vector<Index> owner;  // image column for each target
};

CaptionBatch caption_batch(const Corpus& corpus, std::span<const std::size_t> records) {
    CaptionBatch batch;
    std::vector<const ImageTensor*> imgs;
    for (std::size_t r : records) {
        const auto& rec = corpus.records[r];
        for (const auto& c : rec.captions) {
            batch.targets.push_back(decoder_target(c));
            batch.owner.push_back(static_cast<Index>(imgs.size()));
        }
        imgs.push_back(&rec.image);
    }
    batch.images = images_to_matrix(imgs);
    return batch;
}

Matrix expand_context(const Matrix& features, const std::vector<Index>& owner) {
    Matrix ctx(features.rows(), static_cast<Index>(owner.size()));
    for (std::size_t i = 0; i < owner.size(); ++i) ctx.col(static_cast<Index>(i)) = features.col(owner[i]);
    return ctx;
}

Matrix collapse_context(const Matrix& d_ctx, const std::vector<Index>& owner, Index num_images) {
    Matrix out = Matrix::Zero(d_ctx.rows(), num_images);
    for (std::size_t i = 0; i < owner.size(); ++i) out.col(owner[i]) += d_ctx.col(static_cast<Index>(i));
    return out;
}

} // namespace

double reconstruction_mse(const Autoencoder& model, std::span<const ImageTensor> images) {
    if (images.empty()) return 0.0;
    double total = 0.0;
    constexpr std::size_t chunk = 64;
    for (std::size_t start = 0; start < images.size(); start += chunk) {
        std::vector<const ImageTensor*> ptrs;
        for (std::size_t i = start; i < std::min(images.size(), start + chunk); ++i) ptrs.push_back(&images[i]);
        const Matrix x = images_to_matrix(ptrs);
        const Matrix y = model.generator.forward(model.encoder.forward(x));
        total += (y - x).squaredNorm();
    }
    return total / static_cast<double>(images.size() * images.front().size());
}

Autoencoder train_autoencoder(std::span<const ImageTensor> images, const AutoencoderConfig& config, TrainingLog* log) {
    if (images.empty()) throw std::invalid_argument("cannot train the autoencoder on an empty corpus");
    validate(config.recipe);
    Stopwatch clock;
    const auto pixels = static_cast<Index>(images.front().size());
    Rng rng(config.recipe.seed);
    Autoencoder model(pixels, config.hidden, config.latent);
    model.init(rng);
    // Start the output layer at the mean image so training does not stall there.
    Vector mean = Vector::Zero(pixels);
    for (const auto& img : images) mean += Eigen::Map<const Vector>(img.values().data(), pixels);
    mean /= static_cast<double>(images.size());
    for (Index i = 0; i < pixels; ++i) {
        const double p = std::clamp(mean(i), 1e-3, 1.0 - 1e-3);
        model.generator.pixels.bias(i, 0) = std::log(p / (1.0 - p));
    }
    Autoencoder grad = zeros_like(model);
    auto params = parameter_list(model);
    auto grads = parameter_list(grad);
    SgdMomentum opt(config.recipe.learning_rate, config.recipe.momentum, config.recipe.clip_norm);

    if (log) log->initial_loss = reconstruction_mse(model, images);
    auto order = iota_order(images.size());
    double lr = config.recipe.learning_rate;
    for (std::size_t epoch = 0; epoch < config.recipe.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += config.recipe.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.recipe.batch_size);
            std::vector<const ImageTensor*> ptrs;
            for (std::size_t i = start; i < end; ++i) ptrs.push_back(&images[order[i]]);
            const Matrix x = images_to_matrix(ptrs);
            const auto B = static_cast<double>(ptrs.size());

            ImageEncoder::Cache enc_cache;
            ImageGenerator::Cache gen_cache;
            const Matrix code = model.encoder.forward(x, &enc_cache);
            Matrix noisy = code;
            if (config.latent_noise > 0.0)
                for (Index k = 0; k < noisy.size(); ++k) noisy.data()[k] += config.latent_noise * rng.normal();
            const Matrix y = model.generator.forward(noisy, &gen_cache);
            const Matrix diff = y - x;
            epoch_loss += diff.squaredNorm() / static_cast<double>(pixels);
            seen += ptrs.size();

            set_zero(grad);
            Matrix d_code = model.generator.backward(gen_cache, 2.0 * diff / B, &grad.generator, true);
            if (config.latent_penalty > 0.0) d_code += 2.0 * config.latent_penalty * code / B;
            model.encoder.backward(enc_cache, d_code, &grad.encoder, false);
            opt.step(params, grads);
        }
        if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(seen));
        lr *= config.recipe.lr_decay;
        opt.set_learning_rate(lr);
    }
    if (log) log->seconds = clock.seconds();
    return model;
}

double mean_caption_loss(const Captioner& model, const Corpus& corpus) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < corpus.records.size(); ++r) {
        const std::size_t idx[] = {r};
        const CaptionBatch batch = caption_batch(corpus, idx);
        if (batch.targets.empty()) continue;
        const Matrix ctx = expand_context(model.features(batch.images), batch.owner);
        const std::vector<double> w(batch.targets.size(), 1.0);
        total += teacher_force(model.decoder, model.embedding, ctx, batch.targets, w, nullptr, nullptr, false).loss;
        count += batch.targets.size();
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

Captioner train_captioner(const Corpus& corpus, const CaptionerConfig& config, TrainingLog* log) {
    std::size_t num_captions = 0;
    for (const auto& r : corpus.records) num_captions += r.captions.size();
    if (corpus.records.empty() || num_captions == 0)
        throw std::invalid_argument("cannot train the captioner without (image, caption) pairs");
    validate(config.recipe);
    Stopwatch clock;
    const auto pixels = static_cast<Index>(corpus.records.front().image.size());
    Rng rng(config.recipe.seed);
    Captioner model(pixels, config.feature_hidden, config.feature_dim,
                    static_cast<Index>(corpus.vocabulary.size()), config.embed, config.hidden);
    model.init(rng);
    Captioner grad = zeros_like(model);
    auto params = parameter_list(model);
    auto grads = parameter_list(grad);
    SgdMomentum opt(config.recipe.learning_rate, config.recipe.momentum, config.recipe.clip_norm);

    if (log) log->initial_loss = mean_caption_loss(model, corpus);
    auto order = iota_order(corpus.records.size());
    double lr = config.recipe.learning_rate;
    for (std::size_t epoch = 0; epoch < config.recipe.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += config.recipe.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.recipe.batch_size);
            CaptionBatch batch =
                caption_batch(corpus, std::span<const std::size_t>(order.data() + start, end - start));
            if (batch.targets.empty()) continue;
            if (config.input_noise > 0.0)
                for (Index k = 0; k < batch.images.size(); ++k) batch.images.data()[k] += config.input_noise * rng.normal();
            const double w = 1.0 / static_cast<double>(batch.targets.size());
            const std::vector<double> weights(batch.targets.size(), w);

            set_zero(grad);
            Captioner::FeatureCache cache;
            const Matrix features = model.features(batch.images, &cache);
            const Matrix ctx = expand_context(features, batch.owner);
            const TeacherForcing tf = teacher_force(model.decoder, model.embedding, ctx, batch.targets, weights,
                                                    &grad.decoder, &grad.embedding, true);
            model.feature_backward(cache, collapse_context(tf.d_context, batch.owner, batch.images.cols()), &grad,
                                   false);
            opt.step(params, grads);
            epoch_loss += tf.loss * static_cast<double>(batch.targets.size());
            seen += batch.targets.size();
        }
        if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(seen, 1)));
        lr *= config.recipe.lr_decay;
        opt.set_learning_rate(lr);
    }
    if (log) log->seconds = clock.seconds();
    return model;
}

Paraphraser train_paraphraser(std::span<const CaptionPair> pairs, const ParaphraserConfig& config, TrainingLog* log) {
    if (pairs.empty()) throw std::invalid_argument("cannot train the paraphraser on an empty pair set");
    validate(config.recipe);
    Stopwatch clock;
    const auto vocab = static_cast<Index>(Vocabulary::toy().size());
    Rng rng(config.recipe.seed);
    Paraphraser model(vocab, config.embed, config.hidden);
    model.init(rng);
    Paraphraser grad = zeros_like(model);
    auto params = parameter_list(model);
    auto grads = parameter_list(grad);
    SgdMomentum opt(config.recipe.learning_rate, config.recipe.momentum, config.recipe.clip_norm);

    auto batch_loss = [&](std::span<const std::size_t> idx, bool train) {
        std::vector<Caption> sources;
        std::vector<std::vector<TokenId>> targets;
        for (std::size_t i : idx) {
            sources.push_back(pairs[i].source);
            targets.push_back(decoder_target(pairs[i].target));
        }
        const std::vector<double> weights(idx.size(), 1.0 / static_cast<double>(idx.size()));
        Paraphraser::EncoderCache cache;
        const Matrix sentence = model.encode(sources, train ? &cache : nullptr);
        if (!train)
            return teacher_force(model.decoder, model.embedding, sentence, targets, weights, nullptr, nullptr, false)
                .loss;
        set_zero(grad);
        const TeacherForcing tf = teacher_force(model.decoder, model.embedding, sentence, targets, weights,
                                                &grad.decoder, &grad.embedding, true);
        model.encode_backward(cache, tf.d_context, &grad);
        opt.step(params, grads);
        return tf.loss;
    };

    auto order = iota_order(pairs.size());
    if (log) {
        double total = 0.0;
        std::size_t n = 0;
        for (std::size_t start = 0; start < order.size(); start += 256) {
            const std::size_t end = std::min(order.size(), start + 256);
            total += batch_loss(std::span<const std::size_t>(order.data() + start, end - start), false) *
                     static_cast<double>(end - start);
            n += end - start;
        }
        log->initial_loss = total / static_cast<double>(n);
    }
    double lr = config.recipe.learning_rate;
    for (std::size_t epoch = 0; epoch < config.recipe.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += config.recipe.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.recipe.batch_size);
            epoch_loss += batch_loss(std::span<const std::size_t>(order.data() + start, end - start), true) *
                          static_cast<double>(end - start);
            seen += end - start;
        }
        if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(seen));
        lr *= config.recipe.lr_decay;
        opt.set_learning_rate(lr);
    }
    if (log) log->seconds = clock.seconds();
    return model;
}

std::string to_json(const AutoencoderConfig& c) {
    return Json{{"component", "autoencoder"}, {"hidden", c.hidden},
                {"latent", c.latent},             {"latent_noise", c.latent_noise},
                {"latent_penalty", c.latent_penalty}, {"recipe", recipe_json(c.recipe)}}
        .dump(2);
}

std::string to_json(const CaptionerConfig& c) {
    return Json{{"component", "captioner"}, {"feature_hidden", c.feature_hidden}, {"feature_dim", c.feature_dim},
                {"embed", c.embed},         {"hidden", c.hidden},                 {"input_noise", c.input_noise},
                {"recipe", recipe_json(c.recipe)}}
        .dump(2);
}

std::string to_json(const ParaphraserConfig& c) {
    return Json{{"component", "paraphraser"}, {"embed", c.embed}, {"hidden", c.hidden},
                {"recipe", recipe_json(c.recipe)}}
        .dump(2);
}

AutoencoderConfig autoencoder_config_from_json(const std::string& text) {
    const Json j = parse_or_empty(text);
    check_keys(j, {"component", "hidden", "latent", "latent_noise", "latent_penalty", "recipe"}, "autoencoder config");
    return json_errors_as_format([&] {
        AutoencoderConfig c;
        c.hidden = j.value("hidden", c.hidden);
        c.latent = j.value("latent", c.latent);
        c.latent_noise = j.value("latent_noise", c.latent_noise);
        c.latent_penalty = j.value("latent_penalty", c.latent_penalty);
        if (c.latent_noise < 0.0 || c.latent_penalty < 0.0)
            throw FormatError("latent_noise and latent_penalty must be non-negative");
        if (j.contains("recipe")) c.recipe = recipe_from(j.at("recipe"), c.recipe);
        return c;
    });
}

CaptionerConfig captioner_config_from_json(const std::string& text) {
    const Json j = parse_or_empty(text);
    check_keys(j, {"component", "feature_hidden", "feature_dim", "embed", "hidden", "input_noise", "recipe"},
               "captioner config");
    return json_errors_as_format([&] {
        CaptionerConfig c;
        c.feature_hidden = j.value("feature_hidden", c.feature_hidden);
        c.feature_dim = j.value("feature_dim", c.feature_dim);
        c.embed = j.value("embed", c.embed);
        c.hidden = j.value("hidden", c.hidden);
        c.input_noise = j.value("input_noise", c.input_noise);
        if (c.input_noise < 0.0) throw FormatError("input_noise must be non-negative");
        if (j.contains("recipe")) c.recipe = recipe_from(j.at("recipe"), c.recipe);
        return c;
    });
}

ParaphraserConfig paraphraser_config_from_json(const std::string& text) {
    const Json j = parse_or_empty(text);
    check_keys(j, {"component", "embed", "hidden", "recipe"}, "paraphraser config");
    return json_errors_as_format([&] {
        ParaphraserConfig c;
        c.embed = j.value("embed", c.embed);
        c.hidden = j.value("hidden", c.hidden);
        if (j.contains("recipe")) c.recipe = recipe_from(j.at("recipe"), c.recipe);
        return c;
    });
}

} // namespace vecspace::nn

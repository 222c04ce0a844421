#include "vecspace/nn/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vecspace::nn {

Matrix image_to_column(const ImageTensor& image) {
    Matrix m(static_cast<Index>(image.size()), 1);
    const auto v = image.values();
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Index>(i), 0) = v[i];
    return m;
}

Matrix images_to_matrix(std::span<const ImageTensor* const> images) {
    if (images.empty()) return {};
    const auto rows = static_cast<Index>(images.front()->size());
    Matrix m(rows, static_cast<Index>(images.size()));
    for (std::size_t b = 0; b < images.size(); ++b) {
        if (static_cast<Index>(images[b]->size()) != rows) throw std::invalid_argument("image size mismatch");
        m.col(static_cast<Index>(b)) = Eigen::Map<const Vector>(images[b]->values().data(), rows);
    }
    return m;
}

ImageTensor column_to_image(const Eigen::Ref<const Vector>& column, int channels, int height, int width) {
    ImageTensor img(channels, height, width);
    if (static_cast<Index>(img.size()) != column.size()) throw std::invalid_argument("pixel count mismatch");
    Eigen::Map<Vector>(img.values().data(), column.size()) = column;
    return img;
}

ImageShape image_shape_for(Index pixels) {
    const auto side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(pixels) / kChannels)));
    if (static_cast<Index>(side) * side * kChannels != pixels)
        throw std::invalid_argument("pixel count is not a square 3-channel image");
    return {kChannels, side, side};
}

void ImageEncoder::init(Rng& rng) {
    hidden.init(rng);
    code.init(rng);
}

Matrix ImageEncoder::forward(const Matrix& images, Cache* cache) const {
    Matrix z = hidden.forward(images).array().tanh().matrix();
    Matrix out = code.forward(z);
    if (cache) {
        cache->input = images;
        cache->hidden = std::move(z);
    }
    return out;
}

Matrix ImageEncoder::backward(const Cache& cache, const Matrix& d_code, ImageEncoder* grad,
                              bool need_input_grad) const {
    const Matrix dz = code.backward(cache.hidden, d_code, grad ? &grad->code : nullptr);
    const Matrix da = (dz.array() * (1.0 - cache.hidden.array().square())).matrix();
    return hidden.backward(cache.input, da, grad ? &grad->hidden : nullptr, need_input_grad);
}

void ImageGenerator::init(Rng& rng) {
    hidden.init(rng);
    pixels.init(rng);
}

Matrix ImageGenerator::forward(const Matrix& latent, Cache* cache) const {
    Matrix z = hidden.forward(latent).array().tanh().matrix();
    Matrix y = sigmoid(pixels.forward(z));
    if (cache) {
        cache->input = latent;
        cache->hidden = std::move(z);
        cache->output = y;
    }
    return y;
}

Matrix ImageGenerator::backward(const Cache& cache, const Matrix& d_images, ImageGenerator* grad,
                                bool need_latent_grad) const {
    const Matrix da2 = (d_images.array() * cache.output.array() * (1.0 - cache.output.array())).matrix();
    const Matrix dz = pixels.backward(cache.hidden, da2, grad ? &grad->pixels : nullptr);
    const Matrix da1 = (dz.array() * (1.0 - cache.hidden.array().square())).matrix();
    return hidden.backward(cache.input, da1, grad ? &grad->hidden : nullptr, need_latent_grad);
}

ImageTensor Autoencoder::generate(const Vector& h) const {
    const auto shape = image_shape();
    const Matrix y = generator.forward(h);
    return column_to_image(y.col(0), shape.channels, shape.height, shape.width);
}

Vector Autoencoder::encode(const ImageTensor& image) const {
    return encoder.forward(image_to_column(image)).col(0);
}

void Captioner::init(Rng& rng) {
    feature_hidden.init(rng);
    feature_out.init(rng);
    init_glorot(embedding, rng);
    decoder.init_params(rng);
}

Matrix Captioner::features(const Matrix& images, FeatureCache* cache) const {
    // Inputs are shifted so the background reads as zero.
    const Matrix shifted = (images.array() - kBackground).matrix();
    Matrix z = feature_hidden.forward(shifted).array().tanh().matrix();
    Matrix f = feature_out.forward(z).array().tanh().matrix();
    if (cache) {
        cache->input = shifted;
        cache->hidden = std::move(z);
        cache->feature = f;
    }
    return f;
}

Matrix Captioner::feature_backward(const FeatureCache& cache, const Matrix& d_feature, Captioner* grad,
                                   bool need_input_grad) const {
    const Matrix da2 = (d_feature.array() * (1.0 - cache.feature.array().square())).matrix();
    const Matrix dz = feature_out.backward(cache.hidden, da2, grad ? &grad->feature_out : nullptr);
    const Matrix da1 = (dz.array() * (1.0 - cache.hidden.array().square())).matrix();
    return feature_hidden.backward(cache.input, da1, grad ? &grad->feature_hidden : nullptr, need_input_grad);
}

DecoderRunner Captioner::runner(const ImageTensor& image) const {
    return DecoderRunner(decoder, embedding, features(image_to_column(image)).col(0));
}

std::vector<TokenId> decoder_target(const Caption& caption) {
    std::vector<TokenId> out = strip_framing(caption).ids;
    out.push_back(kEos);
    return out;
}

WordLoss word_loss(const Captioner& captioner, const ImageTensor& image, const Caption& reference, bool want_grad) {
    const std::vector<std::vector<TokenId>> targets{decoder_target(reference)};
    const double weights[] = {1.0};
    Captioner::FeatureCache cache;
    const Matrix feature = captioner.features(image_to_column(image), &cache);
    const TeacherForcing tf =
        teacher_force(captioner.decoder, captioner.embedding, feature, targets, weights, nullptr, nullptr, want_grad);
    WordLoss out;
    out.loss = tf.loss;
    out.summands = targets[0].size();
    if (want_grad) {
        const Matrix d_image = captioner.feature_backward(cache, tf.d_context, nullptr, true);
        out.grad = column_to_image(d_image.col(0), image.channels(), image.height(), image.width());
    }
    return out;
}

Caption caption_greedy(const Captioner& captioner, const ImageTensor& image, std::size_t max_length) {
    return decode_greedy(captioner.runner(image), max_length);
}

std::vector<Hypothesis> caption_beam(const Captioner& captioner, const ImageTensor& image, std::size_t beam_width,
                                     std::size_t k, std::size_t max_length) {
    return decode_beam(captioner.runner(image), beam_width, k, max_length);
}

void Paraphraser::init(Rng& rng) {
    init_glorot(embedding, rng);
    encoder.init(rng);
    decoder.init_params(rng);
}

Matrix Paraphraser::encode(std::span<const Caption> sources, EncoderCache* cache) const {
    const auto B = static_cast<Index>(sources.size());
    const Index H = encoder.hidden_size();
    const Index E = embedding.rows();
    std::vector<std::vector<TokenId>> reversed;
    reversed.reserve(sources.size());
    std::size_t T = 0;
    for (const auto& s : sources) {
        auto ids = strip_framing(s).ids;
        std::reverse(ids.begin(), ids.end());
        T = std::max(T, ids.size());
        reversed.push_back(std::move(ids));
    }

    EncoderCache local;
    EncoderCache& c = cache ? *cache : local;
    c.steps.assign(T, {});
    c.inputs.assign(T, std::vector<TokenId>(sources.size(), kPad));
    c.masks = Matrix::Zero(static_cast<Index>(T), B);

    // Sequences are left-padded; a column's state stays zero until its first token.
    Matrix h = Matrix::Zero(H, B);
    Matrix cell = Matrix::Zero(H, B);
    Matrix x(E, B);
    for (std::size_t t = 0; t < T; ++t) {
        for (Index b = 0; b < B; ++b) {
            const auto& seq = reversed[static_cast<std::size_t>(b)];
            const std::size_t offset = T - seq.size();
            if (t >= offset) {
                c.inputs[t][static_cast<std::size_t>(b)] = seq[t - offset];
                c.masks(static_cast<Index>(t), b) = 1.0;
            }
            x.col(b) = embedding.col(c.inputs[t][static_cast<std::size_t>(b)]);
        }
        encoder.forward(x, h, cell, c.steps[t]);
        const auto mask = c.masks.row(static_cast<Index>(t)).array();
        h = (c.steps[t].h.array().rowwise() * mask).matrix();
        cell = (c.steps[t].c.array().rowwise() * mask).matrix();
    }
    return h;
}

void Paraphraser::encode_backward(const EncoderCache& cache, const Matrix& d_sentence, Paraphraser* grad) const {
    const Index B = d_sentence.cols();
    Matrix dh = d_sentence;
    Matrix dc = Matrix::Zero(dh.rows(), B);
    Matrix dx, dh_prev, dc_prev;
    for (std::size_t t = cache.steps.size(); t-- > 0;) {
        const auto mask = cache.masks.row(static_cast<Index>(t)).array();
        const Matrix dh_step = (dh.array().rowwise() * mask).matrix();
        const Matrix dc_step = (dc.array().rowwise() * mask).matrix();
        encoder.backward(cache.steps[t], dh_step, dc_step, grad ? &grad->encoder : nullptr, &dx, dh_prev, dc_prev);
        if (grad)
            for (Index b = 0; b < B; ++b)
                if (mask(b) != 0.0) grad->embedding.col(cache.inputs[t][static_cast<std::size_t>(b)]) += dx.col(b);
        dh = std::move(dh_prev);
        dc = std::move(dc_prev);
    }
}

DecoderRunner Paraphraser::runner(const Caption& source) const {
    const Caption sources[] = {source};
    return DecoderRunner(decoder, embedding, encode(sources).col(0));
}

double paraphrase_loss(const Paraphraser& model, const Caption& source, const Caption& target) {
    const Caption sources[] = {source};
    const std::vector<std::vector<TokenId>> targets{decoder_target(target)};
    const double weights[] = {1.0};
    return teacher_force(model.decoder, model.embedding, model.encode(sources), targets, weights, nullptr, nullptr,
                         false)
        .loss;
}

Caption paraphrase(const Paraphraser& model, const Caption& source, DecodeMode mode, Rng* rng, double temperature) {
    const DecoderRunner r = model.runner(source);
    if (mode == DecodeMode::Greedy) return decode_greedy(r);
    if (!rng) throw std::invalid_argument("sampled paraphrasing needs a random source");
    return decode_sample(r, *rng, temperature);
}

ParaphraseChain chain_paraphrase(const Paraphraser& model, const Caption& y, std::size_t steps, std::uint64_t seed,
                                 DecodeMode mode, double temperature) {
    if (steps == 0) throw std::invalid_argument("chain_paraphrase needs at least one step");
    ParaphraseChain chain;
    chain.mode = mode;
    chain.temperature = temperature;
    chain.seed = seed;
    Rng rng(seed);
    Caption current = y;
    for (std::size_t i = 0; i < steps; ++i) {
        current = paraphrase(model, current, mode, &rng, temperature);
        chain.captions.push_back(current);
    }
    return chain;
}

} // namespace vecspace::nn

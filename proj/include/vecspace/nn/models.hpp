#pragma once

#include "vecspace/nn/layers.hpp"
#include "vecspace/toy_world.hpp"

#include <optional>
#include <vector>

namespace vecspace::nn {

inline constexpr Index kDefaultLatentDim = 64;

// Packs images as columns of a (C*H*W) x B matrix.
Matrix images_to_matrix(std::span<const ImageTensor* const> images);
Matrix image_to_column(const ImageTensor& image);
ImageTensor column_to_image(const Eigen::Ref<const Vector>& column, int channels, int height, int width);

struct ImageShape {
    int channels = kChannels;
    int height = kDefaultCanvas;
    int width = kDefaultCanvas;
    Index pixels() const { return static_cast<Index>(channels) * height * width; }
};

// Infers a square 3-channel shape from a flat pixel count.
ImageShape image_shape_for(Index pixels);

/// Image -> latent code: tanh hidden layer followed by a linear code layer.
struct ImageEncoder {
    Dense hidden;
    Dense code;

    struct Cache {
        Matrix input, hidden;
    };

    ImageEncoder() = default;
    ImageEncoder(Index pixels, Index hidden_units, Index latent)
        : hidden(hidden_units, pixels), code(latent, hidden_units) {}

    Index latent_dim() const { return code.weight.rows(); }
    Index pixels() const { return hidden.weight.cols(); }

    void init(Rng& rng);
    Matrix forward(const Matrix& images, Cache* cache = nullptr) const;
    // Returns d/d images (empty unless need_input_grad).
    Matrix backward(const Cache& cache, const Matrix& d_code, ImageEncoder* grad, bool need_input_grad) const;

    template <class F>
    void for_each_param(F&& f) {
        hidden.for_each_param("encoder.hidden", f);
        code.for_each_param("encoder.code", f);
    }
    template <class F>
    void for_each_param(F&& f) const {
        hidden.for_each_param("encoder.hidden", f);
        code.for_each_param("encoder.code", f);
    }
};

/// Latent -> image: tanh hidden layer, sigmoid output so pixels stay in [0, 1].
struct ImageGenerator {
    Dense hidden;
    Dense pixels;

    struct Cache {
        Matrix input, hidden, output;
    };

    ImageGenerator() = default;
    ImageGenerator(Index latent, Index hidden_units, Index pixel_count)
        : hidden(hidden_units, latent), pixels(pixel_count, hidden_units) {}

    Index latent_dim() const { return hidden.weight.cols(); }
    Index pixel_count() const { return pixels.weight.rows(); }

    void init(Rng& rng);
    Matrix forward(const Matrix& latent, Cache* cache = nullptr) const;
    Matrix backward(const Cache& cache, const Matrix& d_images, ImageGenerator* grad, bool need_latent_grad) const;

    template <class F>
    void for_each_param(F&& f) {
        hidden.for_each_param("generator.hidden", f);
        pixels.for_each_param("generator.pixels", f);
    }
    template <class F>
    void for_each_param(F&& f) const {
        hidden.for_each_param("generator.hidden", f);
        pixels.for_each_param("generator.pixels", f);
    }
};

struct Autoencoder {
    ImageEncoder encoder;
    ImageGenerator generator;

    Autoencoder() = default;
    Autoencoder(Index pixels, Index hidden_units, Index latent)
        : encoder(pixels, hidden_units, latent), generator(latent, hidden_units, pixels) {}

    void init(Rng& rng) {
        encoder.init(rng);
        generator.init(rng);
    }
    ImageShape image_shape() const { return image_shape_for(generator.pixel_count()); }
    Index latent_dim() const { return encoder.latent_dim(); }

    ImageTensor generate(const Vector& h) const;
    Vector encode(const ImageTensor& image) const;

    template <class F>
    void for_each_param(F&& f) {
        encoder.for_each_param(f);
        generator.for_each_param(f);
    }
    template <class F>
    void for_each_param(F&& f) const {
        encoder.for_each_param(f);
        generator.for_each_param(f);
    }
};

/// Image captioner: an image feature network (tanh MLP) feeding a context
/// decoder over the vocabulary.
struct Captioner {
    Dense feature_hidden;
    Dense feature_out;
    Matrix embedding;  // E x V
    Decoder decoder;

    struct FeatureCache {
        Matrix input, hidden, feature;
    };

    Captioner() = default;
    Captioner(Index pixels, Index feature_hidden_units, Index feature_dim, Index vocab, Index embed, Index hidden)
        : feature_hidden(feature_hidden_units, pixels), feature_out(feature_dim, feature_hidden_units),
          embedding(Matrix::Zero(embed, vocab)), decoder(vocab, embed, feature_dim, hidden) {}

    void init(Rng& rng);
    Index vocab_size() const { return decoder.vocab_size(); }
    ImageShape image_shape() const { return image_shape_for(feature_hidden.weight.cols()); }

    Matrix features(const Matrix& images, FeatureCache* cache = nullptr) const;
    Matrix feature_backward(const FeatureCache& cache, const Matrix& d_feature, Captioner* grad,
                            bool need_input_grad) const;

    DecoderRunner runner(const ImageTensor& image) const;

    template <class F>
    void for_each_param(F&& f) {
        feature_hidden.for_each_param("captioner.feature_hidden", f);
        feature_out.for_each_param("captioner.feature_out", f);
        f(std::string("captioner.embedding"), embedding);
        decoder.for_each_param("captioner.decoder", f);
    }
    template <class F>
    void for_each_param(F&& f) const {
        feature_hidden.for_each_param("captioner.feature_hidden", f);
        feature_out.for_each_param("captioner.feature_out", f);
        f(std::string("captioner.embedding"), embedding);
        decoder.for_each_param("captioner.decoder", f);
    }
};

// Target sequence for teacher forcing: framing stripped, EOS appended.
std::vector<TokenId> decoder_target(const Caption& caption);

struct WordLoss {
    double loss = 0.0;
    ImageTensor grad;  // d loss / d pixel, empty when not requested
    std::size_t summands = 0;
};

// Sum over reference positions (EOS included) of -log p(token | image, prefix).
WordLoss word_loss(const Captioner& captioner, const ImageTensor& image, const Caption& reference,
                   bool want_grad = true);

Caption caption_greedy(const Captioner& captioner, const ImageTensor& image,
                       std::size_t max_length = kMaxDecodeLength);
std::vector<Hypothesis> caption_beam(const Captioner& captioner, const ImageTensor& image,
                                     std::size_t beam_width, std::size_t k,
                                     std::size_t max_length = kMaxDecodeLength);

/// Sequence-to-sequence paraphraser: an LSTM encoder reads the source in
/// reverse; its final hidden state is the sentence vector that conditions the
/// decoder. Encoder and decoder share the token embedding.
struct Paraphraser {
    Matrix embedding;  // E x V
    Lstm encoder;
    Decoder decoder;

    struct EncoderCache {
        std::vector<LstmStep> steps;
        std::vector<std::vector<TokenId>> inputs;  // per step, per column (kPad when idle)
        Matrix masks;                              // T x B, 1 where the column is active
    };

    Paraphraser() = default;
    Paraphraser(Index vocab, Index embed, Index hidden)
        : embedding(Matrix::Zero(embed, vocab)), encoder(embed, hidden), decoder(vocab, embed, hidden, hidden) {}

    void init(Rng& rng);
    Index vocab_size() const { return decoder.vocab_size(); }

    // Sentence vectors (H x B) for a batch of sources.
    Matrix encode(std::span<const Caption> sources, EncoderCache* cache = nullptr) const;
    void encode_backward(const EncoderCache& cache, const Matrix& d_sentence, Paraphraser* grad) const;

    DecoderRunner runner(const Caption& source) const;

    template <class F>
    void for_each_param(F&& f) {
        f(std::string("paraphraser.embedding"), embedding);
        encoder.for_each_param("paraphraser.encoder", f);
        decoder.for_each_param("paraphraser.decoder", f);
    }
    template <class F>
    void for_each_param(F&& f) const {
        f(std::string("paraphraser.embedding"), embedding);
        encoder.for_each_param("paraphraser.encoder", f);
        decoder.for_each_param("paraphraser.decoder", f);
    }
};

// Teacher-forced NLL of target given source (no gradients).
double paraphrase_loss(const Paraphraser& model, const Caption& source, const Caption& target);

enum class DecodeMode { Greedy, Sampled };

struct ParaphraseChain {
    std::vector<Caption> captions;  // y_1 .. y_steps
    DecodeMode mode = DecodeMode::Greedy;
    double temperature = 1.0;
    std::uint64_t seed = 0;
};

Caption paraphrase(const Paraphraser& model, const Caption& source, DecodeMode mode = DecodeMode::Greedy,
                   Rng* rng = nullptr, double temperature = 1.0);
// y_i = paraphrase(y_{i-1}) with y_0 = y. Throws when steps is 0.
ParaphraseChain chain_paraphrase(const Paraphraser& model, const Caption& y, std::size_t steps,
                                 std::uint64_t seed, DecodeMode mode = DecodeMode::Greedy,
                                 double temperature = 1.0);

} // namespace vecspace::nn

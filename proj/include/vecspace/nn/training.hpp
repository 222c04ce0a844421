#pragma once

#include "vecspace/corpus.hpp"
#include "vecspace/nn/models.hpp"
#include "vecspace/pair_builder.hpp"

#include <span>
#include <string>
#include <vector>

namespace vecspace::nn {

// Plain SGD with momentum; the learning rate is multiplied by lr_decay after
// every epoch.
struct SgdRecipe {
    std::size_t epochs = 0;
    std::uint64_t seed = 0;
    double learning_rate = 0.0;
    double momentum = 0.9;
    std::size_t batch_size = 16;
    double clip_norm = 5.0;
    double lr_decay = 1.0;
};

struct AutoencoderConfig {
    Index hidden = 256;
    Index latent = kDefaultLatentDim;
    double latent_noise = 1.0;    // std of Gaussian noise added to codes during training
    double latent_penalty = 0.1;  // weight of the squared code norm in the training loss
    SgdRecipe recipe{.epochs = 30, .seed = 1, .learning_rate = 0.003, .momentum = 0.9, .batch_size = 16,
                     .clip_norm = 0.0, .lr_decay = 0.95};
};

struct CaptionerConfig {
    Index feature_hidden = 256;
    Index feature_dim = 128;
    Index embed = 32;
    Index hidden = 128;
    double input_noise = 0.0;  // std of Gaussian pixel noise added to each training batch
    SgdRecipe recipe{.epochs = 40, .seed = 2, .learning_rate = 0.1, .momentum = 0.9, .batch_size = 16,
                     .clip_norm = 5.0, .lr_decay = 0.97};
};

struct ParaphraserConfig {
    Index embed = 32;
    Index hidden = 128;
    SgdRecipe recipe{.epochs = 12, .seed = 3, .learning_rate = 0.1, .momentum = 0.9, .batch_size = 32,
                     .clip_norm = 5.0, .lr_decay = 0.9};
};

struct TrainingLog {
    double initial_loss = 0.0;
    std::vector<double> epoch_loss;  // running mean over each epoch's batches
    double seconds = 0.0;
};

// Minimizes the per-image squared reconstruction error of G(E(x)).
// Loss values in the log are mean squared error per pixel.
Autoencoder train_autoencoder(std::span<const ImageTensor> images, const AutoencoderConfig& config,
                              TrainingLog* log = nullptr);
// Teacher-forced cross-entropy over every (image, caption) in the corpus.
// Loss values are per-caption negative log-likelihood.
Captioner train_captioner(const Corpus& corpus, const CaptionerConfig& config, TrainingLog* log = nullptr);
Paraphraser train_paraphraser(std::span<const CaptionPair> pairs, const ParaphraserConfig& config,
                              TrainingLog* log = nullptr);

double reconstruction_mse(const Autoencoder& model, std::span<const ImageTensor> images);
double mean_caption_loss(const Captioner& model, const Corpus& corpus);

std::string to_json(const AutoencoderConfig& c);
std::string to_json(const CaptionerConfig& c);
std::string to_json(const ParaphraserConfig& c);
// Missing keys keep their defaults.
AutoencoderConfig autoencoder_config_from_json(const std::string& text);
CaptionerConfig captioner_config_from_json(const std::string& text);
ParaphraserConfig paraphraser_config_from_json(const std::string& text);

} // namespace vecspace::nn

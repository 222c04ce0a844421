#pragma once

// Trained toy models shared by the slower test binaries. Models are trained
// once and cached as checkpoints under the build tree (or $VECSPACE_MODEL_CACHE).

#include "vecspace/corpus.hpp"
#include "vecspace/latent_engine.hpp"
#include "vecspace/nn/models.hpp"
#include "vecspace/pair_builder.hpp"

#include <filesystem>

namespace vecspace::testing {

inline constexpr std::uint64_t kTrainCorpusSeed = 11;
inline constexpr std::size_t kTrainScenes = 3000;
inline constexpr std::size_t kTrainCaptions = 2;
inline constexpr std::uint64_t kParaphraseCorpusSeed = 21;
inline constexpr std::size_t kParaphraseScenes = 4000;
inline constexpr std::size_t kPairsPerScene = 5;

std::filesystem::path cache_dir();

// Scenes the autoencoder and captioner were trained on.
const Corpus& training_corpus();
// The same scenes with five captions each; the first kTrainCaptions of every
// record are the training captions.
Corpus training_scenes_with_captions(std::size_t num_scenes, std::size_t k = 5);

const std::vector<CaptionPair>& paraphrase_pairs();
const Corpus& paraphrase_corpus();

const nn::Autoencoder& autoencoder();
const nn::Captioner& captioner();
const nn::Paraphraser& paraphraser();

// Wall-clock training time, as recorded when the model was first trained.
double autoencoder_seconds();
double captioner_seconds();
double paraphraser_seconds();

// Update settings for caption-conditioned generation on the toy models. The
// library defaults are tuned for image reconstruction; the caption term needs
// a larger scale to move h at all.
UpdateConfig caption_generation_config(std::uint64_t seed = 0);

} // namespace vecspace::testing

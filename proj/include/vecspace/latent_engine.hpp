#pragma once

#include "vecspace/nn/models.hpp"
#include "vecspace/rng.hpp"
#include "vecspace/toy_world.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vecspace {

using LatentVector = nn::Vector;
using nn::Index;

struct UpdateConfig {
    double gamma2 = 1.0;
    double gamma3 = 0.1;
    double gamma4 = 1e-3;
    double word_term_scale = 1.0;
    double step_size = 0.1;
    std::size_t iterations = 200;
    bool stop_on_perfect_bleu = true;
    bool encoder_branch_stop_gradient = false;
    // Adds the structured terms instead of subtracting them.
    bool ascent = false;
    std::uint64_t seed = 0;
};

// Throws std::invalid_argument on a negative gamma, non-positive step size or zero iterations.
void validate(const UpdateConfig& config);

std::string to_json(const UpdateConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
UpdateConfig update_config_from_json(const std::string& text, UpdateConfig base = {});

// The frozen networks the update reads. The captioner may be null when no
// target captions are used.
struct EngineModels {
    const nn::Autoencoder* autoencoder = nullptr;
    const nn::Captioner* captioner = nullptr;
};

// Standard normal entries, deterministic per seed.
LatentVector init_h(Index dim, std::uint64_t seed);

struct TermGradient {
    double loss = 0.0;
    LatentVector grad;
};

// W(G(h), c): teacher-forced word loss of caption c on the generated image, and d/dh.
TermGradient word_term(const EngineModels& models, const LatentVector& h, const Caption& caption);
// ||G(h) - x||^2 and d/dh.
TermGradient image_term(const EngineModels& models, const LatentVector& h, const ImageTensor& target);
// ||h - E(G(h))||^2 and d/dh; with stop_gradient the re-encoding is held constant.
TermGradient latent_term(const EngineModels& models, const LatentVector& h, bool stop_gradient);

// Mean of the terms in order. When every term is bitwise equal the first one is
// returned unchanged, so repeating a caption never perturbs the result.
LatentVector mean_of_terms(std::span<const LatentVector> terms);

struct WordGradient {
    std::vector<double> loss;    // W per caption
    std::vector<double> bleu1;   // BLEU-1(C_pred, caption)
    std::vector<double> gamma1;  // BLEU-1 / n
    std::vector<LatentVector> terms;  // gamma1 * dW/dh per caption
    LatentVector combined;            // mean of `terms`
};

// Per-caption and combined word terms for the current prediction. A caption
// whose gamma1 is zero contributes an exact zero vector without backpropagation.
WordGradient word_gradient(const EngineModels& models, const LatentVector& h, const Caption& predicted,
                           std::span<const Caption> targets);

struct UpdateState {
    LatentVector h;
    ImageTensor generated;  // G(h)
    Caption predicted;      // greedy caption of `generated`
    std::vector<Caption> targets;
    std::optional<ImageTensor> target_image;
};

// Builds a state at h with the observation fields filled in.
UpdateState make_state(const EngineModels& models, LatentVector h, std::vector<Caption> targets,
                       std::optional<ImageTensor> target_image);

struct IterationRecord {
    std::size_t iteration = 0;
    Caption predicted;
    std::vector<double> word_loss;
    std::vector<double> bleu1;
    std::vector<double> gamma1;
    std::optional<double> image_loss;
    double latent_loss = 0.0;
    double word_grad_norm = 0.0;
    double image_grad_norm = 0.0;
    double latent_grad_norm = 0.0;
    double noise_norm = 0.0;
    bool stopped = false;  // perfect BLEU-1 reached; no update applied
    std::vector<std::string> warnings;
};

struct UpdateTrace {
    std::vector<IterationRecord> records;
};

// One update of state.h; the observation fields are refreshed afterwards.
// The returned record describes the state before the update.
IterationRecord step(UpdateState& state, const EngineModels& models, const UpdateConfig& config, Rng& rng);

struct RunResult {
    ImageTensor image;
    LatentVector h;
    UpdateTrace trace;
};

// Seed of the noise stream used by `run`; kept apart from the streams that
// draw starting vectors from the same config seed.
constexpr std::uint64_t noise_seed(std::uint64_t seed) { return derive_seed(seed, 1); }

// Iterates `step` from h0 with noise drawn from noise_seed(config.seed).
// Requires at least one target caption or a target image.
RunResult run(const LatentVector& h0, std::span<const Caption> targets, const std::optional<ImageTensor>& target_image,
              const EngineModels& models, const UpdateConfig& config);

// One JSON object per line.
std::string trace_to_jsonl(const UpdateTrace& trace, const Vocabulary& vocab);
void write_trace(const UpdateTrace& trace, const Vocabulary& vocab, const std::filesystem::path& path);

} // namespace vecspace

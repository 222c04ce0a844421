#pragma once

#include "vecspace/corpus.hpp"
#include "vecspace/latent_engine.hpp"
#include "vecspace/nn/models.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vecspace {

struct PipelineModels {
    const nn::Autoencoder* autoencoder = nullptr;
    const nn::Captioner* captioner = nullptr;
    const nn::Paraphraser* paraphraser = nullptr;  // only for paraphrase sources

    EngineModels engine() const { return {autoencoder, captioner}; }
};

// Starting vector for a pipeline run with the given config seed.
LatentVector pipeline_h0(const PipelineModels& models, std::uint64_t seed);

struct GenerationResult {
    ImageTensor image;
    LatentVector h;
    UpdateTrace trace;
    std::vector<Caption> captions;  // conditioning set
};

// Caption-conditioned generation from pipeline_h0(config.seed).
GenerationResult generate_from_captions(std::span<const Caption> captions, const PipelineModels& models,
                                        const UpdateConfig& config);

struct SyntheticGeneration {
    GenerationResult generation;
    std::vector<bool> matches_source;  // per conditioning caption: parses to y's semantics
    double match_rate = 0.0;
};

// Conditions on y followed by chain_steps greedy paraphrases of y.
SyntheticGeneration generate_with_synthetic_captions(const Caption& y, std::size_t chain_steps,
                                                     const PipelineModels& models, const UpdateConfig& config,
                                                     const Vocabulary& vocab);

enum class CaptionSource { Beam, Paraphrase };

struct ExperimentRecord {
    std::uint64_t seed = 0;
    std::string mode;
    std::vector<Caption> captions;
    Caption recaption;
    double recaption_bleu1 = 0.0;
    bool semantic_match = false;
    std::string trace_path;
};

struct ImageToImage {
    ImageTensor image;
    UpdateTrace trace;
    ExperimentRecord record;
};

// Describes x with k captions (beam of width k, or the greedy caption followed
// by k - 1 chained paraphrases) and generates from those captions alone. The
// record scores the output against the derived captions. Throws
// std::runtime_error when no non-empty caption could be derived.
ImageToImage image_to_image(const ImageTensor& x, CaptionSource source, std::size_t k, const PipelineModels& models,
                            const UpdateConfig& config, const Vocabulary& vocab);

// BLEU-1 of the greedy re-caption of `image` against `references`, and whether it
// parses to `expected`.
struct RecaptionScore {
    Caption recaption;
    double bleu1 = 0.0;
    bool semantic_match = false;
};
RecaptionScore score_recaption(const nn::Captioner& captioner, const ImageTensor& image,
                               std::span<const Caption> references, const std::optional<Semantics>& expected,
                               const Vocabulary& vocab);

struct PairedRun {
    std::string scene_id;
    std::size_t seed_index = 0;
    ExperimentRecord single;
    ExperimentRecord multi;
    double difference = 0.0;  // multi - single re-caption BLEU-1
};

struct ExperimentReport {
    std::vector<PairedRun> runs;
    double mean_single = 0.0;
    double std_single = 0.0;
    double mean_multi = 0.0;
    double std_multi = 0.0;
    double mean_difference = 0.0;
    double single_match_rate = 0.0;
    double multi_match_rate = 0.0;
    std::size_t wins = 0;
    std::size_t losses = 0;
    std::size_t ties = 0;
    double win_rate = 0.0;       // wins / (wins + losses); 0 when every pair ties
    double sign_test_p = 1.0;    // two-sided
    std::vector<std::size_t> failures;  // indices into `runs` with a negative difference
};

struct EvaluationOptions {
    std::size_t num_seeds = 5;
    std::size_t multi_captions = 3;
    // When set, every run's trace is written here.
    std::optional<std::filesystem::path> trace_dir;
};

// For each record and seed, runs single- and multi-caption conditioning from
// the same starting vector and compares re-caption BLEU-1 against the record's
// full caption set. Throws std::invalid_argument when a record has fewer than
// options.multi_captions captions.
ExperimentReport evaluate_multi_vs_single(std::span<const CorpusRecord> sample, const PipelineModels& models,
                                          const UpdateConfig& config, const EvaluationOptions& options,
                                          const Vocabulary& vocab);

// Recomputes the aggregate fields of `report` from its runs.
void summarize(ExperimentReport& report);

// Two-sided exact binomial sign test with p = 1/2.
double sign_test_p_value(std::size_t wins, std::size_t losses);

std::string report_to_json(const ExperimentReport& report, const Vocabulary& vocab);
std::string record_to_json(const ExperimentRecord& record, const Vocabulary& vocab);

} // namespace vecspace

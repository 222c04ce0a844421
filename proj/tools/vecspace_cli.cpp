// Command-line front end. Everything goes through the C API in vecspace.h.

#include "vecspace/vecspace.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace {

using Json = nlohmann::ordered_json;

constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;

struct Failure {
    int code;
};

void check(vcs_status st) {
    if (st == VCS_OK) return;
    std::cerr << "error: " << vcs_last_error() << "\n";
    throw Failure{st == VCS_INVALID_ARGUMENT ? kExitUsage : kExitFailure};
}

// Owns a string returned by the library.
struct LibString {
    char* p = nullptr;
    ~LibString() { vcs_string_free(p); }
    std::string str() const { return p ? std::string(p) : std::string(); }
};

struct ModelsDeleter {
    void operator()(vcs_models* m) const { vcs_models_free(m); }
};
using Models = std::unique_ptr<vcs_models, ModelsDeleter>;

Models load_models(const std::string& ae, const std::string& cap, const std::string& para) {
    vcs_models* m = nullptr;
    check(vcs_models_load(ae.empty() ? nullptr : ae.c_str(), cap.empty() ? nullptr : cap.c_str(),
                          para.empty() ? nullptr : para.c_str(), &m));
    return Models(m);
}

const char* or_null(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

// JSON config file: {"<subcommand>": {"<flag>": value}}. Top-level scalar keys
// apply to the subcommand named on the command line.
class JsonConfig : public CLI::Config {
public:
    explicit JsonConfig(std::string subcommand) : subcommand_(std::move(subcommand)) {}

    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        Json j;
        try {
            j = Json::parse(input);
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
        std::vector<CLI::ConfigItem> items;
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) {
                for (const auto& [name, v] : value.items()) items.push_back(item({key}, name, v));
            } else if (!subcommand_.empty()) {
                items.push_back(item({subcommand_}, key, value));
            } else {
                items.push_back(item({}, key, value));
            }
        }
        return items;
    }

private:
    static std::string scalar(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

    static CLI::ConfigItem item(std::vector<std::string> parents, const std::string& name, const Json& v) {
        CLI::ConfigItem it;
        it.parents = std::move(parents);
        it.name = name;
        if (v.is_array()) {
            for (const auto& e : v) it.inputs.push_back(scalar(e));
        } else {
            it.inputs.push_back(scalar(v));
        }
        return it;
    }

    std::string subcommand_;
};

struct UpdateFlags {
    std::optional<std::size_t> iters;
    std::optional<double> gamma2, gamma3, gamma4, step_size, word_term_scale;
    std::optional<std::uint64_t> seed;
    bool stop_gradient = false;
    bool ascent = false;
    bool no_early_stop = false;

    void add(CLI::App* app) {
        app->add_option("--iters", iters, "Update iterations");
        app->add_option("--gamma2", gamma2, "Image reconstruction weight")->check(CLI::NonNegativeNumber);
        app->add_option("--gamma3", gamma3, "Latent reconstruction weight")->check(CLI::NonNegativeNumber);
        app->add_option("--gamma4", gamma4, "Noise standard deviation")->check(CLI::NonNegativeNumber);
        app->add_option("--step-size", step_size, "Step size")->check(CLI::PositiveNumber);
        app->add_option("--word-term-scale", word_term_scale, "Multiplier on the caption term")
            ->check(CLI::NonNegativeNumber);
        app->add_option("--seed", seed, "Seed for the starting vector and noise");
        app->add_flag("--stop-gradient", stop_gradient, "Hold the re-encoding constant in the latent term");
        app->add_flag("--ascent", ascent, "Add the structured terms instead of subtracting them");
        app->add_flag("--no-early-stop", no_early_stop, "Keep iterating after every caption is matched");
    }

    std::string json() const {
        Json j = Json::object();
        if (iters) j["iterations"] = *iters;
        if (gamma2) j["gamma2"] = *gamma2;
        if (gamma3) j["gamma3"] = *gamma3;
        if (gamma4) j["gamma4"] = *gamma4;
        if (step_size) j["step_size"] = *step_size;
        if (word_term_scale) j["word_term_scale"] = *word_term_scale;
        if (seed) j["seed"] = *seed;
        if (stop_gradient) j["encoder_branch_stop_gradient"] = true;
        if (ascent) j["ascent"] = true;
        if (no_early_stop) j["stop_on_perfect_bleu"] = false;
        return j.dump();
    }
};

std::string find_subcommand(int argc, char** argv, const std::vector<std::string>& names) {
    for (int i = 1; i < argc; ++i)
        for (const auto& n : names)
            if (argv[i] == n) return n;
    return {};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Caption-conditioned image generation in a shared latent space"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(vcs_version()));
    app.allow_config_extras(CLI::config_extras_mode::error);

    const std::vector<std::string> names{"gen-corpus", "train",    "bleu",    "pairs",
                                         "paraphrase", "generate", "img2img", "evaluate"};
    app.set_config("--config", "", "JSON file mirroring the flags; flags on the command line win");
    app.config_formatter(std::make_shared<JsonConfig>(find_subcommand(argc, argv, names)));

    // gen-corpus
    auto* gen_corpus = app.add_subcommand("gen-corpus", "Render a toy scene corpus with captions");
    std::uint64_t corpus_seed = 0;
    std::size_t num_scenes = 100, captions_per_scene = 5;
    std::string corpus_out;
    gen_corpus->add_option("--seed", corpus_seed, "Corpus seed")->capture_default_str();
    gen_corpus->add_option("--num-scenes", num_scenes, "Number of scenes")->capture_default_str();
    gen_corpus->add_option("--captions-per-scene", captions_per_scene, "Captions per scene")->capture_default_str();
    gen_corpus->add_option("--out", corpus_out, "Output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "Train one model component");
    std::string component, train_corpus, train_pairs, train_out, model_config;
    std::optional<std::size_t> epochs;
    std::optional<std::uint64_t> train_seed;
    train->add_option("--component", component, "Model to train")
        ->required()
        ->check(CLI::IsMember({"autoencoder", "captioner", "paraphraser"}));
    train->add_option("--corpus", train_corpus, "Corpus directory or manifest");
    train->add_option("--pairs", train_pairs, "Paraphrase pairs (JSON lines)");
    train->add_option("--epochs", epochs, "Override the recipe's epoch count");
    train->add_option("--seed", train_seed, "Override the recipe's seed");
    train->add_option("--model-config", model_config, "JSON file with architecture and recipe settings")
        ->check(CLI::ExistingFile);
    train->add_option("--out", train_out, "Checkpoint path")->required();

    // bleu
    auto* bleu = app.add_subcommand("bleu", "Score a candidate sentence against references");
    std::string candidate;
    std::vector<std::string> references;
    std::size_t max_order = 4;
    bleu->add_option("--candidate", candidate, "Candidate sentence")->required();
    bleu->add_option("--reference", references, "Reference sentence (repeatable)")->required();
    bleu->add_option("--max-order", max_order, "Largest n-gram order")->capture_default_str()->check(
        CLI::PositiveNumber);

    // pairs
    auto* pairs = app.add_subcommand("pairs", "Build ordered paraphrase pairs from grouped captions");
    std::string pairs_in, pairs_out;
    bool pairs_stats = false;
    std::size_t pairs_cap = 0;
    std::uint64_t pairs_seed = 0;
    pairs->add_option("--input", pairs_in, "Grouped caption JSON or corpus manifest")->required();
    pairs->add_option("--out", pairs_out, "Output file (JSON lines)");
    pairs->add_option("--max-pairs-per-group", pairs_cap, "Keep at most this many pairs per group (0 keeps all)")
        ->capture_default_str();
    pairs->add_option("--seed", pairs_seed, "Seed for choosing capped pairs")->capture_default_str();
    pairs->add_flag("--stats", pairs_stats, "Print pair statistics");

    // paraphrase
    auto* para = app.add_subcommand("paraphrase", "Paraphrase a sentence");
    std::string para_ckpt, sentence;
    std::size_t chain = 1;
    std::uint64_t para_seed = 0;
    para->add_option("--ckpt", para_ckpt, "Paraphraser checkpoint")->required();
    para->add_option("--sentence", sentence, "Input sentence")->required();
    para->add_option("--chain", chain, "Number of chained paraphrases")->capture_default_str()->check(
        CLI::PositiveNumber);
    para->add_option("--seed", para_seed, "Sampling seed")->capture_default_str();

    // generate
    auto* generate = app.add_subcommand("generate", "Generate an image from captions");
    std::string ae_ckpt, cap_ckpt, gen_out, gen_trace;
    std::vector<std::string> captions;
    UpdateFlags gen_flags;
    generate->add_option("--ae-ckpt", ae_ckpt, "Autoencoder checkpoint")->required();
    generate->add_option("--cap-ckpt", cap_ckpt, "Captioner checkpoint")->required();
    generate->add_option("--captions", captions, "Conditioning captions")->required();
    gen_flags.add(generate);
    generate->add_option("--out", gen_out, "Output image (.ppm)")->required();
    generate->add_option("--trace", gen_trace, "Trace file (JSON lines)");

    // img2img
    auto* img2img = app.add_subcommand("img2img", "Regenerate an image through its captions");
    std::string i2i_ae, i2i_cap, i2i_para, i2i_image, i2i_source = "beam", i2i_out, i2i_trace;
    std::size_t i2i_k = 3;
    UpdateFlags i2i_flags;
    img2img->add_option("--ae-ckpt", i2i_ae, "Autoencoder checkpoint")->required();
    img2img->add_option("--cap-ckpt", i2i_cap, "Captioner checkpoint")->required();
    img2img->add_option("--para-ckpt", i2i_para, "Paraphraser checkpoint (paraphrase source)");
    img2img->add_option("--image", i2i_image, "Input image (.ppm)")->required()->check(CLI::ExistingFile);
    img2img->add_option("--source", i2i_source, "Caption source")
        ->capture_default_str()
        ->check(CLI::IsMember({"beam", "paraphrase"}));
    img2img->add_option("--k", i2i_k, "Number of captions")->capture_default_str()->check(CLI::PositiveNumber);
    i2i_flags.add(img2img);
    img2img->add_option("--out", i2i_out, "Output image (.ppm)")->required();
    img2img->add_option("--trace", i2i_trace, "Trace file (JSON lines)");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Compare multi- and single-caption conditioning");
    std::string eval_mode = "multi-vs-single", eval_ae, eval_cap, eval_corpus, eval_report, eval_traces;
    std::size_t eval_scenes = 20, eval_seeds = 5;
    UpdateFlags eval_flags;
    evaluate->add_option("--mode", eval_mode, "Evaluation mode")
        ->capture_default_str()
        ->check(CLI::IsMember({"multi-vs-single"}));
    evaluate->add_option("--ae-ckpt", eval_ae, "Autoencoder checkpoint")->required();
    evaluate->add_option("--cap-ckpt", eval_cap, "Captioner checkpoint")->required();
    evaluate->add_option("--corpus", eval_corpus, "Corpus to sample scenes from (generated when absent)");
    evaluate->add_option("--scenes", eval_scenes, "Number of scenes")->capture_default_str()->check(
        CLI::PositiveNumber);
    evaluate->add_option("--seeds", eval_seeds, "Seeds per scene")->capture_default_str()->check(
        CLI::PositiveNumber);
    eval_flags.add(evaluate);
    evaluate->add_option("--report", eval_report, "Report path (JSON)");
    evaluate->add_option("--trace-dir", eval_traces, "Directory for per-run traces");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        LibString out;
        if (*gen_corpus) {
            check(vcs_gen_corpus(corpus_seed, num_scenes, captions_per_scene, corpus_out.c_str()));
            std::cout << Json{{"out", corpus_out}, {"num_scenes", num_scenes}}.dump(2) << "\n";
            return 0;
        }
        if (*train) {
            Json cfg = Json::object();
            if (!model_config.empty()) {
                std::ifstream in(model_config);
                try {
                    cfg = Json::parse(in);
                } catch (const nlohmann::json::exception& e) {
                    std::cerr << "error: " << model_config << " is not valid JSON: " << e.what() << "\n";
                    return kExitUsage;
                }
            }
            if (epochs) cfg["recipe"]["epochs"] = *epochs;
            if (train_seed) cfg["recipe"]["seed"] = *train_seed;
            check(vcs_train(component.c_str(), or_null(train_corpus), or_null(train_pairs), cfg.dump().c_str(),
                            train_out.c_str(), &out.p));
        } else if (*bleu) {
            std::vector<const char*> refs;
            for (const auto& r : references) refs.push_back(r.c_str());
            check(vcs_bleu(candidate.c_str(), refs.data(), refs.size(), max_order, nullptr, &out.p));
        } else if (*pairs) {
            LibString stats;
            check(vcs_pairs(pairs_in.c_str(), or_null(pairs_out), pairs_cap, pairs_seed,
                            pairs_stats ? &stats.p : nullptr));
            if (pairs_stats) std::cout << stats.str() << "\n";
            return 0;
        } else if (*para) {
            const Models m = load_models("", "", para_ckpt);
            check(vcs_paraphrase(m.get(), sentence.c_str(), chain, para_seed, &out.p));
        } else if (*generate) {
            const Models m = load_models(ae_ckpt, cap_ckpt, "");
            std::vector<const char*> caps;
            for (const auto& c : captions) caps.push_back(c.c_str());
            check(vcs_generate(m.get(), caps.data(), caps.size(), gen_flags.json().c_str(), gen_out.c_str(),
                               or_null(gen_trace), &out.p));
        } else if (*img2img) {
            const Models m = load_models(i2i_ae, i2i_cap, i2i_para);
            check(vcs_img2img(m.get(), i2i_image.c_str(), i2i_source.c_str(), i2i_k, i2i_flags.json().c_str(),
                              i2i_out.c_str(), or_null(i2i_trace), &out.p));
        } else if (*evaluate) {
            const Models m = load_models(eval_ae, eval_cap, "");
            check(vcs_evaluate(m.get(), or_null(eval_corpus), eval_scenes, eval_seeds, eval_flags.json().c_str(),
                               or_null(eval_traces), or_null(eval_report), &out.p));
        }
        std::cout << out.str() << "\n";
    } catch (const Failure& f) {
        return f.code;
    }
    return 0;
}

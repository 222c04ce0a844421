#include "vecspace/vecspace.h"

#include "json_io.hpp"

#include "vecspace/corpus.hpp"
#include "vecspace/errors.hpp"
#include "vecspace/latent_engine.hpp"
#include "vecspace/nn/checkpoint.hpp"
#include "vecspace/nn/training.hpp"
#include "vecspace/pair_builder.hpp"
#include "vecspace/pipelines.hpp"
#include "vecspace/text_metrics.hpp"

#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <map>
#include <new>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

struct vcs_models {
    std::optional<vecspace::nn::Autoencoder> autoencoder;
    std::optional<vecspace::nn::Captioner> captioner;
    std::optional<vecspace::nn::Paraphraser> paraphraser;

    vecspace::PipelineModels view() const {
        return {autoencoder ? &*autoencoder : nullptr, captioner ? &*captioner : nullptr,
                paraphraser ? &*paraphraser : nullptr};
    }
};

namespace {

using namespace vecspace;
using detail::Json;

thread_local std::string g_last_error;

template <class F>
vcs_status guarded(F&& f) {
    try {
        g_last_error.clear();
        f();
        return VCS_OK;
    } catch (const std::invalid_argument& e) {
        g_last_error = e.what();
        return VCS_INVALID_ARGUMENT;
    } catch (const std::out_of_range& e) {
        g_last_error = e.what();
        return VCS_INVALID_ARGUMENT;
    } catch (const IoError& e) {
        g_last_error = e.what();
        return VCS_IO_ERROR;
    } catch (const std::filesystem::filesystem_error& e) {
        g_last_error = e.what();
        return VCS_IO_ERROR;
    } catch (const FormatError& e) {
        g_last_error = e.what();
        return VCS_FORMAT_ERROR;
    } catch (const nlohmann::json::exception& e) {
        g_last_error = e.what();
        return VCS_FORMAT_ERROR;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return VCS_RUNTIME_ERROR;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return VCS_RUNTIME_ERROR;
    } catch (...) {
        g_last_error = "unknown error";
        return VCS_RUNTIME_ERROR;
    }
}

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

std::string opt_str(const char* s) { return s ? std::string(s) : std::string(); }

void emit(char** out, const std::string& text) {
    if (!out) return;
    char* buf = new char[text.size() + 1];
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *out = buf;
}

const nn::Autoencoder& need_autoencoder(const vcs_models* m) {
    require(m && m->autoencoder, "no autoencoder loaded");
    return *m->autoencoder;
}

const nn::Captioner& need_captioner(const vcs_models* m) {
    require(m && m->captioner, "no captioner loaded");
    return *m->captioner;
}

std::vector<Caption> parse_sentences(const char* const* sentences, std::size_t n) {
    require(n == 0 || sentences, "caption list is null");
    std::vector<Caption> out;
    for (std::size_t i = 0; i < n; ++i) {
        require(sentences[i], "caption is null");
        Caption c = Vocabulary::toy().encode(sentences[i]);
        require(!c.ids.empty(), "captions must not be empty");
        out.push_back(std::move(c));
    }
    return out;
}

Json sentences_json(std::span<const Caption> captions) {
    Json out = Json::array();
    for (const auto& c : captions) out.push_back(Vocabulary::toy().decode(c));
    return out;
}

Json trace_summary(const UpdateTrace& trace) {
    const bool stopped = !trace.records.empty() && trace.records.back().stopped;
    return {{"iterations", trace.records.size()}, {"stopped_on_perfect_bleu", stopped}};
}

void write_outputs(const ImageTensor& image, const UpdateTrace& trace, const char* image_path,
                   const char* trace_path, Json& result) {
    if (image_path) {
        write_ppm(image, image_path);
        result["image"] = image_path;
    }
    if (trace_path) {
        write_trace(trace, Vocabulary::toy(), trace_path);
        result["trace"] = trace_path;
    }
}

template <class Config>
Json log_json(const char* component, const nn::TrainingLog& log, const Config&) {
    return {{"component", component},
            {"initial_loss", log.initial_loss},
            {"epoch_loss", log.epoch_loss},
            {"seconds", log.seconds}};
}

} // namespace

extern "C" {

const char* vcs_version(void) { return "0.1.0"; }

const char* vcs_last_error(void) { return g_last_error.c_str(); }

void vcs_string_free(char* s) { delete[] s; }

vcs_status vcs_gen_corpus(uint64_t seed, size_t num_scenes, size_t captions_per_scene, const char* out_dir) {
    return guarded([&] {
        require(out_dir, "output directory is null");
        build_corpus(num_scenes, captions_per_scene, seed, out_dir);
    });
}

vcs_status vcs_bleu(const char* candidate, const char* const* references, size_t num_references, size_t max_order,
                    double* score, char** breakdown_json) {
    return guarded([&] {
        require(candidate, "candidate is null");
        require(references && num_references > 0, "at least one reference is required");
        require(max_order >= 1, "max_order must be at least 1");
        // Interning every word keeps arbitrary text distinct; ids start after the specials.
        std::map<std::string, TokenId> ids;
        auto tokenize = [&](const char* text) {
            Caption c;
            std::istringstream in(text);
            std::string w;
            while (in >> w) {
                auto [it, inserted] = ids.try_emplace(w, static_cast<TokenId>(kUnk + 1 + ids.size()));
                c.ids.push_back(it->second);
            }
            return c;
        };
        const Caption cand = tokenize(candidate);
        std::vector<Caption> refs;
        for (std::size_t i = 0; i < num_references; ++i) {
            require(references[i], "reference is null");
            refs.push_back(tokenize(references[i]));
        }
        const BleuBreakdown b = bleu(cand, refs, max_order);
        if (score) *score = b.score;
        emit(breakdown_json, Json{{"score", b.score},
                                  {"modified_precisions", b.modified_precisions},
                                  {"brevity_penalty", b.brevity_penalty},
                                  {"candidate_length", b.candidate_length},
                                  {"effective_reference_length", b.effective_reference_length}}
                                 .dump(2));
    });
}

vcs_status vcs_pairs(const char* input_path, const char* out_path, size_t max_pairs_per_group, uint64_t seed,
                     char** stats_json) {
    return guarded([&] {
        require(input_path, "input path is null");
        const auto groups = ingest_grouped_json(input_path);
        PairOptions options;
        if (max_pairs_per_group > 0) options.max_pairs_per_group = max_pairs_per_group;
        options.seed = seed;
        const PairStats s = pair_stats(groups);
        Json stats{{"num_samples", s.num_samples},
                   {"num_captions", s.num_captions},
                   {"min_captions_per_sample", s.min_captions_per_sample},
                   {"max_captions_per_sample", s.max_captions_per_sample},
                   {"mean_captions_per_sample", s.mean_captions_per_sample},
                   {"num_pairs", s.num_pairs}};
        if (out_path) {
            const auto pairs = make_pairs(groups, options);
            write_pairs_jsonl(pairs, out_path);
            stats["pairs_written"] = pairs.size();
        }
        emit(stats_json, stats.dump(2));
    });
}

vcs_status vcs_train(const char* component, const char* corpus_path, const char* pairs_path, const char* config_json,
                     const char* out_path, char** log_json_out) {
    return guarded([&] {
        require(component, "component is null");
        require(out_path, "output path is null");
        const std::string which = component;
        const std::string cfg_text = opt_str(config_json);
        const std::filesystem::path out = out_path;
        const std::filesystem::path cfg_path = out.string() + ".config.json";
        const std::uint64_t vocab_hash = Vocabulary::toy().hash();
        nn::TrainingLog log;
        Json result;
        if (which == "autoencoder") {
            require(corpus_path, "the autoencoder trains on a corpus");
            const Corpus corpus = load_corpus(corpus_path);
            std::vector<ImageTensor> images;
            for (const auto& r : corpus.records) images.push_back(r.image);
            const auto cfg = nn::autoencoder_config_from_json(cfg_text);
            const auto model = nn::train_autoencoder(images, cfg, &log);
            nn::save_checkpoint(nn::to_checkpoint(model, vocab_hash), out);
            detail::write_text_file(cfg_path, nn::to_json(cfg));
            result = log_json(component, log, cfg);
            result["reconstruction_mse"] = nn::reconstruction_mse(model, images);
        } else if (which == "captioner") {
            require(corpus_path, "the captioner trains on a corpus");
            const Corpus corpus = load_corpus(corpus_path);
            const auto cfg = nn::captioner_config_from_json(cfg_text);
            const auto model = nn::train_captioner(corpus, cfg, &log);
            nn::save_checkpoint(nn::to_checkpoint(model, vocab_hash), out);
            detail::write_text_file(cfg_path, nn::to_json(cfg));
            result = log_json(component, log, cfg);
        } else if (which == "paraphraser") {
            std::vector<CaptionPair> pairs;
            if (pairs_path) {
                pairs = read_pairs_jsonl(pairs_path);
            } else {
                require(corpus_path, "the paraphraser trains on pairs or a corpus");
                pairs = make_pairs(ingest_grouped_json(corpus_path));
            }
            const auto cfg = nn::paraphraser_config_from_json(cfg_text);
            const auto model = nn::train_paraphraser(pairs, cfg, &log);
            nn::save_checkpoint(nn::to_checkpoint(model, vocab_hash), out);
            detail::write_text_file(cfg_path, nn::to_json(cfg));
            result = log_json(component, log, cfg);
            result["pairs"] = pairs.size();
        } else {
            throw std::invalid_argument("unknown component '" + which + "'");
        }
        result["checkpoint"] = out.string();
        result["config"] = cfg_path.string();
        emit(log_json_out, result.dump(2));
    });
}

vcs_status vcs_models_load(const char* autoencoder_ckpt, const char* captioner_ckpt, const char* paraphraser_ckpt,
                           vcs_models** out) {
    return guarded([&] {
        require(out, "output handle is null");
        *out = nullptr;
        auto m = std::make_unique<vcs_models>();
        const std::uint64_t hash = Vocabulary::toy().hash();
        if (autoencoder_ckpt) m->autoencoder = nn::autoencoder_from(nn::load_checkpoint(autoencoder_ckpt));
        if (captioner_ckpt) m->captioner = nn::captioner_from(nn::load_checkpoint(captioner_ckpt), hash);
        if (paraphraser_ckpt) m->paraphraser = nn::paraphraser_from(nn::load_checkpoint(paraphraser_ckpt), hash);
        if (m->autoencoder && m->captioner &&
            m->autoencoder->generator.pixel_count() != m->captioner->feature_hidden.weight.cols())
            throw std::invalid_argument("autoencoder and captioner disagree on the image size");
        *out = m.release();
    });
}

void vcs_models_free(vcs_models* models) { delete models; }

vcs_status vcs_paraphrase(const vcs_models* models, const char* sentence, size_t chain, uint64_t seed,
                          char** result_json) {
    return guarded([&] {
        require(models && models->paraphraser, "no paraphraser loaded");
        require(sentence, "sentence is null");
        require(chain >= 1, "chain must be at least 1");
        const Vocabulary& vocab = Vocabulary::toy();
        const Caption y = vocab.encode(sentence);
        require(!y.ids.empty(), "sentence is empty");
        const auto result = nn::chain_paraphrase(*models->paraphraser, y, chain, seed);
        const auto source = parse_caption(y, vocab);
        Json steps = Json::array();
        for (const auto& c : result.captions) {
            const auto s = parse_caption(c, vocab);
            steps.push_back({{"text", vocab.decode(c)}, {"semantic_match", source && s && *s == *source}});
        }
        emit(result_json, Json{{"input", vocab.decode(y)}, {"chain", steps}}.dump(2));
    });
}

vcs_status vcs_generate(const vcs_models* models, const char* const* captions, size_t num_captions,
                        const char* update_json, const char* image_path, const char* trace_path, char** result_json) {
    return guarded([&] {
        const auto& cap = need_captioner(models);
        need_autoencoder(models);
        const auto targets = parse_sentences(captions, num_captions);
        require(!targets.empty(), "at least one caption is required");
        const UpdateConfig cfg = update_config_from_json(opt_str(update_json));
        const GenerationResult g = generate_from_captions(targets, models->view(), cfg);
        const Vocabulary& vocab = Vocabulary::toy();
        const RecaptionScore score = score_recaption(cap, g.image, targets, parse_caption(targets.front(), vocab), vocab);
        Json result{{"captions", sentences_json(targets)},
                    {"recaption", vocab.decode(score.recaption)},
                    {"recaption_bleu1", score.bleu1},
                    {"semantic_match", score.semantic_match}};
        result.update(trace_summary(g.trace));
        write_outputs(g.image, g.trace, image_path, trace_path, result);
        emit(result_json, result.dump(2));
    });
}

vcs_status vcs_img2img(const vcs_models* models, const char* input_image, const char* source, size_t k,
                       const char* update_json, const char* image_path, const char* trace_path, char** result_json) {
    return guarded([&] {
        need_captioner(models);
        need_autoencoder(models);
        require(input_image, "input image path is null");
        require(source, "caption source is null");
        const std::string src = source;
        CaptionSource cs;
        if (src == "beam") cs = CaptionSource::Beam;
        else if (src == "paraphrase") cs = CaptionSource::Paraphrase;
        else throw std::invalid_argument("caption source must be 'beam' or 'paraphrase'");
        const UpdateConfig cfg = update_config_from_json(opt_str(update_json));
        const ImageTensor x = read_ppm(input_image);
        ImageToImage r = image_to_image(x, cs, k, models->view(), cfg, Vocabulary::toy());
        if (trace_path) r.record.trace_path = trace_path;
        Json result = Json::parse(record_to_json(r.record, Vocabulary::toy()));
        result.update(trace_summary(r.trace));
        write_outputs(r.image, r.trace, image_path, trace_path, result);
        emit(result_json, result.dump(2));
    });
}

vcs_status vcs_evaluate(const vcs_models* models, const char* corpus_path, size_t num_scenes, size_t num_seeds,
                        const char* update_json, const char* trace_dir, const char* report_path, char** report_json) {
    return guarded([&] {
        need_captioner(models);
        need_autoencoder(models);
        require(num_scenes >= 1, "num_scenes must be at least 1");
        require(num_seeds >= 1, "num_seeds must be at least 1");
        const UpdateConfig cfg = update_config_from_json(opt_str(update_json));
        const Corpus corpus =
            corpus_path ? load_corpus(corpus_path) : generate_corpus(num_scenes, 5, derive_seed(cfg.seed, 9));
        require(corpus.records.size() >= num_scenes, "the corpus has fewer scenes than requested");
        EvaluationOptions opts;
        opts.num_seeds = num_seeds;
        if (trace_dir) opts.trace_dir = trace_dir;
        const std::span<const CorpusRecord> sample(corpus.records.data(), num_scenes);
        const ExperimentReport report = evaluate_multi_vs_single(sample, models->view(), cfg, opts, corpus.vocabulary);
        const std::string text = report_to_json(report, corpus.vocabulary);
        if (report_path) detail::write_text_file(report_path, text + "\n");
        emit(report_json, text);
    });
}

} // extern "C"

#include "vecspace/pipelines.hpp"

#include "json_io.hpp"
#include "vecspace/text_metrics.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vecspace {

using detail::Json;

namespace {

const nn::Captioner& captioner_of(const PipelineModels& m) {
    if (!m.captioner) throw std::invalid_argument("pipeline needs a captioner");
    return *m.captioner;
}

const nn::Paraphraser& paraphraser_of(const PipelineModels& m) {
    if (!m.paraphraser) throw std::invalid_argument("pipeline needs a paraphraser");
    return *m.paraphraser;
}

bool has_content(const Caption& c) { return !strip_framing(c).ids.empty(); }

Json captions_json(std::span<const Caption> captions, const Vocabulary& vocab) {
    Json out = Json::array();
    for (const auto& c : captions) out.push_back(vocab.decode(c));
    return out;
}

ExperimentRecord make_record(std::uint64_t seed, std::string mode, std::vector<Caption> captions,
                             const RecaptionScore& score) {
    ExperimentRecord r;
    r.seed = seed;
    r.mode = std::move(mode);
    r.captions = std::move(captions);
    r.recaption = score.recaption;
    r.recaption_bleu1 = score.bleu1;
    r.semantic_match = score.semantic_match;
    return r;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

} // namespace

LatentVector pipeline_h0(const PipelineModels& models, std::uint64_t seed) {
    if (!models.autoencoder) throw std::invalid_argument("pipeline needs an autoencoder");
    return init_h(models.autoencoder->latent_dim(), derive_seed(seed, 0));
}

GenerationResult generate_from_captions(std::span<const Caption> captions, const PipelineModels& models,
                                        const UpdateConfig& config) {
    if (captions.empty()) throw std::invalid_argument("generation needs at least one caption");
    captioner_of(models);
    RunResult r = run(pipeline_h0(models, config.seed), captions, std::nullopt, models.engine(), config);
    GenerationResult out;
    out.image = std::move(r.image);
    out.h = std::move(r.h);
    out.trace = std::move(r.trace);
    out.captions.assign(captions.begin(), captions.end());
    return out;
}

SyntheticGeneration generate_with_synthetic_captions(const Caption& y, std::size_t chain_steps,
                                                     const PipelineModels& models, const UpdateConfig& config,
                                                     const Vocabulary& vocab) {
    std::vector<Caption> captions{y};
    if (chain_steps > 0) {
        const auto chain =
            nn::chain_paraphrase(paraphraser_of(models), y, chain_steps, derive_seed(config.seed, 2));
        captions.insert(captions.end(), chain.captions.begin(), chain.captions.end());
    }
    SyntheticGeneration out;
    out.generation = generate_from_captions(captions, models, config);
    const auto source = parse_caption(y, vocab);
    std::size_t matched = 0;
    for (const auto& c : captions) {
        const auto s = parse_caption(c, vocab);
        const bool ok = source && s && *s == *source;
        out.matches_source.push_back(ok);
        matched += ok ? 1 : 0;
    }
    out.match_rate = static_cast<double>(matched) / static_cast<double>(captions.size());
    return out;
}

RecaptionScore score_recaption(const nn::Captioner& captioner, const ImageTensor& image,
                               std::span<const Caption> references, const std::optional<Semantics>& expected,
                               const Vocabulary& vocab) {
    RecaptionScore s;
    s.recaption = nn::caption_greedy(captioner, image);
    if (has_content(s.recaption)) s.bleu1 = bleu(s.recaption, references, 1).score;
    if (expected) {
        const auto parsed = parse_caption(s.recaption, vocab);
        s.semantic_match = parsed && *parsed == *expected;
    }
    return s;
}

ImageToImage image_to_image(const ImageTensor& x, CaptionSource source, std::size_t k, const PipelineModels& models,
                            const UpdateConfig& config, const Vocabulary& vocab) {
    if (k == 0) throw std::invalid_argument("k must be at least 1");
    const auto& cap = captioner_of(models);
    std::vector<Caption> derived;
    if (source == CaptionSource::Beam) {
        for (auto& hyp : nn::caption_beam(cap, x, k, k))
            if (has_content(hyp.caption)) derived.push_back(std::move(hyp.caption));
    } else {
        const Caption first = nn::caption_greedy(cap, x);
        if (has_content(first)) {
            derived.push_back(first);
            if (k > 1) {
                const auto chain =
                    nn::chain_paraphrase(paraphraser_of(models), first, k - 1, derive_seed(config.seed, 2));
                for (const auto& c : chain.captions)
                    if (has_content(c)) derived.push_back(c);
            }
        }
    }
    if (derived.empty()) throw std::runtime_error("the captioner produced no usable caption for the input image");

    GenerationResult g = generate_from_captions(derived, models, config);
    const auto expected = parse_caption(derived.front(), vocab);
    const RecaptionScore score = score_recaption(cap, g.image, derived, expected, vocab);
    ImageToImage out;
    out.image = std::move(g.image);
    out.trace = std::move(g.trace);
    out.record = make_record(config.seed, source == CaptionSource::Beam ? "img2img-beam" : "img2img-paraphrase",
                             std::move(derived), score);
    return out;
}

double sign_test_p_value(std::size_t wins, std::size_t losses) {
    const std::size_t n = wins + losses;
    if (n == 0) return 1.0;
    const std::size_t m = std::min(wins, losses);
    const double ln2 = std::log(2.0);
    double tail = 0.0;
    for (std::size_t i = 0; i <= m; ++i) {
        const double log_c = std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(i) + 1) -
                             std::lgamma(static_cast<double>(n - i) + 1);
        tail += std::exp(log_c - static_cast<double>(n) * ln2);
    }
    return std::min(1.0, 2.0 * tail);
}

void summarize(ExperimentReport& r) {
    std::vector<double> single, multi, diff;
    std::size_t single_ok = 0, multi_ok = 0;
    r.wins = r.losses = r.ties = 0;
    r.failures.clear();
    for (std::size_t i = 0; i < r.runs.size(); ++i) {
        const auto& run = r.runs[i];
        single.push_back(run.single.recaption_bleu1);
        multi.push_back(run.multi.recaption_bleu1);
        diff.push_back(run.difference);
        single_ok += run.single.semantic_match ? 1 : 0;
        multi_ok += run.multi.semantic_match ? 1 : 0;
        if (run.difference > 0.0) {
            ++r.wins;
        } else if (run.difference < 0.0) {
            ++r.losses;
            r.failures.push_back(i);
        } else {
            ++r.ties;
        }
    }
    std::tie(r.mean_single, r.std_single) = mean_std(single);
    std::tie(r.mean_multi, r.std_multi) = mean_std(multi);
    r.mean_difference = mean_std(diff).first;
    const double n = r.runs.empty() ? 1.0 : static_cast<double>(r.runs.size());
    r.single_match_rate = static_cast<double>(single_ok) / n;
    r.multi_match_rate = static_cast<double>(multi_ok) / n;
    const std::size_t decided = r.wins + r.losses;
    r.win_rate = decided == 0 ? 0.0 : static_cast<double>(r.wins) / static_cast<double>(decided);
    r.sign_test_p = sign_test_p_value(r.wins, r.losses);
}

ExperimentReport evaluate_multi_vs_single(std::span<const CorpusRecord> sample, const PipelineModels& models,
                                          const UpdateConfig& config, const EvaluationOptions& options,
                                          const Vocabulary& vocab) {
    const auto& cap = captioner_of(models);
    if (options.multi_captions < 2) throw std::invalid_argument("multi-caption conditioning needs at least 2 captions");
    for (const auto& rec : sample)
        if (rec.captions.size() < options.multi_captions)
            throw std::invalid_argument("record " + rec.id + " has " + std::to_string(rec.captions.size()) +
                                        " captions; " + std::to_string(options.multi_captions) + " are needed");
    if (options.trace_dir) std::filesystem::create_directories(*options.trace_dir);

    ExperimentReport report;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const auto& rec = sample[i];
        const Semantics expected = semantics_of(rec.scene);
        for (std::size_t s = 0; s < options.num_seeds; ++s) {
            UpdateConfig cfg = config;
            cfg.seed = derive_seed(derive_seed(config.seed, i), s);
            std::vector<std::size_t> order(rec.captions.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            Rng pick(derive_seed(cfg.seed, 3));
            pick.shuffle(order);
            std::vector<Caption> multi;
            for (std::size_t j = 0; j < options.multi_captions; ++j) multi.push_back(rec.captions[order[j]]);
            const std::vector<Caption> single{multi.front()};

            PairedRun pr;
            pr.scene_id = rec.id;
            pr.seed_index = s;
            auto run_one = [&](const std::vector<Caption>& captions, const char* mode) {
                GenerationResult g = generate_from_captions(captions, models, cfg);
                const RecaptionScore score = score_recaption(cap, g.image, rec.captions, expected, vocab);
                ExperimentRecord r = make_record(cfg.seed, mode, captions, score);
                if (options.trace_dir) {
                    const auto path =
                        *options.trace_dir / (rec.id + "_seed" + std::to_string(s) + "_" + mode + ".jsonl");
                    write_trace(g.trace, vocab, path);
                    r.trace_path = path.string();
                }
                return r;
            };
            pr.single = run_one(single, "single");
            pr.multi = run_one(multi, "multi");
            pr.difference = pr.multi.recaption_bleu1 - pr.single.recaption_bleu1;
            report.runs.push_back(std::move(pr));
        }
    }
    summarize(report);
    return report;
}

std::string record_to_json(const ExperimentRecord& r, const Vocabulary& vocab) {
    Json j;
    j["seed"] = r.seed;
    j["mode"] = r.mode;
    j["captions"] = captions_json(r.captions, vocab);
    j["recaption"] = vocab.decode(r.recaption);
    j["recaption_bleu1"] = r.recaption_bleu1;
    j["semantic_match"] = r.semantic_match;
    j["trace_path"] = r.trace_path;
    return j.dump(2);
}

std::string report_to_json(const ExperimentReport& report, const Vocabulary& vocab) {
    Json runs = Json::array();
    for (const auto& run : report.runs) {
        runs.push_back({{"scene", run.scene_id},
                        {"seed_index", run.seed_index},
                        {"single", Json::parse(record_to_json(run.single, vocab))},
                        {"multi", Json::parse(record_to_json(run.multi, vocab))},
                        {"difference", run.difference}});
    }
    Json failures = Json::array();
    for (std::size_t i : report.failures) failures.push_back(runs[i]);
    Json j;
    j["aggregate"] = {{"runs", report.runs.size()},
                      {"mean_single_bleu1", report.mean_single},
                      {"std_single_bleu1", report.std_single},
                      {"mean_multi_bleu1", report.mean_multi},
                      {"std_multi_bleu1", report.std_multi},
                      {"mean_difference", report.mean_difference},
                      {"single_semantic_match", report.single_match_rate},
                      {"multi_semantic_match", report.multi_match_rate},
                      {"wins", report.wins},
                      {"losses", report.losses},
                      {"ties", report.ties},
                      {"win_rate", report.win_rate},
                      {"sign_test_p", report.sign_test_p}};
    j["runs"] = std::move(runs);
    j["failures"] = std::move(failures);
    return j.dump(2);
}

} // namespace vecspace

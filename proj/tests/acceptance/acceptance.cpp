// Acceptance checks, one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include "models.hpp"
#include "oracles.hpp"
#include "table1.hpp"

#include "vecspace/latent_engine.hpp"
#include "vecspace/nn/models.hpp"
#include "vecspace/pair_builder.hpp"
#include "vecspace/pipelines.hpp"
#include "vecspace/text_metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifndef VECSPACE_CLI_PATH
#error "VECSPACE_CLI_PATH must name the command-line tool"
#endif

using namespace vecspace;
namespace fs = std::filesystem;
namespace vt = vecspace::testing;

namespace {

// Tolerances and thresholds.
constexpr double kTable1Seconds = 1.0;
constexpr double kClipTolerance = 1e-12;
constexpr std::size_t kBleuPairs = 10000;
constexpr std::size_t kGammaPairs = 1000;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr std::size_t kGradVectors = 5;
constexpr std::size_t kGradCoords = 20;
constexpr double kGradSeconds = 60.0;
constexpr std::size_t kNoiseIterations = 10000;
constexpr double kNoiseSigma = 0.05;
constexpr double kNoiseRelTolerance = 0.05;
constexpr std::size_t kConvergenceSeeds = 20;
constexpr std::size_t kConvergenceRequired = 18;
constexpr double kConvergenceRatio = 0.1;
constexpr double kConvergenceSeconds = 300.0;
constexpr std::size_t kAveragingInstances = 50;
constexpr std::size_t kHeldOutCaptions = 200;
constexpr double kHeldOutRate = 0.8;
constexpr std::size_t kChains = 100;
constexpr double kChainRate = 0.7;
constexpr double kParaphraserSeconds = 900.0;
constexpr std::size_t kEvalScenes = 20;
constexpr std::size_t kEvalSeeds = 5;
constexpr double kEvalSeconds = 1800.0;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void verdict(int id, bool pass, const std::string& detail) {
    std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
    if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

PipelineModels all_models() { return {&vt::autoencoder(), &vt::captioner(), &vt::paraphraser()}; }
EngineModels engine() { return {&vt::autoencoder(), &vt::captioner()}; }

void table1_arithmetic() {
    const auto t0 = Clock::now();
    bool ok = true;
    std::ostringstream detail;
    for (const auto& row : table1::rows()) {
        const auto groups = table1::synthetic_groups(row);
        const PairStats s = pair_stats(groups);
        const bool formula = s.num_pairs == row.samples * row.captions_per_sample * (row.captions_per_sample - 1);
        const bool exact = s.num_pairs == row.expected_pairs;
        const bool printed = table1::matches_printed(s.num_pairs, row);
        ok = ok && formula && exact && printed;
        detail << row.dataset << "=" << s.num_pairs << " ";
    }
    const double secs = since(t0);
    ok = ok && secs < kTable1Seconds;
    detail << fmt("(%.3f s)", secs);
    verdict(1, ok, detail.str());
}

void bleu_correctness() {
    const auto& v = Vocabulary::toy();
    const Caption a = v.encode("a red circle left of a blue square");
    const Caption b = v.encode("there is");
    const bool identity = bleu(a, std::vector<Caption>{a}, 4).score == 1.0 && bleu(a, std::vector<Caption>{a}, 1).score == 1.0;
    const bool disjoint = bleu(a, std::vector<Caption>{b}, 1).score == 0.0 && bleu(a, std::vector<Caption>{b}, 4).score == 0.0;
    const Caption the3 = v.encode("the the the");
    const Caption the_cat = v.encode("the circle");
    const double clipped = bleu(the3, std::vector<Caption>{the_cat}, 1).score;
    const bool clip = std::abs(clipped - 1.0 / 3.0) <= kClipTolerance;

    Rng rng(2025);
    bool bounded = true;
    for (std::size_t i = 0; i < kBleuPairs; ++i) {
        const Caption c = oracle::random_caption(rng, 1, 12, 8);
        std::vector<Caption> refs;
        const std::size_t nrefs = 1 + rng.below(3);
        for (std::size_t r = 0; r < nrefs; ++r) refs.push_back(oracle::random_caption(rng, 1, 12, 8));
        const std::size_t order = 1 + rng.below(4);
        const double s = bleu(c, refs, order).score;
        bounded = bounded && s >= 0.0 && s <= 1.0 && std::abs(s - oracle::bleu(c, refs, order)) <= 1e-12;
    }
    verdict(2, identity && disjoint && clip && bounded,
            "clipped=" + fmt("%.15f", clipped) + " random pairs in [0,1] and matching oracle: " +
                (bounded ? "yes" : "no"));
}

void gamma1_formula() {
    Rng rng(77);
    std::size_t exact = 0;
    for (std::size_t i = 0; i < kGammaPairs; ++i) {
        const Caption c = oracle::random_caption(rng, 1, 12, 10);
        const Caption r = oracle::random_caption(rng, 1, 12, 10);
        const double expected = oracle::bleu(c, {r}, 1) / static_cast<double>(r.ids.size());
        exact += gamma1(c, r) == expected ? 1 : 0;
    }
    verdict(3, exact == kGammaPairs, std::to_string(exact) + "/" + std::to_string(kGammaPairs) + " exact");
}

double worst_term_error(const std::function<TermGradient(const LatentVector&)>& term, Rng& rng) {
    double worst = 0.0;
    for (std::size_t v = 0; v < kGradVectors; ++v) {
        LatentVector h = init_h(vt::autoencoder().latent_dim(), rng.next_u64());
        const LatentVector analytic = term(h).grad;
        for (std::size_t k = 0; k < kGradCoords; ++k) {
            const auto i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(h.size())));
            const double saved = h(i);
            h(i) = saved + kGradStep;
            const double plus = term(h).loss;
            h(i) = saved - kGradStep;
            const double minus = term(h).loss;
            h(i) = saved;
            const double numeric = (plus - minus) / (2.0 * kGradStep);
            const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), 1e-6});
            worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
        }
    }
    return worst;
}

void gradient_fidelity() {
    const auto t0 = Clock::now();
    const auto models = engine();
    const auto& rec = vt::training_corpus().records[0];
    const Caption caption = rec.captions[0];
    const ImageTensor& target = rec.image;
    Rng rng(4);
    const double word = worst_term_error([&](const LatentVector& h) { return word_term(models, h, caption); }, rng);
    const double image = worst_term_error([&](const LatentVector& h) { return image_term(models, h, target); }, rng);
    const double latent = worst_term_error([&](const LatentVector& h) { return latent_term(models, h, false); }, rng);
    const double secs = since(t0);
    const bool ok = word < kGradTolerance && image < kGradTolerance && latent < kGradTolerance && secs < kGradSeconds;
    verdict(4, ok,
            "worst relative error word=" + fmt("%.2e", word) + " image=" + fmt("%.2e", image) +
                " latent=" + fmt("%.2e", latent) + fmt(" (%.1f s)", secs));
}

void identity_and_noise() {
    const auto models = engine();
    const ImageTensor& target = vt::training_corpus().records[1].image;
    const LatentVector h0 = init_h(vt::autoencoder().latent_dim(), 3);

    UpdateConfig zero;
    zero.gamma2 = zero.gamma3 = zero.gamma4 = 0.0;
    zero.word_term_scale = 0.0;
    UpdateState state = make_state(models, h0, {vt::training_corpus().records[1].captions[0]}, target);
    Rng rng(noise_seed(0));
    for (int i = 0; i < 10; ++i) step(state, models, zero, rng);
    const bool identity = state.h == h0;

    UpdateConfig noise = zero;
    noise.gamma4 = kNoiseSigma;
    UpdateState ns = make_state({models.autoencoder, nullptr}, h0, {}, target);
    Rng nrng(noise_seed(1));
    const Index D = h0.size();
    nn::Vector sum = nn::Vector::Zero(D), sumsq = nn::Vector::Zero(D);
    for (std::size_t i = 0; i < kNoiseIterations; ++i) {
        const LatentVector before = ns.h;
        step(ns, {models.autoencoder, nullptr}, noise, nrng);
        const nn::Vector d = ns.h - before;
        sum += d;
        sumsq += d.cwiseProduct(d);
    }
    const double n = static_cast<double>(kNoiseIterations);
    const double var_target = kNoiseSigma * kNoiseSigma;
    double worst_var = 0.0, worst_mean = 0.0;
    for (Index i = 0; i < D; ++i) {
        const double mean = sum(i) / n;
        const double var = sumsq(i) / n - mean * mean;
        worst_var = std::max(worst_var, std::abs(var - var_target) / var_target);
        // A sample mean of zero-mean noise has standard error sigma / sqrt(n);
        // 5% of sigma is about five standard errors here.
        worst_mean = std::max(worst_mean, std::abs(mean) / kNoiseSigma);
    }
    const bool ok = identity && worst_var < kNoiseRelTolerance && worst_mean < kNoiseRelTolerance;
    verdict(5, ok,
            std::string("zero-config unchanged: ") + (identity ? "yes" : "no") +
                "; worst variance error " + fmt("%.3f", worst_var) + ", worst |mean|/sigma " + fmt("%.4f", worst_mean));
}

void convergence() {
    const auto t0 = Clock::now();
    const EngineModels models{&vt::autoencoder(), nullptr};
    UpdateConfig c;
    c.gamma3 = c.gamma4 = 0.0;
    c.word_term_scale = 0.0;
    c.iterations = 200;
    std::size_t ok = 0;
    double worst = 0.0;
    for (std::uint64_t s = 0; s < kConvergenceSeeds; ++s) {
        const ImageTensor& x = vt::training_corpus().records[s].image;
        const LatentVector h0 = init_h(vt::autoencoder().latent_dim(), derive_seed(s, 0));
        const double initial = image_term(models, h0, x).loss;
        c.seed = s;
        const RunResult r = run(h0, {}, x, models, c);
        const double ratio = image_term(models, r.h, x).loss / initial;
        worst = std::max(worst, ratio);
        ok += ratio <= kConvergenceRatio ? 1 : 0;
    }
    const double secs = since(t0);
    verdict(6, ok >= kConvergenceRequired && secs < kConvergenceSeconds,
            std::to_string(ok) + "/" + std::to_string(kConvergenceSeeds) + " seeds, worst ratio " +
                fmt("%.3f", worst) + fmt(" (%.1f s)", secs));
}

void averaging() {
    const auto models = engine();
    const auto& corpus = vt::training_corpus();
    Rng rng(99);
    std::size_t exact = 0;
    for (std::size_t t = 0; t < kAveragingInstances; ++t) {
        const LatentVector h = init_h(vt::autoencoder().latent_dim(), rng.next_u64());
        const Caption predicted = nn::caption_greedy(vt::captioner(), vt::autoencoder().generate(h));
        std::vector<Caption> targets;
        const std::size_t m = 2 + rng.below(3);
        for (std::size_t j = 0; j < m; ++j)
            targets.push_back(corpus.records[rng.below(corpus.records.size())].captions[rng.below(2)]);
        const WordGradient w = word_gradient(models, h, predicted, targets);

        // Brute force: every term from scratch, summed in order, divided by m.
        LatentVector sum = LatentVector::Zero(h.size());
        std::vector<LatentVector> terms;
        const auto pred_content = strip_framing(predicted);
        for (const auto& c : targets) {
            const auto ref = strip_framing(c);
            const double g1 = ref.ids.empty() || pred_content.ids.empty() ? 0.0 : oracle::bleu(pred_content, {ref}, 1) / ref.ids.size();
            terms.push_back(g1 * word_term(models, h, c).grad);
        }
        bool all_equal = true;
        for (const auto& tm : terms) all_equal = all_equal && tm == terms.front();
        LatentVector expected;
        if (all_equal) {
            expected = terms.front();
        } else {
            for (const auto& tm : terms) sum += tm;
            expected = sum / static_cast<double>(m);
        }
        exact += w.combined == expected ? 1 : 0;
    }
    verdict(7, exact == kAveragingInstances,
            std::to_string(exact) + "/" + std::to_string(kAveragingInstances) + " instances bitwise equal");
}

bool parses_to(const Caption& c, const Semantics& s) {
    const auto p = parse_caption(c);
    return p && *p == s;
}

void paraphraser_semantics() {
    // Training time is the recorded one (the model may come from the cache);
    // the clock below covers evaluation only.
    const auto& para = vt::paraphraser();
    const double train_secs = vt::paraphraser_seconds();
    const auto t0 = Clock::now();
    const Corpus held = generate_corpus(kHeldOutCaptions, 1, 9001);
    std::size_t hits = 0;
    for (const auto& r : held.records) hits += parses_to(nn::paraphrase(para, r.captions[0]), semantics_of(r.scene));
    std::size_t chains = 0;
    for (std::size_t i = 0; i < kChains; ++i) {
        const auto& r = held.records[i];
        const auto chain = nn::chain_paraphrase(para, r.captions[0], 3, i);
        bool ok = true;
        for (const auto& c : chain.captions) ok = ok && parses_to(c, semantics_of(r.scene));
        chains += ok ? 1 : 0;
    }
    const double total = train_secs + since(t0);
    const double rate = static_cast<double>(hits) / kHeldOutCaptions;
    const double chain_rate = static_cast<double>(chains) / kChains;
    verdict(8, rate >= kHeldOutRate && chain_rate >= kChainRate && total < kParaphraserSeconds,
            "held-out " + fmt("%.3f", rate) + ", chains " + fmt("%.2f", chain_rate) +
                fmt(" (training + eval %.0f s)", total));
}

void multi_vs_single(const fs::path& archive) {
    const auto t0 = Clock::now();
    const Corpus scenes = vt::training_scenes_with_captions(kEvalScenes, 5);
    EvaluationOptions opts;
    opts.num_seeds = kEvalSeeds;
    fs::remove_all(archive);
    fs::create_directories(archive);
    opts.trace_dir = archive / "traces";
    const auto report = evaluate_multi_vs_single(scenes.records, all_models(), vt::caption_generation_config(),
                                                 opts, Vocabulary::toy());
    std::ofstream(archive / "report.json") << report_to_json(report, Vocabulary::toy()) << "\n";
    {
        std::ofstream out(archive / "failures.jsonl");
        for (std::size_t i : report.failures) {
            const auto& run = report.runs[i];
            out << "{\"scene\":\"" << run.scene_id << "\",\"seed_index\":" << run.seed_index
                << ",\"difference\":" << run.difference
                << ",\"single\":" << record_to_json(run.single, Vocabulary::toy())
                << ",\"multi\":" << record_to_json(run.multi, Vocabulary::toy()) << "}\n";
        }
    }
    const bool archived = report.failures.empty() || fs::file_size(archive / "failures.jsonl") > 0;
    const double secs = since(t0);
    verdict(9,
            report.mean_difference >= 0.0 && report.win_rate > 0.5 && archived && secs < kEvalSeconds &&
                report.runs.size() == kEvalScenes * kEvalSeeds,
            "mean diff " + fmt("%+.4f", report.mean_difference) + ", wins " + std::to_string(report.wins) +
                " losses " + std::to_string(report.losses) + " ties " + std::to_string(report.ties) +
                ", win-rate " + fmt("%.3f", report.win_rate) + ", p " + fmt("%.3g", report.sign_test_p) +
                ", failures archived " + std::to_string(report.failures.size()) + fmt(" (%.0f s)", secs));
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Runs the CLI command list in `dir`; stdout of each command goes to
// <dir>/stdout.<i>.
bool run_commands(const fs::path& dir, const std::vector<std::string>& commands) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (std::size_t i = 0; i < commands.size(); ++i) {
        const std::string cmd = "cd '" + dir.string() + "' && '" + VECSPACE_CLI_PATH + "' " + commands[i] +
                                " > stdout." + std::to_string(i) + " 2> /dev/null";
        if (std::system(cmd.c_str()) != 0) {
            std::cout << "  command failed: " << commands[i] << std::endl;
            return false;
        }
    }
    return true;
}

void cli_determinism(const fs::path& work) {
    const std::string update = " --iters 15 --seed 3 --word-term-scale 30";
    // Training summaries report wall-clock seconds on stdout, so only their
    // checkpoint files are compared.
    const std::vector<std::string> commands{
        "gen-corpus --seed 5 --num-scenes 60 --captions-per-scene 3 --out corpus",
        "train --component autoencoder --corpus corpus --epochs 2 --seed 1 --out ae.ckpt",
        "train --component captioner --corpus corpus --epochs 2 --seed 2 --out cap.ckpt",
        "pairs --input corpus --out pairs.jsonl --stats",
        "train --component paraphraser --pairs pairs.jsonl --epochs 1 --seed 3 --out para.ckpt",
        "bleu --candidate 'a red circle' --reference 'a red square' --reference 'there is a red circle'",
        "paraphrase --ckpt para.ckpt --sentence 'a red circle left of a blue square' --chain 2",
        "generate --ae-ckpt ae.ckpt --cap-ckpt cap.ckpt --captions 'a red circle' 'there is a red circle'" + update +
            " --gamma4 0.01 --out gen.ppm --trace gen.jsonl",
        "img2img --ae-ckpt ae.ckpt --cap-ckpt cap.ckpt --para-ckpt para.ckpt --image corpus/scene_000000.ppm" " --source paraphrase --k 2" + update + " --out i2i.ppm --trace i2i.jsonl",
        "img2img --ae-ckpt ae.ckpt --cap-ckpt cap.ckpt --image corpus/scene_000001.ppm --source beam --k 3" + update +
            " --out beam.ppm",
        "evaluate --mode multi-vs-single --ae-ckpt ae.ckpt --cap-ckpt cap.ckpt --corpus corpus --scenes 2 --seeds 2" +
            update + " --report report.json --trace-dir traces",
    };
    const fs::path a = work / "run_a", b = work / "run_b";
    bool ok = run_commands(a, commands) && run_commands(b, commands);
    std::size_t compared = 0;
    std::string mismatch;
    if (ok) {
        for (const auto& entry : fs::recursive_directory_iterator(a)) {
            if (!entry.is_regular_file()) continue;
            const fs::path rel = fs::relative(entry.path(), a);
            const std::string name = rel.filename().string();
            const bool train_stdout = name == "stdout.1" || name == "stdout.2" || name == "stdout.4";
            if (train_stdout) continue;
            ++compared;
            if (!fs::exists(b / rel) || slurp(entry.path()) != slurp(b / rel)) {
                ok = false;
                mismatch += " " + rel.string();
            }
        }
    }
    verdict(10, ok && compared > 0,
            std::to_string(compared) + " output files compared" + (mismatch.empty() ? "" : ", differing:" + mismatch));
}

} // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "vecspace_acceptance";
    fs::create_directories(work);
    std::cout << "acceptance artifacts under " << work.string() << std::endl;
    table1_arithmetic();
    bleu_correctness();
    gamma1_formula();
    gradient_fidelity();
    identity_and_noise();
    convergence();
    averaging();
    paraphraser_semantics();
    multi_vs_single(work / "multi_vs_single");
    cli_determinism(work / "cli");
    std::cout << (10 - failures) << "/10 criteria passed" << std::endl;
    return failures;
}

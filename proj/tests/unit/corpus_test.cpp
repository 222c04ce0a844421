#include "doctest.h"

#include "vecspace/corpus.hpp"
#include "vecspace/errors.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace vecspace;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("vecspace_unit_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("build_corpus writes the expected counts deterministically") {
    const auto a = scratch_dir("corpus_a");
    const auto b = scratch_dir("corpus_b");
    const CorpusManifest ma = build_corpus(100, 5, 42, a);
    const CorpusManifest mb = build_corpus(100, 5, 42, b);
    CHECK(ma.num_records == 100);
    CHECK(ma.num_captions == 500);
    CHECK(slurp(ma.manifest_path) == slurp(mb.manifest_path));

    const Corpus loaded = load_corpus(a);
    const Corpus direct = generate_corpus(100, 5, 42);
    REQUIRE(loaded.records.size() == 100);
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(loaded.records[i].scene == direct.records[i].scene);
        CHECK(loaded.records[i].captions == direct.records[i].captions);
        CHECK(slurp(a / loaded.records[i].image_file) == slurp(b / loaded.records[i].image_file));
    }
    CHECK(load_corpus(a / kManifestFileName).records.size() == 100);
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
}

TEST_CASE("records are independent of corpus size and caption count") {
    const Corpus small = generate_corpus(10, 2, 7);
    const Corpus large = generate_corpus(30, 5, 7);
    for (std::size_t i = 0; i < small.records.size(); ++i) {
        CHECK(small.records[i].scene == large.records[i].scene);
        CHECK(small.records[i].captions[0] == large.records[i].captions[0]);
        CHECK(small.records[i].captions[1] == large.records[i].captions[1]);
    }
}

TEST_CASE("pixmap round-trip is within half a grey level") {
    const ImageTensor img = render_scene(sample_scene(3));
    const std::string bytes = encode_ppm(img);
    CHECK(bytes.rfind("P6\n", 0) == 0);
    const ImageTensor back = decode_ppm(bytes);
    REQUIRE(back.storage().size() == img.storage().size());
    double worst = 0.0;
    for (std::size_t i = 0; i < img.storage().size(); ++i)
        worst = std::max(worst, std::abs(back.storage()[i] - img.storage()[i]));
    CHECK(worst <= 0.5 / 255.0 + 1e-12);
    CHECK(encode_ppm(back) == bytes);
}

TEST_CASE("corrupt inputs raise typed errors") {
    CHECK_THROWS_AS(decode_ppm("P3\n1 1\n255\n"), FormatError);
    CHECK_THROWS_AS(decode_ppm("P6\n2 2\n255\nab"), FormatError);
    CHECK_THROWS_AS(load_corpus(scratch_dir("missing")), IoError);
    const auto dir = scratch_dir("bad_manifest");
    std::filesystem::create_directories(dir);
    std::ofstream(dir / kManifestFileName) << "{\"version\": 99}";
    CHECK_THROWS_AS(load_corpus(dir), FormatError);
    std::ofstream(dir / kManifestFileName) << "not json";
    CHECK_THROWS_AS(load_corpus(dir), FormatError);
    std::filesystem::remove_all(dir);
}

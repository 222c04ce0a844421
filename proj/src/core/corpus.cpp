#include "vecspace/corpus.hpp"

#include "json_io.hpp"
#include "vecspace/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace vecspace {

namespace fs = std::filesystem;
using detail::Json;

namespace detail {

Json scene_to_json(const Scene& scene) {
    Json objects = Json::array();
    for (const auto& o : scene.objects) {
        objects.push_back({{"shape", to_string(o.shape)},
                           {"color", to_string(o.color)},
                           {"row", o.cell.row},
                           {"col", o.cell.col}});
    }
    Json j;
    j["objects"] = std::move(objects);
    j["relation"] = scene.relation ? Json(to_string(*scene.relation)) : Json(nullptr);
    j["canvas_size"] = scene.canvas_size;
    return j;
}

Scene scene_from_json(const Json& j) {
    Scene scene;
    scene.canvas_size = j.value("canvas_size", kDefaultCanvas);
    for (const auto& o : j.at("objects")) {
        auto shape = shape_from_string(o.at("shape").get<std::string>());
        auto color = color_from_string(o.at("color").get<std::string>());
        if (!shape || !color) throw FormatError("unknown shape or color in scene record");
        scene.objects.push_back({*shape, *color, {o.at("row").get<int>(), o.at("col").get<int>()}});
    }
    if (j.contains("relation") && !j.at("relation").is_null()) {
        auto rel = relation_from_string(j.at("relation").get<std::string>());
        if (!rel) throw FormatError("unknown relation in scene record");
        scene.relation = *rel;
    }
    validate(scene);
    return scene;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json read_json_file(const fs::path& path) {
    try {
        return Json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw IoError("write failed for " + path.string());
    }
    fs::rename(tmp, path);
}

} // namespace detail

Corpus generate_corpus(std::size_t num_scenes, std::size_t k, std::uint64_t seed) {
    if (num_scenes == 0) throw std::invalid_argument("num_scenes must be at least 1");
    Corpus corpus;
    corpus.seed = seed;
    corpus.captions_per_scene = k;
    corpus.records.reserve(num_scenes);
    for (std::size_t i = 0; i < num_scenes; ++i) {
        const std::uint64_t record_seed = derive_seed(seed, i);
        CorpusRecord r;
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%06zu", i);
        r.id = name;
        r.image_file = r.id + ".ppm";
        r.scene = sample_scene(record_seed);
        r.image = render_scene(r.scene);
        r.captions = describe_scene(r.scene, k, derive_seed(record_seed, 1), corpus.vocabulary);
        corpus.records.push_back(std::move(r));
    }
    return corpus;
}

CorpusManifest write_corpus(const Corpus& corpus, const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir))
        throw IoError("cannot create corpus directory " + out_dir.string());

    Json manifest;
    manifest["format"] = "vecspace-corpus";
    manifest["version"] = kCorpusFormatVersion;
    manifest["seed"] = corpus.seed;
    manifest["num_scenes"] = corpus.records.size();
    manifest["captions_per_scene"] = corpus.captions_per_scene;
    manifest["vocabulary"] = corpus.vocabulary.tokens();
    Json records = Json::array();
    std::size_t num_captions = 0;
    for (const auto& r : corpus.records) {
        Json captions = Json::array();
        for (const auto& c : r.captions) captions.push_back(corpus.vocabulary.decode(c));
        num_captions += r.captions.size();
        records.push_back({{"id", r.id},
                           {"scene", detail::scene_to_json(r.scene)},
                           {"image", r.image_file},
                           {"captions", std::move(captions)}});
        write_ppm(r.image, out_dir / r.image_file);
    }
    manifest["records"] = std::move(records);
    const fs::path manifest_path = out_dir / kManifestFileName;
    detail::write_text_file(manifest_path, manifest.dump(2) + "\n");
    return {manifest_path, corpus.records.size(), num_captions};
}

CorpusManifest build_corpus(std::size_t num_scenes, std::size_t k, std::uint64_t seed,
                            const fs::path& out_dir) {
    return write_corpus(generate_corpus(num_scenes, k, seed), out_dir);
}

Corpus load_corpus(const fs::path& path) {
    const fs::path manifest_path = fs::is_directory(path) ? path / kManifestFileName : path;
    const Json manifest = detail::read_json_file(manifest_path);
    if (manifest.value("format", "") != "vecspace-corpus")
        throw FormatError(manifest_path.string() + " is not a corpus manifest");
    if (manifest.value("version", 0) != kCorpusFormatVersion)
        throw FormatError("unsupported corpus version in " + manifest_path.string());

    Corpus corpus;
    std::vector<std::string> tokens = manifest.at("vocabulary").get<std::vector<std::string>>();
    if (tokens.size() < static_cast<std::size_t>(kNumSpecials))
        throw FormatError("corpus vocabulary lacks special tokens");
    corpus.vocabulary = Vocabulary({tokens.begin() + kNumSpecials, tokens.end()});
    corpus.seed = manifest.value("seed", std::uint64_t{0});
    corpus.captions_per_scene = manifest.value("captions_per_scene", std::size_t{0});
    const fs::path base = manifest_path.parent_path();
    for (const auto& rj : manifest.at("records")) {
        CorpusRecord r;
        r.id = rj.at("id").get<std::string>();
        r.scene = detail::scene_from_json(rj.at("scene"));
        r.image_file = rj.at("image").get<std::string>();
        r.image = read_ppm(base / r.image_file);
        for (const auto& c : rj.at("captions")) r.captions.push_back(corpus.vocabulary.encode(c.get<std::string>()));
        corpus.records.push_back(std::move(r));
    }
    return corpus;
}

std::string encode_ppm(const ImageTensor& image) {
    if (image.channels() != 3) throw std::invalid_argument("pixmap output needs 3 channels");
    std::string out = "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
    out.reserve(out.size() + image.size());
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
            }
    return out;
}

ImageTensor decode_ppm(const std::string& bytes) {
    std::size_t pos = 0;
    auto next_token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return bytes.substr(start, pos - start);
    };
    if (next_token() != "P6") throw FormatError("not a binary pixmap (P6)");
    int width = 0, height = 0, maxval = 0;
    try {
        width = std::stoi(next_token());
        height = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::exception&) {
        throw FormatError("malformed pixmap header");
    }
    if (width <= 0 || height <= 0 || maxval != 255) throw FormatError("unsupported pixmap header");
    ++pos;  // single whitespace after maxval
    const std::size_t needed = static_cast<std::size_t>(width) * height * 3;
    if (bytes.size() < pos + needed) throw FormatError("truncated pixmap");
    ImageTensor img(3, height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = static_cast<unsigned char>(bytes[pos++]) / 255.0;
    return img;
}

void write_ppm(const ImageTensor& image, const fs::path& path) {
    detail::write_text_file(path, encode_ppm(image));
}

ImageTensor read_ppm(const fs::path& path) { return decode_ppm(detail::read_text_file(path)); }

} // namespace vecspace

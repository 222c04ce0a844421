#pragma once

#include "vecspace/toy_world.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vecspace {

struct CorpusRecord {
    std::string id;
    Scene scene;
    ImageTensor image;
    std::string image_file;
    std::vector<Caption> captions;
};

struct Corpus {
    Vocabulary vocabulary = Vocabulary::toy();
    std::uint64_t seed = 0;
    std::size_t captions_per_scene = 0;
    std::vector<CorpusRecord> records;
};

struct CorpusManifest {
    std::filesystem::path manifest_path;
    std::size_t num_records = 0;
    std::size_t num_captions = 0;
};

inline constexpr int kCorpusFormatVersion = 1;
inline constexpr const char* kManifestFileName = "manifest.json";

// In-memory corpus; record i is generated from derive_seed(seed, i) so the
// result does not depend on generation order.
Corpus generate_corpus(std::size_t num_scenes, std::size_t k, std::uint64_t seed);

// Writes manifest.json plus one P6 pixmap per record into `out_dir`.
CorpusManifest write_corpus(const Corpus& corpus, const std::filesystem::path& out_dir);

CorpusManifest build_corpus(std::size_t num_scenes, std::size_t k, std::uint64_t seed,
                            const std::filesystem::path& out_dir);

// Accepts either the manifest file or the directory containing it.
Corpus load_corpus(const std::filesystem::path& path);

// Binary portable pixmap, maxval 255, row-major interleaved RGB.
void write_ppm(const ImageTensor& image, const std::filesystem::path& path);
ImageTensor read_ppm(const std::filesystem::path& path);
std::string encode_ppm(const ImageTensor& image);
ImageTensor decode_ppm(const std::string& bytes);

} // namespace vecspace

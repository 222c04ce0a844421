#include "vecspace/pair_builder.hpp"

#include "json_io.hpp"
#include "vecspace/corpus.hpp"
#include "vecspace/rng.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace vecspace {

using detail::Json;

namespace {

std::vector<Caption> unique_in_order(const std::vector<Caption>& captions) {
    std::vector<Caption> out;
    std::set<Caption> seen;
    for (const auto& c : captions)
        if (seen.insert(c).second) out.push_back(c);
    return out;
}

} // namespace

std::vector<CaptionPair> make_pairs(const std::vector<GroupedCaptions>& groups, const PairOptions& options) {
    std::vector<CaptionPair> out;
    if (!options.max_pairs_per_group && !options.dedup_surface_forms) {
        std::size_t total = 0;
        for (const auto& g : groups) total += g.captions.size() * (g.captions.size() ? g.captions.size() - 1 : 0);
        out.reserve(total);
    }
    Rng rng(options.seed);
    for (const auto& group : groups) {
        const std::vector<Caption> deduped =
            options.dedup_surface_forms ? unique_in_order(group.captions) : std::vector<Caption>{};
        const auto& caps = options.dedup_surface_forms ? deduped : group.captions;
        const std::size_t k = caps.size();
        if (k < 2) continue;

        std::vector<std::pair<std::size_t, std::size_t>> index_pairs;
        index_pairs.reserve(k * (k - 1));
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                if (i != j) index_pairs.emplace_back(i, j);

        if (options.max_pairs_per_group && index_pairs.size() > *options.max_pairs_per_group) {
            rng.shuffle(index_pairs);
            index_pairs.resize(*options.max_pairs_per_group);
            std::sort(index_pairs.begin(), index_pairs.end());
        }
        for (auto [i, j] : index_pairs) out.push_back({caps[i], caps[j]});
    }
    return out;
}

PairStats pair_stats(const std::vector<GroupedCaptions>& groups) {
    PairStats s;
    if (groups.empty()) return s;
    s.num_samples = groups.size();
    s.min_captions_per_sample = groups.front().captions.size();
    for (const auto& g : groups) {
        const std::uint64_t k = g.captions.size();
        s.num_captions += k;
        s.min_captions_per_sample = std::min(s.min_captions_per_sample, k);
        s.max_captions_per_sample = std::max(s.max_captions_per_sample, k);
        s.num_pairs += k == 0 ? 0 : k * (k - 1);
    }
    s.mean_captions_per_sample = static_cast<double>(s.num_captions) / static_cast<double>(s.num_samples);
    return s;
}

std::vector<GroupedCaptions> ingest_grouped_json(const std::filesystem::path& path, const Vocabulary& vocab) {
    const Json j = detail::read_json_file(std::filesystem::is_directory(path) ? path / kManifestFileName : path);
    if (!j.is_object()) throw FormatError("grouped caption file must hold a JSON object");
    std::vector<GroupedCaptions> groups;
    try {
        if (j.contains("records")) {
            if (j.value("format", "") != "vecspace-corpus" || j.value("version", 0) != 1)
                throw FormatError("unknown corpus manifest version");
            for (const auto& r : j.at("records")) {
                GroupedCaptions g;
                g.sample_id = r.at("id").get<std::string>();
                for (const auto& c : r.at("captions")) g.captions.push_back(vocab.encode(c.get<std::string>()));
                groups.push_back(std::move(g));
            }
            return groups;
        }
        if (!j.contains("version")) throw FormatError("grouped caption file lacks a version");
        if (j.at("version").get<int>() != kGroupedSchemaVersion)
            throw FormatError("unknown grouped caption schema version " + j.at("version").dump());

        auto id_string = [](const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
        std::map<std::string, std::size_t> index;
        for (const auto& img : j.at("images")) {
            const std::string id = id_string(img.at("id"));
            if (index.emplace(id, groups.size()).second) groups.push_back({id, {}});
        }
        for (const auto& ann : j.at("annotations")) {
            auto it = index.find(id_string(ann.at("image_id")));
            if (it == index.end()) throw FormatError("annotation references unknown image id");
            groups[it->second].captions.push_back(vocab.encode(ann.at("caption").get<std::string>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed grouped caption file: ") + e.what());
    }
    return groups;
}

void write_pairs_jsonl(const std::vector<CaptionPair>& pairs, const std::filesystem::path& path,
                       const Vocabulary& vocab) {
    std::string text;
    auto tokens = [&](const Caption& c) {
        Json arr = Json::array();
        for (TokenId id : c.ids) arr.push_back(vocab.token(id));
        return arr;
    };
    for (const auto& p : pairs) {
        Json line;
        line["source_tokens"] = tokens(p.source);
        line["target_tokens"] = tokens(p.target);
        text += line.dump();
        text += '\n';
    }
    detail::write_text_file(path, text);
}

std::vector<CaptionPair> read_pairs_jsonl(const std::filesystem::path& path, const Vocabulary& vocab) {
    std::istringstream in(detail::read_text_file(path));
    std::vector<CaptionPair> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const Json j = Json::parse(line);
            CaptionPair p;
            for (const auto& t : j.at("source_tokens")) p.source.ids.push_back(vocab.id(t.get<std::string>()));
            for (const auto& t : j.at("target_tokens")) p.target.ids.push_back(vocab.id(t.get<std::string>()));
            out.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("malformed pair record at line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

} // namespace vecspace

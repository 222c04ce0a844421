#pragma once

#include "vecspace/errors.hpp"
#include "vecspace/toy_world.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace vecspace::detail {

using Json = nlohmann::ordered_json;

Json scene_to_json(const Scene& scene);
Scene scene_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
// Writes `text` to `path` through a temporary file and rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

} // namespace vecspace::detail

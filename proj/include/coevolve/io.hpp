#pragma once

#include <filesystem>
#include <string>

namespace coevolve {

/// Whole-file binary read and write; both throw Error on failure.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace coevolve

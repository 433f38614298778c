#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace fpmoe::io {

// Writes to a sibling temporary file, then renames over `path`. Parent
// directories are created. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Fills a fresh staging directory, then swaps it in for `target` with
// renames; a failed fill leaves any existing target untouched.
void write_directory_atomic(const std::filesystem::path& target,
                            const std::function<void(const std::filesystem::path&)>& fill);

// Throws IoError when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

}  // namespace fpmoe::io

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace mafgan {

// Shortest representation that parses back to the same double.
std::string format_double(double v);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace mafgan

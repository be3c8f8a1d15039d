#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace irrclr {

// SHA-256, lowercase hex. Used for checkpoint integrity and artifact
// manifests.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& bytes);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace irrclr

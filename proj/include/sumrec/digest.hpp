#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace sumrec {

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's contents; throws Error(MissingFile) if unreadable.
std::string sha256_file(const std::filesystem::path& path);

/// Canonical serialization: object keys sorted, no whitespace, UTF-8 kept as-is.
std::string canonical_json(const nlohmann::json& value);

inline std::string digest_json(const nlohmann::json& value) {
    return sha256_hex(canonical_json(value));
}

}  // namespace sumrec

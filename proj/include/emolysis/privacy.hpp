#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace emolysis::privacy {

/// Largest string value a persisted JSON field may hold.
inline constexpr std::size_t kMaxFieldBytes = 4096;

struct Finding {
  std::filesystem::path file;
  std::size_t offset = 0;  // byte offset in the file, or line number for field findings
  std::string reason;
};

/// Name of the first image/audio/video container signature starting at
/// `bytes[pos]`, or empty.
std::string_view magic_at(std::string_view bytes, std::size_t pos);

/// Findings for one file's contents: container signatures anywhere, NUL bytes,
/// and (for .json/.jsonl) string fields longer than kMaxFieldBytes or base64
/// fields that decode to a container.
std::vector<Finding> scan_bytes(const std::filesystem::path& name, std::string_view bytes);

/// Recursively scans every regular file under `root`.
std::vector<Finding> scan_tree(const std::filesystem::path& root);

}  // namespace emolysis::privacy

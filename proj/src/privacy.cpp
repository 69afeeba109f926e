#include "emolysis/privacy.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <fmt/format.h>

#include "emolysis/media.hpp"
#include "emolysis/serialization.hpp"

namespace emolysis::privacy {
namespace {

bool starts(std::string_view bytes, std::size_t pos, std::string_view sig) {
  return bytes.size() - pos >= sig.size() && bytes.compare(pos, sig.size(), sig) == 0;
}

bool is_base64(std::string_view s) {
  if (s.size() < 16 || s.size() % 4 != 0) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/' || c == '=';
  });
}

std::string decode_base64(std::string_view s) {
  std::string out(s.size() / 4 * 3, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(s.data()), static_cast<int>(s.size()));
  if (n < 0) return {};
  out.resize(static_cast<std::size_t>(n));
  return out;
}

void walk(const nlohmann::json& j, const std::filesystem::path& file, std::size_t line,
          std::vector<Finding>& out) {
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s.size() > kMaxFieldBytes) {
      out.push_back({file, line, fmt::format("string field of {} bytes", s.size())});
    } else if (is_base64(s)) {
      const std::string decoded = decode_base64(s);
      if (auto m = magic_at(decoded, 0); !m.empty()) {
        out.push_back({file, line, fmt::format("base64 field decodes to {}", m)});
      }
    }
  } else if (j.is_structured()) {
    for (const auto& v : j) walk(v, file, line, out);
  } else if (j.is_binary()) {
    out.push_back({file, line, "binary JSON value"});
  }
}

}  // namespace

std::string_view magic_at(std::string_view b, std::size_t pos) {
  if (pos >= b.size()) return {};
  if (starts(b, pos, "RIFF") && b.size() - pos >= 12) {
    const auto form = b.substr(pos + 8, 4);
    if (form == "AVI " || form == "WAVE" || form == "WEBP") return "RIFF container";
  }
  if (starts(b, pos, "\x89PNG\r\n\x1a\n")) return "PNG";
  if (starts(b, pos, "\xFF\xD8\xFF")) return "JPEG";
  if (starts(b, pos, "GIF87a") || starts(b, pos, "GIF89a")) return "GIF";
  if (starts(b, pos, "BM") && b.size() - pos >= 14 && b[pos + 6] == 0 && b[pos + 7] == 0 &&
      b[pos + 8] == 0 && b[pos + 9] == 0) {
    return "BMP";
  }
  if (starts(b, pos, "ftyp") && pos >= 4) return "ISO media";
  if (starts(b, pos, "OggS")) return "Ogg";
  if (starts(b, pos, "fLaC")) return "FLAC";
  if (starts(b, pos, "ID3") && b.size() - pos >= 5 && b[pos + 3] >= 2 && b[pos + 3] <= 4 &&
      b[pos + 4] == 0) {
    return "MP3";
  }
  if (starts(b, pos, "\x1A\x45\xDF\xA3")) return "Matroska/WebM";
  return {};
}

std::vector<Finding> scan_bytes(const std::filesystem::path& name, std::string_view bytes) {
  std::vector<Finding> out;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] == '\0') {
      out.push_back({name, i, "NUL byte"});
      break;
    }
    if (auto m = magic_at(bytes, i); !m.empty()) out.push_back({name, i, fmt::format("{} signature", m)});
  }
  const auto ext = name.extension();
  if (ext != ".json" && ext != ".jsonl") return out;

  auto check_doc = [&](std::string_view doc, std::size_t line) {
    const auto j = nlohmann::json::parse(doc, nullptr, false);
    if (j.is_discarded()) {
      out.push_back({name, line, "unparseable JSON"});
      return;
    }
    walk(j, name, line, out);
  };
  if (ext == ".json") {
    check_doc(bytes, 1);
  } else {
    std::size_t line = 1;
    for (std::size_t start = 0; start < bytes.size(); ++line) {
      const auto nl = bytes.find('\n', start);
      const auto end = nl == std::string_view::npos ? bytes.size() : nl;
      if (end > start) check_doc(bytes.substr(start, end - start), line);
      start = end + 1;
    }
  }
  return out;
}

std::vector<Finding> scan_tree(const std::filesystem::path& root) {
  std::vector<Finding> out;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto found = scan_bytes(f, read_file(f));
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

}  // namespace emolysis::privacy

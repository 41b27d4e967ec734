#include "tokgran/text.hpp"

#include <fstream>
#include <stdexcept>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

namespace tokgran::text {

std::u32string utf8_to_u32(std::string_view utf8) {
  std::u32string out;
  out.reserve(utf8.size());
  std::size_t i = 0;
  const auto n = utf8.size();
  while (i < n) {
    const auto c0 = static_cast<unsigned char>(utf8[i]);
    char32_t cp = 0;
    std::size_t extra = 0;
    if (c0 < 0x80) {
      cp = c0;
    } else if ((c0 >> 5) == 0x6) {
      cp = c0 & 0x1F;
      extra = 1;
    } else if ((c0 >> 4) == 0xE) {
      cp = c0 & 0x0F;
      extra = 2;
    } else if ((c0 >> 3) == 0x1E) {
      cp = c0 & 0x07;
      extra = 3;
    } else {
      throw std::invalid_argument("invalid UTF-8 lead byte");
    }
    for (std::size_t k = 1; k <= extra; ++k) {
      if (i + k >= n) throw std::invalid_argument("truncated UTF-8 sequence");
      const auto ck = static_cast<unsigned char>(utf8[i + k]);
      if ((ck >> 6) != 0x2) throw std::invalid_argument("invalid UTF-8 continuation byte");
      cp = (cp << 6) | (ck & 0x3F);
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

std::string u32_to_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

std::string normalize(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalizer unavailable");
  const auto src = icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  icu::UnicodeString composed = nfc->normalize(src, status);
  if (U_FAILURE(status)) throw std::invalid_argument("NFC normalization failed");

  std::u32string out;
  out.reserve(static_cast<std::size_t>(composed.length()));
  bool pending_space = false;
  for (int32_t i = 0; i < composed.length(); i = composed.moveIndex32(i, 1)) {
    const UChar32 cp = composed.char32At(i);
    if (u_isUWhiteSpace(cp) || cp == static_cast<UChar32>(kWhitespaceMarker)) {
      pending_space = !out.empty();
      continue;
    }
    if (u_iscntrl(cp) || u_charType(cp) == U_FORMAT_CHAR) continue;
    if (pending_space) {
      out.push_back(U' ');
      pending_space = false;
    }
    out.push_back(static_cast<char32_t>(cp));
  }
  return u32_to_utf8(out);
}

std::vector<std::string> split_words(std::string_view normalized) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start < normalized.size()) {
    auto end = normalized.find(' ', start);
    if (end == std::string_view::npos) end = normalized.size();
    if (end > start) words.emplace_back(normalized.substr(start, end - start));
    start = end + 1;
  }
  return words;
}

std::size_t char_length(std::string_view utf8) {
  std::size_t n = 0;
  for (char c : utf8) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::u32string to_piece_form(std::string_view normalized, bool dummy_prefix) {
  std::u32string out = utf8_to_u32(normalized);
  for (auto& c : out) {
    if (c == U' ') c = kWhitespaceMarker;
  }
  if (dummy_prefix && !out.empty()) out.insert(out.begin(), kWhitespaceMarker);
  return out;
}

std::string from_piece_form(std::u32string_view pieces, bool dummy_prefix) {
  std::u32string out(pieces);
  for (auto& c : out) {
    if (c == kWhitespaceMarker) c = U' ';
  }
  if (dummy_prefix && !out.empty() && out.front() == U' ') out.erase(out.begin());
  return u32_to_utf8(out);
}

std::vector<std::string> read_documents(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> docs;
  std::string line;
  while (std::getline(in, line)) {
    auto doc = normalize(line);
    if (!doc.empty()) docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace tokgran::text

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tokgran::text {

/// Reserved character standing in for U+0020 inside tokenizer pieces.
inline constexpr char32_t kWhitespaceMarker = U'▁';

std::u32string utf8_to_u32(std::string_view utf8);
std::string u32_to_utf8(std::u32string_view text);

/// NFC-normalizes, maps every whitespace run (and literal U+2581) to a single
/// space, drops control characters and trims both ends.
std::string normalize(std::string_view utf8);

/// Splits normalized text on single spaces.
std::vector<std::string> split_words(std::string_view normalized);

/// Number of code points.
std::size_t char_length(std::string_view utf8);

/// Tokenizer view of normalized text: spaces become the marker, and with
/// `dummy_prefix` the first word also receives one, so every word starts with
/// the marker.
std::u32string to_piece_form(std::string_view normalized, bool dummy_prefix = true);

/// Inverse of to_piece_form.
std::string from_piece_form(std::u32string_view pieces, bool dummy_prefix = true);

/// Reads a UTF-8 file as one normalized document per non-empty line.
std::vector<std::string> read_documents(const std::filesystem::path& path);

}  // namespace tokgran::text

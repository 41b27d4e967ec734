#include "tokgran/text.hpp"

#include <gtest/gtest.h>

namespace tokgran::text {
namespace {

TEST(Normalize, ComposesToNfc) {
  EXPECT_EQ(normalize("cafe\xCC\x81"), "caf\xC3\xA9");
}

TEST(Normalize, CollapsesWhitespace) {
  EXPECT_EQ(normalize("  If\tyou \n were  "), "If you were");
  EXPECT_EQ(normalize("a\xE2\x96\x81" "b"), "a b");
}

TEST(PieceForm, MarkerLeadsEveryWord) {
  EXPECT_EQ(to_piece_form("If you"), U"▁If▁you");
  EXPECT_EQ(to_piece_form("If you", false), U"If▁you");
  EXPECT_EQ(from_piece_form(U"▁If▁you"), "If you");
  EXPECT_EQ(to_piece_form(""), U"");
}

TEST(Utf8, RoundTrip) {
  const std::string s = "journey ▁ über 日本 🙂";
  EXPECT_EQ(u32_to_utf8(utf8_to_u32(s)), s);
  EXPECT_EQ(char_length("über"), 4u);
  EXPECT_THROW(utf8_to_u32("\xC3"), std::invalid_argument);
}

TEST(Words, SplitOnSpaces) {
  EXPECT_EQ(split_words("If you were"), (std::vector<std::string>{"If", "you", "were"}));
  EXPECT_TRUE(split_words("").empty());
}

}  // namespace
}  // namespace tokgran::text

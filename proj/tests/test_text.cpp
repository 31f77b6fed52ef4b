#include "engage/text.hpp"

#include <gtest/gtest.h>

#include "engage/common.hpp"

using namespace engage;
using namespace engage::text;

TEST(Normalize, ReplacesNumbersAndUrls) {
  EXPECT_EQ(normalize("Call 1-800-555 now http://x.co"), "call <num>-<num>-<num> now <url>");
}

TEST(Normalize, ReplacesMentionsAndFoldsCase) {
  EXPECT_EQ(normalize("@Support HELP"), "<mention> help");
}

TEST(Normalize, HttpsAndWwwForms) {
  EXPECT_EQ(normalize("see https://a.b/c?q=1 or www.site.com/x"), "see <url> or <url>");
}

TEST(Normalize, BareAtSignSurvives) {
  EXPECT_EQ(normalize("meet @ noon"), "meet @ noon");
}

TEST(Normalize, KeepsEmojiBytes) {
  EXPECT_EQ(normalize("ok 🙂"), "ok 🙂");
}

TEST(Normalize, RejectsCollidingPlaceholders) {
  NormalizationConfig cfg;
  cfg.url_token = cfg.number_token;
  EXPECT_THROW(normalize("x", cfg), UsageError);
}

TEST(Normalize, IdempotentOnRandomStrings) {
  // property check: normalize(normalize(s)) == normalize(s)
  Rng rng(7);
  const std::string pieces[] = {"Hello",   "WORLD",  "@user",   "@Acme_Support",
                                "http://t.co/abc", "https://x.y/z?a=1", "www.shop.com", "123",
                                "1-800",   "ticket#4521", "🙂",   "don't",
                                "...",     "ok!!",   "why?",    "a@b"};
  for (int iter = 0; iter < 1000; ++iter) {
    std::string s;
    std::size_t len = rng.below(12);
    for (std::size_t k = 0; k < len; ++k) {
      if (k) s += ' ';
      s += pieces[rng.below(std::size(pieces))];
    }
    std::string once = normalize(s);
    EXPECT_EQ(normalize(once), once) << "input: " << s;
  }
}

TEST(Tokenize, SplitsTerminalPunctuation) {
  EXPECT_EQ(tokenize("sorry to hear that!"),
            (TokenSequence{"sorry", "to", "hear", "that", "!"}));
}

TEST(Tokenize, PreservesPlaceholders) {
  EXPECT_EQ(tokenize("<url>"), (TokenSequence{"<url>"}));
  EXPECT_EQ(tokenize("see <url> now"), (TokenSequence{"see", "<url>", "now"}));
}

TEST(Tokenize, QuestionMarkAlwaysStandsAlone) {
  EXPECT_EQ(tokenize("really?now"), (TokenSequence{"really", "?", "now"}));
  EXPECT_EQ(tokenize("what?"), (TokenSequence{"what", "?"}));
}

TEST(Tokenize, EmptyInput) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize("   \t\n").empty());
}

TEST(Tokenize, MultiplePunctuationPeeled) {
  EXPECT_EQ(tokenize("wow!!"), (TokenSequence{"wow", "!", "!"}));
  EXPECT_EQ(tokenize("end."), (TokenSequence{"end", "."}));
}

TEST(Tokenize, NoEmptyOrWhitespaceTokens) {
  Rng rng(11);
  const std::string pieces[] = {"a", "bb!", "c?", "!!", "..", "x,y", "<num>", "  ", "word."};
  for (int iter = 0; iter < 500; ++iter) {
    std::string s;
    std::size_t len = rng.below(10);
    for (std::size_t k = 0; k < len; ++k) {
      s += pieces[rng.below(std::size(pieces))];
      if (rng.below(2)) s += ' ';
    }
    for (const std::string& tok : tokenize(s)) {
      EXPECT_FALSE(tok.empty());
      for (char c : tok) EXPECT_FALSE(c == ' ' || c == '\t' || c == '\n');
    }
  }
}

TEST(Tokenize, NormalizedTextHasNoRawUrlsOrHandles) {
  const std::string inputs[] = {"go to http://x.co now!", "ping @Someone, thanks",
                                "WWW.SITE.COM is down", "email me@home"};
  for (const std::string& s : inputs) {
    for (const std::string& tok : tokenize(normalize(s))) {
      EXPECT_EQ(tok.find("http"), std::string::npos);
      EXPECT_NE(tok.front(), '@');
    }
  }
}

TEST(Ngrams, UnpaddedBigrams) {
  std::vector<std::vector<std::string>> expected = {{"a", "b"}, {"b", "c"}};
  EXPECT_EQ(ngrams({"a", "b", "c"}, 2, false), expected);
}

TEST(Ngrams, PaddedBigramsOfSingleton) {
  std::vector<std::vector<std::string>> expected = {{"<s>", "a"}, {"a", "</s>"}};
  EXPECT_EQ(ngrams({"a"}, 2, true), expected);
}

TEST(Ngrams, OrderZeroRejected) {
  EXPECT_THROW(ngrams({"a"}, 0, false), UsageError);
}

TEST(Ngrams, CountIdentityOverRandomSequences) {
  Rng rng(3);
  for (int iter = 0; iter < 300; ++iter) {
    std::size_t len = rng.below(20);
    TokenSequence tokens;
    for (std::size_t k = 0; k < len; ++k) tokens.push_back("w" + std::to_string(rng.below(5)));
    for (std::size_t n = 1; n <= 6; ++n) {
      std::size_t unpadded = ngrams(tokens, n, false).size();
      std::size_t expected = len + 1 >= n + 1 ? len - n + 1 : 0;
      EXPECT_EQ(unpadded, expected);
      // padded length is len + n, so always len + 1 windows
      EXPECT_EQ(ngrams(tokens, n, true).size(), len + 1);
    }
    if (len >= 1) EXPECT_EQ(ngrams(tokens, 2, false).size(), len - 1);
  }
}

TEST(Ngrams, DeterministicAcrossCalls) {
  TokenSequence t = {"x", "y", "z", "x"};
  EXPECT_EQ(ngrams(t, 3, true), ngrams(t, 3, true));
}

#include "engage/corpus.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "engage/common.hpp"

using namespace engage;
using namespace engage::corpus;

namespace {

std::string fixture_path(const std::string& name) {
  return std::string(ENGAGE_FIXTURE_DIR) + "/" + name;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  EXPECT_TRUE(is.good()) << path;
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Brute-force reference CSV parser, independent of csv::Reader: loads the
// whole buffer, walks it once tracking quote state, and materializes all
// records before splitting fields.
std::vector<std::vector<std::string>> reference_csv(const std::string& buf) {
  std::vector<std::string> raw_records;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    char c = buf[i];
    if (c == '"') in_quotes = !in_quotes;
    if (!in_quotes && (c == '\n' || c == '\r')) {
      if (c == '\r' && i + 1 < buf.size() && buf[i + 1] == '\n') ++i;
      raw_records.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) raw_records.push_back(cur);

  std::vector<std::vector<std::string>> records;
  for (const std::string& rec : raw_records) {
    std::vector<std::string> fields;
    std::string field;
    in_quotes = false;
    for (std::size_t i = 0; i < rec.size(); ++i) {
      char c = rec[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < rec.size() && rec[i + 1] == '"') {
            field += '"';
            ++i;
          } else {
            in_quotes = false;
          }
        } else {
          field += c;
        }
      } else if (c == '"') {
        in_quotes = true;
      } else if (c == ',') {
        fields.push_back(field);
        field.clear();
      } else {
        field += c;
      }
    }
    fields.push_back(field);
    records.push_back(fields);
  }
  return records;
}

Tweet make_tweet(std::string id, std::string author, bool inbound, std::int64_t ts,
                 std::string parent = "") {
  Tweet t;
  t.tweet_id = std::move(id);
  t.author_id = std::move(author);
  t.inbound = inbound;
  t.created_at = ts;
  t.text = "text of " + t.tweet_id;
  t.in_response_to = std::move(parent);
  return t;
}

std::string tweet_to_csv_row(const Tweet& t) {
  std::ostringstream os;
  std::vector<std::string> responses = t.response_tweet_ids;
  std::string joined;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    if (i) joined += ',';
    joined += responses[i];
  }
  csv::write_record(os, {t.tweet_id, t.author_id, t.inbound ? "True" : "False",
                         std::to_string(t.created_at), t.text, joined, t.in_response_to});
  return os.str();
}

}  // namespace

TEST(Timestamp, Formats) {
  EXPECT_EQ(parse_timestamp("1509487847"), 1509487847);
  EXPECT_EQ(parse_timestamp("Tue Oct 31 22:10:47 +0000 2017"), 1509487847);
  EXPECT_EQ(parse_timestamp("2017-10-31 22:10:47"), 1509487847);
  EXPECT_EQ(parse_timestamp("2017-06-01T09:30:00"), 1496309400);
  // offset applied: +0530 means the instant is 5h30m earlier in UTC
  EXPECT_EQ(parse_timestamp("Tue Oct 31 22:10:47 +0100 2017"), 1509487847 - 3600);
  EXPECT_FALSE(parse_timestamp("not a date").has_value());
  EXPECT_FALSE(parse_timestamp("").has_value());
}

TEST(ParseCorpus, EmptyParentBecomesAbsent) {
  std::istringstream is(
      "tweet_id,author_id,inbound,created_at,text,response_tweet_id,in_response_to_tweet_id\n"
      "a1,u1,True,10,hello,,\n");
  TweetReader reader(is);
  auto t = reader.next();
  ASSERT_TRUE(t.has_value());
  EXPECT_TRUE(t->in_response_to.empty());
  EXPECT_TRUE(t->response_tweet_ids.empty());
  EXPECT_FALSE(reader.next().has_value());
}

TEST(ParseCorpus, QuotedTextMatchesReferenceParser) {
  std::string buf = read_file(fixture_path("quoted.csv"));
  auto expected = reference_csv(buf);
  ASSERT_EQ(expected.size(), 11u);  // header + 10 rows

  std::istringstream is(buf);
  TweetReader reader(is);
  std::size_t row = 1;
  while (auto t = reader.next()) {
    ASSERT_LT(row, expected.size());
    EXPECT_EQ(t->tweet_id, expected[row][0]);
    EXPECT_EQ(t->text, expected[row][4]) << "row " << row;
    ++row;
  }
  EXPECT_EQ(row, expected.size());
  EXPECT_EQ(reader.skipped_count(), 0u);
}

TEST(ParseCorpus, MissingTweetIdSkipped) {
  std::istringstream is(
      "tweet_id,author_id,inbound,created_at,text,response_tweet_id,in_response_to_tweet_id\n"
      "a1,u1,True,10,one,,\n"
      ",u2,True,11,missing id,,\n"
      "a2,u2,True,12,two,,\n"
      "a3,brand,False,13,three,,a2\n");
  TweetReader reader(is);
  std::vector<Tweet> tweets;
  while (auto t = reader.next()) tweets.push_back(*t);
  EXPECT_EQ(tweets.size(), 3u);
  EXPECT_EQ(reader.skipped_count(), 1u);
}

TEST(ParseCorpus, MissingColumnIsFatal) {
  std::istringstream is("tweet_id,author_id,inbound,created_at,text\n");
  EXPECT_THROW(TweetReader reader(is), DataError);
}

TEST(ParseCorpus, RoundTripReserializes) {
  std::string buf = read_file(fixture_path("mini_corpus.csv"));
  std::istringstream is(buf);
  std::vector<Tweet> first = read_all_tweets(is);
  ASSERT_EQ(first.size(), 12u);

  std::ostringstream os;
  os << "tweet_id,author_id,inbound,created_at,text,response_tweet_id,in_response_to_tweet_id\n";
  for (const Tweet& t : first) os << tweet_to_csv_row(t);
  std::istringstream is2(os.str());
  std::vector<Tweet> second = read_all_tweets(is2);
  ASSERT_EQ(second.size(), first.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_EQ(first[i].tweet_id, second[i].tweet_id);
    EXPECT_EQ(first[i].author_id, second[i].author_id);
    EXPECT_EQ(first[i].inbound, second[i].inbound);
    EXPECT_EQ(first[i].created_at, second[i].created_at);
    EXPECT_EQ(first[i].text, second[i].text);
    EXPECT_EQ(first[i].response_tweet_ids, second[i].response_tweet_ids);
    EXPECT_EQ(first[i].in_response_to, second[i].in_response_to);
  }
}

TEST(Threading, SimpleChain) {
  std::vector<Tweet> tweets = {make_tweet("t1", "cust", true, 10),
                               make_tweet("t2", "brand", false, 20, "t1"),
                               make_tweet("t3", "cust", true, 30, "t2")};
  ThreadResult r = thread_conversations(tweets);
  ASSERT_EQ(r.conversations.size(), 1u);
  const Conversation& c = r.conversations[0];
  ASSERT_EQ(c.turns.size(), 3u);
  EXPECT_EQ(c.turns[0].role, Role::kCustomer);
  EXPECT_EQ(c.turns[1].role, Role::kBrand);
  EXPECT_EQ(c.turns[2].role, Role::kCustomer);
  EXPECT_EQ(c.brand_id, "brand");
  EXPECT_EQ(c.customer_id, "cust");
  EXPECT_EQ(c.conversation_id, "t1");
}

TEST(Threading, IndependentRoots) {
  std::vector<Tweet> tweets = {make_tweet("a", "u1", true, 10),
                               make_tweet("b", "u2", true, 20)};
  ThreadResult r = thread_conversations(tweets);
  EXPECT_EQ(r.conversations.size(), 2u);
}

TEST(Threading, ThirdAuthorGetsOtherRole) {
  std::vector<Tweet> tweets = {make_tweet("t1", "cust", true, 10),
                               make_tweet("t2", "brand", false, 20, "t1"),
                               make_tweet("t3", "lurker", true, 25, "t2"),
                               make_tweet("t4", "cust", true, 30, "t2")};
  ThreadResult r = thread_conversations(tweets);
  ASSERT_EQ(r.conversations.size(), 1u);
  EXPECT_EQ(r.conversations[0].turns[2].role, Role::kOther);
  EXPECT_EQ(r.conversations[0].turns[3].role, Role::kCustomer);
}

TEST(Threading, BrandRootedDiscardedAndOrphansDropped) {
  std::vector<Tweet> tweets = {
      make_tweet("b1", "brand", false, 10),        // brand-rooted tree of 2
      make_tweet("b2", "cust", true, 20, "b1"),
      make_tweet("o1", "cust", true, 30, "ghost"),  // orphan + its child
      make_tweet("o2", "brand", false, 40, "o1"),
      make_tweet("r1", "cust", true, 50)};          // surviving root
  ThreadResult r = thread_conversations(tweets);
  EXPECT_EQ(r.conversations.size(), 1u);
  EXPECT_EQ(r.stats.dropped_brand_rooted, 2u);
  EXPECT_EQ(r.stats.dropped_orphans, 2u);
  EXPECT_EQ(r.stats.threaded_tweets, 1u);
}

TEST(Threading, CycleBrokenAtNewestEdge) {
  std::vector<Tweet> tweets = {make_tweet("t1", "cust", true, 10, "t2"),
                               make_tweet("t2", "brand", false, 20, "t1")};
  ThreadResult r = thread_conversations(tweets);
  EXPECT_GE(r.stats.cycles_broken, 1u);
  // t2 is newest, so its edge is cut; t2 becomes a brand root and is discarded
  // together with t1, which replies to it.
  EXPECT_EQ(r.conversations.size(), 0u);
  EXPECT_EQ(r.stats.dropped_brand_rooted + r.stats.dropped_orphans, 2u);
}

TEST(Threading, SelfReplyEdgeDropped) {
  std::vector<Tweet> tweets = {make_tweet("t1", "cust", true, 10, "t1")};
  ThreadResult r = thread_conversations(tweets);
  ASSERT_EQ(r.conversations.size(), 1u);
  EXPECT_EQ(r.stats.cycles_broken, 1u);
}

TEST(Threading, PartitionInvariantOnRandomCorpora) {
  Rng rng(99);
  for (int iter = 0; iter < 50; ++iter) {
    std::size_t n = 1 + rng.below(120);
    std::vector<Tweet> tweets;
    for (std::size_t i = 0; i < n; ++i) {
      bool inbound = rng.below(2) == 0;
      Tweet t = make_tweet("t" + std::to_string(i),
                           inbound ? "u" + std::to_string(rng.below(8)) : "brand",
                           inbound, static_cast<std::int64_t>(i));
      std::uint64_t kind = rng.below(10);
      if (kind < 5 && i > 0) {
        t.in_response_to = "t" + std::to_string(rng.below(i));  // valid parent
      } else if (kind == 5) {
        t.in_response_to = "missing" + std::to_string(i);  // orphan
      } else if (kind == 6) {
        t.in_response_to = "t" + std::to_string(rng.below(n));  // may create a cycle
      }
      tweets.push_back(std::move(t));
    }
    ThreadResult r = thread_conversations(tweets);
    EXPECT_EQ(r.stats.threaded_tweets + r.stats.dropped_orphans + r.stats.dropped_brand_rooted,
              n);
    std::uint64_t sum = 0;
    for (const Conversation& c : r.conversations) {
      sum += c.turns.size();
      EXPECT_EQ(c.turns[0].role, Role::kCustomer);
      EXPECT_TRUE(c.turns[0].tweet.in_response_to.empty());
    }
    EXPECT_EQ(sum, r.stats.threaded_tweets);
  }
}

TEST(Threading, MiniCorpusFixture) {
  std::string buf = read_file(fixture_path("mini_corpus.csv"));
  std::istringstream is(buf);
  std::vector<Tweet> tweets = read_all_tweets(is);
  ThreadResult r = thread_conversations(tweets);
  ASSERT_EQ(r.conversations.size(), 3u);
  EXPECT_EQ(r.stats.threaded_tweets, 12u);

  const Conversation& big = r.conversations[2];
  ASSERT_EQ(big.turns.size(), 6u);
  EXPECT_EQ(big.turns[2].role, Role::kOther);  // u4's interjection
  EngagementLabel label = label_engagement(big);
  EXPECT_EQ(label.customer_turns, 3u);
  EXPECT_TRUE(label.engaged);
}

TEST(Label, SingleRoundNotEngaged) {
  std::vector<Tweet> tweets = {make_tweet("t1", "cust", true, 10),
                               make_tweet("t2", "brand", false, 20, "t1")};
  ThreadResult r = thread_conversations(tweets);
  EngagementLabel label = label_engagement(r.conversations[0]);
  EXPECT_EQ(label.engagement_count, 0u);
  EXPECT_FALSE(label.engaged);
}

TEST(Label, OneCustomerReplyIsEngaged) {
  std::vector<Tweet> tweets = {make_tweet("t1", "cust", true, 10),
                               make_tweet("t2", "brand", false, 20, "t1"),
                               make_tweet("t3", "cust", true, 30, "t2")};
  ThreadResult r = thread_conversations(tweets);
  EngagementLabel label = label_engagement(r.conversations[0]);
  EXPECT_EQ(label.engagement_count, 1u);
  EXPECT_TRUE(label.engaged);
}

TEST(Label, FourCustomerTurns) {
  // C,B,C,B,C,B,C chain
  std::vector<Tweet> tweets;
  for (int i = 0; i < 7; ++i) {
    bool cust = i % 2 == 0;
    tweets.push_back(make_tweet("t" + std::to_string(i), cust ? "cust" : "brand", cust,
                                10 * (i + 1), i ? "t" + std::to_string(i - 1) : ""));
  }
  ThreadResult r = thread_conversations(tweets);
  EngagementLabel label = label_engagement(r.conversations[0]);
  EXPECT_EQ(label.customer_turns, 4u);
  EXPECT_EQ(label.engagement_count, 3u);
  EXPECT_TRUE(label.engaged);
}

TEST(Label, ZeroBrandTurnsRejected) {
  std::vector<Tweet> tweets = {make_tweet("t1", "cust", true, 10)};
  ThreadResult r = thread_conversations(tweets);
  EXPECT_THROW(label_engagement(r.conversations[0]), DataError);
}

TEST(Label, EngagedMonotoneUnderAppendedCustomerTurns) {
  Rng rng(5);
  for (int iter = 0; iter < 200; ++iter) {
    Conversation conv;
    conv.conversation_id = "c";
    conv.customer_id = "cust";
    conv.brand_id = "brand";
    std::size_t len = 2 + rng.below(8);
    for (std::size_t i = 0; i < len; ++i) {
      Role role = i == 0 ? Role::kCustomer
                         : (rng.below(3) == 0 ? Role::kOther
                                              : (rng.below(2) ? Role::kCustomer : Role::kBrand));
      if (i == 1) role = Role::kBrand;  // ensure labelable
      conv.turns.push_back({role, make_tweet("t" + std::to_string(i), "x", true, (int)i)});
    }
    bool before = label_engagement(conv).engaged;
    conv.turns.push_back({Role::kCustomer, make_tweet("extra", "cust", true, 999)});
    bool after = label_engagement(conv).engaged;
    EXPECT_TRUE(!before || after);
  }
}

TEST(Split, TenConversationsSixFour) {
  auto [train, test] = split_indices(10, 0.6, 42);
  EXPECT_EQ(train.size(), 6u);
  EXPECT_EQ(test.size(), 4u);
}

TEST(Split, DeterministicForSeed) {
  auto a = split_indices(100, 0.6, 7);
  auto b = split_indices(100, 0.6, 7);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  auto c = split_indices(100, 0.6, 8);
  EXPECT_NE(a.first, c.first);
}

TEST(Split, PartitionForAllSizes) {
  Rng rng(1);
  for (int iter = 0; iter < 100; ++iter) {
    std::size_t n = 1 + rng.below(500);
    double f = 0.05 + 0.9 * rng.unit();
    auto [train, test] = split_indices(n, f, rng.next());
    EXPECT_EQ(train.size() + test.size(), n);
    std::vector<char> seen(n, 0);
    for (std::size_t i : train) seen[i]++;
    for (std::size_t i : test) seen[i]++;
    for (char s : seen) EXPECT_EQ(s, 1);
  }
}

TEST(Split, BadFractionRejected) {
  EXPECT_THROW(split_indices(10, 0.0, 1), UsageError);
  EXPECT_THROW(split_indices(10, 1.0, 1), UsageError);
  EXPECT_THROW(split_indices(10, -0.2, 1), UsageError);
  EXPECT_THROW(split_indices(0, 0.5, 1), UsageError);
}

TEST(Stats, MeanTurns) {
  std::vector<Tweet> tweets;
  for (int i = 0; i < 3; ++i)
    tweets.push_back(make_tweet("a" + std::to_string(i), i == 0 ? "cust" : (i == 1 ? "brand" : "cust"),
                                i != 1, 10 + i, i ? "a" + std::to_string(i - 1) : ""));
  for (int i = 0; i < 5; ++i)
    tweets.push_back(make_tweet("b" + std::to_string(i), i % 2 == 0 ? "cust2" : "brand", i % 2 == 0,
                                100 + i, i ? "b" + std::to_string(i - 1) : ""));
  ThreadResult r = thread_conversations(tweets);
  CorpusStats stats = corpus_stats(r.conversations);
  EXPECT_EQ(stats.total_conversations, 2u);
  EXPECT_DOUBLE_EQ(stats.mean_turns_per_conversation, 4.0);
  EXPECT_EQ(stats.max_conversation_length, 5u);
}

TEST(Stats, SingleFourWordTweet) {
  std::vector<Tweet> tweets = {make_tweet("t1", "cust", true, 10)};
  tweets[0].text = "please fix my phone";
  ThreadResult r = thread_conversations(tweets);
  CorpusStats stats = corpus_stats(r.conversations);
  EXPECT_DOUBLE_EQ(stats.mean_words_per_tweet, 4.0);
}

TEST(Stats, EmptyListAllZero) {
  CorpusStats stats = corpus_stats({});
  EXPECT_EQ(stats.total_tweets, 0u);
  EXPECT_EQ(stats.total_conversations, 0u);
  EXPECT_DOUBLE_EQ(stats.mean_turns_per_conversation, 0.0);
  EXPECT_DOUBLE_EQ(stats.mean_words_per_tweet, 0.0);
}

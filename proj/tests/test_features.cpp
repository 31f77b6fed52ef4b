#include "engage/features.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "engage/common.hpp"
#include "engage/corpus.hpp"
#include "engage/ngram_lm.hpp"
#include "engage/text.hpp"

using namespace engage;
using namespace engage::features;
using engage::text::TokenSequence;

namespace {

const std::vector<Lexicon>& shipped_lexicons() {
  static const std::vector<Lexicon> lex = load_lexicon_dir(ENGAGE_LEXICON_DIR);
  return lex;
}

double category(const std::vector<Lexicon>& lex, const LexiconScores& scores,
                std::string_view name) {
  auto idx = lexicon_index(lex, name);
  EXPECT_TRUE(idx.has_value()) << name;
  return idx ? scores.proportions[*idx] : -1.0;
}

TokenSequence toks(const std::string& s) { return text::tokenize(text::normalize(s)); }

corpus::Conversation make_conversation(const std::string& id, const std::string& customer_text,
                                       const std::string& brand_text, bool engaged) {
  corpus::Conversation conv;
  conv.conversation_id = id;
  conv.customer_id = "cust";
  conv.brand_id = "brand";
  corpus::Tweet c;
  c.tweet_id = id + "_c";
  c.author_id = "cust";
  c.inbound = true;
  c.created_at = 1;
  c.text = customer_text;
  corpus::Tweet b;
  b.tweet_id = id + "_b";
  b.author_id = "brand";
  b.inbound = false;
  b.created_at = 2;
  b.text = brand_text;
  b.in_response_to = c.tweet_id;
  conv.turns.push_back({corpus::Role::kCustomer, c});
  conv.turns.push_back({corpus::Role::kBrand, b});
  if (engaged) {
    corpus::Tweet c2 = c;
    c2.tweet_id = id + "_c2";
    c2.created_at = 3;
    c2.in_response_to = b.tweet_id;
    conv.turns.push_back({corpus::Role::kCustomer, c2});
  }
  return conv;
}

lm::KNModel tiny_lm() {
  std::vector<TokenSequence> corpus;
  for (int i = 0; i < 30; ++i) {
    corpus.push_back(toks("we are here to help"));
    corpus.push_back(toks("please send us a dm"));
    corpus.push_back(toks("what version are you running ?"));
  }
  return lm::train_model(corpus, 3, 1);
}

}  // namespace

// -- lexicons ----------------------------------------------------------------

TEST(Lexicon, PrefixAndExactMatching) {
  std::istringstream is("promis*\nwill\n");
  Lexicon lex = parse_lexicon(is, "future");
  EXPECT_TRUE(lex.matches("will"));
  EXPECT_TRUE(lex.matches("promise"));
  EXPECT_TRUE(lex.matches("promising"));
  EXPECT_FALSE(lex.matches("wills"));
  EXPECT_FALSE(lex.matches("promi"));
}

TEST(Lexicon, EmptyFileRejected) {
  std::istringstream is("\n\n");
  EXPECT_THROW(parse_lexicon(is, "empty"), DataError);
}

TEST(Lexicon, ShippedCategoriesPresent) {
  const auto& lex = shipped_lexicons();
  for (std::string_view name :
       {"interrogation", "certain", "tentative", "informal", "insight", "focuspast",
        "focuspresent", "focusfuture", "time", "posemo", "negemo", "we", "i", "social",
        "negate"})
    EXPECT_TRUE(lexicon_index(lex, name).has_value()) << name;
  EXPECT_EQ(lex.size(), 15u);
}

TEST(ScoreLexicon, FocusFutureHandCount) {
  LexiconScores scores = score_lexicon(toks("we will look into this"), shipped_lexicons());
  EXPECT_DOUBLE_EQ(category(shipped_lexicons(), scores, "focusfuture"), 0.2);
  EXPECT_EQ(scores.word_count, 5u);
}

TEST(ScoreLexicon, InterrogationHandCount) {
  LexiconScores scores =
      score_lexicon(toks("what happened when you restarted"), shipped_lexicons());
  EXPECT_DOUBLE_EQ(category(shipped_lexicons(), scores, "interrogation"), 0.4);
}

TEST(ScoreLexicon, EmptyPostAllZero) {
  LexiconScores scores = score_lexicon({}, shipped_lexicons());
  EXPECT_EQ(scores.word_count, 0u);
  for (double p : scores.proportions) EXPECT_DOUBLE_EQ(p, 0.0);
}

TEST(ScoreLexicon, PunctuationExcludedFromWordCount) {
  LexiconScores scores = score_lexicon(toks("help me now !"), shipped_lexicons());
  EXPECT_EQ(scores.word_count, 3u);
}

TEST(ScoreLexicon, OrderPermutationInvariant) {
  TokenSequence tokens = toks("we will never forget this terrible delay");
  LexiconScores a = score_lexicon(tokens, shipped_lexicons());
  Rng rng(3);
  for (int iter = 0; iter < 20; ++iter) {
    rng.shuffle(tokens);
    LexiconScores b = score_lexicon(tokens, shipped_lexicons());
    for (std::size_t k = 0; k < a.proportions.size(); ++k)
      EXPECT_DOUBLE_EQ(a.proportions[k], b.proportions[k]);
  }
}

TEST(SummaryScores, ZeroInZeroOut) {
  LexiconScores zero;
  zero.proportions.assign(shipped_lexicons().size(), 0.0);
  auto [tone, clout] = summary_scores(shipped_lexicons(), zero);
  EXPECT_DOUBLE_EQ(tone, 0.0);
  EXPECT_DOUBLE_EQ(clout, 0.0);
}

TEST(SummaryScores, CloutSigns) {
  LexiconScores pos = score_lexicon(toks("we can help you together"), shipped_lexicons());
  auto [tone_pos, clout_pos] = summary_scores(shipped_lexicons(), pos);
  EXPECT_GT(clout_pos, 0.0);

  LexiconScores neg = score_lexicon(toks("i will not accept this"), shipped_lexicons());
  auto [tone_neg, clout_neg] = summary_scores(shipped_lexicons(), neg);
  EXPECT_LT(clout_neg, 0.0);
  (void)tone_pos;
  (void)tone_neg;
}

// -- dialogue tags -----------------------------------------------------------

TEST(TagDialogue, PaperExamples) {
  EXPECT_EQ(tag_dialogue(toks(
                "Is this something you're seeing now? Let us know in a DM and we'll take it "
                "from there.")),
            DialogueTag::kQuestion);
  EXPECT_EQ(tag_dialogue(toks("Thanks I've since had an email from XXX and it's been sorted.")),
            DialogueTag::kAppreciation);
  EXPECT_EQ(tag_dialogue(toks(
                "Updating to windows made it sooo slow. Now the recent update killed it.")),
            DialogueTag::kStatement);
}

TEST(TagDialogue, SuggestionAndResponse) {
  EXPECT_EQ(tag_dialogue(toks("That's good to hear. Would you mind sharing your experience.")),
            DialogueTag::kSuggestion);
  EXPECT_EQ(tag_dialogue(toks("please try restarting the app.")), DialogueTag::kSuggestion);
  EXPECT_EQ(tag_dialogue(toks("Not a problem XX, I hope your future journeys are better.")),
            DialogueTag::kResponse);
  EXPECT_EQ(tag_dialogue(toks("Glad it worked out.")), DialogueTag::kResponse);
}

TEST(TagDialogue, EmptyPostIsStatement) {
  EXPECT_EQ(tag_dialogue({}), DialogueTag::kStatement);
}

TEST(TagDialogue, CascadeIsTotal) {
  // every post receives exactly one tag; sample odd inputs
  for (const std::string& s :
       {std::string("???"), std::string("thanks?"), std::string("!!!"),
        std::string("<url>"), std::string("try <url>")}) {
    DialogueTag t = tag_dialogue(toks(s));
    EXPECT_LE(static_cast<std::size_t>(t), kDialogueTagCount - 1);
  }
  // appreciation outranks question
  EXPECT_EQ(tag_dialogue(toks("thanks?")), DialogueTag::kAppreciation);
}

// -- empathy -----------------------------------------------------------------

TEST(Empathy, EmotionalReactionFrame) {
  EmpathyScores s = score_empathy(toks("my phone broke"),
                                  toks("I'm sorry you are having this problem"));
  EXPECT_GE(s.emotional_reaction, 1);
  EXPECT_EQ(s.emotional_reaction, 2);  // first-person feeling frame
}

TEST(Empathy, BareApologyIsWeak) {
  EmpathyScores s = score_empathy(toks("my phone broke"), toks("sorry about the trouble"));
  EXPECT_EQ(s.emotional_reaction, 1);
}

TEST(Empathy, ExplorationSharedToken) {
  EmpathyScores s = score_empathy(toks("my computer will not boot"),
                                  toks("what happened when you restarted your computer?"));
  EXPECT_EQ(s.exploration, 2);
}

TEST(Empathy, GenericQuestionIsWeakExploration) {
  EmpathyScores s = score_empathy(toks("my package is late"), toks("how can we assist today?"));
  EXPECT_EQ(s.exploration, 1);
}

TEST(Empathy, IssueNounQuestionIsStrong) {
  EmpathyScores s = score_empathy(toks("nothing works"), toks("what is your account number?"));
  EXPECT_EQ(s.exploration, 2);
}

TEST(Empathy, NoFrameScoresZero) {
  EmpathyScores s = score_empathy(toks("my phone broke"), toks("Please visit our website."));
  EXPECT_EQ(s.emotional_reaction, 0);
  EXPECT_EQ(s.interpretation, 0);
  EXPECT_EQ(s.exploration, 0);
}

TEST(Empathy, InterpretationLevels) {
  EmpathyScores weak = score_empathy(toks("billing is wrong"), toks("i understand completely"));
  EXPECT_EQ(weak.interpretation, 1);
  EmpathyScores strong = score_empathy(
      toks("the billing charge on my invoice is wrong"),
      toks("i understand the billing charge looks wrong on your invoice"));
  EXPECT_EQ(strong.interpretation, 2);
}

// -- tf-idf ------------------------------------------------------------------

TEST(TfIdf, TermInEveryDocumentHasUnitIdf) {
  TfIdfVocabulary vocab = fit_tfidf({toks("good phone"), toks("bad phone")}, 1, 1000);
  EXPECT_DOUBLE_EQ(vocab.terms.at("phone").idf, 1.0);
}

TEST(TfIdf, BelowMinDfExcluded) {
  TfIdfVocabulary vocab = fit_tfidf({toks("a b"), toks("a c"), toks("a d")}, 2, 1000);
  EXPECT_TRUE(vocab.terms.count("a"));
  EXPECT_FALSE(vocab.terms.count("b"));
  EXPECT_FALSE(vocab.terms.count("c"));
}

TEST(TfIdf, IdfMatchesBruteForceOnFixture) {
  std::vector<TokenSequence> docs = {toks("the phone is good"), toks("the phone is bad"),
                                     toks("shipping was slow"), toks("good support team"),
                                     toks("phone shipping was good")};
  TfIdfVocabulary vocab = fit_tfidf(docs, 1, 100000);
  // brute-force df recount for every vocabulary term (uni+bi, set semantics)
  for (const auto& [term, entry] : vocab.terms) {
    std::uint64_t df = 0;
    for (const TokenSequence& doc : docs) {
      bool found = false;
      for (std::size_t i = 0; i < doc.size() && !found; ++i) {
        if (doc[i] == term) found = true;
        if (i + 1 < doc.size() && doc[i] + " " + doc[i + 1] == term) found = true;
      }
      if (found) ++df;
    }
    ASSERT_GT(df, 0u);
    double expected = std::log((1.0 + 5.0) / (1.0 + static_cast<double>(df))) + 1.0;
    EXPECT_NEAR(entry.idf, expected, 1e-9) << term;
  }
}

TEST(TfIdf, HandComputedWeights) {
  // d1 = "good phone", d2 = "bad phone": idf(good) = idf("good phone") =
  // ln(3/2)+1 ~= 1.405465, idf(phone) = 1. Full vector carries the bigram.
  TfIdfVocabulary vocab = fit_tfidf({toks("good phone"), toks("bad phone")}, 1, 1000);
  auto vec = transform_tfidf(toks("good phone"), vocab);
  ASSERT_EQ(vec.size(), 3u);
  double good = 0.0, phone = 0.0, bigram = 0.0;
  for (const auto& [idx, v] : vec) {
    if (idx == vocab.terms.at("good").index) good = v;
    if (idx == vocab.terms.at("phone").index) phone = v;
    if (idx == vocab.terms.at("good phone").index) bigram = v;
  }
  EXPECT_NEAR(good, 0.63166720173762447, 1e-9);
  EXPECT_NEAR(phone, 0.44943641652398209, 1e-9);
  EXPECT_NEAR(bigram, 0.63166720173762447, 1e-9);
  // projected onto the unigram coordinates the weights renormalize to the
  // two-term values 0.815 / 0.580
  double norm = std::sqrt(good * good + phone * phone);
  EXPECT_NEAR(good / norm, 0.81480247, 1e-7);
  EXPECT_NEAR(phone / norm, 0.57973867, 1e-7);
}

TEST(TfIdf, OutOfVocabularyContributesNothing) {
  TfIdfVocabulary vocab = fit_tfidf({toks("good phone"), toks("bad phone")}, 1, 1000);
  auto vec = transform_tfidf(toks("unrelated words entirely"), vocab);
  EXPECT_TRUE(vec.empty());
}

TEST(TfIdf, TransformedVectorsAreUnitNorm) {
  std::vector<TokenSequence> docs = {toks("alpha beta gamma"), toks("beta gamma delta"),
                                     toks("alpha delta")};
  TfIdfVocabulary vocab = fit_tfidf(docs, 1, 1000);
  for (const TokenSequence& doc : docs) {
    double norm_sq = 0.0;
    for (const auto& [idx, v] : transform_tfidf(doc, vocab)) norm_sq += v * v;
    EXPECT_NEAR(norm_sq, 1.0, 1e-12);
  }
  EXPECT_TRUE(transform_tfidf({}, vocab).empty());
}

TEST(TfIdf, MaxFeaturesKeepsHighestDf) {
  std::vector<TokenSequence> docs;
  for (int i = 0; i < 10; ++i) docs.push_back(toks("common"));
  docs.push_back(toks("rare common"));
  TfIdfVocabulary vocab = fit_tfidf(docs, 1, 1);
  EXPECT_EQ(vocab.size(), 1u);
  EXPECT_TRUE(vocab.terms.count("common"));
}

TEST(TfIdf, EmptyCorpusRejected) {
  EXPECT_THROW(fit_tfidf({}, 1, 100), DataError);
}

TEST(TfIdf, RefittingOnTrainPlusTestChangesIdf) {
  // leakage guard liveness: idf values must be a function of the fitted split
  std::vector<TokenSequence> train = {toks("good phone"), toks("bad phone")};
  std::vector<TokenSequence> train_plus_test = train;
  train_plus_test.push_back(toks("good service"));
  TfIdfVocabulary a = fit_tfidf(train, 1, 1000);
  TfIdfVocabulary b = fit_tfidf(train_plus_test, 1, 1000);
  EXPECT_NE(a.terms.at("good").idf, b.terms.at("good").idf);
}

// -- external scores ---------------------------------------------------------

TEST(ExternalScores, OverrideContract) {
  std::istringstream is("conversation_id,er,ip,ex\nc1,2,0,1\n");
  ExternalScores scores = load_external_scores(is);
  ASSERT_EQ(scores.by_conversation.size(), 1u);
  const ScoreOverride& ov = scores.by_conversation.at("c1");
  EXPECT_EQ(*ov.er, 2);
  EXPECT_EQ(*ov.ip, 0);
  EXPECT_EQ(*ov.ex, 1);
  EXPECT_EQ(scores.rejected_rows, 0u);
}

TEST(ExternalScores, OutOfRangeRowRejected) {
  std::istringstream is("conversation_id,er\nc1,5\nc2,1\n");
  ExternalScores scores = load_external_scores(is);
  EXPECT_EQ(scores.rejected_rows, 1u);
  EXPECT_EQ(scores.by_conversation.size(), 1u);
  EXPECT_TRUE(scores.by_conversation.count("c2"));
}

TEST(ExternalScores, TagColumnsAndUnknownIds) {
  std::istringstream is(
      "conversation_id,tag_brand\nc1,question\nc2,nonsense\n");
  ExternalScores scores = load_external_scores(is);
  EXPECT_EQ(scores.rejected_rows, 1u);
  EXPECT_EQ(*scores.by_conversation.at("c1").tag_brand, DialogueTag::kQuestion);
  EXPECT_EQ(scores.count_unknown_ids({"c1"}), 0u);
  EXPECT_EQ(scores.count_unknown_ids({"zz"}), 1u);
}

TEST(ExternalScores, MissingIdColumnFatal) {
  std::istringstream is("er,ip\n1,1\n");
  EXPECT_THROW(load_external_scores(is), DataError);
}

// -- assembly ----------------------------------------------------------------

TEST(Assemble, CpOnlySupportStaysInNamespace) {
  TfIdfVocabulary cp = fit_tfidf({toks("my phone broke"), toks("slow shipping")}, 1, 100);
  TfIdfVocabulary bap = fit_tfidf({toks("sorry to hear"), toks("please dm us")}, 1, 100);
  FeatureSpace space(cp, bap, shipped_lexicons(), nullptr, {FeatureGroup::kCp});
  corpus::Conversation conv = make_conversation("c1", "my phone broke", "sorry to hear", false);
  Example ex = assemble(conv, space);
  EXPECT_FALSE(ex.features.empty());
  for (const auto& [idx, v] : ex.features) EXPECT_EQ(space.groups()[idx], FeatureGroup::kCp);
}

TEST(Assemble, DeterministicAcrossCalls) {
  lm::KNModel model = tiny_lm();
  TfIdfVocabulary cp = fit_tfidf({toks("my phone broke")}, 1, 100);
  TfIdfVocabulary bap = fit_tfidf({toks("we are here to help")}, 1, 100);
  FeatureSpace space(cp, bap, shipped_lexicons(), &model, all_feature_groups());
  corpus::Conversation conv =
      make_conversation("c1", "my phone broke", "we are here to help", true);
  Example a = assemble(conv, space);
  Example b = assemble(conv, space);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.label, b.label);
  EXPECT_TRUE(a.label);
}

TEST(Assemble, FeatureCountArithmetic) {
  lm::KNModel model = tiny_lm();
  TfIdfVocabulary cp = fit_tfidf({toks("my phone broke"), toks("order is late")}, 1, 100);
  TfIdfVocabulary bap =
      fit_tfidf({toks("we are here to help"), toks("please dm your order number")}, 1, 100);
  FeatureSpace space(cp, bap, shipped_lexicons(), &model, all_feature_groups());
  std::size_t k = shipped_lexicons().size();
  std::size_t expected = cp.size() + bap.size() + 2 * (k + 3) + 2 * 5 + 3 + 1;
  EXPECT_EQ(space.dimension(), expected);
  EXPECT_EQ(space.names().size(), expected);
  EXPECT_EQ(space.groups().size(), expected);
}

TEST(Assemble, GroupMaskingSound) {
  lm::KNModel model = tiny_lm();
  TfIdfVocabulary cp = fit_tfidf({toks("my phone broke")}, 1, 100);
  TfIdfVocabulary bap = fit_tfidf({toks("we are here to help")}, 1, 100);
  corpus::Conversation conv =
      make_conversation("c1", "my phone broke", "what version are you running ?", false);

  Rng rng(17);
  const std::set<FeatureGroup> all_set = all_feature_groups();
  std::vector<FeatureGroup> all(all_set.begin(), all_set.end());
  for (int iter = 0; iter < 30; ++iter) {
    std::set<FeatureGroup> toggles;
    for (FeatureGroup g : all)
      if (rng.below(2)) toggles.insert(g);
    if (toggles.empty()) toggles.insert(FeatureGroup::kLiwc);
    FeatureSpace space(cp, bap, shipped_lexicons(), &model, toggles);
    Example ex = assemble(conv, space);
    for (const auto& [idx, v] : ex.features) {
      ASSERT_LT(idx, space.dimension());
      EXPECT_TRUE(toggles.count(space.groups()[idx]));
    }
  }
}

TEST(Assemble, ExternalOverrideIdempotentAndScoped) {
  lm::KNModel model = tiny_lm();
  TfIdfVocabulary cp = fit_tfidf({toks("x")}, 1, 10);
  TfIdfVocabulary bap = fit_tfidf({toks("y")}, 1, 10);
  FeatureSpace space(cp, bap, shipped_lexicons(), &model, all_feature_groups());
  corpus::Conversation c1 = make_conversation("c1", "my phone broke", "ok.", false);
  corpus::Conversation c2 = make_conversation("c2", "my phone broke", "ok.", false);

  std::istringstream is("conversation_id,er,ip,ex\nc1,2,0,1\n");
  ExternalScores scores = load_external_scores(is);

  StyleScores overridden = space.style_scores(c1, &scores);
  EXPECT_EQ(overridden.empathy.emotional_reaction, 2);
  EXPECT_EQ(overridden.empathy.interpretation, 0);
  EXPECT_EQ(overridden.empathy.exploration, 1);

  StyleScores untouched = space.style_scores(c2, &scores);
  EXPECT_EQ(untouched.empathy.emotional_reaction, 0);

  // applying the same override twice changes nothing (idempotent)
  Example once = assemble(c1, space, &scores);
  Example twice = assemble(c1, space, &scores);
  EXPECT_EQ(once.features, twice.features);

  // empty override file leaves the heuristic output identical
  std::istringstream empty("conversation_id,er,ip,ex\n");
  ExternalScores none = load_external_scores(empty);
  Example heur = assemble(c2, space);
  Example with_empty = assemble(c2, space, &none);
  EXPECT_EQ(heur.features, with_empty.features);
}

TEST(Assemble, MissingBrandTurnRejected) {
  TfIdfVocabulary cp = fit_tfidf({toks("x")}, 1, 10);
  TfIdfVocabulary bap = fit_tfidf({toks("y")}, 1, 10);
  FeatureSpace space(cp, bap, shipped_lexicons(), nullptr, {FeatureGroup::kCp});
  corpus::Conversation conv;
  conv.conversation_id = "nobrand";
  conv.customer_id = "cust";
  corpus::Tweet t;
  t.tweet_id = "t1";
  t.author_id = "cust";
  t.inbound = true;
  t.text = "hello";
  conv.turns.push_back({corpus::Role::kCustomer, t});
  EXPECT_THROW(assemble(conv, space), DataError);
}

TEST(Assemble, PerplexityRequiresModel) {
  TfIdfVocabulary cp = fit_tfidf({toks("x")}, 1, 10);
  TfIdfVocabulary bap = fit_tfidf({toks("y")}, 1, 10);
  EXPECT_THROW(FeatureSpace(cp, bap, shipped_lexicons(), nullptr,
                            {FeatureGroup::kPerplexity}),
               UsageError);
}

TEST(Toggles, ParseAndFormat) {
  std::set<FeatureGroup> toggles = parse_toggles("cp,bap,liwc,empathy,perplexity,dialogue");
  EXPECT_EQ(toggles.size(), 6u);
  EXPECT_EQ(format_toggles(toggles), "cp,bap,liwc,empathy,perplexity,dialogue");
  EXPECT_THROW(parse_toggles("cp,nonsense"), UsageError);
  EXPECT_THROW(parse_toggles(""), UsageError);
}

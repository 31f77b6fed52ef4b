#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "engage/common.hpp"
#include "engage/csv.hpp"

namespace engage::synth {

// Deterministic corpus emulator in the public customer-support CSV layout.
// Engagement is sampled from a logistic score over the brand's response
// strategy (strong signal) and the customer's phrasing (weak signal), so the
// prediction pipeline has structure to recover: exploration-style brand
// questions raise engagement, generic deflections lower it, personalized
// responses are long and combinatorially novel for the perplexity feature.
struct SynthConfig {
  std::uint64_t total_tweets = 2013577;
  std::uint64_t seed = 7;
  std::uint32_t brands = 108;
  std::uint64_t orphan_tweets = 137;      // replies whose parent is absent
  std::uint64_t brand_rooted_trees = 61;  // two-tweet trees rooted at a brand post
  std::uint64_t cycle_pairs = 5;          // mutually-replying tweet pairs
  double other_party_rate = 0.02;         // conversations with a third-party interjection
};

struct SynthSummary {
  std::uint64_t tweets_written = 0;
  std::uint64_t conversations = 0;
  std::uint64_t engaged = 0;
  double mean_turns = 0.0;
};

namespace detail {

struct Pools {
  std::vector<std::string> devices = {"phone",  "laptop", "router", "tablet",
                                      "printer", "console", "watch",  "camera"};
  std::vector<std::string> apps = {"app", "website", "portal", "dashboard", "player"};
  std::vector<std::string> items = {"order", "package", "refund", "invoice", "subscription"};
  std::vector<std::string> tail;  // pseudo-words for personalized/novel text

  Pools() {
    const char* a[] = {"zor", "mek", "tal", "rin", "vex", "pol", "dra", "sul", "fen", "gax"};
    const char* b[] = {"ba", "li", "mo", "ru", "ke", "ty", "wa", "su", "ne", "qo"};
    const char* c[] = {"den", "rik", "tas", "lum", "per", "von", "gel", "mar", "nix", "hol"};
    for (const char* x : a)
      for (const char* y : b)
        for (const char* z : c) tail.push_back(std::string(x) + y + z);
  }
};

inline const Pools& pools() {
  static const Pools p;
  return p;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[rng.below(v.size())];
}

enum class Strategy { kExplore, kGeneric, kDmRequest, kEmotional, kPersonalized };
enum class CustomerStyle { kUrgent, kInformal, kQuestion, kPlain };

struct TurnPlan {
  std::string author;
  bool inbound;
  std::string text;
  int attach_offset = -1;  // index of the turn this one replies to; -1 = previous
};

inline std::string customer_text(Rng& rng, CustomerStyle style, const std::string& topic_noun,
                                 const std::string& brand) {
  const Pools& p = pools();
  std::string text;
  switch (rng.below(3)) {
    case 0: text = "my " + topic_noun + " keeps failing after the latest update"; break;
    case 1: text = "the " + topic_noun + " stopped working this morning"; break;
    default: text = "having trouble with my " + topic_noun + " again"; break;
  }
  switch (style) {
    case CustomerStyle::kUrgent:
      text += " and i need this fixed today please help " + std::string("urgently");
      break;
    case CustomerStyle::kInformal:
      text += rng.below(2) ? " ugh this sucks so bad lol" : " wtf is going on with this crap";
      break;
    case CustomerStyle::kQuestion:
      text = "why does my " + topic_noun + " keep failing after every update?";
      break;
    case CustomerStyle::kPlain:
      text += " on account " + std::to_string(10000 + rng.below(90000));
      break;
  }
  if (rng.below(4) == 0) text = "@" + brand + " " + text;
  if (rng.below(10) == 0) text += " see https://pics.example/" + pick(rng, p.tail);
  return text;
}

inline std::string brand_text(Rng& rng, Strategy strategy, const std::string& topic_noun) {
  const Pools& p = pools();
  switch (strategy) {
    case Strategy::kExplore:
      switch (rng.below(4)) {
        case 0: return "what happened when you restarted your " + topic_noun + "?";
        case 1: return "which version of the " + topic_noun + " software are you running?";
        case 2: return "can you share the exact error message your " + topic_noun + " shows?";
        default: return "when did the " + topic_noun + " issue start and what device are you on?";
      }
    case Strategy::kGeneric:
      switch (rng.below(4)) {
        case 0: return "we will look into this and get back to you soon.";
        case 1: return "thanks for reaching out. our team is aware and working on it.";
        case 2: return "we appreciate your patience while we investigate.";
        default: return "please stay tuned for updates from our team.";
      }
    case Strategy::kDmRequest:
      return rng.below(2) ? "please dm us your account number so we can help."
                          : "please send us a dm with your order details and zip code.";
    case Strategy::kEmotional:
      return rng.below(2) ? "i'm so sorry to hear this. we understand how frustrating this is."
                          : "we're sorry for the trouble. that sounds really annoying.";
    case Strategy::kPersonalized: {
      std::string text = "hi, i pulled the " + topic_noun + " logs from your report and the " +
                         pick(rng, p.tail) + " module mismatch looks like the culprit. try the " +
                         pick(rng, p.tail) + " build after clearing the " + pick(rng, p.tail) +
                         " cache, then reply here and i will walk you through the " +
                         pick(rng, p.tail) + " steps myself.";
      return text;
    }
  }
  return "ok.";
}

inline std::string followup_customer(Rng& rng) {
  static const std::vector<std::string> pool = {
      "tried that and it still fails", "ok that helped a little but not fully",
      "done, what should i do next?", "still seeing the same problem",
      "it worked for an hour then broke again", "sent you the details"};
  return pick(rng, pool);
}

inline std::string followup_brand(Rng& rng) {
  static const std::vector<std::string> pool = {
      "got it, checking on our side now.", "thanks for confirming, one more thing to try.",
      "we have escalated this to the right team.", "could you try once more and tell us?",
      "understood, we are on it.", "thanks, that narrows it down."};
  return pick(rng, pool);
}

}  // namespace detail

// Writes the corpus and returns generation counts. Deterministic per config.
inline SynthSummary write_corpus(std::ostream& os, const SynthConfig& config) {
  using namespace detail;
  if (config.total_tweets < 64) throw UsageError("synthetic corpus needs at least 64 tweets");
  Rng rng(config.seed);
  const Pools& p = pools();

  os << "tweet_id,author_id,inbound,created_at,text,response_tweet_id,in_response_to_tweet_id\n";

  // brand popularity follows a heavy-tailed profile
  std::vector<double> brand_cdf(config.brands);
  double acc = 0.0;
  for (std::uint32_t b = 0; b < config.brands; ++b) {
    acc += 1.0 / static_cast<double>(b + 3);
    brand_cdf[b] = acc;
  }
  auto pick_brand = [&]() {
    double u = rng.unit() * acc;
    std::size_t lo = 0, hi = brand_cdf.size() - 1;
    while (lo < hi) {
      std::size_t mid = (lo + hi) / 2;
      if (brand_cdf[mid] < u) lo = mid + 1;
      else hi = mid;
    }
    return "brand" + std::to_string(lo + 1);
  };

  SynthSummary summary;
  std::uint64_t next_id = 1000000;
  std::int64_t clock = 1509000000;
  std::uint64_t deviations = config.orphan_tweets + 2 * config.brand_rooted_trees +
                             2 * config.cycle_pairs;
  if (deviations >= config.total_tweets)
    throw UsageError("deviation tweet count exceeds the corpus budget");
  std::uint64_t budget = config.total_tweets - deviations;

  std::vector<std::string> fields(7);
  auto emit = [&](const std::string& id, const std::string& author, bool inbound,
                  std::int64_t at, const std::string& text, const std::string& responses,
                  const std::string& parent) {
    fields[0] = id;
    fields[1] = author;
    fields[2] = inbound ? "True" : "False";
    fields[3] = std::to_string(at);
    fields[4] = text;
    fields[5] = responses;
    fields[6] = parent;
    csv::write_record(os, fields);
    ++summary.tweets_written;
  };

  std::uint64_t customer_counter = 0;
  while (budget > 0) {
    std::string brand = pick_brand();
    std::string customer = "user" + std::to_string(++customer_counter);
    const std::string& topic = rng.below(2) ? pick(rng, p.devices)
                                            : (rng.below(2) ? pick(rng, p.apps)
                                                            : pick(rng, p.items));

    CustomerStyle style = static_cast<CustomerStyle>(
        rng.unit() < 0.25 ? 0 : (rng.unit() < 0.27 ? 1 : (rng.unit() < 0.34 ? 2 : 3)));
    double u_strategy = rng.unit();
    Strategy strategy = u_strategy < 0.24   ? Strategy::kExplore
                        : u_strategy < 0.54 ? Strategy::kGeneric
                        : u_strategy < 0.74 ? Strategy::kDmRequest
                        : u_strategy < 0.88 ? Strategy::kEmotional
                                            : Strategy::kPersonalized;

    double score = -3.52;
    switch (strategy) {
      case Strategy::kExplore: score += 2.95; break;
      case Strategy::kPersonalized: score += 2.45; break;
      case Strategy::kDmRequest: score += 0.75; break;
      case Strategy::kEmotional: score += 0.25; break;
      case Strategy::kGeneric: break;
    }
    switch (style) {
      case CustomerStyle::kUrgent: score += 0.45; break;
      case CustomerStyle::kInformal: score -= 0.55; break;
      case CustomerStyle::kQuestion: score -= 0.30; break;
      case CustomerStyle::kPlain: break;
    }
    bool engaged = rng.unit() < 1.0 / (1.0 + std::exp(-score));

    // plan the turn sequence
    std::vector<TurnPlan> plan;
    plan.push_back({customer, true, customer_text(rng, style, topic, brand)});
    plan.push_back({brand, false, brand_text(rng, strategy, topic)});
    if (!engaged) {
      if (rng.unit() < 0.15) plan.push_back({brand, false, followup_brand(rng)});
    } else {
      plan.push_back({customer, true, followup_customer(rng)});
      plan.push_back({brand, false, followup_brand(rng)});
      // geometric tail of extra rounds, mean ~6
      std::uint64_t extra = 0;
      while (extra < 65 && rng.unit() < 0.859) ++extra;
      for (std::uint64_t r = 0; r < extra; ++r) {
        plan.push_back({customer, true, followup_customer(rng)});
        plan.push_back({brand, false, followup_brand(rng)});
      }
    }
    if (rng.unit() < config.other_party_rate && plan.size() >= 2)
      plan.push_back({"user" + std::to_string(++customer_counter) + "x", true,
                      "same thing happens to me!", 1});

    if (plan.size() > budget) {
      // spend the remaining budget on minimal conversations
      if (budget == 1) {
        // a single leftover tweet becomes one more orphan reply
        emit(std::to_string(++next_id), "user" + std::to_string(++customer_counter), true,
             clock += 60, "is anyone there?", "", std::to_string(next_id + 777777));
        budget = 0;
        break;
      }
      plan.resize(budget == 3 ? 3 : 2);
      if (plan.size() == 3) plan[2] = {brand, false, followup_brand(rng)};
      engaged = false;
    }

    // materialize ids, reply links, children lists
    std::size_t n = plan.size();
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(++next_id);
    std::vector<std::string> responses(n);
    std::vector<std::string> parents(n);
    for (std::size_t i = 1; i < n; ++i) {
      std::size_t parent = plan[i].attach_offset >= 0
                               ? static_cast<std::size_t>(plan[i].attach_offset)
                               : i - 1;
      parents[i] = ids[parent];
      if (!responses[parent].empty()) responses[parent] += ",";
      responses[parent] += ids[i];
    }
    clock += 120 + static_cast<std::int64_t>(rng.below(3600));
    std::int64_t at = clock;
    for (std::size_t i = 0; i < n; ++i) {
      emit(ids[i], plan[i].author, plan[i].inbound, at, plan[i].text, responses[i], parents[i]);
      at += 60 + static_cast<std::int64_t>(rng.below(1800));
    }
    budget -= n;
    ++summary.conversations;
    if (engaged) ++summary.engaged;
    summary.mean_turns += static_cast<double>(n);
  }

  // deterministic threading deviations
  for (std::uint64_t k = 0; k < config.orphan_tweets; ++k) {
    std::string id = std::to_string(++next_id);
    emit(id, "user" + std::to_string(++customer_counter), true, clock += 60,
         "following up on my earlier message", "", std::to_string(next_id + 999983));
  }
  for (std::uint64_t k = 0; k < config.brand_rooted_trees; ++k) {
    std::string root = std::to_string(++next_id);
    std::string child = std::to_string(++next_id);
    emit(root, pick_brand(), false, clock += 60, "service maintenance tonight from midnight.",
         child, "");
    emit(child, "user" + std::to_string(++customer_counter), true, clock += 60, "thanks for the heads up",
         "", root);
  }
  for (std::uint64_t k = 0; k < config.cycle_pairs; ++k) {
    std::string a = std::to_string(++next_id);
    std::string b = std::to_string(++next_id);
    emit(a, "user" + std::to_string(++customer_counter), true, clock += 60, "weird thread glitch", b, b);
    emit(b, pick_brand(), false, clock += 61, "looks like a glitched reply", a, a);
  }

  if (summary.conversations > 0) summary.mean_turns /= static_cast<double>(summary.conversations);
  return summary;
}

}  // namespace engage::synth

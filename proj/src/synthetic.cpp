// SPDX-License-Identifier: Apache-2.0

#include "conductor/synthetic.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include "conductor/util.hpp"

namespace conductor::synth {

void SyntheticSpec::validate() const {
  if (topics < 1 || tokens_per_topic < 1 || query_len < 1 || min_overlap < 1 ||
      passage_min_len < 1 || passage_max_len < passage_min_len || distractors_per_query < 1 ||
      queries < 1) {
    throw std::invalid_argument("SyntheticSpec: all counts must be positive and consistent");
  }
  if (min_overlap > query_len) {
    throw std::invalid_argument("SyntheticSpec: min_overlap cannot exceed query_len");
  }
  if (markers_per_topic < 0 || markers_per_topic >= tokens_per_topic) {
    throw std::invalid_argument("SyntheticSpec: markers_per_topic out of range");
  }
  if (query_len > tokens_per_topic - markers_per_topic) {
    throw std::invalid_argument(
        "SyntheticSpec: vocab too small, queries need query_len non-marker tokens");
  }
  if (tokens_per_topic - markers_per_topic - query_len < 1) {
    throw std::invalid_argument(
        "SyntheticSpec: vocab too small, no non-query tokens left for passage filler");
  }
  if (markers_per_topic > 0 && passage_min_len < min_overlap + 1) {
    throw std::invalid_argument(
        "SyntheticSpec: passages too short for the overlap tokens plus a marker");
  }
  if (distractor_mix > 0.0 && topics < 2) {
    throw std::invalid_argument("SyntheticSpec: distractor_mix needs at least two topics");
  }
  if (min_overlap > passage_min_len) {
    throw std::invalid_argument("SyntheticSpec: passages too short to satisfy the overlap rule");
  }
}

namespace {

std::string token_name(int topic, int word) {
  return "t" + std::to_string(topic) + "w" + std::to_string(word);
}

std::vector<std::string> split_ws(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += " ";
    out += tokens[i];
  }
  return out;
}

}  // namespace

model::Vocabulary vocab_for(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<std::string> content;
  content.reserve(static_cast<std::size_t>(spec.topics) * spec.tokens_per_topic);
  for (int t = 0; t < spec.topics; ++t) {
    for (int w = 0; w < spec.tokens_per_topic; ++w) content.push_back(token_name(t, w));
  }
  return model::Vocabulary::with_content(std::move(content));
}

bool satisfies_relevance_rule(const SyntheticSpec& spec, const std::string& query_text,
                              const std::string& passage_text) {
  std::set<std::string> qtokens;
  for (const std::string& t : split_ws(query_text)) qtokens.insert(t);
  std::set<std::string> seen;
  for (const std::string& t : split_ws(passage_text)) {
    if (qtokens.count(t)) seen.insert(t);
  }
  return static_cast<int>(seen.size()) >= spec.min_overlap;
}

corpus::Corpus generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed,
                                         const std::string& dataset_id) {
  spec.validate();
  util::Rng rng(seed);
  corpus::Corpus out;
  out.dataset_id = dataset_id;

  const int max_distractor_overlap =
      std::min(spec.distractor_max_overlap, spec.min_overlap - 1);
  // Word indices >= plain_tokens are the topic's answer markers.
  const int plain_tokens = spec.tokens_per_topic - spec.markers_per_topic;

  // Distinct non-marker word indices from one topic.
  auto sample_distinct = [&](int count) {
    std::vector<int> pool;
    for (int w = 0; w < plain_tokens; ++w) pool.push_back(w);
    rng.shuffle(pool);
    pool.resize(count);
    return pool;
  };

  int passage_counter = 0;
  for (int qi = 0; qi < spec.queries; ++qi) {
    const int topic = static_cast<int>(rng.below(spec.topics));
    std::vector<int> qwords = sample_distinct(spec.query_len);
    std::vector<std::string> qtokens;
    for (int w : qwords) qtokens.push_back(token_name(topic, w));

    std::string qid = dataset_id + "q" + std::to_string(qi);
    out.queries.push_back({qid, join(qtokens)});

    std::set<int> qset(qwords.begin(), qwords.end());
    auto fill_token = [&](int from_topic) {
      // Non-query, non-marker token of the given topic; repeats allowed.
      for (;;) {
        int w = static_cast<int>(rng.below(plain_tokens));
        if (from_topic != topic || !qset.count(w)) return token_name(from_topic, w);
      }
    };
    auto passage_len = [&]() {
      return spec.passage_min_len +
             static_cast<int>(rng.below(spec.passage_max_len - spec.passage_min_len + 1));
    };

    std::vector<std::string> pids;

    // Relevant passage: pure topic, includes >= min_overlap query tokens and
    // one of the topic's answer markers.
    {
      int len = passage_len();
      int budget = len - (spec.markers_per_topic > 0 ? 1 : 0);
      int overlap = spec.min_overlap +
                    static_cast<int>(rng.below(std::min(spec.query_len, budget) - spec.min_overlap + 1));
      std::vector<int> chosen = qwords;
      rng.shuffle(chosen);
      std::vector<std::string> ptokens;
      for (int i = 0; i < overlap; ++i) ptokens.push_back(token_name(topic, chosen[i]));
      if (spec.markers_per_topic > 0) {
        int marker = plain_tokens + static_cast<int>(rng.below(spec.markers_per_topic));
        ptokens.push_back(token_name(topic, marker));
      }
      while (static_cast<int>(ptokens.size()) < len) ptokens.push_back(fill_token(topic));
      rng.shuffle(ptokens);

      std::string pid = dataset_id + "p" + std::to_string(passage_counter++);
      out.passages.push_back({pid, join(ptokens)});
      out.qrels[qid][pid] = 1;
      pids.push_back(pid);
    }

    // Distractors: below the overlap threshold, internally topic-mixed.
    for (int di = 0; di < spec.distractors_per_query; ++di) {
      int len = passage_len();
      int overlap = max_distractor_overlap > 0
                        ? static_cast<int>(rng.below(max_distractor_overlap + 1))
                        : 0;
      int other_topic = topic;
      if (spec.topics > 1) {
        while (other_topic == topic) other_topic = static_cast<int>(rng.below(spec.topics));
      }
      std::vector<int> chosen = qwords;
      rng.shuffle(chosen);
      std::vector<std::string> ptokens;
      for (int i = 0; i < overlap; ++i) ptokens.push_back(token_name(topic, chosen[i]));
      while (static_cast<int>(ptokens.size()) < len) {
        bool mixed = rng.uniform() < spec.distractor_mix;
        ptokens.push_back(fill_token(mixed ? other_topic : topic));
      }
      rng.shuffle(ptokens);

      std::string pid = dataset_id + "p" + std::to_string(passage_counter++);
      out.passages.push_back({pid, join(ptokens)});
      if (!spec.relevant_only_qrels) out.qrels[qid][pid] = 0;
      pids.push_back(pid);
    }

    rng.shuffle(pids);
    out.candidates[qid] = pids;
  }

  // The qrels must agree with the rule: the relevant passage satisfies it,
  // distractors must not.
  auto texts = out.passage_texts();
  for (const corpus::Query& q : out.queries) {
    for (const auto& [pid, rel] : out.qrels[q.qid]) {
      bool rule = satisfies_relevance_rule(spec, q.text, texts.at(pid));
      if (rel >= 1 && !rule) {
        throw std::logic_error("generator bug: relevant passage violates the overlap rule");
      }
      if (rel == 0 && rule) {
        throw std::logic_error("generator bug: distractor satisfies the overlap rule");
      }
    }
  }
  return out;
}

}  // namespace conductor::synth

// SPDX-License-Identifier: Apache-2.0
//
// Config parsing, the combine expression language, hashing.
#include <doctest.h>

#include <cstdlib>
#include <cstring>

#include "conductor/config.hpp"
#include "conductor/expr.hpp"
#include "conductor/util.hpp"
#include "helpers.hpp"

using namespace conductor;
using cli::KeyValueTree;

namespace {

const char* kMinimalConfig = R"(
# toy workbench
model.num_layers = 1
model.d_model = 8
model.num_heads = 2
model.d_ff = 16

train.epochs = 1
train.synth.queries = 10

dataset.msa.role = attribution
dataset.msa.domain = in_domain
dataset.msa.gen.seed = 101
dataset.msa.gen.queries = 5

dataset.msdev.role = evaluation
dataset.msdev.domain = in_domain
dataset.msdev.gen.seed = 201
dataset.msdev.gen.queries = 5
)";

}  // namespace

TEST_CASE("sha256 matches the standard test vectors") {
  CHECK(util::sha256_hex(std::string("")) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(util::sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(util::sha256_hex(std::string(
            "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")) ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("key-value tree: parsing, typed getters, unknown keys") {
  KeyValueTree kv = KeyValueTree::parse("a.b = 3\n# comment\nc = hello\nd = 0.5\ne = true\n");
  CHECK(kv.get_int("a.b", 0) == 3);
  CHECK(kv.get_string("c", "") == "hello");
  CHECK(kv.get_double("d", 0.0) == 0.5);
  CHECK(kv.get_bool("e", false));
  CHECK(kv.get_int("missing", 7) == 7);
  kv.reject_unknown_keys();

  KeyValueTree unknown = KeyValueTree::parse("x = 1\n");
  CHECK_THROWS_AS(unknown.reject_unknown_keys(), std::invalid_argument);

  CHECK_THROWS_AS(KeyValueTree::parse("novalue\n"), std::invalid_argument);
  CHECK_THROWS_AS(KeyValueTree::parse("a = 1\na = 2\n"), std::invalid_argument);
}

TEST_CASE("workbench config: minimal file parses with defaults") {
  cli::WorkbenchConfig cfg = cli::WorkbenchConfig::from_text(kMinimalConfig);
  CHECK(cfg.model_cfg.num_layers == 1);
  CHECK(cfg.datasets.size() == 2);
  CHECK(cfg.by_role("attribution").size() == 1);
  CHECK(cfg.by_role("evaluation").size() == 1);
  CHECK(cfg.path.steps == 100);  // paper default
  CHECK(cfg.levels == std::vector<double>{0.01, 0.1, 1.0});
  // Generated datasets inherit the training vocabulary shape.
  CHECK(cfg.dataset("msa").gen.topics == cfg.train_spec.synth.topics);
}

TEST_CASE("workbench config: validation errors") {
  // No evaluation dataset.
  std::string no_eval = R"(
dataset.a.role = attribution
dataset.a.gen.seed = 1
)";
  CHECK_THROWS_AS(cli::WorkbenchConfig::from_text(no_eval), std::invalid_argument);

  // Unknown key (typo).
  std::string typo = std::string(kMinimalConfig) + "model.dmodel = 9\n";
  CHECK_THROWS_AS(cli::WorkbenchConfig::from_text(typo), std::invalid_argument);

  // Vocabulary shape mismatch between train and a generated dataset.
  std::string mismatch = std::string(kMinimalConfig) + "dataset.msa.gen.topics = 3\n";
  CHECK_THROWS_AS(cli::WorkbenchConfig::from_text(mismatch), std::invalid_argument);

  // Bad level.
  std::string bad_level = std::string(kMinimalConfig) + "levels = 0\n";
  CHECK_THROWS_AS(cli::WorkbenchConfig::from_text(bad_level), std::invalid_argument);
}

namespace {

// In-memory scheme store for expression tests.
cli::SchemeResolver make_resolver(const model::ModelConfig& cfg,
                                  std::map<std::string, nig::AttributionScheme>* store) {
  return [cfg, store](const std::string& name) -> nig::AttributionScheme {
    auto it = store->find(name);
    if (it == store->end()) {
      throw std::invalid_argument("unknown scheme '" + name + "'");
    }
    return it->second;
  };
}

nig::AttributionScheme make_scheme(const model::ModelConfig& cfg, std::uint64_t seed) {
  nig::AttributionScheme s;
  s.dataset_id = "s" + std::to_string(seed);
  s.label = "relevant";
  s.n_samples = 1;
  s.model_hash = "h";
  s.values.resize(model::neuron_count(cfg));
  util::Rng rng(seed);
  for (double& v : s.values) v = rng.normal();
  return s;
}

}  // namespace

TEST_CASE("expression language: top, inter, fuse evaluate to the library results") {
  model::ModelConfig cfg = testutil::tiny_config(2, 8, 2, 16);
  cfg.vocab_size = 8;
  std::map<std::string, nig::AttributionScheme> store;
  store["P_a"] = make_scheme(cfg, 1);
  store["P_b"] = make_scheme(cfg, 2);
  store["N_a"] = make_scheme(cfg, 3);
  auto resolve = make_resolver(cfg, &store);

  // Identical operands: intersection is the operand set.
  auto same = cli::eval_set_expr(cfg, resolve, "inter(top(P_a,1%), top(P_a,1%))");
  auto direct = sets::top_percent(cfg, store["P_a"], 1.0);
  CHECK(same.members == direct.members);

  // Fusion then top matches the direct library calls.
  auto fused_expr = cli::eval_set_expr(cfg, resolve, "top(fuse(P_a,N_a), 1%)");
  auto fused_direct = sets::top_percent(cfg, sets::fuse({store["P_a"], store["N_a"]}), 1.0);
  CHECK(fused_expr.members == fused_direct.members);

  // Percent variants parse.
  CHECK(cli::eval_set_expr(cfg, resolve, "top(P_a, 0.1%)").members.size() == 1);
  CHECK(cli::eval_set_expr(cfg, resolve, " top ( P_a , 50 ) ").members.size() == 56);
}

TEST_CASE("expression language: errors carry positions and name unknown identifiers") {
  model::ModelConfig cfg = testutil::tiny_config(2, 8, 2, 16);
  cfg.vocab_size = 8;
  std::map<std::string, nig::AttributionScheme> store;
  store["P_a"] = make_scheme(cfg, 1);
  auto resolve = make_resolver(cfg, &store);

  CHECK_THROWS_WITH_AS(cli::eval_set_expr(cfg, resolve, "top(P_missing,1%)"),
                       doctest::Contains("P_missing"), cli::ExprError);
  CHECK_THROWS_WITH_AS(cli::eval_set_expr(cfg, resolve, "fuse(P_a,P_a)"),
                       doctest::Contains("expected top"), cli::ExprError);
  CHECK_THROWS_WITH_AS(cli::eval_set_expr(cfg, resolve, "top(P_a 1%)"),
                       doctest::Contains("','"), cli::ExprError);
  CHECK_THROWS_WITH_AS(cli::eval_set_expr(cfg, resolve, "top(P_a,1%) trailing"),
                       doctest::Contains("position"), cli::ExprError);
  // Position is 1-based at the offending token.
  try {
    cli::eval_set_expr(cfg, resolve, "inter(top(P_a,1%), nope(P_a,1%))");
    FAIL("expected ExprError");
  } catch (const cli::ExprError& e) {
    CHECK(e.position == 20);
  }
}

TEST_CASE("format_double round-trips and is deterministic") {
  for (double v : {0.1, 1.0 / 3.0, 1e-17, 123456.789, -0.0, 2.0}) {
    std::string s = util::format_double(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
    CHECK(util::format_double(v) == s);
  }
}

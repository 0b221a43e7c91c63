#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include "bctn/data.hpp"
#include "bctn/errors.hpp"
#include "bctn/vocab.hpp"

using namespace bctn;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tokenize: known words, UNK, round-trip") {
  Vocab v;
  v.add_token("the");
  v.add_token("cat");
  auto ids = v.tokenize("The cat");
  CHECK(ids == std::vector<int>{v.id_of("the"), v.id_of("cat")});

  CHECK(v.tokenize("zzzqqq") == std::vector<int>{special::kUnk});
  CHECK_THROWS_AS(v.tokenize("   "), EmptyText);

  // vocab-only text survives tokenize . detokenize
  const std::string text = "the cat the cat";
  CHECK(v.detokenize(v.tokenize(text)) == text);
}

TEST_CASE("vocab file: line number == id, reserved ids stable") {
  Vocab v;
  v.add_token("alpha");
  v.add_token("beta");
  const auto path = tmp_path("bctn_vocab_test.txt");
  v.save(path);
  Vocab u = Vocab::load(path);
  CHECK(u.size() == v.size());
  CHECK(u.id_of("alpha") == v.id_of("alpha"));
  CHECK(u.id_of("beta") == v.id_of("beta"));
  CHECK(u.token_of(special::kPad) == "[PAD]");
  CHECK(u.token_of(special::kEos) == "[EOS]");
  std::filesystem::remove(path);
}

TEST_CASE("generate_toy_corpus: determinism and answer containment") {
  auto a = generate_toy_corpus(7, 100);
  auto b = generate_toy_corpus(7, 100);
  CHECK(a.size() == 100);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].passage == b[i].passage);
    CHECK(a[i].question == b[i].question);
    CHECK(a[i].answer == b[i].answer);
  }

  // answer tokens are a subsequence (and sub-multiset) of the passage
  for (const auto& ex : a) {
    auto p = Vocab::split_lower(ex.passage);
    auto ans = Vocab::split_lower(ex.answer);
    size_t pi = 0;
    for (const auto& w : ans) {
      while (pi < p.size() && p[pi] != w) ++pi;
      REQUIRE(pi < p.size());
      ++pi;
    }
    std::map<std::string, int> pc, ac;
    for (const auto& w : p) ++pc[w];
    for (const auto& w : ans) ++ac[w];
    for (const auto& [w, c] : ac) CHECK(pc[w] >= c);
  }
}

TEST_CASE("generate_toy_corpus: bounded vocabulary") {
  auto corpus = generate_toy_corpus(3, 5000);
  std::set<std::string> words;
  for (const auto& ex : corpus)
    for (const auto& text : {ex.passage, ex.question, ex.answer})
      for (const auto& w : Vocab::split_lower(text)) words.insert(w);
  CHECK(words.size() <= 120);

  // vocab built from a corpus maps every corpus token to a non-UNK id
  Vocab v = build_vocab(corpus);
  for (const auto& w : words) CHECK(v.id_of(w) != special::kUnk);
}

TEST_CASE("jsonl: order-preserving round-trip and error reporting") {
  const auto path = tmp_path("bctn_jsonl_test.jsonl");
  auto corpus = generate_toy_corpus(11, 3);
  save_jsonl(corpus, path);
  auto loaded = load_jsonl(path);
  REQUIRE(loaded.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].passage == corpus[i].passage);
    CHECK(loaded[i].question == corpus[i].question);
    CHECK(loaded[i].answer == corpus[i].answer);
  }

  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("{\"passage\": \"a\", \"question\": \"b\", \"answer\": \"c\"}\n", f);
    std::fputs("{\"passage\": \"a\", \"question\": \"b\"}\n", f);
    std::fclose(f);
  }
  try {
    load_jsonl(path);
    FAIL("expected MissingField");
  } catch (const MissingField& e) {
    CHECK(e.field == "answer");
    CHECK(e.line_no == 2);
  }

  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("not json at all\n", f);
    std::fclose(f);
  }
  try {
    load_jsonl(path);
    FAIL("expected MalformedLine");
  } catch (const MalformedLine& e) {
    CHECK(e.line_no == 1);
  }
  std::filesystem::remove(path);
}

TEST_CASE("batchify: shapes, padding, masks, conservation") {
  auto corpus = generate_toy_corpus(21, 10);
  Vocab v = build_vocab(corpus);
  auto examples = tokenize_corpus(v, corpus);

  auto batches = batchify(examples, 4, 64);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);

  int total = 0;
  for (const auto& b : batches) total += b.size();
  CHECK(total == 10);

  // mask marks exactly the real tokens; padding is id 0
  const Batch& b0 = batches[0];
  for (int i = 0; i < b0.size(); ++i) {
    for (int t = 0; t < 64; ++t) {
      const bool real = t < b0.passage_len[i];
      CHECK(b0.passage_mask[i][t] == (real ? 1 : 0));
      if (!real) CHECK(b0.passage[i][t] == special::kPad);
    }
  }

  CHECK_THROWS_AS(batchify(examples, 4, 8), ExampleTooLong);
}

TEST_CASE("batchify: explicit pad/mask example") {
  QAExample e1{{9, 9, 9}, {8}, {7}};
  QAExample e2{{9, 9, 9, 9, 9}, {8}, {7}};
  auto batches = batchify({e1, e2}, 2, 10);
  REQUIRE(batches.size() == 1);
  const auto& b = batches[0];
  CHECK(b.passage[0] == std::vector<int>{9, 9, 9, 0, 0, 0, 0, 0, 0, 0});
  CHECK(std::vector<uint8_t>(b.passage_mask[0].begin(), b.passage_mask[0].begin() + 5) ==
        std::vector<uint8_t>{1, 1, 1, 0, 0});
}

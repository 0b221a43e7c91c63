#pragma once

#include <string>
#include <vector>

#include "bctn/vocab.hpp"

namespace bctn {

// Raw (surface string) example as read from / written to JSONL.
struct RawExample {
  std::string passage;
  std::string question;
  std::string answer;
};

// Tokenized (passage, question, answer) triple.
struct QAExample {
  std::vector<int> passage;   // length N
  std::vector<int> question;  // length M
  std::vector<int> answer;    // length K
};

struct Batch {
  // padded id matrices, row per example; pad id 0; mask 1 on real tokens
  std::vector<std::vector<int>> passage, question, answer;
  std::vector<std::vector<uint8_t>> passage_mask, question_mask, answer_mask;
  std::vector<int> passage_len, question_len, answer_len;
  int size() const { return static_cast<int>(passage_len.size()); }
};

// Deterministic templated corpus: 2-4 facts per passage over fixed word
// lists, a question about one fact, and the supporting sentence as answer.
std::vector<RawExample> generate_toy_corpus(uint64_t seed, int n);

std::vector<RawExample> load_jsonl(const std::string& path);
void save_jsonl(const std::vector<RawExample>& examples, const std::string& path);

// Vocabulary over every token that appears in the corpus.
Vocab build_vocab(const std::vector<RawExample>& corpus);

QAExample tokenize_example(const Vocab& v, const RawExample& raw);
std::vector<QAExample> tokenize_corpus(const Vocab& v, const std::vector<RawExample>& corpus);

// Splits into batches of `batch_size` (last may be short), padding every
// field to `pad_to`. Throws ExampleTooLong when an example cannot fit the
// model input budget (N + K + 3 > pad_to).
std::vector<Batch> batchify(const std::vector<QAExample>& examples, int batch_size, int pad_to);

}  // namespace bctn

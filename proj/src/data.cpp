#include "bctn/data.hpp"

#include <fstream>
#include <json.hpp>

#include "bctn/errors.hpp"
#include "bctn/rng.hpp"

namespace bctn {

namespace {

// 30 entries each; small enough that a few thousand examples stay under
// 120 distinct surface words including the template glue.
const char* kEntities[30] = {
    "cat",    "dog",    "fox",     "owl",    "bear",   "wolf",  "hare",   "mole",
    "crow",   "dove",   "toad",    "newt",   "pony",   "goat",  "lamb",   "seal",
    "otter",  "mouse",  "badger",  "heron",  "finch",  "stork", "viper",  "moose",
    "weasel", "shrew",  "falcon",  "magpie", "beaver", "lynx"};

const char* kPlaces[30] = {
    "garden",  "kitchen", "meadow",  "forest", "attic",   "cellar",  "barn",    "harbor",
    "market",  "library", "tower",   "valley", "orchard", "stable",  "castle",  "village",
    "bridge",  "canyon",  "desert",  "island", "lagoon",  "cavern",  "chapel",  "mill",
    "plaza",   "quarry",  "swamp",   "tundra", "vineyard", "workshop"};

const char* kObjects[30] = {
    "apple",  "bread",  "cheese", "honey",  "berry",  "melon",  "carrot", "turnip",
    "acorn",  "clover", "barley", "millet", "pepper", "radish", "celery", "garlic",
    "onion",  "plum",   "quince", "raisin", "walnut", "almond", "basil",  "cocoa",
    "fig",    "grape",  "lentil", "mango",  "oat",    "pear"};

struct Fact {
  int entity;
  bool is_location;  // else "likes"
  int slot;          // place or object index
  std::string sentence(bool with_period) const {
    std::string s = "the ";
    s += kEntities[entity];
    s += is_location ? " is in the " : " likes the ";
    s += is_location ? kPlaces[slot] : kObjects[slot];
    if (with_period) s += " .";
    return s;
  }
};

}  // namespace

std::vector<RawExample> generate_toy_corpus(uint64_t seed, int n) {
  std::vector<RawExample> out;
  out.reserve(n);
  Rng rng(Rng::mix(seed, 0x7055));
  for (int i = 0; i < n; ++i) {
    const int n_facts = 2 + rng.uniform_int(3);
    // distinct entities so every question has a unique supporting fact
    std::vector<int> entities;
    while (static_cast<int>(entities.size()) < n_facts) {
      int e = rng.uniform_int(30);
      bool dup = false;
      for (int prev : entities) dup |= (prev == e);
      if (!dup) entities.push_back(e);
    }
    std::vector<Fact> facts;
    for (int f = 0; f < n_facts; ++f)
      facts.push_back({entities[f], rng.uniform_int(2) == 0, rng.uniform_int(30)});

    std::string passage;
    for (size_t f = 0; f < facts.size(); ++f) {
      if (f) passage += ' ';
      passage += facts[f].sentence(true);
    }
    const Fact& q = facts[rng.uniform_int(n_facts)];
    std::string question = q.is_location
                               ? ("where is the " + std::string(kEntities[q.entity]) + " ?")
                               : ("what does the " + std::string(kEntities[q.entity]) + " like ?");
    out.push_back({passage, question, q.sentence(false)});
  }
  return out;
}

std::vector<RawExample> load_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw BctnError("cannot open dataset: " + path);
  std::vector<RawExample> out;
  std::string line;
  long line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedLine(line_no, e.what());
    }
    if (!j.is_object()) throw MalformedLine(line_no, "not a JSON object");
    RawExample ex;
    for (const char* field : {"passage", "question", "answer"}) {
      if (!j.contains(field)) throw MissingField(field, line_no);
      if (!j[field].is_string()) throw MalformedLine(line_no, std::string(field) + " not a string");
    }
    ex.passage = j["passage"].get<std::string>();
    ex.question = j["question"].get<std::string>();
    ex.answer = j["answer"].get<std::string>();
    out.push_back(std::move(ex));
  }
  return out;
}

void save_jsonl(const std::vector<RawExample>& examples, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw UnwritablePath("cannot open for write: " + path);
  for (const auto& ex : examples) {
    nlohmann::json j{{"passage", ex.passage}, {"question", ex.question}, {"answer", ex.answer}};
    f << j.dump() << '\n';
  }
}

Vocab build_vocab(const std::vector<RawExample>& corpus) {
  Vocab v;
  for (const auto& ex : corpus) {
    for (const auto& text : {ex.passage, ex.question, ex.answer})
      for (const auto& w : Vocab::split_lower(text)) v.add_token(w);
  }
  return v;
}

QAExample tokenize_example(const Vocab& v, const RawExample& raw) {
  return {v.tokenize(raw.passage), v.tokenize(raw.question), v.tokenize(raw.answer)};
}

std::vector<QAExample> tokenize_corpus(const Vocab& v, const std::vector<RawExample>& corpus) {
  std::vector<QAExample> out;
  out.reserve(corpus.size());
  for (const auto& ex : corpus) out.push_back(tokenize_example(v, ex));
  return out;
}

std::vector<Batch> batchify(const std::vector<QAExample>& examples, int batch_size, int pad_to) {
  if (batch_size < 1) throw BctnError("batchify: batch_size must be >= 1");
  for (size_t i = 0; i < examples.size(); ++i) {
    const long need = static_cast<long>(examples[i].passage.size()) +
                      static_cast<long>(examples[i].answer.size()) + 3;
    if (need > pad_to)
      throw ExampleTooLong("example " + std::to_string(i) + " needs " + std::to_string(need) +
                           " > pad_to " + std::to_string(pad_to));
  }
  auto pad_field = [&](const std::vector<int>& ids, std::vector<std::vector<int>>& rows,
                       std::vector<std::vector<uint8_t>>& masks, std::vector<int>& lens) {
    std::vector<int> row(pad_to, special::kPad);
    std::vector<uint8_t> mask(pad_to, 0);
    for (size_t t = 0; t < ids.size(); ++t) {
      row[t] = ids[t];
      mask[t] = 1;
    }
    rows.push_back(std::move(row));
    masks.push_back(std::move(mask));
    lens.push_back(static_cast<int>(ids.size()));
  };
  std::vector<Batch> out;
  for (size_t start = 0; start < examples.size(); start += batch_size) {
    Batch b;
    const size_t end = std::min(examples.size(), start + batch_size);
    for (size_t i = start; i < end; ++i) {
      pad_field(examples[i].passage, b.passage, b.passage_mask, b.passage_len);
      pad_field(examples[i].question, b.question, b.question_mask, b.question_len);
      pad_field(examples[i].answer, b.answer, b.answer_mask, b.answer_len);
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace bctn

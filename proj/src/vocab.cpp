#include "bctn/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "bctn/errors.hpp"

namespace bctn {

static const char* kSpecialNames[special::kCount] = {"[PAD]", "[UNK]", "[CLS]",
                                                     "[SEP]", "[BOS]", "[EOS]"};

Vocab::Vocab() {
  for (int i = 0; i < special::kCount; ++i) {
    id_to_tok_.push_back(kSpecialNames[i]);
    tok_to_id_[kSpecialNames[i]] = i;
  }
}

int Vocab::add_token(const std::string& tok) {
  auto it = tok_to_id_.find(tok);
  if (it != tok_to_id_.end()) return it->second;
  const int id = static_cast<int>(id_to_tok_.size());
  id_to_tok_.push_back(tok);
  tok_to_id_[tok] = id;
  return id;
}

int Vocab::id_of(const std::string& tok) const {
  auto it = tok_to_id_.find(tok);
  return it == tok_to_id_.end() ? special::kUnk : it->second;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || id >= size()) throw BctnError("token id out of range: " + std::to_string(id));
  return id_to_tok_[id];
}

std::vector<std::string> Vocab::split_lower(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<int> Vocab::tokenize(const std::string& text) const {
  const auto words = split_lower(text);
  if (words.empty()) throw EmptyText("tokenize: no tokens in input");
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id_of(w));
  return ids;
}

std::string Vocab::detokenize(const std::vector<int>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token_of(ids[i]);
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw UnwritablePath("cannot open for write: " + path);
  for (const auto& t : id_to_tok_) f << t << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw BctnError("cannot open vocab file: " + path);
  std::vector<std::string> toks;
  std::string line;
  while (std::getline(f, line)) toks.push_back(line);
  return from_tokens(toks);
}

Vocab Vocab::from_tokens(const std::vector<std::string>& toks) {
  Vocab v;
  for (int i = 0; i < special::kCount; ++i) {
    if (i >= static_cast<int>(toks.size()) || toks[i] != kSpecialNames[i])
      throw BctnError("vocab must start with the six reserved tokens");
  }
  for (size_t i = special::kCount; i < toks.size(); ++i) v.add_token(toks[i]);
  return v;
}

}  // namespace bctn

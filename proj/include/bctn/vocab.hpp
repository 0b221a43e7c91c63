#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace bctn {

// Token ids 0..5 are reserved and stable across save/load.
namespace special {
inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kCls = 2;
inline constexpr int kSep = 3;
inline constexpr int kBos = 4;
inline constexpr int kEos = 5;
inline constexpr int kCount = 6;
}  // namespace special

class Vocab {
 public:
  Vocab();

  // Adds token if absent; returns its id.
  int add_token(const std::string& tok);
  // Lookup; [UNK] for unseen tokens.
  int id_of(const std::string& tok) const;
  const std::string& token_of(int id) const;
  int size() const { return static_cast<int>(id_to_tok_.size()); }
  bool is_special(int id) const { return id >= 0 && id < special::kCount; }

  // Lowercased whitespace tokenization. Throws EmptyText when no tokens.
  std::vector<int> tokenize(const std::string& text) const;
  std::string detokenize(const std::vector<int>& ids) const;

  // One token per line, line number == id (specials included).
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  // Token list round-trip (checkpoints embed the vocabulary).
  std::vector<std::string> tokens() const { return id_to_tok_; }
  static Vocab from_tokens(const std::vector<std::string>& toks);

  static std::vector<std::string> split_lower(const std::string& text);

 private:
  std::unordered_map<std::string, int> tok_to_id_;
  std::vector<std::string> id_to_tok_;
};

}  // namespace bctn

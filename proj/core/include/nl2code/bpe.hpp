#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nl2code/token_ids.hpp"

namespace nl2code {

// Byte-pair-encoding subword vocabulary. Base symbols are the distinct bytes
// of the training corpus plus a word-boundary marker that prefixes every
// whitespace-delimited word; merges grow multi-byte pieces greedily by pair
// frequency. Immutable after training: encode/decode are const and pure.
class Vocab {
 public:
  static constexpr int pad_id = kPadId;
  static constexpr int bos_id = kBosId;
  static constexpr int eos_id = kEosId;
  static constexpr int unk_id = kUnkId;

  // The marker is a single symbol even though it is three UTF-8 bytes.
  static const std::string& boundary_marker();

  int size() const { return static_cast<int>(id_to_piece_.size()); }
  const std::vector<std::string>& id_to_piece() const { return id_to_piece_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  const std::string& piece(int id) const;
  // -1 when the piece is unknown.
  int piece_id(const std::string& piece) const;

  std::vector<int> encode(const std::string& text, bool add_bos_eos) const;
  std::string decode(const std::vector<int>& ids) const;

  // One escaped piece per line in id order; the first four lines are the
  // special tokens. Merges file: one escaped "left right" pair per line in
  // application order. Bytes outside printable ASCII and '\' are written as
  // \xHH so both files stay line- and space-safe.
  void save(const std::string& vocab_path, const std::string& merges_path) const;
  static Vocab load(const std::string& vocab_path, const std::string& merges_path);

 private:
  friend Vocab train_vocab(const std::vector<std::string>& corpus, int vocab_size);

  std::vector<std::string> id_to_piece_;
  std::unordered_map<std::string, int> piece_to_id_;
  std::vector<std::pair<std::string, std::string>> merges_;

  void add_piece(const std::string& piece);
};

// Greedy BPE training. Deterministic: pair counts tie-break lexicographically.
// Stops early (below vocab_size) when no adjacent pair occurs at least twice;
// the clamped size is logged. Throws ValidationError when vocab_size cannot
// cover the specials plus the base alphabet.
Vocab train_vocab(const std::vector<std::string>& corpus, int vocab_size);

// Escape/unescape used by the vocab and merges file formats (exposed for tests).
std::string escape_piece(const std::string& raw);
std::string unescape_piece(const std::string& escaped);

}  // namespace nl2code

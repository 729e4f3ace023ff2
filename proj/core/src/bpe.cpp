#include "nl2code/bpe.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>
#include <unordered_set>

#include "nl2code/errors.hpp"

namespace nl2code {

namespace {

const char* kSpecials[4] = {"<pad>", "<bos>", "<eos>", "<unk>"};

// Splits on single spaces, keeping empty words so runs of spaces and
// leading/trailing spaces survive the round trip. "" produces no words.
std::vector<std::string> split_on_spaces(const std::string& text) {
  std::vector<std::string> words;
  if (text.empty()) return words;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      words.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  words.push_back(cur);
  return words;
}

bool is_printable(unsigned char b) { return b >= 0x21 && b <= 0x7E; }

}  // namespace

const std::string& Vocab::boundary_marker() {
  static const std::string marker = "\xE2\x96\x81";  // U+2581 LOWER ONE QUARTER BLOCK
  return marker;
}

const std::string& Vocab::piece(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("Vocab: id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(size()));
  }
  return id_to_piece_[id];
}

int Vocab::piece_id(const std::string& piece) const {
  auto it = piece_to_id_.find(piece);
  return it == piece_to_id_.end() ? -1 : it->second;
}

void Vocab::add_piece(const std::string& piece) {
  if (piece_to_id_.count(piece)) {
    throw ValidationError("Vocab: duplicate piece \"" + escape_piece(piece) + "\"");
  }
  piece_to_id_[piece] = static_cast<int>(id_to_piece_.size());
  id_to_piece_.push_back(piece);
}

// The boundary marker stands in for the space before each word, so the first
// word of a text carries no marker and every later word starts with one.
std::vector<int> Vocab::encode(const std::string& text, bool add_bos_eos) const {
  std::vector<int> ids;
  if (add_bos_eos) ids.push_back(bos_id);
  const std::vector<std::string> words = split_on_spaces(text);
  for (std::size_t w = 0; w < words.size(); ++w) {
    std::vector<std::string> symbols;
    if (w > 0) symbols.push_back(boundary_marker());
    for (char c : words[w]) symbols.emplace_back(1, c);
    if (symbols.empty()) continue;
    // Merges replay in training order; each merge fuses its pair
    // left-to-right without overlap, mirroring how it was learned.
    std::unordered_set<std::string> present(symbols.begin(), symbols.end());
    for (const auto& [left, right] : merges_) {
      if (symbols.size() < 2) break;
      if (!present.count(left) || !present.count(right)) continue;
      std::vector<std::string> fused;
      fused.reserve(symbols.size());
      bool applied = false;
      for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
          fused.push_back(left + right);
          present.insert(fused.back());
          applied = true;
          ++i;
        } else {
          fused.push_back(symbols[i]);
        }
      }
      if (applied) symbols.swap(fused);
    }
    for (const std::string& s : symbols) {
      const int id = piece_id(s);
      ids.push_back(id < 0 ? unk_id : id);
    }
  }
  if (add_bos_eos) ids.push_back(eos_id);
  return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string bytes;
  for (int id : ids) {
    if (id < 0 || id >= size()) {
      throw std::out_of_range("Vocab: id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(size()));
    }
    if (id <= unk_id) continue;  // specials are dropped
    bytes += id_to_piece_[id];
  }
  // Boundary markers become the spaces they replaced.
  const std::string& marker = boundary_marker();
  std::string text;
  text.reserve(bytes.size());
  std::size_t i = 0;
  while (i < bytes.size()) {
    if (bytes.compare(i, marker.size(), marker) == 0) {
      text.push_back(' ');
      i += marker.size();
    } else {
      text.push_back(bytes[i]);
      ++i;
    }
  }
  return text;
}

Vocab train_vocab(const std::vector<std::string>& corpus, int vocab_size) {
  if (corpus.empty()) throw ValidationError("train_vocab: corpus is empty");

  // Unique words with counts, in first-seen order for determinism.
  std::vector<std::pair<std::vector<std::string>, long long>> words;
  std::map<std::string, std::size_t> word_index;
  std::unordered_set<std::string> alphabet;
  for (const std::string& text : corpus) {
    const std::vector<std::string> split = split_on_spaces(text);
    for (std::size_t w = 0; w < split.size(); ++w) {
      std::string keyed = (w > 0 ? Vocab::boundary_marker() : "") + split[w];
      if (keyed.empty()) continue;
      auto [it, fresh] = word_index.try_emplace(keyed, words.size());
      if (fresh) {
        std::vector<std::string> symbols;
        if (w > 0) symbols.push_back(Vocab::boundary_marker());
        for (char c : split[w]) symbols.emplace_back(1, c);
        for (const std::string& s : symbols) alphabet.insert(s);
        words.emplace_back(std::move(symbols), 1);
      } else {
        words[it->second].second += 1;
      }
    }
  }

  const int base = static_cast<int>(alphabet.size());
  if (vocab_size < base + 4 + 1) {
    throw ValidationError("train_vocab: vocab_size " + std::to_string(vocab_size) +
                          " cannot cover " + std::to_string(base) +
                          " base symbols plus 4 specials with room to merge");
  }

  Vocab v;
  for (const char* s : kSpecials) v.add_piece(s);
  std::vector<std::string> sorted_alphabet(alphabet.begin(), alphabet.end());
  std::sort(sorted_alphabet.begin(), sorted_alphabet.end());
  for (const std::string& s : sorted_alphabet) v.add_piece(s);

  while (v.size() < vocab_size) {
    // Weighted adjacent-pair counts; std::map iteration gives the
    // lexicographically smallest pair first, which settles ties.
    std::map<std::pair<std::string, std::string>, long long> counts;
    for (const auto& [symbols, count] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        counts[{symbols[i], symbols[i + 1]}] += count;
      }
    }
    const std::pair<std::string, std::string>* best = nullptr;
    long long best_count = 0;
    for (const auto& [pair, count] : counts) {
      if (count > best_count && !v.piece_to_id_.count(pair.first + pair.second)) {
        best = &pair;
        best_count = count;
      }
    }
    if (best == nullptr || best_count < 2) {
      std::cerr << "[tokenizer] vocabulary clamped at " << v.size() << " of requested "
                << vocab_size << ": no remaining pair occurs twice\n";
      break;
    }
    const auto [left, right] = *best;
    v.merges_.emplace_back(left, right);
    v.add_piece(left + right);
    for (auto& [symbols, count] : words) {
      if (symbols.size() < 2) continue;
      std::vector<std::string> fused;
      fused.reserve(symbols.size());
      bool applied = false;
      for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
          fused.push_back(left + right);
          applied = true;
          ++i;
        } else {
          fused.push_back(symbols[i]);
        }
      }
      if (applied) symbols.swap(fused);
    }
  }
  return v;
}

std::string escape_piece(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  for (unsigned char b : raw) {
    if (b == '\\') {
      out += "\\\\";
    } else if (is_printable(b)) {
      out.push_back(static_cast<char>(b));
    } else {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "\\x%02X", b);
      out += buf;
    }
  }
  return out;
}

std::string unescape_piece(const std::string& escaped) {
  std::string out;
  out.reserve(escaped.size());
  for (std::size_t i = 0; i < escaped.size(); ++i) {
    if (escaped[i] != '\\') {
      out.push_back(escaped[i]);
      continue;
    }
    if (i + 1 < escaped.size() && escaped[i + 1] == '\\') {
      out.push_back('\\');
      ++i;
      continue;
    }
    if (i + 3 < escaped.size() && escaped[i + 1] == 'x') {
      auto hex = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
      };
      const int hi = hex(escaped[i + 2]), lo = hex(escaped[i + 3]);
      if (hi >= 0 && lo >= 0) {
        out.push_back(static_cast<char>(hi * 16 + lo));
        i += 3;
        continue;
      }
    }
    throw ValidationError("unescape_piece: bad escape in \"" + escaped + "\"");
  }
  return out;
}

void Vocab::save(const std::string& vocab_path, const std::string& merges_path) const {
  std::ofstream vf(vocab_path);
  if (!vf) throw std::runtime_error("cannot write vocabulary file " + vocab_path);
  for (const std::string& p : id_to_piece_) vf << escape_piece(p) << "\n";
  if (!vf.good()) throw std::runtime_error("write failed for " + vocab_path);
  std::ofstream mf(merges_path);
  if (!mf) throw std::runtime_error("cannot write merges file " + merges_path);
  for (const auto& [left, right] : merges_) {
    mf << escape_piece(left) << " " << escape_piece(right) << "\n";
  }
  if (!mf.good()) throw std::runtime_error("write failed for " + merges_path);
}

Vocab Vocab::load(const std::string& vocab_path, const std::string& merges_path) {
  std::ifstream vf(vocab_path);
  if (!vf) throw ValidationError("cannot open vocabulary file " + vocab_path);
  Vocab v;
  std::string line;
  int lineno = 0;
  while (std::getline(vf, line)) {
    ++lineno;
    const std::string piece = unescape_piece(line);
    if (lineno <= 4 && piece != kSpecials[lineno - 1]) {
      throw ValidationError(vocab_path + ": line " + std::to_string(lineno) +
                            " must be the special token " + kSpecials[lineno - 1]);
    }
    v.add_piece(piece);
  }
  if (v.size() < 4) {
    throw ValidationError(vocab_path + ": missing the 4-line special-token header");
  }
  std::ifstream mf(merges_path);
  if (!mf) throw ValidationError("cannot open merges file " + merges_path);
  lineno = 0;
  while (std::getline(mf, line)) {
    ++lineno;
    const std::size_t space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 >= line.size()) {
      throw ValidationError(merges_path + ": line " + std::to_string(lineno) +
                            " is not a \"left right\" pair");
    }
    v.merges_.emplace_back(unescape_piece(line.substr(0, space)),
                           unescape_piece(line.substr(space + 1)));
  }
  return v;
}

}  // namespace nl2code

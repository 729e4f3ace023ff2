#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "nl2code/bpe.hpp"
#include "nl2code/errors.hpp"

using namespace nl2code;

namespace {

std::string tmp_file(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool has_piece(const Vocab& v, const std::string& piece) { return v.piece_id(piece) >= 0; }

}  // namespace

TEST_CASE("single-word corpus learns character merges") {
  // One word means no boundary marker, so the base alphabet is just 'a':
  // 4 specials + 'a' + one merge fills a budget of 6, and that merge must
  // be a+a.
  Vocab v = train_vocab({"aaaa"}, 6);
  CHECK(v.size() == 6);
  CHECK(has_piece(v, "a"));
  CHECK(has_piece(v, "aa"));
  REQUIRE(v.merges().size() == 1);
  CHECK(v.merges()[0] == std::pair<std::string, std::string>{"a", "a"});

  const std::vector<int> ids = v.encode("aaaa", /*add_bos_eos=*/true);
  REQUIRE(ids.size() == 4);
  CHECK(ids.front() == Vocab::bos_id);
  CHECK(ids.back() == Vocab::eos_id);
  CHECK(v.piece(ids[1]) == "aa");
  CHECK(v.piece(ids[2]) == "aa");
  CHECK(v.decode(ids) == "aaaa");
}

TEST_CASE("specials occupy the first four ids") {
  Vocab v = train_vocab({"ab"}, 8);
  CHECK(v.piece(Vocab::pad_id) == "<pad>");
  CHECK(v.piece(Vocab::bos_id) == "<bos>");
  CHECK(v.piece(Vocab::eos_id) == "<eos>");
  CHECK(v.piece(Vocab::unk_id) == "<unk>");
  CHECK_THROWS_AS(v.piece(v.size()), std::out_of_range);
  CHECK(v.piece_id("no such piece") == -1);
}

TEST_CASE("word boundaries round-trip through the marker") {
  Vocab v = train_vocab({"hello world", "hello there world"}, 64);
  // Round-trips are exact for text over the corpus byte inventory, including
  // leading, trailing, and doubled spaces.
  for (const std::string text :
       {std::string("hello world"), std::string("world hello"), std::string(" hello"),
        std::string("world "), std::string("there  there"), std::string(""),
        std::string(" "), std::string("  ")}) {
    CHECK(v.decode(v.encode(text, true)) == text);
  }
  CHECK(v.encode("", true) == std::vector<int>{Vocab::bos_id, Vocab::eos_id});
  // Bytes the corpus never produced encode to <unk>, which decode drops.
  CHECK(v.decode(v.encode("zebra hello", true)) == "er hello");
}

TEST_CASE("unknown bytes map to unk and are dropped by decode") {
  Vocab v = train_vocab({"abc abc"}, 32);
  const std::vector<int> ids = v.encode("abQ", true);
  CHECK(std::count(ids.begin(), ids.end(), Vocab::unk_id) == 1);
  CHECK(v.decode(ids) == "ab");
}

TEST_CASE("merge replay is deterministic and ordered") {
  const std::vector<std::string> corpus = {"low lower lowest", "low low lower"};
  Vocab a = train_vocab(corpus, 40);
  Vocab b = train_vocab(corpus, 40);
  CHECK(a.id_to_piece() == b.id_to_piece());
  CHECK(a.merges() == b.merges());
  // every merge's concatenation is itself a piece
  for (const auto& [left, right] : a.merges()) {
    CHECK(has_piece(a, left + right));
  }
}

TEST_CASE("training clamps when no pair repeats") {
  // All byte pairs in a tiny all-distinct corpus occur once, so training
  // stops at base alphabet + specials even with budget to spare.
  Vocab v = train_vocab({"xyz"}, 50);
  // specials + x + y + z = 7 (a single word has no boundary marker)
  CHECK(v.size() == 7);
}

TEST_CASE("impossible budgets are rejected") {
  CHECK_THROWS_AS(train_vocab({"abc"}, 5), ValidationError);
  CHECK_THROWS_AS(train_vocab({}, 0), ValidationError);
}

TEST_CASE("escape round-trips every byte") {
  std::string raw;
  for (int b = 0; b < 256; ++b) raw.push_back(static_cast<char>(b));
  CHECK(unescape_piece(escape_piece(raw)) == raw);
  CHECK(escape_piece("ab") == "ab");
  CHECK(escape_piece(" ") == "\\x20");        // space must never split a field
  CHECK(escape_piece("\\") == "\\\\");
  CHECK(escape_piece("\n") == "\\x0A");
}

TEST_CASE("save and load preserve the vocabulary exactly") {
  Vocab v = train_vocab({"def add(a, b):", "return a + b", "print(add(1, 2))"}, 96);
  const std::string vp = tmp_file("bpe_test.vocab");
  const std::string mp = tmp_file("bpe_test.merges");
  v.save(vp, mp);
  Vocab loaded = Vocab::load(vp, mp);

  CHECK(loaded.id_to_piece() == v.id_to_piece());
  CHECK(loaded.merges() == v.merges());
  for (const std::string text : {std::string("add(a, b)"), std::string("print(1)")}) {
    CHECK(loaded.encode(text, true) == v.encode(text, true));
  }
  // file shape: one line per piece, specials first
  std::ifstream in(vp);
  std::string first;
  std::getline(in, first);
  CHECK(first == "<pad>");
  std::remove(vp.c_str());
  std::remove(mp.c_str());
}

TEST_CASE("load rejects a corrupt header") {
  const std::string vp = tmp_file("bpe_bad.vocab");
  const std::string mp = tmp_file("bpe_bad.merges");
  std::ofstream(vp) << "<pad>\n<bos>\nwrong\n<unk>\na\n";
  std::ofstream(mp) << "";
  CHECK_THROWS_AS(Vocab::load(vp, mp), ValidationError);
  CHECK_THROWS_AS(Vocab::load(tmp_file("missing.vocab"), mp), ValidationError);
  std::remove(vp.c_str());
  std::remove(mp.c_str());
}

TEST_CASE("longer corpus compresses real code") {
  std::vector<std::string> corpus;
  for (int i = 0; i < 20; ++i) {
    corpus.push_back("for i in range(10): print(i)");
    corpus.push_back("result = [x * x for x in values]");
  }
  Vocab v = train_vocab(corpus, 200);
  const std::vector<int> ids = v.encode("for x in values", false);
  // merges should beat one-id-per-byte
  CHECK(ids.size() < std::string("for x in values").size());
  CHECK(v.decode(v.encode("for x in values", true)) == "for x in values");
}

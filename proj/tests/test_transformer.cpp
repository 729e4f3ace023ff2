#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "nl2code/errors.hpp"
#include "nl2code/ops.hpp"
#include "nl2code/transformer.hpp"
#include "support/fd.hpp"

using namespace nl2code;

namespace {

TransformerConfig tiny_cfg() {
  TransformerConfig c;
  c.num_layers = 1;
  c.num_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.dropout = 0.0;
  c.src_vocab = 10;
  c.tgt_vocab = 12;
  c.max_len = 16;
  return c;
}

}  // namespace

TEST_CASE("config validation rejects impossible settings") {
  TransformerConfig c = tiny_cfg();
  CHECK_NOTHROW(c.validate());
  c.d_model = 7;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = tiny_cfg();
  c.num_heads = 3;  // does not divide d_model
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = tiny_cfg();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = tiny_cfg();
  c.src_vocab = 3;  // no room for the specials
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = tiny_cfg();
  c.max_len = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = tiny_cfg();
  c.num_layers = -1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("registered parameters match the closed-form count") {
  for (TransformerConfig c : {tiny_cfg(), TransformerConfig{}}) {
    c.src_vocab = std::min(c.src_vocab, 64);  // keep the default config small
    c.tgt_vocab = std::min(c.tgt_vocab, 64);
    Rng rng(1);
    TransformerModel model(c, rng);
    long long actual = 0;
    for (const auto& [name, p] : model.parameters()) actual += static_cast<long long>(p.numel());
    CHECK(actual == c.param_count());
  }
}

TEST_CASE("positional encoding matches its closed form") {
  const int d = 8;
  Tensor pe = positional_encoding(10, d);
  auto at = [&](int pos, int col) { return pe.values()[pos * d + col]; };
  CHECK(at(0, 0) == 0.0);
  CHECK(at(0, 1) == 1.0);
  for (int pos : {1, 3, 7}) {
    for (int i = 0; i < d / 2; ++i) {
      const double angle = pos / std::pow(10000.0, (2.0 * i) / d);
      CHECK(at(pos, 2 * i) == doctest::Approx(std::sin(angle)).epsilon(1e-12));
      CHECK(at(pos, 2 * i + 1) == doctest::Approx(std::cos(angle)).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(positional_encoding(4, 7), std::invalid_argument);
}

TEST_CASE("an empty stack exposes the embedding pipeline exactly") {
  TransformerConfig c = tiny_cfg();
  c.num_layers = 0;
  Rng rng(3);
  TransformerModel model(c, rng);
  const std::vector<int> ids = {kBosId, 5, 7, kEosId};
  Tensor out = model.encode(ids);

  const Tensor& table = model.param("src_embed");
  Tensor pe = positional_encoding(c.max_len, c.d_model);
  const double s = std::sqrt(static_cast<double>(c.d_model));
  for (std::size_t pos = 0; pos < ids.size(); ++pos) {
    for (int j = 0; j < c.d_model; ++j) {
      const double expected =
          table.values()[ids[pos] * c.d_model + j] * s + pe.values()[pos * c.d_model + j];
      CHECK(out.values()[pos * c.d_model + j] == expected);
    }
  }
}

TEST_CASE("future tokens cannot influence earlier decoder outputs") {
  TransformerConfig c = tiny_cfg();
  Rng rng(7);
  TransformerModel model(c, rng);
  const std::vector<int> src = {kBosId, 4, 5, kEosId};
  Tensor memory = model.encode(src);
  const std::vector<bool> mem_pad = TransformerModel::pad_mask_of(src);

  const std::vector<int> tgt_a = {kBosId, 6, 7, 8};
  const std::vector<int> tgt_b = {kBosId, 6, 7, 9};  // differs at the last position
  Tensor la = model.decode_teacher_forced(tgt_a, memory, mem_pad);
  Tensor lb = model.decode_teacher_forced(tgt_b, memory, mem_pad);
  for (int pos = 0; pos < 3; ++pos) {  // all positions before the change
    for (int v = 0; v < c.tgt_vocab; ++v) {
      CHECK(la.values()[pos * c.tgt_vocab + v] == lb.values()[pos * c.tgt_vocab + v]);
    }
  }
}

TEST_CASE("padding the source never changes real positions") {
  TransformerConfig c = tiny_cfg();
  Rng rng(5);
  TransformerModel model(c, rng);
  const std::vector<int> src = {kBosId, 4, 5, kEosId};
  std::vector<int> padded = src;
  padded.push_back(kPadId);
  padded.push_back(kPadId);

  Tensor a = model.encode(src);
  Tensor b = model.encode(padded);
  for (std::size_t i = 0; i < src.size() * c.d_model; ++i) {
    CHECK(a.values()[i] == b.values()[i]);
  }

  // and through the decoder's cross-attention as well
  const std::vector<int> tgt = {kBosId, 6, 7};
  Tensor la = model.decode_teacher_forced(tgt, a, TransformerModel::pad_mask_of(src));
  Tensor lb = model.decode_teacher_forced(tgt, b, TransformerModel::pad_mask_of(padded));
  for (std::size_t i = 0; i < tgt.size() * static_cast<std::size_t>(c.tgt_vocab); ++i) {
    CHECK(la.values()[i] == lb.values()[i]);
  }
}

TEST_CASE("an all-pad source is rejected as unattendable") {
  TransformerConfig c = tiny_cfg();
  Rng rng(2);
  TransformerModel model(c, rng);
  CHECK_THROWS_AS(model.encode({kPadId, kPadId}), std::runtime_error);
  CHECK_THROWS_AS(model.encode({}), std::invalid_argument);
  std::vector<int> too_long(c.max_len + 1, 5);
  too_long[0] = kBosId;
  CHECK_THROWS_AS(model.encode(too_long), std::invalid_argument);
}

TEST_CASE("decoder validates its inputs") {
  TransformerConfig c = tiny_cfg();
  Rng rng(2);
  TransformerModel model(c, rng);
  Tensor memory = model.encode({kBosId, 4, kEosId});
  const std::vector<bool> mem_pad = {false, false, false};
  CHECK_NOTHROW(model.decode_teacher_forced({kBosId, 5}, memory, mem_pad));
  CHECK_THROWS_AS(model.decode_teacher_forced({kBosId, 5}, memory, {false, false}),
                  std::invalid_argument);  // pad mask length mismatch
  CHECK_THROWS_AS(model.forward_nll({kBosId, 4, kEosId}, {kBosId}), std::invalid_argument);
}

TEST_CASE("soft embedding validates distributions and collapses one-hots") {
  TransformerConfig c = tiny_cfg();
  Rng rng(4);
  TransformerModel model(c, rng);
  const Tensor& table = model.param("tgt_embed");

  Tensor bad = Tensor::from({1, 12}, std::vector<double>(12, 0.5));
  CHECK_THROWS_AS(soft_embed(bad, table), std::invalid_argument);

  std::vector<double> onehot(12, 0.0);
  onehot[7] = 1.0;
  Tensor soft = soft_embed(Tensor::from({1, 12}, std::move(onehot)), table);
  Tensor hard = gather_rows(table, {7});
  for (int j = 0; j < c.d_model; ++j) {
    CHECK(soft.values()[j] == hard.values()[j]);  // bitwise, not approximate
  }
}

TEST_CASE("full model gradient passes finite differences") {
  TransformerConfig c = tiny_cfg();
  Rng rng(11);
  TransformerModel model(c, rng);
  const std::vector<int> src = {kBosId, 4, 8, kEosId};
  const std::vector<int> tgt = {kBosId, 5, 9, 6, kEosId};
  std::vector<std::pair<std::string, Tensor>> params = model.parameters();
  const auto rep = test_support::fd_check(
      params, [&]() { return model.forward_nll(src, tgt); }, 4, 21);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("training nll starts near uniform and dropout needs its generator") {
  TransformerConfig c = tiny_cfg();
  c.tgt_vocab = 16;
  Rng rng(9);
  TransformerModel model(c, rng);
  Tensor nll = model.forward_nll({kBosId, 4, kEosId}, {kBosId, 5, 6, kEosId});
  CHECK(std::abs(nll.value() - std::log(16.0)) < 0.5);

  TransformerConfig cd = tiny_cfg();
  cd.dropout = 0.3;
  Rng rng2(10);
  TransformerModel dropout_model(cd, rng2);
  CHECK_THROWS_AS(dropout_model.encode({kBosId, 4, kEosId}, /*train=*/true, nullptr),
                  std::invalid_argument);
  Rng droprng(3);
  CHECK_NOTHROW(dropout_model.encode({kBosId, 4, kEosId}, true, &droprng));
}

#include "nl2code/data.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "nl2code/errors.hpp"

namespace nl2code {

namespace {

using nlohmann::json;

std::string require_string(const json& record, const char* field, const std::string& where,
                           bool allow_empty) {
  if (!record.contains(field) || !record[field].is_string()) {
    throw ValidationError(where + ": field \"" + field + "\" missing or not a string");
  }
  std::string value = record[field].get<std::string>();
  if (!allow_empty && value.empty()) {
    throw ValidationError(where + ": field \"" + field + "\" is empty");
  }
  return value;
}

Example parse_annotated_record(const json& record, const std::string& where) {
  if (!record.is_object()) throw ValidationError(where + ": not an object");
  Example ex;
  ex.source = ExampleSource::annotated;
  ex.intent = require_string(record, "intent", where, /*allow_empty=*/false);
  ex.snippet = require_string(record, "snippet", where, /*allow_empty=*/false);
  if (!record.contains("rewritten_intent")) {
    throw ValidationError(where + ": field \"rewritten_intent\" missing (null is allowed)");
  }
  if (record["rewritten_intent"].is_string()) {
    ex.rewritten_intent = record["rewritten_intent"].get<std::string>();
  } else if (!record["rewritten_intent"].is_null()) {
    throw ValidationError(where + ": field \"rewritten_intent\" must be a string or null");
  }
  if (record.contains("question_id")) {
    if (!record["question_id"].is_number_integer()) {
      throw ValidationError(where + ": field \"question_id\" must be an integer");
    }
    ex.question_id = record["question_id"].get<long long>();
  }
  return ex;
}

}  // namespace

Corpus load_annotated(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open annotated file " + path);
  json root;
  try {
    in >> root;
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": not valid JSON: " + e.what());
  }
  if (!root.is_array()) throw ValidationError(path + ": top level must be an array");
  Corpus corpus;
  corpus.examples.reserve(root.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    corpus.examples.push_back(parse_annotated_record(root[i], path + ": record " + std::to_string(i)));
  }
  return corpus;
}

Corpus load_mined(const std::string& path, long long limit) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open mined file " + path);
  Corpus corpus;
  std::string line;
  long long lineno = 0;
  while (static_cast<long long>(corpus.examples.size()) < limit && std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ": line " + std::to_string(lineno);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where + ": not valid JSON: " + e.what());
    }
    if (!record.is_object()) throw ValidationError(where + ": not an object");
    Example ex;
    ex.source = ExampleSource::mined;
    ex.intent = require_string(record, "intent", where, /*allow_empty=*/false);
    ex.snippet = require_string(record, "snippet", where, /*allow_empty=*/false);
    if (record.contains("question_id") && record["question_id"].is_number_integer()) {
      ex.question_id = record["question_id"].get<long long>();
    }
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

const std::string& effective_intent(const Example& ex) {
  return ex.rewritten_intent ? *ex.rewritten_intent : ex.intent;
}

namespace {

// Hard truncation keeps the frame: the clipped sequence still ends in eos.
void truncate_framed(std::vector<int>& ids, int max_len, long long& truncated) {
  if (static_cast<int>(ids.size()) <= max_len) return;
  ids.resize(max_len);
  ids.back() = kEosId;
  ++truncated;
}

}  // namespace

std::vector<EncodedExample> encode_corpus(const Corpus& corpus, const Vocab& intent_vocab,
                                          const Vocab& snippet_vocab, int max_len,
                                          long long* truncated_count) {
  std::vector<EncodedExample> encoded;
  encoded.reserve(corpus.examples.size());
  long long truncated = 0;
  for (const Example& ex : corpus.examples) {
    EncodedExample e;
    e.src = intent_vocab.encode(effective_intent(ex), /*add_bos_eos=*/true);
    e.tgt = snippet_vocab.encode(ex.snippet, /*add_bos_eos=*/true);
    e.mined = ex.source == ExampleSource::mined;
    truncate_framed(e.src, max_len, truncated);
    truncate_framed(e.tgt, max_len, truncated);
    encoded.push_back(std::move(e));
  }
  if (truncated > 0) {
    std::cerr << "[data] truncated " << truncated << " over-length sequences to max_len "
              << max_len << "\n";
  }
  if (truncated_count != nullptr) *truncated_count = truncated;
  return encoded;
}

Batch assemble_batch(const std::vector<const EncodedExample*>& rows,
                     const std::vector<double>& weights) {
  Batch batch;
  std::size_t src_max = 0, tgt_max = 0;
  for (const EncodedExample* row : rows) {
    src_max = std::max(src_max, row->src.size());
    tgt_max = std::max(tgt_max, row->tgt.size());
  }
  for (const EncodedExample* row : rows) {
    std::vector<int> src = row->src;
    std::vector<int> tgt = row->tgt;
    src.resize(src_max, kPadId);
    tgt.resize(tgt_max, kPadId);
    std::vector<bool> src_pad(src_max), tgt_pad(tgt_max);
    for (std::size_t i = 0; i < src_max; ++i) src_pad[i] = i >= row->src.size();
    for (std::size_t i = 0; i < tgt_max; ++i) tgt_pad[i] = i >= row->tgt.size();
    batch.src.push_back(std::move(src));
    batch.tgt.push_back(std::move(tgt));
    batch.src_pad.push_back(std::move(src_pad));
    batch.tgt_pad.push_back(std::move(tgt_pad));
    batch.mined.push_back(row->mined);
  }
  batch.weights = weights;
  return batch;
}

std::vector<Batch> make_batches(const std::vector<EncodedExample>& examples, int batch_size,
                                std::uint64_t shuffle_seed) {
  if (batch_size < 1) throw ValidationError("make_batches: batch_size must be positive");
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(shuffle_seed);
  rng.shuffle(order);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<const EncodedExample*> rows;
    rows.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) rows.push_back(&examples[order[i]]);
    batches.push_back(assemble_batch(rows, std::vector<double>(end - start, 1.0)));
  }
  return batches;
}

std::vector<Batch> make_batches(const Corpus& corpus, const Vocab& intent_vocab,
                                const Vocab& snippet_vocab, int batch_size,
                                std::uint64_t shuffle_seed, int max_len,
                                long long* truncated_count) {
  return make_batches(encode_corpus(corpus, intent_vocab, snippet_vocab, max_len, truncated_count),
                      batch_size, shuffle_seed);
}

RegimeBatcher::RegimeBatcher(const RegimeConfig& cfg, std::vector<EncodedExample> annotated,
                             std::vector<EncodedExample> mined, int batch_size,
                             std::uint64_t data_seed)
    : cfg_(cfg),
      annotated_(std::move(annotated)),
      mined_(std::move(mined)),
      batch_size_(batch_size),
      rng_(data_seed) {
  if (batch_size_ < 1) throw ValidationError("regime batcher: batch_size must be positive");
  union_.reserve(annotated_.size() + mined_.size());
  for (const EncodedExample& e : annotated_) union_.push_back(&e);
  for (const EncodedExample& e : mined_) union_.push_back(&e);
}

std::size_t RegimeBatcher::draw(Stream& s, std::size_t pool_size) {
  if (s.cursor >= s.order.size()) {
    s.order.resize(pool_size);
    for (std::size_t i = 0; i < pool_size; ++i) s.order[i] = i;
    rng_.shuffle(s.order);
    s.cursor = 0;
  }
  return s.order[s.cursor++];
}

Batch RegimeBatcher::next(long long step) {
  std::vector<const EncodedExample*> rows;
  std::vector<double> weights;
  rows.reserve(batch_size_);
  weights.reserve(batch_size_);
  switch (cfg_.kind) {
    case RegimeKind::mix: {
      if (union_.empty()) throw ValidationError("regime mix: no training examples");
      for (int i = 0; i < batch_size_; ++i) {
        rows.push_back(union_[draw(union_stream_, union_.size())]);
        weights.push_back(1.0);
      }
      break;
    }
    case RegimeKind::sample: {
      if (annotated_.empty()) throw ValidationError("regime sample: annotated corpus is empty");
      if (mined_.empty()) throw ValidationError("regime sample: mined corpus is empty");
      const int annotated_rows = (batch_size_ + 1) / 2;
      for (int i = 0; i < annotated_rows; ++i) {
        rows.push_back(&annotated_[draw(annotated_stream_, annotated_.size())]);
        weights.push_back(1.0);
      }
      for (int i = annotated_rows; i < batch_size_; ++i) {
        rows.push_back(&mined_[draw(mined_stream_, mined_.size())]);
        weights.push_back(cfg_.alpha);
      }
      break;
    }
    case RegimeKind::finetune: {
      const bool pretraining = step <= cfg_.pretrain_steps;
      const std::vector<EncodedExample>& pool = pretraining ? mined_ : annotated_;
      Stream& stream = pretraining ? mined_stream_ : annotated_stream_;
      if (pool.empty()) {
        throw ValidationError(std::string("regime finetune: ") +
                              (pretraining ? "mined" : "annotated") +
                              " corpus is empty for the current phase");
      }
      for (int i = 0; i < batch_size_; ++i) {
        rows.push_back(&pool[draw(stream, pool.size())]);
        weights.push_back(1.0);
      }
      break;
    }
  }
  return assemble_batch(rows, weights);
}

}  // namespace nl2code

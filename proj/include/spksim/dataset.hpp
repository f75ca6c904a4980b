// SPDX-License-Identifier: Apache-2.0
#ifndef SPKSIM_DATASET_HPP
#define SPKSIM_DATASET_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "spksim/error.hpp"

namespace spksim {

inline constexpr double kMinScore = 0.0;
inline constexpr double kMaxScore = 100.0;

struct SpeakerEmbedding {
  std::string id;
  std::vector<double> vector;

  bool operator==(const SpeakerEmbedding&) const = default;
};

struct ListenerScore {
  std::string listener_id;
  double score = 0.0;

  bool operator==(const ListenerScore&) const = default;
};

/// One source/reference pair with the scores every listener gave it.
struct EvaluationExample {
  std::string example_id;
  std::string cycle_id;
  std::string system_id;
  std::string target_speaker_id;
  std::string source_embedding_id;
  std::string reference_embedding_id;
  std::vector<ListenerScore> scores;

  bool operator==(const EvaluationExample&) const = default;
};

/// Sub-utterance piece of an example. Pieces inherit the parent's scores.
struct PiecePair {
  SpeakerEmbedding source;
  SpeakerEmbedding reference;

  bool operator==(const PiecePair&) const = default;
};

/// Immutable-after-construction evaluation set. Insertion validates every
/// invariant, so a constructed dataset never holds dangling references,
/// mixed dimensions, non-finite vectors or out-of-range scores.
class EvaluationDataset {
 public:
  void add_embedding(SpeakerEmbedding embedding) {
    check_vector(embedding.id, embedding.vector);
    if (embedding_index_.count(embedding.id) != 0) {
      throw Error(ErrorCode::duplicate_id, "duplicate embedding id '" + embedding.id + "'");
    }
    embedding_index_.emplace(embedding.id, embeddings_.size());
    embeddings_.push_back(std::move(embedding));
  }

  void add_example(EvaluationExample example) {
    if (example.example_id.empty()) {
      throw Error(ErrorCode::schema, "example_id must be non-empty");
    }
    if (example_index_.count(example.example_id) != 0) {
      throw Error(ErrorCode::duplicate_id, "duplicate example id '" + example.example_id + "'");
    }
    if (example.scores.empty()) {
      throw Error(ErrorCode::schema, "example '" + example.example_id + "' has no scores");
    }
    std::set<std::string_view> listeners;
    for (const auto& s : example.scores) {
      if (!std::isfinite(s.score) || s.score < kMinScore || s.score > kMaxScore) {
        std::ostringstream msg;
        msg << "score out of range (" << s.score << ") for listener '" << s.listener_id
            << "' in example '" << example.example_id << "'";
        throw Error(ErrorCode::score_out_of_range, msg.str());
      }
      if (!listeners.insert(s.listener_id).second) {
        throw Error(ErrorCode::duplicate_id, "listener '" + s.listener_id +
                                                 "' scored example '" + example.example_id +
                                                 "' twice");
      }
    }
    for (const auto* ref : {&example.source_embedding_id, &example.reference_embedding_id}) {
      if (embedding_index_.count(*ref) == 0) {
        throw Error(ErrorCode::dangling_reference, "example '" + example.example_id +
                                                       "' references unknown embedding '" +
                                                       *ref + "'");
      }
    }
    example_index_.emplace(example.example_id, examples_.size());
    examples_.push_back(std::move(example));
  }

  void set_pieces(const std::string& example_id, std::vector<PiecePair> pieces) {
    if (example_index_.count(example_id) == 0) {
      throw Error(ErrorCode::dangling_reference, "pieces reference unknown example '" + example_id + "'");
    }
    if (pieces.empty()) {
      throw Error(ErrorCode::schema, "piece list for example '" + example_id + "' is empty");
    }
    if (pieces_.count(example_id) != 0) {
      throw Error(ErrorCode::state, "example '" + example_id + "' already has pieces");
    }
    for (const auto& p : pieces) {
      check_vector(p.source.id, p.source.vector);
      check_vector(p.reference.id, p.reference.vector);
    }
    pieces_.emplace(example_id, std::move(pieces));
  }

  const std::vector<SpeakerEmbedding>& embeddings() const { return embeddings_; }
  const std::vector<EvaluationExample>& examples() const { return examples_; }
  const std::map<std::string, std::vector<PiecePair>>& pieces() const { return pieces_; }

  bool has_pieces() const { return !pieces_.empty(); }

  /// Embedding dimension, or 0 for a dataset without embeddings.
  std::size_t dim() const { return dim_; }

  bool contains_example(std::string_view id) const {
    return example_index_.count(std::string(id)) != 0;
  }

  const SpeakerEmbedding& embedding(std::string_view id) const {
    auto it = embedding_index_.find(std::string(id));
    if (it == embedding_index_.end()) {
      throw Error(ErrorCode::unknown_id, "unknown embedding id '" + std::string(id) + "'");
    }
    return embeddings_[it->second];
  }

  const EvaluationExample& example(std::string_view id) const {
    auto it = example_index_.find(std::string(id));
    if (it == example_index_.end()) {
      throw Error(ErrorCode::unknown_id, "unknown example id '" + std::string(id) + "'");
    }
    return examples_[it->second];
  }

  const std::vector<PiecePair>& pieces_of(std::string_view example_id) const {
    auto it = pieces_.find(std::string(example_id));
    if (it == pieces_.end()) {
      throw Error(ErrorCode::unknown_id, "example '" + std::string(example_id) + "' has no pieces");
    }
    return it->second;
  }

  std::vector<std::string> example_ids() const {
    std::vector<std::string> ids;
    ids.reserve(examples_.size());
    for (const auto& e : examples_) ids.push_back(e.example_id);
    return ids;
  }

 private:
  void check_vector(const std::string& id, const std::vector<double>& v) {
    if (id.empty()) throw Error(ErrorCode::schema, "embedding id must be non-empty");
    if (v.size() < 2) {
      throw Error(ErrorCode::dimension_mismatch,
                  "embedding '" + id + "' has dimension " + std::to_string(v.size()) +
                      " (need at least 2)");
    }
    if (dim_ != 0 && v.size() != dim_) {
      throw Error(ErrorCode::dimension_mismatch, "embedding '" + id + "' has dimension " +
                                                     std::to_string(v.size()) + ", expected " +
                                                     std::to_string(dim_));
    }
    for (double x : v) {
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::non_finite, "embedding '" + id + "' has a non-finite component");
      }
    }
    dim_ = v.size();
  }

  std::vector<SpeakerEmbedding> embeddings_;
  std::unordered_map<std::string, std::size_t> embedding_index_;
  std::vector<EvaluationExample> examples_;
  std::unordered_map<std::string, std::size_t> example_index_;
  std::map<std::string, std::vector<PiecePair>> pieces_;
  std::size_t dim_ = 0;
};

// ---------------------------------------------------------------------------
// JSON Lines I/O
// ---------------------------------------------------------------------------

namespace detail {

using ordered_json = nlohmann::ordered_json;

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

inline bool is_blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::schema, std::string("missing field '") + key + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_string()) throw Error(ErrorCode::schema, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline double require_number(const nlohmann::json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_number()) throw Error(ErrorCode::schema, std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

inline std::vector<double> require_vector(const nlohmann::json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_array()) throw Error(ErrorCode::schema, std::string("field '") + key + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) throw Error(ErrorCode::schema, std::string("field '") + key + "' must contain numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

[[noreturn]] inline void fail_at(const std::string& path, std::size_t line, const Error& e) {
  rethrow_with_context(e, path + ":" + std::to_string(line));
}

inline nlohmann::json parse_line(const std::string& path, std::size_t line_no, const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& pe) {
    fail_at(path, line_no, Error(ErrorCode::parse, std::string("malformed record: ") + pe.what()));
  }
  if (!j.is_object()) fail_at(path, line_no, Error(ErrorCode::parse, "malformed record: expected an object"));
  return j;
}

struct PendingPiece {
  SpeakerEmbedding embedding;
  std::string parent;
  bool is_source = true;
  std::size_t index = 0;
  std::size_t line = 0;
};

inline ordered_json embedding_record(const SpeakerEmbedding& e) {
  ordered_json j;
  j["id"] = e.id;
  j["vector"] = e.vector;
  return j;
}

}  // namespace detail

inline nlohmann::ordered_json example_to_json(const EvaluationExample& e) {
  nlohmann::ordered_json j;
  j["example_id"] = e.example_id;
  j["cycle_id"] = e.cycle_id;
  j["system_id"] = e.system_id;
  j["target_speaker_id"] = e.target_speaker_id;
  j["source_embedding_id"] = e.source_embedding_id;
  j["reference_embedding_id"] = e.reference_embedding_id;
  auto scores = nlohmann::ordered_json::array();
  for (const auto& s : e.scores) {
    nlohmann::ordered_json sj;
    sj["listener_id"] = s.listener_id;
    sj["score"] = s.score;
    scores.push_back(std::move(sj));
  }
  j["scores"] = std::move(scores);
  return j;
}

/// Parses the embeddings JSONL file on its own (no evaluation file).
/// Piece records are rejected here since they need a parent example.
inline std::vector<SpeakerEmbedding> load_embeddings(const std::string& path) {
  std::vector<SpeakerEmbedding> out;
  EvaluationDataset scratch;
  const auto lines = detail::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (detail::is_blank(lines[i])) continue;
    const auto j = detail::parse_line(path, i + 1, lines[i]);
    try {
      if (j.contains("piece_of")) throw Error(ErrorCode::schema, "piece embedding without evaluations file");
      SpeakerEmbedding e{detail::require_string(j, "id"), detail::require_vector(j, "vector")};
      scratch.add_embedding(e);
      out.push_back(std::move(e));
    } catch (const Error& e) {
      detail::fail_at(path, i + 1, e);
    }
  }
  return out;
}

/// Loads a dataset from the evaluations and embeddings JSONL files.
/// Errors carry `path:line:` prefixes. Record order is preserved.
inline EvaluationDataset load_dataset(const std::string& evaluations_path,
                                      const std::string& embeddings_path) {
  EvaluationDataset ds;
  std::vector<detail::PendingPiece> pending;

  const auto emb_lines = detail::read_lines(embeddings_path);
  for (std::size_t i = 0; i < emb_lines.size(); ++i) {
    if (detail::is_blank(emb_lines[i])) continue;
    const auto j = detail::parse_line(embeddings_path, i + 1, emb_lines[i]);
    try {
      SpeakerEmbedding e{detail::require_string(j, "id"), detail::require_vector(j, "vector")};
      if (j.contains("piece_of")) {
        detail::PendingPiece p;
        p.parent = detail::require_string(j, "piece_of");
        const auto side = detail::require_string(j, "side");
        if (side != "source" && side != "reference") {
          throw Error(ErrorCode::schema, "side must be \"source\" or \"reference\", got \"" + side + "\"");
        }
        p.is_source = side == "source";
        const auto& idx = detail::require(j, "index");
        if (!idx.is_number_integer() || idx.get<long long>() < 0) {
          throw Error(ErrorCode::schema, "piece index must be a non-negative integer");
        }
        p.index = idx.get<std::size_t>();
        p.line = i + 1;
        if (ds.dim() != 0 && e.vector.size() != ds.dim()) {
          throw Error(ErrorCode::dimension_mismatch,
                      "embedding '" + e.id + "' has dimension " + std::to_string(e.vector.size()) +
                          ", expected " + std::to_string(ds.dim()));
        }
        p.embedding = std::move(e);
        pending.push_back(std::move(p));
      } else {
        ds.add_embedding(std::move(e));
      }
    } catch (const Error& e) {
      detail::fail_at(embeddings_path, i + 1, e);
    }
  }

  const auto eval_lines = detail::read_lines(evaluations_path);
  for (std::size_t i = 0; i < eval_lines.size(); ++i) {
    if (detail::is_blank(eval_lines[i])) continue;
    const auto j = detail::parse_line(evaluations_path, i + 1, eval_lines[i]);
    try {
      EvaluationExample ex;
      ex.example_id = detail::require_string(j, "example_id");
      ex.cycle_id = detail::require_string(j, "cycle_id");
      ex.system_id = detail::require_string(j, "system_id");
      ex.target_speaker_id = detail::require_string(j, "target_speaker_id");
      ex.source_embedding_id = detail::require_string(j, "source_embedding_id");
      ex.reference_embedding_id = detail::require_string(j, "reference_embedding_id");
      const auto& scores = detail::require(j, "scores");
      if (!scores.is_array()) throw Error(ErrorCode::schema, "field 'scores' must be an array");
      for (const auto& s : scores) {
        if (!s.is_object()) throw Error(ErrorCode::schema, "score entries must be objects");
        ex.scores.push_back({detail::require_string(s, "listener_id"), detail::require_number(s, "score")});
      }
      ds.add_example(std::move(ex));
    } catch (const Error& e) {
      detail::fail_at(evaluations_path, i + 1, e);
    }
  }

  // Group pieces by parent, then check every parent has indices 0..n-1 on both sides.
  std::map<std::string, std::map<std::size_t, std::pair<const detail::PendingPiece*, const detail::PendingPiece*>>> grouped;
  for (const auto& p : pending) {
    if (!ds.contains_example(p.parent)) {
      detail::fail_at(embeddings_path, p.line,
                      Error(ErrorCode::dangling_reference, "piece_of references unknown example '" + p.parent + "'"));
    }
    auto& slot = grouped[p.parent][p.index];
    auto& side = p.is_source ? slot.first : slot.second;
    if (side != nullptr) {
      detail::fail_at(embeddings_path, p.line,
                      Error(ErrorCode::duplicate_id, "duplicate piece " + std::to_string(p.index) +
                                                         " for example '" + p.parent + "'"));
    }
    side = &p;
  }
  for (const auto& ex : ds.examples()) {
    auto it = grouped.find(ex.example_id);
    if (it == grouped.end()) continue;
    std::vector<PiecePair> pairs;
    std::size_t expected = 0;
    for (const auto& [index, slot] : it->second) {
      const auto* any = slot.first != nullptr ? slot.first : slot.second;
      if (index != expected || slot.first == nullptr || slot.second == nullptr) {
        detail::fail_at(embeddings_path, any->line,
                        Error(ErrorCode::schema, "incomplete piece list for example '" + ex.example_id + "'"));
      }
      pairs.push_back({slot.first->embedding, slot.second->embedding});
      ++expected;
    }
    try {
      ds.set_pieces(ex.example_id, std::move(pairs));
    } catch (const Error& e) {
      detail::fail_at(embeddings_path, it->second.begin()->second.first->line, e);
    }
  }
  return ds;
}

/// Serializes the evaluations file. Doubles are written in shortest
/// round-trip form, so load(save(d)) reproduces every value exactly.
inline std::string evaluations_jsonl(const EvaluationDataset& ds) {
  std::string out;
  for (const auto& e : ds.examples()) {
    out += example_to_json(e).dump();
    out += '\n';
  }
  return out;
}

inline std::string embeddings_jsonl(const EvaluationDataset& ds) {
  std::string out;
  for (const auto& e : ds.embeddings()) {
    out += detail::embedding_record(e).dump();
    out += '\n';
  }
  for (const auto& ex : ds.examples()) {
    auto it = ds.pieces().find(ex.example_id);
    if (it == ds.pieces().end()) continue;
    for (std::size_t i = 0; i < it->second.size(); ++i) {
      for (bool source : {true, false}) {
        const auto& emb = source ? it->second[i].source : it->second[i].reference;
        auto j = detail::embedding_record(emb);
        j["piece_of"] = ex.example_id;
        j["side"] = source ? "source" : "reference";
        j["index"] = i;
        out += j.dump();
        out += '\n';
      }
    }
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path + "'");
  out << contents;
  if (!out) throw Error(ErrorCode::io, "write failed for '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_dataset(const EvaluationDataset& ds, const std::string& evaluations_path,
                         const std::string& embeddings_path) {
  write_text_file(evaluations_path, evaluations_jsonl(ds));
  write_text_file(embeddings_path, embeddings_jsonl(ds));
}

/// FNV-1a 64-bit over the given byte strings, hex encoded.
inline std::string fingerprint(std::initializer_list<std::string_view> parts) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto part : parts) {
    for (unsigned char c : part) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
    h >>= 4;
  }
  return out;
}

inline std::string dataset_fingerprint(const EvaluationDataset& ds) {
  const auto ev = evaluations_jsonl(ds);
  const auto em = embeddings_jsonl(ds);
  return fingerprint({ev, em});
}

}  // namespace spksim

#endif  // SPKSIM_DATASET_HPP

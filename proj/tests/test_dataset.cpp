// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <string>

#include "spksim/dataset.hpp"
#include "spksim/synthetic.hpp"
#include "test_util.hpp"

using namespace spksim;
using spksim::testing::error_code_of;
using spksim::testing::error_message_of;
using spksim::testing::TempDir;
using spksim::testing::two_example_fixture;

namespace {

const char* kEvalTwo =
    R"({"example_id":"a","cycle_id":"c0","system_id":"s0","target_speaker_id":"spk0","source_embedding_id":"a-src","reference_embedding_id":"a-ref","scores":[{"listener_id":"L1","score":80},{"listener_id":"L2","score":90}]}
{"example_id":"b","cycle_id":"c0","system_id":"s1","target_speaker_id":"spk1","source_embedding_id":"b-src","reference_embedding_id":"b-ref","scores":[{"listener_id":"L1","score":20}]}
)";

const char* kEmbFour = R"({"id":"a-src","vector":[1,0,0]}
{"id":"a-ref","vector":[0.9,0.1,0]}
{"id":"b-src","vector":[0,1,0]}
{"id":"b-ref","vector":[0,0.2,0.8]}
)";

}  // namespace

TEST(Dataset, LoadsTwoExampleFixture) {
  TempDir dir("ds");
  write_text_file(dir.file("ev.jsonl"), kEvalTwo);
  write_text_file(dir.file("em.jsonl"), kEmbFour);
  const auto ds = load_dataset(dir.file("ev.jsonl"), dir.file("em.jsonl"));
  EXPECT_EQ(ds.examples().size(), 2u);
  EXPECT_EQ(ds.embeddings().size(), 4u);
  EXPECT_EQ(ds.dim(), 3u);
  EXPECT_EQ(ds.examples()[0].example_id, "a");
  EXPECT_EQ(ds.examples()[1].scores.size(), 1u);
  EXPECT_FALSE(ds.has_pieces());
}

TEST(Dataset, ScoreOutOfRangeReportsLine) {
  TempDir dir("ds");
  std::string ev = kEvalTwo;
  ev.replace(ev.find("\"score\":20"), 10, "\"score\":101");
  write_text_file(dir.file("ev.jsonl"), ev);
  write_text_file(dir.file("em.jsonl"), kEmbFour);
  const auto msg = error_message_of([&] { load_dataset(dir.file("ev.jsonl"), dir.file("em.jsonl")); });
  EXPECT_NE(msg.find("score out of range"), std::string::npos) << msg;
  EXPECT_NE(msg.find("ev.jsonl:2"), std::string::npos) << msg;
  EXPECT_EQ(error_code_of([&] { load_dataset(dir.file("ev.jsonl"), dir.file("em.jsonl")); }),
            ErrorCode::score_out_of_range);
}

TEST(Dataset, MixedDimensionsRejected) {
  TempDir dir("ds");
  std::string em = kEmbFour;
  em.replace(em.find("[0,0.2,0.8]"), 11, "[0,0.2,0.8,1]");
  write_text_file(dir.file("ev.jsonl"), kEvalTwo);
  write_text_file(dir.file("em.jsonl"), em);
  EXPECT_EQ(error_code_of([&] { load_dataset(dir.file("ev.jsonl"), dir.file("em.jsonl")); }),
            ErrorCode::dimension_mismatch);
  const auto msg = error_message_of([&] { load_dataset(dir.file("ev.jsonl"), dir.file("em.jsonl")); });
  EXPECT_NE(msg.find("em.jsonl:4"), std::string::npos) << msg;
}

TEST(Dataset, MalformedRecordsReportLine) {
  TempDir dir("ds");
  write_text_file(dir.file("em.jsonl"), kEmbFour);
  write_text_file(dir.file("ev.jsonl"), std::string(kEvalTwo) + "{not json\n");
  auto msg = error_message_of([&] { load_dataset(dir.file("ev.jsonl"), dir.file("em.jsonl")); });
  EXPECT_NE(msg.find("ev.jsonl:3"), std::string::npos) << msg;

  write_text_file(dir.file("ev.jsonl"), R"({"example_id":"a"})" "\n");
  EXPECT_EQ(error_code_of([&] { load_dataset(dir.file("ev.jsonl"), dir.file("em.jsonl")); }), ErrorCode::schema);
}

TEST(Dataset, DanglingReferenceRejected) {
  EvaluationDataset ds;
  ds.add_embedding({"x", {1.0, 2.0}});
  EXPECT_EQ(error_code_of([&] { ds.add_example({"e", "c", "s", "t", "x", "missing", {{"L", 50.0}}}); }),
            ErrorCode::dangling_reference);
}

TEST(Dataset, InsertionInvariants) {
  EvaluationDataset ds;
  EXPECT_EQ(error_code_of([&] { ds.add_embedding({"x", {1.0}}); }), ErrorCode::dimension_mismatch);
  EXPECT_EQ(error_code_of([&] { ds.add_embedding({"x", {1.0, std::nan("")}}); }), ErrorCode::non_finite);
  ds.add_embedding({"x", {1.0, 2.0}});
  EXPECT_EQ(error_code_of([&] { ds.add_embedding({"x", {1.0, 2.0}}); }), ErrorCode::duplicate_id);
  EXPECT_EQ(error_code_of([&] { ds.add_example({"e", "c", "s", "t", "x", "x", {}}); }), ErrorCode::schema);
  EXPECT_EQ(error_code_of([&] { ds.add_example({"e", "c", "s", "t", "x", "x", {{"L", 50.0}, {"L", 60.0}}}); }),
            ErrorCode::duplicate_id);
  EXPECT_EQ(error_code_of([&] { ds.add_example({"e", "c", "s", "t", "x", "x", {{"L", -0.5}}}); }),
            ErrorCode::score_out_of_range);
  ds.add_example({"e", "c", "s", "t", "x", "x", {{"L", 0.0}, {"M", 100.0}}});
  EXPECT_EQ(error_code_of([&] { ds.set_pieces("e", {}); }), ErrorCode::schema);
  EXPECT_EQ(error_code_of([&] { ds.set_pieces("nope", {{{"p", {1, 1}}, {"q", {1, 1}}}}); }),
            ErrorCode::dangling_reference);
  EXPECT_EQ(error_code_of([&] { ds.set_pieces("e", {{{"p", {1, 1, 1}}, {"q", {1, 1, 1}}}}); }),
            ErrorCode::dimension_mismatch);
}

TEST(Dataset, RoundTripIsLossless) {
  SyntheticWorldConfig cfg;
  cfg.n_examples = 40;
  cfg.n_listeners = 7;
  auto world = generate_synthetic(cfg);
  auto ds = split_into_pieces(world.dataset, 0.02, 2, 5);
  TempDir dir("rt");
  save_dataset(ds, dir.file("ev.jsonl"), dir.file("em.jsonl"));
  const auto back = load_dataset(dir.file("ev.jsonl"), dir.file("em.jsonl"));
  EXPECT_EQ(back.examples(), ds.examples());
  EXPECT_EQ(back.embeddings(), ds.embeddings());
  EXPECT_EQ(back.pieces(), ds.pieces());
  EXPECT_EQ(evaluations_jsonl(back), evaluations_jsonl(ds));
  EXPECT_EQ(embeddings_jsonl(back), embeddings_jsonl(ds));
  EXPECT_EQ(dataset_fingerprint(back), dataset_fingerprint(ds));
}

TEST(Dataset, ExtremeDoublesSurviveRoundTrip) {
  EvaluationDataset ds;
  ds.add_embedding({"x", {0.1 + 0.2, 1e-300, -4.9406564584124654e-324, 1.7976931348623157e308}});
  ds.add_embedding({"y", {1.0 / 3.0, -2.0 / 7.0, 0.0, -0.0}});
  ds.add_example({"e", "c", "s", "t", "x", "y", {{"L", 100.0 / 3.0}, {"M", 99.99999999999999}}});
  TempDir dir("rt2");
  save_dataset(ds, dir.file("ev.jsonl"), dir.file("em.jsonl"));
  const auto back = load_dataset(dir.file("ev.jsonl"), dir.file("em.jsonl"));
  EXPECT_EQ(back.embeddings(), ds.embeddings());
  EXPECT_EQ(back.examples(), ds.examples());
}

TEST(Dataset, PieceRecordsNeedCompleteLists) {
  TempDir dir("pc");
  write_text_file(dir.file("ev.jsonl"), kEvalTwo);
  std::string em = kEmbFour;
  em += R"({"id":"a#0s","vector":[1,0,0],"piece_of":"a","side":"source","index":0})" "\n";
  write_text_file(dir.file("em.jsonl"), em);
  EXPECT_EQ(error_code_of([&] { load_dataset(dir.file("ev.jsonl"), dir.file("em.jsonl")); }), ErrorCode::schema);

  em += R"({"id":"a#0r","vector":[1,0,0],"piece_of":"a","side":"reference","index":0})" "\n";
  write_text_file(dir.file("em.jsonl"), em);
  const auto ds = load_dataset(dir.file("ev.jsonl"), dir.file("em.jsonl"));
  ASSERT_TRUE(ds.has_pieces());
  EXPECT_EQ(ds.pieces_of("a").size(), 1u);

  em += R"({"id":"z#0r","vector":[1,0,0],"piece_of":"zzz","side":"reference","index":0})" "\n";
  write_text_file(dir.file("em.jsonl"), em);
  EXPECT_EQ(error_code_of([&] { load_dataset(dir.file("ev.jsonl"), dir.file("em.jsonl")); }),
            ErrorCode::dangling_reference);
}

TEST(Dataset, LoadEmbeddingsAlone) {
  TempDir dir("le");
  write_text_file(dir.file("em.jsonl"), kEmbFour);
  const auto embs = load_embeddings(dir.file("em.jsonl"));
  ASSERT_EQ(embs.size(), 4u);
  EXPECT_EQ(embs[3].id, "b-ref");
  EXPECT_EQ(embs[3].vector, (std::vector<double>{0.0, 0.2, 0.8}));
}

TEST(Dataset, MissingFileIsIoError) {
  EXPECT_EQ(error_code_of([] { load_dataset("/nonexistent/ev.jsonl", "/nonexistent/em.jsonl"); }), ErrorCode::io);
}

TEST(Dataset, FingerprintDependsOnContent) {
  auto a = two_example_fixture();
  auto b = two_example_fixture();
  EXPECT_EQ(dataset_fingerprint(a), dataset_fingerprint(b));
  b.add_embedding({"extra", {0.0, 0.0, 1.0}});
  EXPECT_NE(dataset_fingerprint(a), dataset_fingerprint(b));
  EXPECT_EQ(fingerprint({"ab", "c"}).size(), 16u);
  EXPECT_NE(fingerprint({"ab", "c"}), fingerprint({"a", "bc"}));
}

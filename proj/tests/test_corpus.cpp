#include <gtest/gtest.h>

#include "refjudge/corpus.hpp"
#include "refjudge/errors.hpp"
#include "refjudge/jsonl.hpp"
#include "support.hpp"

namespace refjudge {
namespace {

using test::TempDir;

std::string rec(const std::string& id, const std::string& label = "A", const std::string& ds = "Nat") {
  return R"({"id":")" + id + R"(","dataset":")" + ds +
         R"(","instruction":"Do it.","output_a":"one","output_b":"two","human_label":")" + label + R"("})";
}

TEST(Corpus, ParsesRecordsInOrder) {
  const std::vector<std::string> lines{rec("x1"), rec("x2", "B")};
  const auto c = parse_corpus(lines, Dataset::Custom);
  ASSERT_EQ(c.instances.size(), 2u);
  EXPECT_EQ(c.instances[0].instruction.id, "x1");
  EXPECT_EQ(c.instances[1].human_label, Label::B);
  EXPECT_EQ(c.instances[0].instruction.source_dataset, Dataset::Nat);
  EXPECT_TRUE(c.diagnostics.empty());
}

TEST(Corpus, TieLabelsAreSkippedAndCounted) {
  const std::vector<std::string> lines{rec("x1"), rec("x2", "tie"), rec("x3", "TIE")};
  const auto c = parse_corpus(lines, Dataset::Custom);
  EXPECT_EQ(c.instances.size(), 1u);
  EXPECT_EQ(c.manifest.skipped_ties, 2u);
  ASSERT_EQ(c.diagnostics.size(), 2u);
  EXPECT_EQ(c.diagnostics[0].kind, Diagnostic::Kind::TieLabel);
}

TEST(Corpus, MalformedLineReportsLineNumber) {
  const std::vector<std::string> lines{rec("x1"), "{not json"};
  try {
    parse_corpus(lines, Dataset::Custom);
    FAIL() << "expected MalformedRecord";
  } catch (const MalformedRecord& e) {
    EXPECT_EQ(e.line_no(), 2u);
  }
}

TEST(Corpus, RejectsBadLabelAndMissingField) {
  EXPECT_THROW(parse_corpus(std::vector<std::string>{rec("x1", "C")}, Dataset::Custom), MalformedRecord);
  EXPECT_THROW(parse_corpus(std::vector<std::string>{R"({"id":"x","dataset":"Nat","instruction":"i","output_a":"a","human_label":"A"})"},
                            Dataset::Custom),
               MalformedRecord);
  EXPECT_THROW(parse_corpus(std::vector<std::string>{rec("x1", "A", "Nope")}, Dataset::Custom), MalformedRecord);
}

TEST(Corpus, DuplicateIdThrows) {
  const std::vector<std::string> lines{rec("x1"), rec("x1")};
  EXPECT_THROW(parse_corpus(lines, Dataset::Custom), DuplicateId);
}

TEST(Corpus, CountMismatchIsAWarning) {
  const std::vector<std::string> lines{rec("x1")};
  const auto c = parse_corpus(lines, Dataset::Nat);
  ASSERT_EQ(c.diagnostics.size(), 1u);
  EXPECT_EQ(c.diagnostics[0].kind, Diagnostic::Kind::CountMismatch);
  EXPECT_EQ(c.manifest.expected_count, std::optional<std::size_t>(100));
}

TEST(Corpus, ExpectedCountsSumToNamedTotal) {
  std::size_t total = 0;
  for (auto d : {Dataset::Nat, Dataset::Adv, Dataset::MT, Dataset::Ins, Dataset::HREF}) total += *expected_count(d);
  EXPECT_EQ(total, kNamedCorpusTotal);
  EXPECT_FALSE(expected_count(Dataset::Custom).has_value());
}

TEST(Corpus, MultiTurnInstructionIsFlattened) {
  const std::vector<std::string> lines{
      R"({"id":"m","dataset":"MT","instruction":["first","second"],"output_a":"a","output_b":"b","human_label":"B"})"};
  const auto c = parse_corpus(lines, Dataset::Custom);
  EXPECT_EQ(c.instances[0].instruction.text, "first\n---TURN---\nsecond");
}

TEST(Corpus, SaveLoadRoundTripIsByteStable) {
  TempDir dir;
  const std::vector<std::string> lines{
      rec("x1"), R"({"id":"x2","dataset":"Adv","instruction":"ü ünicode","output_a":"a","output_b":"b","human_label":"B","meta":{"k":1}})"};
  const auto c = parse_corpus(lines, Dataset::Custom);
  save_corpus(dir / "c.jsonl", c.instances);
  const auto first = jsonl::read_text(dir / "c.jsonl");
  const auto again = load_corpus(dir / "c.jsonl", Dataset::Custom);
  save_corpus(dir / "d.jsonl", again.instances);
  EXPECT_EQ(first, jsonl::read_text(dir / "d.jsonl"));
  EXPECT_EQ(again.instances[1].meta["k"], 1);
  EXPECT_EQ(again.instances[1].instruction.text, "ü ünicode");
}

TEST(Corpus, MissingFileIsIoError) { EXPECT_THROW(load_corpus("/nonexistent/x.jsonl", Dataset::Custom), IoError); }

TEST(Corpus, AttachReferencesPairsAndReportsUnpaired) {
  const std::vector<std::string> lines{rec("x1"), rec("x2")};
  const auto c = parse_corpus(lines, Dataset::Custom);
  std::vector<ReferenceSet> refs{{"x2", {{"ref", "gen"}}}};
  const auto r = attach_references(c.instances, refs);
  ASSERT_EQ(r.paired.size(), 1u);
  EXPECT_EQ(r.paired[0].instance->instruction.id, "x2");
  ASSERT_EQ(r.unpaired.size(), 1u);
  EXPECT_EQ(r.unpaired[0]->instruction.id, "x1");
}

TEST(Corpus, AttachRejectsDanglingAndDuplicateSets) {
  const std::vector<std::string> lines{rec("x1")};
  const auto c = parse_corpus(lines, Dataset::Custom);
  std::vector<ReferenceSet> dangling{{"zzz", {{"ref", "gen"}}}};
  EXPECT_THROW(attach_references(c.instances, dangling), DanglingReference);
  std::vector<ReferenceSet> dup{{"x1", {{"r", "g"}}}, {"x1", {{"r", "g"}}}};
  EXPECT_THROW(attach_references(c.instances, dup), DuplicateId);
}

TEST(Corpus, ReferencesRoundTrip) {
  TempDir dir;
  std::vector<ReferenceSet> refs{{"a", {{"r1", "g1"}, {"r2", "g2"}}}, {"b", {{"only", ""}}}};
  save_references(dir / "r.jsonl", refs);
  const auto back = load_references(dir / "r.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].references[1].text, "r2");
  EXPECT_EQ(back[0].references[1].generator_model, "g2");
  EXPECT_EQ(back[1].instruction_id, "b");
}

TEST(Corpus, InstructionsRoundTrip) {
  TempDir dir;
  std::vector<Instruction> in{{"i1", "one", Dataset::Custom}, {"i2", "two", Dataset::HREF}};
  save_instructions(dir / "i.jsonl", in);
  const auto back = load_instructions(dir / "i.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].source_dataset, Dataset::HREF);
  EXPECT_EQ(back[0].text, "one");
}

}  // namespace
}  // namespace refjudge

#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>

#include <unistd.h>

#include "refjudge/backend.hpp"
#include "refjudge/jsonl.hpp"
#include "refjudge/corpus.hpp"
#include "refjudge/errors.hpp"
#include "refjudge/factory.hpp"
#include "refjudge/protocol.hpp"

namespace refjudge::test {

inline std::filesystem::path fixtures() { return REFJUDGE_TEST_FIXTURES; }

inline const TemplateStore& templates() {
  static const TemplateStore store(REFJUDGE_PROTOCOL_DIR_FOR_TESTS);
  return store;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("refjudge-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Backend driven by a callback; counts calls.
class FnBackend final : public ChatBackend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit FnBackend(Fn fn) : fn_(std::move(fn)) {}

  ChatResponse complete(const ChatRequest& req) override {
    ++calls_;
    ChatResponse resp;
    for (int i = 0; i < req.n; ++i) resp.choices.push_back(fn_(req));
    return resp;
  }
  std::uint64_t calls() const { return calls_.load(); }

 private:
  Fn fn_;
  std::atomic<std::uint64_t> calls_{0};
};

inline PreferenceInstance make_instance(std::string id, std::string a, std::string b, Label label,
                                        Dataset ds = Dataset::Custom) {
  PreferenceInstance inst;
  inst.instruction = {std::move(id), "Say something useful.", ds};
  inst.output_a.text = std::move(a);
  inst.output_b.text = std::move(b);
  inst.human_label = label;
  return inst;
}

// True when text x appears before text y in the prompt, i.e. x was presented
// as the first candidate. Both texts must occur exactly once.
inline bool shown_before(const std::string& prompt, const std::string& x, const std::string& y) {
  const auto px = prompt.find(x);
  const auto py = prompt.find(y);
  return px != std::string::npos && py != std::string::npos && px < py;
}

// Renders a protocol with placeholder values for every slot, in the same
// layout as the files under fixtures/rendered.
inline std::string sentinel_render(ProtocolId id) {
  static const std::vector<Reference> single{{"<<REFERENCE>>", ""}};
  static const std::vector<Reference> multi{{"<<REFERENCE_1>>", ""}, {"<<REFERENCE_2>>", ""}, {"<<REFERENCE_3>>", ""}};
  const auto& t = traits(id);
  RenderInputs in;
  in.instruction = "<<INSTRUCTION>>";
  if (t.kind == ProtocolKind::Pointwise) {
    in.first = "<<OUTPUT>>";
  } else {
    in.first = "<<OUTPUT_1>>";
    in.second = "<<OUTPUT_2>>";
  }
  if (t.needs_reference == ReferenceNeed::Single) in.references = single;
  if (t.needs_reference == ReferenceNeed::Multi) in.references = multi;
  in.stage.self_reference = "<<REFERENCE>>";
  in.stage.questions = "<<QUESTIONS>>";
  in.stage.analyses = "<<PER OUTPUT ANALYSES>>";
  const auto r = render(templates(), id, in);
  return "[system]\n" + r.system.value_or("") + "\n[user]\n" + r.user + "\n";
}

inline std::string sentinel_render(PreliminaryPrompt p) {
  const auto r = render_preliminary(templates(), p, "<<INSTRUCTION>>", "<<OUTPUT>>");
  return "[system]\n" + r.system.value_or("") + "\n[user]\n" + r.user + "\n";
}

inline std::string golden(std::string_view name) {
  return jsonl::read_text(fixtures() / "rendered" / (std::string(name) + ".txt"));
}

// Slot tokens the renderer knows about, in template spelling.
inline bool has_slot_token(const std::string& text) {
  static const char* kSlots[] = {"{INSTRUCTION}", "{OUTPUT_1}",    "{OUTPUT_2}",    "{OUTPUT}",
                                 "{REFERENCE}",   "{REFERENCE_1}", "{REFERENCE_2}", "{REFERENCE_3}",
                                 "{QUESTIONS}",   "{PER OUTPUT ANALYSES}"};
  for (const char* s : kSlots)
    if (text.find(s) != std::string::npos) return true;
  return false;
}

// Candidate pool whose texts are easy to find inside a judge prompt.
inline CandidatePool tagged_pool(const std::string& id, int n) {
  CandidatePool pool;
  pool.instruction = {id, "Write a haiku.", Dataset::Custom};
  pool.policy_model = "policy";
  for (int k = 0; k < n; ++k) pool.candidates.push_back({"<cand-" + std::to_string(k) + ">", "policy", k});
  return pool;
}

// Index of the tagged candidate shown first and second in a judge prompt.
inline std::pair<int, int> presented(const std::string& prompt) {
  std::vector<std::pair<std::size_t, int>> found;
  for (int k = 0; k < 64; ++k) {
    const auto pos = prompt.find("<cand-" + std::to_string(k) + ">");
    if (pos != std::string::npos) found.emplace_back(pos, k);
  }
  if (found.size() != 2) return {-1, -1};
  std::sort(found.begin(), found.end());
  return {found[0].second, found[1].second};
}

// Deterministic judge over tagged candidates: answer[first][second] is the
// presented-frame reply: 0 picks the first shown, 1 the second, 2 is junk.
class MatrixJudge final : public ChatBackend {
 public:
  explicit MatrixJudge(std::vector<std::vector<int>> answer) : answer_(std::move(answer)) {}
  ChatResponse complete(const ChatRequest& req) override {
    ++calls_;
    const auto [x, y] = presented(req.user);
    ChatResponse resp;
    if (x < 0) throw Error("prompt without two candidates");
    const int a = answer_[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
    resp.choices.push_back(a == 0 ? "Output (a)" : a == 1 ? "Output (b)" : "no idea");
    return resp;
  }
  std::uint64_t calls() const { return calls_.load(); }

 private:
  std::vector<std::vector<int>> answer_;
  std::atomic<std::uint64_t> calls_{0};
};

// Independent tournament: credit per unordered pair from the raw matrix.
inline std::vector<double> oracle_wins(const std::vector<std::vector<int>>& answer) {
  const std::size_t n = answer.size();
  std::vector<double> wins(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      // i shown first, then j shown first
      const bool i_first_pass = answer[i][j] == 0;
      const bool j_first_pass = answer[i][j] == 1;
      const bool i_second_pass = answer[j][i] == 1;
      const bool j_second_pass = answer[j][i] == 0;
      if (i_first_pass && i_second_pass) {
        wins[i] += 1;
      } else if (j_first_pass && j_second_pass) {
        wins[j] += 1;
      } else {
        wins[i] += 0.5;
        wins[j] += 0.5;
      }
    }
  return wins;
}

inline std::vector<std::vector<int>> random_matrix(std::mt19937_64& rng, int n) {
  std::uniform_int_distribution<int> d(0, 9);
  std::vector<std::vector<int>> m(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n), 2));
  for (auto& row : m)
    for (auto& cell : row) {
      const int r = d(rng);
      cell = r < 5 ? 0 : r < 9 ? 1 : 2;
    }
  return m;
}

}  // namespace refjudge::test

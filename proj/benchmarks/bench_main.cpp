#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "refjudge/backend.hpp"
#include "refjudge/dpo.hpp"
#include "refjudge/protocol.hpp"
#include "refjudge/stats.hpp"

namespace {

using namespace refjudge;

const TemplateStore& store() {
  static const TemplateStore s(REFJUDGE_PROTOCOL_DIR_FOR_BENCH);
  return s;
}

class EchoBackend final : public ChatBackend {
 public:
  ChatResponse complete(const ChatRequest& req) override {
    ChatResponse r;
    r.choices.assign(static_cast<std::size_t>(req.n), "Output (a)");
    return r;
  }
};

void BM_RenderMultiRef(benchmark::State& state) {
  const Instruction inst{"i", std::string(400, 'x'), Dataset::Custom};
  const CandidateOutput a{std::string(1500, 'a'), "m", 0}, b{std::string(1500, 'b'), "m", 1};
  const ReferenceSet refs{"i", {{std::string(800, 'r'), "g"}, {std::string(800, 's'), "g"}, {std::string(800, 't'), "g"}}};
  for (auto _ : state) benchmark::DoNotOptimize(render(store(), ProtocolId::MultiRefAvg, inst, a, &b, &refs));
}
BENCHMARK(BM_RenderMultiRef);

void BM_CacheKey(benchmark::State& state) {
  ChatRequest req;
  req.model = "judge";
  req.user = std::string(4000, 'q');
  for (auto _ : state) benchmark::DoNotOptimize(cache_key(req));
}
BENCHMARK(BM_CacheKey);

void BM_RunBatch(benchmark::State& state) {
  EchoBackend backend;
  std::vector<ChatRequest> reqs(256);
  for (std::size_t i = 0; i < reqs.size(); ++i) reqs[i].user = "prompt " + std::to_string(i);
  for (auto _ : state) benchmark::DoNotOptimize(run_batch(backend, reqs, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_RunBatch)->Arg(1)->Arg(8);

void BM_BootstrapCi(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution coin(0.7);
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (auto& x : v) x = coin(rng) ? 1.0 : 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap_ci(v, 10000, 0.95, kDefaultSeed));
}
BENCHMARK(BM_BootstrapCi)->Arg(200)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_DpoLossAndGrad(benchmark::State& state) {
  const LogProbQuad q{-12.5, -14.0, -13.0, -13.5};
  for (auto _ : state) {
    benchmark::DoNotOptimize(dpo_loss(q, 0.1));
    benchmark::DoNotOptimize(dpo_grad(q, 0.1));
  }
}
BENCHMARK(BM_DpoLossAndGrad);

}  // namespace

BENCHMARK_MAIN();

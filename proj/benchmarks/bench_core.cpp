#include <filesystem>
#include <random>

#include <unistd.h>

#include <benchmark/benchmark.h>

#include "rtprobe/lmm.hpp"
#include "rtprobe/regression.hpp"
#include "rtprobe/synth.hpp"
#include "rtprobe/trace.hpp"

using namespace rtprobe;

namespace {

struct Problem {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Problem make_problem(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Problem pr{Eigen::MatrixXd(n, p), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    pr.X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) pr.X(i, j) = g(rng);
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < std::min<Eigen::Index>(p, 5); ++j) beta[j] = 1.0 + j;
  for (Eigen::Index i = 0; i < n; ++i) pr.y[i] = pr.X.row(i).dot(beta) + g(rng);
  return pr;
}

void BM_Ols(benchmark::State& st) {
  const auto pr = make_problem(st.range(0), st.range(1), 1);
  for (auto _ : st) benchmark::DoNotOptimize(regression::fit(pr.X, pr.y, regression::FitSpec::ols()));
}
BENCHMARK(BM_Ols)->Args({2000, 10})->Args({2000, 100});

void BM_Ridge(benchmark::State& st) {
  const auto pr = make_problem(st.range(0), st.range(1), 2);
  for (auto _ : st) benchmark::DoNotOptimize(regression::fit(pr.X, pr.y, regression::FitSpec::ridge(0.5)));
}
BENCHMARK(BM_Ridge)->Args({2000, 10})->Args({2000, 100})->Args({200, 800});

void BM_Lasso(benchmark::State& st) {
  const auto pr = make_problem(st.range(0), st.range(1), 3);
  for (auto _ : st) benchmark::DoNotOptimize(regression::fit(pr.X, pr.y, regression::FitSpec::lasso(0.5)));
}
BENCHMARK(BM_Lasso)->Args({2000, 10})->Args({2000, 100});

void BM_LmmFit(benchmark::State& st) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  const auto n = static_cast<std::size_t>(st.range(0));
  mixedmodel::LmmSpec spec;
  spec.X.resize(static_cast<Eigen::Index>(n), 2);
  spec.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    spec.subject.push_back(r % 20);
    spec.item.push_back((r / 20) % 10);
    spec.X(i, 0) = 1.0;
    spec.X(i, 1) = g(rng);
    spec.y[i] = 250.0 + 15.0 * spec.X(i, 1) + 20.0 * g(rng) + 10.0 * static_cast<double>(r % 20) / 20.0 +
                5.0 * static_cast<double>((r / 20) % 10);
  }
  for (auto _ : st) benchmark::DoNotOptimize(mixedmodel::lmm_fit(spec));
}
BENCHMARK(BM_LmmFit)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

class TraceRead : public benchmark::Fixture {
 public:
  void SetUp(const benchmark::State&) override {
    dir = std::filesystem::temp_directory_path() / ("rtprobe_bench_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    synth::SynthConfig c;
    c.num_docs = 8;
    out = synth::generate(c, dir);
  }
  void TearDown(const benchmark::State&) override { std::filesystem::remove_all(dir); }
  std::filesystem::path dir;
  synth::SynthOutput out;
};

BENCHMARK_F(TraceRead, LoadAll)(benchmark::State& st) {
  const auto reader = trace::read_trace(out.trace);
  for (auto _ : st)
    for (const auto& doc : reader.documents()) benchmark::DoNotOptimize(doc.token_count());
}

BENCHMARK_F(TraceRead, Validate)(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(trace::validate_trace(out.trace).clean());
}

}  // namespace
BENCHMARK_MAIN();

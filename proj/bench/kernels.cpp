// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>

#include "srspin/montecarlo.hpp"
#include "srspin/pipeline.hpp"
#include "srspin/shots.hpp"

using namespace srspin;

namespace {

pipeline::BinaryImage sparse_image(int n, double p) {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution b(p);
  pipeline::BinaryImage im{n, n, std::vector<std::uint8_t>(static_cast<std::size_t>(n) * n)};
  for (auto& v : im.data) v = b(rng);
  return im;
}

void BM_lowpass(benchmark::State& st) {
  const auto im = sparse_image(static_cast<int>(st.range(0)), 0.03);
  const pipeline::AnalysisConfig cfg;
  for (auto _ : st) benchmark::DoNotOptimize(pipeline::lowpass(im, cfg));
}

void BM_lowpass_reference(benchmark::State& st) {
  const auto im = sparse_image(static_cast<int>(st.range(0)), 0.03);
  const pipeline::AnalysisConfig cfg;
  for (auto _ : st) benchmark::DoNotOptimize(pipeline::lowpass_reference(im, cfg));
}

std::vector<mc::AtomSample> osg_atoms(std::size_t n) {
  const auto a = shots::default_apparatus();
  mc::ThermalSource src;
  src.trap = a.tweezer;
  auto atoms = mc::sample_atoms(src, n, 3);
  for (std::size_t i = 0; i < n; ++i) atoms[i].m_f = HalfInt(9 - 2 * static_cast<int>(i % 10));
  return atoms;
}

mc::OsgSequenceConfig osg_config() {
  const auto a = shots::default_apparatus();
  mc::OsgSequenceConfig c;
  c.osg = a.osg;
  c.light_sheet = a.light_sheet;
  return c;
}

void BM_osg_sequence(benchmark::State& st) {
  const auto atoms = osg_atoms(static_cast<std::size_t>(st.range(0)));
  const auto cfg = osg_config();
  for (auto _ : st) benchmark::DoNotOptimize(mc::osg_sequence(atoms, cfg));
}

void BM_osg_sequence_serial(benchmark::State& st) {
  const auto atoms = osg_atoms(static_cast<std::size_t>(st.range(0)));
  const auto cfg = osg_config();
  for (auto _ : st) benchmark::DoNotOptimize(mc::osg_sequence_serial(atoms, cfg));
}

std::vector<camera::Frame> frames(std::size_t n) {
  const auto cfg = shots::default_free_space(shots::default_apparatus());
  std::vector<camera::Frame> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(camera::bias_correct(shots::simulate_free_space_shot(cfg, 5, i).frame));
  return out;
}

void BM_analyze_frames(benchmark::State& st) {
  const auto f = frames(static_cast<std::size_t>(st.range(0)));
  const pipeline::AnalysisConfig cfg;
  for (auto _ : st) benchmark::DoNotOptimize(pipeline::analyze_frames(f, cfg));
}

void BM_analyze_frames_serial(benchmark::State& st) {
  const auto f = frames(static_cast<std::size_t>(st.range(0)));
  const pipeline::AnalysisConfig cfg;
  for (auto _ : st) benchmark::DoNotOptimize(pipeline::analyze_frames_serial(f, cfg));
}

}  // namespace

BENCHMARK(BM_lowpass)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_lowpass_reference)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_osg_sequence)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_osg_sequence_serial)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_analyze_frames)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_analyze_frames_serial)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

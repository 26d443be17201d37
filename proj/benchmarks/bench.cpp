#include <benchmark/benchmark.h>

#include "stpnav/agent.hpp"
#include "stpnav/harness.hpp"
#include "stpnav/sim.hpp"
#include "stpnav/vision.hpp"

using namespace stpnav;

namespace {

struct Scene {
  World world = generate_world("t_junction_deadend", 1);
  SimParams sim;
  AvatarPose pose = world.spawn;
  Frame a = render(world, pose, sim);
  Frame b = [this] {
    AvatarPose p = pose;
    p.yaw = wrap_yaw(p.yaw + 5);
    return render(world, p, sim);
  }();
};

const Scene& scene() {
  static const Scene s;
  return s;
}

void BM_Render(benchmark::State& st) {
  const auto& s = scene();
  for (auto _ : st) benchmark::DoNotOptimize(render(s.world, s.pose, s.sim));
}
BENCHMARK(BM_Render);

void BM_VisiblePortals(benchmark::State& st) {
  const auto& s = scene();
  for (auto _ : st) benchmark::DoNotOptimize(visible_portals(s.world, s.pose, s.sim));
}
BENCHMARK(BM_VisiblePortals);

void BM_Ssim(benchmark::State& st) {
  const auto& s = scene();
  for (auto _ : st) benchmark::DoNotOptimize(ssim(s.a, s.b));
}
BENCHMARK(BM_Ssim);

void BM_MedianFlow(benchmark::State& st) {
  const auto& s = scene();
  for (auto _ : st) benchmark::DoNotOptimize(median_flow(s.a, s.b));
}
BENCHMARK(BM_MedianFlow);

void BM_Phash(benchmark::State& st) {
  const auto& s = scene();
  for (auto _ : st) benchmark::DoNotOptimize(phash64(s.a));
}
BENCHMARK(BM_Phash);

void BM_Embed(benchmark::State& st) {
  const auto& s = scene();
  for (auto _ : st) benchmark::DoNotOptimize(embed(s.a));
}
BENCHMARK(BM_Embed);

void BM_MilestoneScore(benchmark::State& st) {
  const auto& s = scene();
  const MilestoneGroup g = capture_milestone(s.world, s.sim, s.world.milestones.at(0).pose);
  for (auto _ : st) benchmark::DoNotOptimize(milestone_score(s.a, g));
}
BENCHMARK(BM_MilestoneScore);

// One decision of the full loop: render, perceive, act, move.
void BM_AgentDecision(benchmark::State& st) {
  const auto& s = scene();
  AgentConfig cfg;
  cfg.method = static_cast<Method>(st.range(0));
  Agent agent(cfg, s.sim.width, s.sim.height, 1);
  AvatarPose pose = s.pose;
  for (auto _ : st) {
    const Frame f = render(s.world, pose, s.sim, agent.now());
    const StepRecord rec = agent.step(f, visible_portals(s.world, pose, s.sim));
    pose = apply_action(s.world, pose, rec.action, s.sim);
  }
}
BENCHMARK(BM_AgentDecision)->Arg(0)->Arg(1)->Arg(2);

}  // namespace

BENCHMARK_MAIN();

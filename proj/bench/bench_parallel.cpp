// Serial reference kernels against their OpenMP counterparts.
// The second benchmark argument is the worker count.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "vstat/distributions.hpp"
#include "vstat/heat_kernel.hpp"
#include "vstat/parallel.hpp"
#include "vstat/quadrature.hpp"
#include "vstat/rng.hpp"
#include "vstat/varadhan.hpp"

using namespace vstat;

namespace {

const Density& torus_vm() {
    static const Density d = Density::von_mises((Vector(2) << 0.0, 1.0).finished(), (Vector(2) << 2.0, 0.5).finished());
    return d;
}

TensorRule torus_rule(int res) { return TensorRule{{periodic_trapezoid(res), periodic_trapezoid(res)}}; }

// Varadhan cost and gradient at a fixed point: the population quadrature workload.
void varadhan_integrand(std::span<const double> xi, std::span<double> out) {
    const FlatTorus mfd(2);
    const Point x{0.3, -0.4};
    const CostEval e = evaluate(mfd, 0.05, x, Point(Vector(Eigen::Map<const Vector>(xi.data(), 2))));
    out[0] = e.value;
    out[1] = e.grad.vec[0];
    out[2] = e.grad.vec[1];
}

void BM_integrate_serial(benchmark::State& st) {
    const TensorRule rule = torus_rule(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(integrate_serial(torus_vm(), varadhan_integrand, 3, rule));
    st.SetItemsProcessed(static_cast<int64_t>(st.iterations() * rule.size()));
}

void BM_integrate_omp(benchmark::State& st) {
    const TensorRule rule = torus_rule(static_cast<int>(st.range(0)));
    parallel::set_workers(static_cast<int>(st.range(1)));
    for (auto _ : st) benchmark::DoNotOptimize(integrate(torus_vm(), varadhan_integrand, 3, rule));
    st.SetItemsProcessed(static_cast<int64_t>(st.iterations() * rule.size()));
}

// One replication: draw n points and solve the empirical t-mean.
double replicate(std::size_t rep, std::size_t n) {
    static const Density d = Density::von_mises(Vector::Zero(1), Vector::Constant(1, 2.0));
    Rng rng(17, rep);
    const SampleSet s = sample(d, n, rng, rep);
    return minimize_from(VaradhanFunction::empirical(s, 0.1), Point{0.0}).point[0];
}

void BM_replications_serial(benchmark::State& st) {
    const std::size_t R = static_cast<std::size_t>(st.range(0));
    std::vector<double> out(R);
    for (auto _ : st) {
        parallel::serial_for_each_index(R, [&](std::size_t r) { out[r] = replicate(r, 200); });
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(static_cast<int64_t>(st.iterations() * R));
}

void BM_replications_omp(benchmark::State& st) {
    const std::size_t R = static_cast<std::size_t>(st.range(0));
    parallel::set_workers(static_cast<int>(st.range(1)));
    std::vector<double> out(R);
    for (auto _ : st) {
        parallel::for_each_index(R, [&](std::size_t r) { out[r] = replicate(r, 200); });
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(static_cast<int64_t>(st.iterations() * R));
}

void BM_reduce_serial(benchmark::State& st) {
    const std::size_t count = static_cast<std::size_t>(st.range(0));
    for (auto _ : st) {
        double acc[1] = {0.0};
        parallel::serial_reduce(count, std::span<double>(acc, 1),
                                [](std::size_t i, std::span<double> a) { a[0] += std::sin(1e-3 * static_cast<double>(i)); });
        benchmark::DoNotOptimize(acc[0]);
    }
}

void BM_reduce_omp(benchmark::State& st) {
    const std::size_t count = static_cast<std::size_t>(st.range(0));
    parallel::set_workers(static_cast<int>(st.range(1)));
    for (auto _ : st) {
        double acc[1] = {0.0};
        parallel::block_reduce(count, std::span<double>(acc, 1),
                               [](std::size_t i, std::span<double> a) { a[0] += std::sin(1e-3 * static_cast<double>(i)); });
        benchmark::DoNotOptimize(acc[0]);
    }
}

}  // namespace

BENCHMARK(BM_integrate_serial)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_integrate_omp)->ArgsProduct({{128, 256}, {1, 2, 4, 8}})->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_replications_serial)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_replications_omp)->ArgsProduct({{200}, {1, 2, 4, 8}})->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_reduce_serial)->Arg(1 << 20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_reduce_omp)->ArgsProduct({{1 << 20}, {1, 2, 4, 8}})->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();

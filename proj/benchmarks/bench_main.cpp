#include <benchmark/benchmark.h>

// The packaged benchmark_main archive is LTO-only, so the entry point lives here.
BENCHMARK_MAIN();

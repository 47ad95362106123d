#include "atlas/scheduler.hpp"

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace atlas {

void schedule_tiles(std::span<const MetaTile> tiles, std::size_t workers, const TileTask& task) {
    if (workers == 0) throw ValidationError("worker count must be at least 1");
    if (tiles.empty()) return;

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::size_t failed_index = tiles.size();
    std::string failed_message;

    auto worker = [&] {
        while (!failed.load(std::memory_order_acquire)) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= tiles.size()) return;
            try {
                task(tiles[i], i);
            } catch (const std::exception& e) {
                std::lock_guard lock(error_mutex);
                if (i < failed_index) {
                    failed_index = i;
                    failed_message = e.what();
                }
                failed.store(true, std::memory_order_release);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (i < failed_index) {
                    failed_index = i;
                    failed_message = "unknown exception";
                }
                failed.store(true, std::memory_order_release);
            }
        }
    };

    const std::size_t n = std::min(workers, tiles.size());
    if (n == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n);
        for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    }

    if (failed.load()) {
        const auto& t = tiles[failed_index];
        throw TileFailure(failed_index, "tile " + std::to_string(failed_index) + " (" +
                                            std::to_string(t.tile_col) + "," + std::to_string(t.tile_row) +
                                            ") failed: " + failed_message);
    }
}

std::size_t workers_from_env(std::size_t fallback) {
    const char* env = std::getenv("ATLAS_WORKERS");
    if (!env || !*env) return fallback;
    std::size_t v = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v == 0) {
        throw ValidationError("ATLAS_WORKERS must be a positive integer, got '" + std::string(s) + "'");
    }
    return v;
}

}  // namespace atlas

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace chns {

/// Worker count from the CHNS_WORKERS environment variable (default 1).
inline int worker_count() {
    static const int n = [] {
        const char* s = std::getenv("CHNS_WORKERS");
        if (!s) return 1;
        int v = std::atoi(s);
        return v > 0 ? v : 1;
    }();
    return n;
}

namespace detail {

/// Persistent helper threads; spawning per call would swamp the small kernels.
class WorkerPool {
public:
    static WorkerPool& instance() {
        static WorkerPool pool(worker_count() - 1);
        return pool;
    }

    int helpers() const { return static_cast<int>(threads_.size()); }

    /// Runs fn(t) for t in [0, helpers()) on the helpers, fn(helpers()) on the
    /// caller, and returns when all are done.
    void run(const std::function<void(int)>& fn) {
        {
            std::unique_lock<std::mutex> lk(m_);
            fn_ = &fn;
            pending_ = static_cast<int>(threads_.size());
            ++generation_;
        }
        cv_start_.notify_all();
        fn(static_cast<int>(threads_.size()));
        std::unique_lock<std::mutex> lk(m_);
        cv_done_.wait(lk, [this] { return pending_ == 0; });
        fn_ = nullptr;
    }

private:
    explicit WorkerPool(int n) {
        for (int t = 0; t < n; ++t)
            threads_.emplace_back([this, t] {
                std::uint64_t seen = 0;
                for (;;) {
                    const std::function<void(int)>* job = nullptr;
                    {
                        std::unique_lock<std::mutex> lk(m_);
                        cv_start_.wait(lk, [&] { return stop_ || generation_ != seen; });
                        if (stop_) return;
                        seen = generation_;
                        job = fn_;
                    }
                    (*job)(t);
                    {
                        std::unique_lock<std::mutex> lk(m_);
                        if (--pending_ == 0) cv_done_.notify_all();
                    }
                }
            });
    }

    ~WorkerPool() {
        {
            std::unique_lock<std::mutex> lk(m_);
            stop_ = true;
        }
        cv_start_.notify_all();
        for (auto& t : threads_) t.join();
    }

    std::vector<std::thread> threads_;
    std::mutex m_;
    std::condition_variable cv_start_, cv_done_;
    const std::function<void(int)>* fn_ = nullptr;
    int pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

} // namespace detail

/// Run fn(begin, end) over [0, n) split into contiguous chunks, one per worker.
/// Each index is processed exactly once by exactly one worker, so any kernel
/// that writes only to slot i for index i produces bitwise identical results
/// for every worker count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const int workers = worker_count();
    if (workers <= 1 || n < 4096) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    detail::WorkerPool::instance().run([n, chunk, &fn](int t) {
        const std::size_t lo = std::min(n, static_cast<std::size_t>(t) * chunk);
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo < hi) fn(lo, hi);
    });
}

} // namespace chns

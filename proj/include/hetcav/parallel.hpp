#pragma once

#include <algorithm>
#include <barrier>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace hetcav {

/// Run fn(i) for i in [0, n) on up to `workers` threads. Indices are
/// handed out in contiguous blocks, so each fn(i) must only write its own
/// output slot. The first exception thrown by any worker is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn)
{
    const std::size_t w = std::min<std::size_t>(std::max(1, workers), n);
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> threads;
        threads.reserve(w);
        for (std::size_t t = 0; t < w; ++t) {
            const std::size_t begin = n * t / w;
            const std::size_t end = n * (t + 1) / w;
            threads.emplace_back([&, begin, end] {
                try {
                    for (std::size_t i = begin; i < end; ++i) {
                        fn(i);
                    }
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                }
            });
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

/// Persistent team of threads that repeatedly executes a phase function
/// over disjoint slices [begin, end) of a row range. The caller thread
/// takes slice 0. Each run() returns only after every slice is finished.
class SliceTeam {
public:
    using Phase = std::function<void(int begin, int end)>;

    SliceTeam(int workers, int rows)
        : workers_(std::max(1, std::min(workers, rows))), rows_(rows),
          start_(workers_), done_(workers_)
    {
        for (int t = 1; t < workers_; ++t) {
            threads_.emplace_back([this, t] { loop(t); });
        }
    }

    ~SliceTeam()
    {
        if (workers_ > 1) {
            stop_ = true;
            start_.arrive_and_wait();
        }
    }

    SliceTeam(const SliceTeam&) = delete;
    SliceTeam& operator=(const SliceTeam&) = delete;

    int workers() const { return workers_; }

    void run(const Phase& phase)
    {
        if (workers_ == 1) {
            phase(0, rows_);
            return;
        }
        phase_ = &phase;
        start_.arrive_and_wait();
        phase(0, slice_end(0));
        done_.arrive_and_wait();
    }

private:
    int slice_begin(int t) const { return static_cast<int>(static_cast<long long>(rows_) * t / workers_); }
    int slice_end(int t) const { return slice_begin(t + 1); }

    void loop(int t)
    {
        for (;;) {
            start_.arrive_and_wait();
            if (stop_) {
                return;
            }
            (*phase_)(slice_begin(t), slice_end(t));
            done_.arrive_and_wait();
        }
    }

    int workers_;
    int rows_;
    std::barrier<> start_;
    std::barrier<> done_;
    const Phase* phase_ = nullptr;
    bool stop_ = false;
    std::vector<std::jthread> threads_;
};

} // namespace hetcav

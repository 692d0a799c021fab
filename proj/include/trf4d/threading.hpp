#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace trf4d {

/// Minimal persistent worker pool. Work is always split into a fixed number
/// of contiguous chunks (one per configured thread), so floating-point
/// accumulation order is a pure function of the thread count, not of
/// scheduling. threads==1 runs inline.
class ThreadPool {
  public:
    explicit ThreadPool(int threads) : threads_(threads < 1 ? 1 : threads) {
        for (int i = 1; i < threads_; ++i)
            workers_.emplace_back([this, i] { worker_loop(i); });
    }

    ~ThreadPool() {
        {
            std::unique_lock lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    int threads() const { return threads_; }

    /// Runs fn(chunk_index, begin, end) for a static partition of [0, n)
    /// into threads() chunks. Blocks until all chunks finish.
    void parallel_chunks(std::size_t n, const std::function<void(int, std::size_t, std::size_t)>& fn) {
        if (threads_ == 1 || n == 0) {
            fn(0, 0, n);
            return;
        }
        {
            std::unique_lock lk(mu_);
            job_ = &fn;
            job_n_ = n;
            pending_ = threads_ - 1;
            ++generation_;
        }
        cv_.notify_all();
        run_chunk(0);
        std::unique_lock lk(mu_);
        done_cv_.wait(lk, [this] { return pending_ == 0; });
        job_ = nullptr;
    }

    /// Chunk bounds for a static partition of n items into threads() chunks.
    std::pair<std::size_t, std::size_t> chunk_bounds(std::size_t n, int chunk) const {
        std::size_t per = n / threads_, rem = n % threads_;
        std::size_t begin = chunk * per + std::min<std::size_t>(chunk, rem);
        std::size_t end = begin + per + (static_cast<std::size_t>(chunk) < rem ? 1 : 0);
        return {begin, end};
    }

  private:
    void run_chunk(int chunk) {
        auto [b, e] = chunk_bounds(job_n_, chunk);
        (*job_)(chunk, b, e);
    }

    void worker_loop(int chunk) {
        std::uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock lk(mu_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
            }
            run_chunk(chunk);
            {
                std::unique_lock lk(mu_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    int threads_;
    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(int, std::size_t, std::size_t)>* job_ = nullptr;
    std::size_t job_n_ = 0;
    std::uint64_t generation_ = 0;
    int pending_ = 0;
    bool stop_ = false;
};

}  // namespace trf4d

#include "otreg/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace otreg {

namespace {

thread_local bool inside_parallel_region = false;

int resolve_thread_count() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("OTREG_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1 && cap < n) n = cap;
    }
    return n;
}

struct Job {
    const std::function<void(std::ptrdiff_t, std::ptrdiff_t)>* fn = nullptr;
    std::ptrdiff_t n = 0;
    int chunks = 0;
    std::atomic<int> next{0};
    std::atomic<int> pending{0};
};

// Persistent pool. Each run publishes a heap-allocated Job; workers and the
// caller pull chunk ids off the job's counter. Chunk boundaries depend only
// on (n, chunks), so the partition is stable run to run, and a worker that
// wakes late only ever touches its own (already exhausted) job object.
class Pool {
public:
    static Pool& instance() {
        static Pool pool;
        return pool;
    }

    void run(std::ptrdiff_t n,
             const std::function<void(std::ptrdiff_t, std::ptrdiff_t)>& fn) {
        auto job = std::make_shared<Job>();
        job->fn = &fn;
        job->n = n;
        job->chunks = workers_ + 1;
        job->pending.store(job->chunks, std::memory_order_relaxed);
        {
            std::unique_lock<std::mutex> lock(mutex_);
            current_ = job;
            ++generation_;
        }
        cv_start_.notify_all();
        work(*job);
        std::unique_lock<std::mutex> lock(mutex_);
        cv_done_.wait(lock, [&] { return job->pending.load() == 0; });
        current_.reset();
    }

private:
    Pool() : workers_(resolve_thread_count() - 1) {
        threads_.reserve(static_cast<size_t>(workers_));
        for (int t = 0; t < workers_; ++t) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    ~Pool() {
        {
            std::unique_lock<std::mutex> lock(mutex_);
            stopping_ = true;
            ++generation_;
        }
        cv_start_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void worker_loop() {
        inside_parallel_region = true;
        std::uint64_t seen = 0;
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock<std::mutex> lock(mutex_);
                cv_start_.wait(lock, [&] { return generation_ != seen; });
                seen = generation_;
                if (stopping_) return;
                job = current_;
            }
            if (job) work(*job);
        }
    }

    void work(Job& job) {
        for (;;) {
            const int c = job.next.fetch_add(1, std::memory_order_relaxed);
            if (c >= job.chunks) break;
            const std::ptrdiff_t begin = job.n * c / job.chunks;
            const std::ptrdiff_t end = job.n * (c + 1) / job.chunks;
            if (begin < end) (*job.fn)(begin, end);
            if (job.pending.fetch_sub(1, std::memory_order_acq_rel) == 1) {
                std::unique_lock<std::mutex> lock(mutex_);
                cv_done_.notify_all();
            }
        }
    }

    const int workers_;
    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::condition_variable cv_start_;
    std::condition_variable cv_done_;
    std::uint64_t generation_ = 0;
    bool stopping_ = false;
    std::shared_ptr<Job> current_;
};

}  // namespace

int thread_count() {
    static const int n = resolve_thread_count();
    return n;
}

void parallel_for(std::ptrdiff_t n,
                  const std::function<void(std::ptrdiff_t, std::ptrdiff_t)>& fn) {
    if (n <= 0) return;
    if (n < 2 || thread_count() == 1 || inside_parallel_region) {
        fn(0, n);
        return;
    }
    inside_parallel_region = true;
    Pool::instance().run(n, fn);
    inside_parallel_region = false;
}

}  // namespace otreg

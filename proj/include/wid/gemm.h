#ifndef WID_GEMM_H
#define WID_GEMM_H

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace wid {

// Persistent worker pool; ops dispatch row ranges instead of spawning
// threads per call. The tape evaluates ops sequentially, so at most one
// parallel region is active at a time.
class WorkerPool {
public:
    static WorkerPool& instance() {
        static WorkerPool pool;
        return pool;
    }

    int helpers() const { return (int)threads_.size(); }

    void submit(std::function<void()> task) {
        {
            std::lock_guard<std::mutex> lk(mu_);
            tasks_.push_back(std::move(task));
            ++pending_;
        }
        cv_.notify_one();
    }

    void wait_idle() {
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [&] { return pending_ == 0; });
    }

    ~WorkerPool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

private:
    WorkerPool() {
        unsigned hw = std::thread::hardware_concurrency();
        const int helpers = (int)std::min<unsigned>(hw ? hw : 1, 4) - 1;
        for (int i = 0; i < helpers; ++i)
            threads_.emplace_back([this] { loop(); });
    }

    void loop() {
        for (;;) {
            std::function<void()> task;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return stop_ || !tasks_.empty(); });
                if (stop_ && tasks_.empty()) return;
                task = std::move(tasks_.front());
                tasks_.pop_front();
            }
            task();
            {
                std::lock_guard<std::mutex> lk(mu_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    std::deque<std::function<void()>> tasks_;
    int pending_ = 0;
    bool stop_ = false;
    std::vector<std::thread> threads_;
};

// Splits [0, m) into contiguous chunks across the pool plus the caller.
// The partition depends only on (m, worker count), so results are
// deterministic: each output row is written by exactly one worker.
inline void parallel_rows(int m, int64_t cost, const std::function<void(int, int)>& fn) {
    auto& pool = WorkerPool::instance();
    const int workers = pool.helpers() + 1;
    if (workers < 2 || cost < (1 << 20) || m < 2) {
        fn(0, m);
        return;
    }
    const int nchunk = std::min(workers, m);
    const int chunk = (m + nchunk - 1) / nchunk;
    for (int w = 1; w < nchunk; ++w) {
        const int lo = w * chunk, hi = std::min(m, lo + chunk);
        if (lo >= hi) break;
        pool.submit([&fn, lo, hi] { fn(lo, hi); });
    }
    fn(0, std::min(chunk, m));
    pool.wait_idle();
}

// c[m,n] += a[m,k] * b[k,n]
template <typename T>
void gemm_nn(int m, int k, int n, const T* a, const T* b, T* c) {
    parallel_rows(m, (int64_t)m * k * n, [=](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            T* crow = c + (int64_t)i * n;
            const T* arow = a + (int64_t)i * k;
            int p = 0;
            for (; p + 4 <= k; p += 4) {  // 4-way k unroll amortizes the c row traffic
                const T a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
                if (a0 == T(0) && a1 == T(0) && a2 == T(0) && a3 == T(0)) continue;
                const T* b0 = b + (int64_t)p * n;
                const T* b1 = b0 + n;
                const T* b2 = b1 + n;
                const T* b3 = b2 + n;
                for (int j = 0; j < n; ++j)
                    crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            for (; p < k; ++p) {
                const T av = arow[p];
                if (av == T(0)) continue;
                const T* brow = b + (int64_t)p * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

// c[m,n] += a[k,m]^T * b[k,n]
template <typename T>
void gemm_tn(int m, int k, int n, const T* a, const T* b, T* c) {
    // Small outputs with a long reduction axis (conv weight gradients):
    // iterate k outermost so both inputs stream contiguously, accumulate
    // into per-worker copies of c, and reduce in fixed worker order.
    if ((int64_t)m * n <= (1 << 17) && k > 128) {
        auto& pool = WorkerPool::instance();
        int workers = pool.helpers() + 1;
        if ((int64_t)m * k * n < (1 << 20)) workers = 1;
        workers = std::max(1, std::min(workers, k / 64));
        std::vector<std::vector<T>> partial((size_t)workers);
        const int chunk = (k + workers - 1) / workers;
        auto body = [&](int w) {
            partial[w].assign((size_t)m * n, T(0));
            T* pc = partial[w].data();
            const int p0 = w * chunk, p1 = std::min(k, p0 + chunk);
            for (int p = p0; p < p1; ++p) {
                const T* arow = a + (int64_t)p * m;
                const T* brow = b + (int64_t)p * n;
                for (int i = 0; i < m; ++i) {
                    const T av = arow[i];
                    if (av == T(0)) continue;
                    T* crow = pc + (int64_t)i * n;
                    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
                }
            }
        };
        for (int w = 1; w < workers; ++w) pool.submit([&body, w] { body(w); });
        body(0);
        if (workers > 1) pool.wait_idle();
        for (int w = 0; w < workers; ++w)
            for (int64_t i = 0; i < (int64_t)m * n; ++i) c[i] += partial[w][i];
        return;
    }
    parallel_rows(m, (int64_t)m * k * n, [=](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            T* crow = c + (int64_t)i * n;
            for (int p = 0; p < k; ++p) {
                const T av = a[(int64_t)p * m + i];
                if (av == T(0)) continue;
                const T* brow = b + (int64_t)p * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

// c[m,n] += a[m,k] * b[n,k]^T
template <typename T>
void gemm_nt(int m, int k, int n, const T* a, const T* b, T* c) {
    parallel_rows(m, (int64_t)m * k * n, [=](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            const T* arow = a + (int64_t)i * k;
            T* crow = c + (int64_t)i * n;
            int j = 0;
            for (; j + 4 <= n; j += 4) {  // 4 output columns per pass share the a row
                const T* b0 = b + (int64_t)j * k;
                const T* b1 = b0 + k;
                const T* b2 = b1 + k;
                const T* b3 = b2 + k;
                T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
                for (int p = 0; p < k; ++p) {
                    const T av = arow[p];
                    s0 += av * b0[p];
                    s1 += av * b1[p];
                    s2 += av * b2[p];
                    s3 += av * b3[p];
                }
                crow[j] += s0;
                crow[j + 1] += s1;
                crow[j + 2] += s2;
                crow[j + 3] += s3;
            }
            for (; j < n; ++j) {
                const T* brow = b + (int64_t)j * k;
                T acc = T(0);
                for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
                crow[j] += acc;
            }
        }
    });
}

}  // namespace wid

#endif

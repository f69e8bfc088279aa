#pragma once

// Shared plumbing: error types, seed derivation, float formatting and a
// small deterministic parallel_for.

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

namespace ppod {

// Bad input: malformed files, out-of-range parameters, broken invariants.
struct validation_error: std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct parse_error: validation_error {
    parse_error(std::size_t line, const std::string& what):
        validation_error("line " + std::to_string(line) + ": " + what),
        line(line)
    {}
    std::size_t line;
};

// Non-finite values or divergence during a computation.
struct numerical_error: std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c: s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Per-stage seed: hash of (master, stage name, index). Every random
// stream in the toolkit is seeded through this.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view stage, std::uint64_t index = 0) {
    return splitmix64(splitmix64(master ^ fnv1a(stage)) + splitmix64(index + 0x632be59bd9b4e019ull));
}

// Uniform double in [0, 1) from 64 random bits.
inline constexpr double unit_double(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double x) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc{}) throw std::runtime_error("format_double: to_chars failed");
    return std::string(buf, end);
}

inline double parse_double(std::string_view s) {
    double x = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || end != s.data() + s.size()) {
        throw validation_error("not a number: '" + std::string(s) + "'");
    }
    return x;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Callers write results
// by index, so output does not depend on the worker count.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            }
            catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    unsigned workers = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t: pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

struct summary {
    std::size_t n = 0;
    double mean = 0;
    double stddev = 0;   // sample standard deviation (n-1)
    double stderr_ = 0;  // stddev / sqrt(n)
};

template <typename Seq>
summary summarize(const Seq& xs) {
    summary s;
    double m2 = 0;
    for (double x: xs) {
        ++s.n;
        double d = x - s.mean;
        s.mean += d/static_cast<double>(s.n);
        m2 += d*(x - s.mean);
    }
    if (s.n > 1) {
        s.stddev = std::sqrt(m2/static_cast<double>(s.n - 1));
        s.stderr_ = s.stddev/std::sqrt(static_cast<double>(s.n));
    }
    return s;
}

} // namespace ppod

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace coevo::rng {

/**
 * Deterministic, splittable randomness.
 *
 * Every consumer derives its own engine from (master seed, purpose tag,
 * counters), so draws made by one component never shift the stream seen by
 * another. That property is what makes ablated runs bit-comparable: disabling
 * a branch removes its draws without perturbing anyone else's.
 */

constexpr std::uint64_t splitmix64(std::uint64_t x) {
	x += 0x9e3779b97f4a7c15ULL;
	x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
	x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
	return x ^ (x >> 31);
}

inline std::uint64_t derive(std::uint64_t master, std::string_view tag,
                            std::uint64_t a = 0, std::uint64_t b = 0) {
	std::uint64_t h = 0xcbf29ce484222325ULL; // FNV offset basis
	for (unsigned char c : tag) {
		h ^= c;
		h *= 0x100000001b3ULL;
	}
	h = splitmix64(h ^ splitmix64(master));
	h = splitmix64(h ^ splitmix64(a + 0x9e3779b97f4a7c15ULL));
	h = splitmix64(h ^ splitmix64(b + 0x7f4a7c159e3779b9ULL));
	return h;
}

inline std::mt19937_64 engine(std::uint64_t seed) {
	return std::mt19937_64(seed);
}

/// Stateless uniform in [0,1) keyed by an already-derived value. Used for
/// order-independent per-pair decisions (e.g. edge coin flips).
inline double uniform01(std::uint64_t key) {
	return static_cast<double>(splitmix64(key) >> 11) * 0x1.0p-53;
}

/// k distinct indices from [0,n), ascending. Partial Fisher-Yates then sort.
inline std::vector<int> sample_without_replacement(int n, int k, std::uint64_t seed) {
	std::vector<int> pool(n);
	for (int i = 0; i < n; ++i) pool[i] = i;
	auto eng = engine(seed);
	for (int i = 0; i < k; ++i) {
		std::uniform_int_distribution<int> d(i, n - 1);
		std::swap(pool[i], pool[d(eng)]);
	}
	pool.resize(k);
	std::sort(pool.begin(), pool.end());
	return pool;
}

inline std::vector<int> shuffled_indices(int n, std::uint64_t seed) {
	std::vector<int> idx(n);
	for (int i = 0; i < n; ++i) idx[i] = i;
	auto eng = engine(seed);
	for (int i = n - 1; i > 0; --i) {
		std::uniform_int_distribution<int> d(0, i);
		std::swap(idx[i], idx[d(eng)]);
	}
	return idx;
}

} // namespace coevo::rng

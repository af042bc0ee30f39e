#pragma once

#include <cstddef>
#include <new>
#include <vector>

namespace mpde {

// 64-byte-aligned allocator. SIMD kernels peel loop heads based on pointer
// alignment; pinning every numeric buffer to one alignment class makes
// summation order, and therefore results, bit-stable across allocations and
// process restarts.
template <class T>
struct AlignedAlloc {
    using value_type = T;
    static constexpr std::size_t alignment = 64;

    AlignedAlloc() = default;
    template <class U>
    AlignedAlloc(const AlignedAlloc<U>&) noexcept {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(alignment)));
    }
    void deallocate(T* p, std::size_t n) noexcept {
        ::operator delete(p, n * sizeof(T), std::align_val_t(alignment));
    }

    template <class U>
    bool operator==(const AlignedAlloc<U>&) const noexcept {
        return true;
    }
};

template <class T>
using AVec = std::vector<T, AlignedAlloc<T>>;

}  // namespace mpde

#pragma once

#include <cstddef>
#include <new>
#include <vector>

namespace mpsams {

/// 64-byte-aligned allocator for buffers that feed SIMD kernels. Consistent
/// alignment keeps vectorized reduction order identical across allocations,
/// which is what makes training bitwise reproducible regardless of worker
/// count or heap layout.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const {
        return true;
    }
};

template <class T>
using AVec = std::vector<T, AlignedAllocator<T>>;

}  // namespace mpsams

#include "tba/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace tba::kernels {

#ifndef TBA_WITH_AVX2
const Table* avx2_table() { return nullptr; }
#endif

namespace {

std::atomic<const Table*> g_active{nullptr};

const Table* pick() {
    if (const char* env = std::getenv("TBA_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return &scalar_table();
        if (std::strcmp(env, "avx2") == 0 && avx2_table()) return avx2_table();
    }
    if (const Table* t = avx2_table()) return t;
    return &scalar_table();
}

}  // namespace

const Table& active() {
    const Table* t = g_active.load(std::memory_order_acquire);
    if (!t) {
        t = pick();
        g_active.store(t, std::memory_order_release);
    }
    return *t;
}

bool select(Backend b) {
    switch (b) {
        case Backend::Auto:
            g_active.store(pick(), std::memory_order_release);
            return true;
        case Backend::Scalar:
            g_active.store(&scalar_table(), std::memory_order_release);
            return true;
        case Backend::Avx2:
            if (const Table* t = avx2_table()) {
                g_active.store(t, std::memory_order_release);
                return true;
            }
            return false;
    }
    return false;
}

const char* backend_name() { return active().name; }

}  // namespace tba::kernels

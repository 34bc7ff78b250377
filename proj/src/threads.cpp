#include "pahs/threads.hpp"

#include <cstdlib>
#include <string>

#include <omp.h>

namespace pahs {

void apply_thread_env_cap() {
    const char* env = std::getenv("PAHS_THREADS");
    if (env == nullptr || *env == '\0') {
        return;
    }
    try {
        const int cap = std::stoi(env);
        if (cap >= 1 && cap < omp_get_max_threads()) {
            omp_set_num_threads(cap);
        }
    } catch (...) {
        // ignore unparseable values
    }
}

} // namespace pahs

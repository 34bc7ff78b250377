#ifndef PAHS_THREADS_HPP
#define PAHS_THREADS_HPP

namespace pahs {

// Caps OpenMP workers to the PAHS_THREADS environment variable when set.
// Results are bit-identical for any thread count.
void apply_thread_env_cap();

} // namespace pahs

#endif

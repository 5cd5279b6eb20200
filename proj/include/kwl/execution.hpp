#pragma once

namespace kwl {

/// Parallel runs the OpenMP kernel; Serial runs the single-threaded reference.
enum class Execution { Parallel, Serial };

/// Sets the OpenMP team size for subsequent parallel kernels (no-op without OpenMP).
void set_thread_count(int threads);
int max_threads();

}  // namespace kwl

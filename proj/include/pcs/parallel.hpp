#pragma once

namespace pcs {

/// Worker slots for the parallel kernels: PC_LANDSCAPE_THREADS when it holds
/// a positive integer, otherwise the OpenMP default. 1 without OpenMP.
int worker_threads();

[[nodiscard]] bool openmp_enabled();

}  // namespace pcs

#pragma once

#include <limits>

#include "starnet/kernels.hpp"

namespace starnet::kernels {

// Defined in kernels_avx2.cpp when compiled with AVX2/FMA support.
const KernelTable* avx2_table_if_compiled();

}  // namespace starnet::kernels

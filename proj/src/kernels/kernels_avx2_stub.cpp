#include "kernels_impl.hpp"

namespace starnet::kernels {

const KernelTable* avx2_table_if_compiled() { return nullptr; }

}  // namespace starnet::kernels

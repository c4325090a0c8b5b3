#pragma once

#include <cstddef>
#include <functional>

namespace nlos {

/// Process-wide worker count used by the internally parallel kernels.
/// Every kernel writes each output element from exactly one worker with a
/// fixed summation order, so results do not depend on this value.
void set_num_threads(int n);
int num_threads();

/// Calls body(i) for i in [begin, end), statically chunked across workers.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body);

}  // namespace nlos

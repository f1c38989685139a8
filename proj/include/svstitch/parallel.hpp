#pragma once

#include <functional>

namespace svstitch {

// Runs fn(i) for every i in [0, n) on up to `jobs` threads. After all
// workers finish, the exception thrown for the lowest index is rethrown.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace svstitch

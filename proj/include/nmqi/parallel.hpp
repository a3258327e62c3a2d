#pragma once

namespace nmqi {

/// Thread count used by the OpenMP loops. 0 means "take NMQI_THREADS from
/// the environment, else the OpenMP default".
void set_threads(int n);
int threads();
bool have_openmp();

}  // namespace nmqi

#include "sparse_ips/parallel.hpp"

namespace sparse_ips {

unsigned default_thread_count() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

}  // namespace sparse_ips

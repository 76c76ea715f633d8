#include <atomic>
#include <cstdlib>
#include <string_view>

#include "taltpp/kernels.hpp"

namespace taltpp::kernels {
namespace {

const KernelTable* initial_choice() {
  if (const char* env = std::getenv("TALTPP_KERNELS"); env && std::string_view(env) == "scalar") return &scalar_table();
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_choice()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool select(std::string_view name) {
  if (name == "scalar") {
    current().store(&scalar_table());
    return true;
  }
  if (name == "avx2") {
    if (const KernelTable* t = avx2_table()) {
      current().store(t);
      return true;
    }
  }
  return false;
}

}  // namespace taltpp::kernels

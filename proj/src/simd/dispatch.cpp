#include <cstdlib>
#include <string>

#include "weakseg/error.hpp"
#include "weakseg/simd/kernels.hpp"

namespace weakseg::simd {

std::string_view to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::avx512: return "avx512";
  }
  return "unknown";
}

bool cpu_supports(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::avx512:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx512f");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) {
  if (!cpu_supports(isa)) {
    throw Error(ErrorCode::InvalidArgument,
                "instruction set not supported on this CPU: " + std::string(to_string(isa)));
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (isa == Isa::avx2) return detail::avx2_table();
  if (isa == Isa::avx512) return detail::avx512_table();
#endif
  return detail::scalar_table();
}

namespace {

const KernelTable& probe() noexcept {
  const char* env = std::getenv("WEAKSEG_SIMD");
  const std::string requested = env ? env : "";
  if (requested == "scalar") return detail::scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
  if (requested != "avx2" && cpu_supports(Isa::avx512)) return detail::avx512_table();
  if (cpu_supports(Isa::avx2)) return detail::avx2_table();
#endif
  return detail::scalar_table();
}

}  // namespace

const KernelTable& active_kernels() noexcept {
  static const KernelTable& table = probe();
  return table;
}

}  // namespace weakseg::simd

#include <atomic>

#include "ciest/error.hpp"
#include "ciest/simd/kernels.hpp"

namespace ciest::simd {

namespace {

bool cpu_has_avx2() {
#if defined(CIEST_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* pick(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return &scalar::table;
    case Isa::avx2:
#ifdef CIEST_HAVE_AVX2
      if (cpu_has_avx2()) return &avx2::table;
#endif
      throw InvalidArgument("avx2 kernels unavailable on this build or CPU");
    case Isa::automatic:
      break;
  }
#ifdef CIEST_HAVE_AVX2
  if (cpu_has_avx2()) return &avx2::table;
#endif
  return &scalar::table;
}

std::atomic<const KernelTable*> current{nullptr};

}  // namespace

const KernelTable& active() {
  const KernelTable* t = current.load(std::memory_order_acquire);
  if (!t) {
    t = pick(Isa::automatic);
    current.store(t, std::memory_order_release);
  }
  return *t;
}

void select(Isa isa) { current.store(pick(isa), std::memory_order_release); }

Isa parse_isa(std::string_view name) {
  if (name == "auto") return Isa::automatic;
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  throw InvalidArgument("unknown kernel set '" + std::string(name) + "' (auto|scalar|avx2)");
}

std::vector<const KernelTable*> available() {
  std::vector<const KernelTable*> out{&scalar::table};
#ifdef CIEST_HAVE_AVX2
  if (cpu_has_avx2()) out.push_back(&avx2::table);
#endif
  return out;
}

}  // namespace ciest::simd

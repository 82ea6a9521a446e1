#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace wavesr {

// ---------------------------------------------------------------------------
// Error taxonomy. Every failure mode callers are expected to handle gets its
// own type so tests and the CLI can dispatch on it.
// ---------------------------------------------------------------------------

#define WAVESR_DEFINE_ERROR(Name)                                   \
  struct Name : std::runtime_error {                                \
    explicit Name(const std::string& msg)                           \
        : std::runtime_error(std::string(#Name) + ": " + msg) {}    \
  }

WAVESR_DEFINE_ERROR(OddDimension);
WAVESR_DEFINE_ERROR(ShapeMismatch);
WAVESR_DEFINE_ERROR(ChannelMismatch);
WAVESR_DEFINE_ERROR(NonOddKernel);
WAVESR_DEFINE_ERROR(NonIntegralOutput);
WAVESR_DEFINE_ERROR(NotScalar);
WAVESR_DEFINE_ERROR(GraphDetached);
WAVESR_DEFINE_ERROR(AttentionTooLarge);
WAVESR_DEFINE_ERROR(DivisibilityError);
WAVESR_DEFINE_ERROR(InputTooSmall);
WAVESR_DEFINE_ERROR(VariantTermMismatch);
WAVESR_DEFINE_ERROR(RangeTagMismatch);
WAVESR_DEFINE_ERROR(ImageSmallerThanWindow);
WAVESR_DEFINE_ERROR(MissingCounterpart);
WAVESR_DEFINE_ERROR(UnreadableImage);
WAVESR_DEFINE_ERROR(UnsupportedFormat);
WAVESR_DEFINE_ERROR(ImageTooSmall);
WAVESR_DEFINE_ERROR(IndivisibleDims);
WAVESR_DEFINE_ERROR(EmptyDataset);
WAVESR_DEFINE_ERROR(MissingGrad);
WAVESR_DEFINE_ERROR(Diverged);
WAVESR_DEFINE_ERROR(MissingPerceptualEncoder);
WAVESR_DEFINE_ERROR(ArchitectureMismatch);
WAVESR_DEFINE_ERROR(ConfigError);

#undef WAVESR_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Shape: up to 4 dimensions, row-major.
// ---------------------------------------------------------------------------

struct Shape {
  std::array<int, 4> d{1, 1, 1, 1};
  int rank = 0;

  Shape() = default;
  Shape(std::initializer_list<int> dims) {
    rank = static_cast<int>(dims.size());
    if (rank > 4) throw ShapeMismatch("rank > 4 unsupported");
    int i = 0;
    for (int v : dims) d[i++] = v;
  }

  int operator[](int i) const { return d[i]; }
  int& operator[](int i) { return d[i]; }

  std::size_t numel() const {
    std::size_t n = 1;
    for (int i = 0; i < rank; ++i) n *= static_cast<std::size_t>(d[i]);
    return rank == 0 ? 0 : n;
  }

  bool operator==(const Shape& o) const {
    if (rank != o.rank) return false;
    for (int i = 0; i < rank; ++i)
      if (d[i] != o.d[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "(";
    for (int i = 0; i < rank; ++i) os << d[i] << (i + 1 < rank ? "," : "");
    os << ")";
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 drives everything; uniform/normal
// mappings are written out so streams are identical on every platform.
// Per-step streams are derived from (seed, tag, index) so a resumed run
// regenerates exactly the randomness the uninterrupted run would have drawn.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : s_(splitmix64(seed)) {}

  static Rng derive(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    return Rng(splitmix64(seed ^ hash_tag(tag)) ^ splitmix64(index * 0x9e3779b97f4a7c15ULL + 1));
  }

  std::uint64_t next_u64() {
    s_ = splitmix64(s_);
    return s_;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  // Box-Muller; one fresh pair per two samples
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t s_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace wavesr

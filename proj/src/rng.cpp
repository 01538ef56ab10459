#include "solidify/rng.hpp"

#include <cmath>

namespace solidify {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;
}

std::uint64_t mix64(std::uint64_t z)
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t hash_name(std::string_view name)
{
    // FNV-1a, then finalized
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return mix64(h);
}

Stream::result_type Stream::operator()()
{
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

double Stream::uniform()
{
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double Stream::normal()
{
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Stream::exponential() { return -std::log(uniform_pos()); }

Stream Stream::split(std::uint64_t index) const
{
    return Stream(mix64(key_ ^ mix64(index + kGolden)) + 0x632be59bd9b4e019ull);
}

Stream derive_stream(std::uint64_t seed, std::string_view kind, std::uint64_t replica)
{
    return Stream(mix64(seed) ^ hash_name(kind)).split(replica);
}

} // namespace solidify

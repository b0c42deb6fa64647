#include "soundedit/common.hpp"

#include <cmath>
#include <sstream>

namespace soundedit {

uint64_t fnv1a64(const void* data, size_t n, uint64_t state) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        state ^= static_cast<uint64_t>(p[i]);
        state *= 0x100000001b3ULL;
    }
    return state;
}

uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(s.data(), s.size());
}

RandomStream::RandomStream(uint64_t seed) : base_seed_(seed), engine_(seed) {}

uint64_t RandomStream::next_u64() {
    return engine_();
}

double RandomStream::uniform() {
    // 53 high bits -> [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int RandomStream::uniform_int(int lo, int hi) {
    if (hi < lo) throw NumericError("uniform_int: hi < lo");
    uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
}

RandomStream RandomStream::fork(const std::string& label) const {
    return RandomStream(fnv1a64(label) ^ (base_seed_ * 0x9E3779B97F4A7C15ULL));
}

std::string RandomStream::save_state() const {
    std::ostringstream os;
    os << base_seed_ << ' ' << engine_;
    return os.str();
}

void RandomStream::restore_state(const std::string& text) {
    std::istringstream is(text);
    is >> base_seed_ >> engine_;
    if (is.fail()) throw IoError("RandomStream: malformed state string");
}

}  // namespace soundedit

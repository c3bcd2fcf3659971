#include "projcgan/rng.hpp"

#include <sstream>

namespace projcgan {

std::string Rng::save_state() const {
    // mt19937_64 streams its 312-word state as decimal text, which is exact
    // and stable across runs. Seed goes first so spawn() keeps working.
    std::ostringstream os;
    os << seed_ << ' ' << engine_;
    return os.str();
}

void Rng::load_state(const std::string& blob) {
    std::istringstream is(blob);
    std::uint64_t seed = 0;
    if (!(is >> seed) || !(is >> engine_))
        throw IoError("rng state blob is malformed");
    seed_ = seed;
}

}  // namespace projcgan

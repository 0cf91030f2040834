#include "agnomap/core.hpp"

#include <iostream>
#include <mutex>

namespace agnomap {

namespace {
std::mutex warning_mutex;
WarningHandler& handler() {
    static WarningHandler h = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
    return h;
}
}  // namespace

WarningHandler set_warning_handler(WarningHandler h) {
    std::lock_guard lock(warning_mutex);
    WarningHandler old = std::move(handler());
    handler() = std::move(h);
    return old;
}

void warn(const std::string& message) {
    std::lock_guard lock(warning_mutex);
    if (handler()) handler()(message);
}

}  // namespace agnomap

#include "coachai/error.hpp"

namespace coachai {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::domain: return "domain";
        case ErrorKind::not_found: return "not_found";
        case ErrorKind::invalid_plan: return "invalid_plan";
        case ErrorKind::parse: return "parse";
        case ErrorKind::conflict: return "conflict";
        case ErrorKind::precondition: return "precondition";
        case ErrorKind::invalid_state: return "invalid_state";
        case ErrorKind::routing: return "routing";
        case ErrorKind::transport: return "transport";
        case ErrorKind::stale_write: return "stale_write";
        case ErrorKind::training: return "training";
        case ErrorKind::stratification: return "stratification";
        case ErrorKind::missing_feature: return "missing_feature";
        case ErrorKind::coercion: return "coercion";
        case ErrorKind::instrument: return "instrument";
    }
    return "unknown";
}

}  // namespace coachai

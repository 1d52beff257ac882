#include "coachai/resources.hpp"

#include <string>

#include "coachai/error.hpp"

namespace coachai {

std::string_view builtin_resource(std::string_view name) {
    for (const auto& [key, content] : builtin_resources())
        if (key == name)
            return content;
    throw Error(ErrorKind::not_found, "no built-in resource '" + std::string(name) + "'");
}

}  // namespace coachai

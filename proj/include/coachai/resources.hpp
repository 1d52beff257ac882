#pragma once

#include <string_view>
#include <utility>
#include <vector>

namespace coachai {

// Files shipped under data/ (dialogs, questionnaire templates, activity
// pool), compiled into the library.
const std::vector<std::pair<std::string_view, std::string_view>>& builtin_resources();

// Throws not_found for unknown names, e.g. "dialogs/intake.dialog".
std::string_view builtin_resource(std::string_view name);

}  // namespace coachai

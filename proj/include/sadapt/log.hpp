#pragma once

#include <functional>
#include <string>

namespace sadapt {

using WarningSink = std::function<void(const std::string&)>;

// Replaces the process-wide warning sink; pass an empty function to restore stderr.
void set_warning_sink(WarningSink sink);

void warn(const std::string& message);

} // namespace sadapt

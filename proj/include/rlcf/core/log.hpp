#ifndef RLCF_CORE_LOG_HPP_
#define RLCF_CORE_LOG_HPP_

#include <string_view>

namespace rlcf {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

// Messages below the threshold are dropped. Default: Info.
void set_log_level(LogLevel level);
LogLevel log_level();

void log(LogLevel level, std::string_view msg);
inline void log_info(std::string_view msg) { log(LogLevel::Info, msg); }
inline void log_warn(std::string_view msg) { log(LogLevel::Warn, msg); }

}  // namespace rlcf

#endif  // RLCF_CORE_LOG_HPP_

#pragma once

namespace kappasim {

inline constexpr const char* program_name = "kappasim";
inline constexpr const char* version_string = "0.1.0";

} // namespace kappasim

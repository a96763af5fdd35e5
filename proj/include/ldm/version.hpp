#ifndef LDM_VERSION_HPP
#define LDM_VERSION_HPP

namespace ldm {

inline constexpr const char* kVersion = "0.1.0";

} // namespace ldm

#endif // LDM_VERSION_HPP

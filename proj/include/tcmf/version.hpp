#pragma once

namespace tcmf {

inline const char* version_string() { return "tcmf 0.1.0"; }

}  // namespace tcmf

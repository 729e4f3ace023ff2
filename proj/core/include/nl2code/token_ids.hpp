#pragma once

namespace nl2code {

// Special token ids shared by every vocabulary and model in the toolkit.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;

}  // namespace nl2code

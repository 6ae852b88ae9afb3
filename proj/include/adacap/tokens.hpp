#pragma once

namespace adacap {

// Reserved vocabulary ids, fixed across every file format and model.
constexpr int kPadId = 0;
constexpr int kBosId = 1;
constexpr int kEosId = 2;
constexpr int kUnkId = 3;
constexpr int kNumReserved = 4;

constexpr const char* kPadTok = "<PAD>";
constexpr const char* kBosTok = "<BOS>";
constexpr const char* kEosTok = "<EOS>";
constexpr const char* kUnkTok = "<UNK>";

}  // namespace adacap

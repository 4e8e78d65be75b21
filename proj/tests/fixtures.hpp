// SPDX-License-Identifier: Apache-2.0
//
// Shared test fixtures: the tiny model geometry (3x4x16x16 clips cut into
// 2x4x4 cubes -> 2x4x4 token grid, embed dim 16, depth 1).
#pragma once

#include <filesystem>

#include "marlin/clip.hpp"
#include "marlin/model.hpp"
#include "marlin/synth.hpp"
#include "marlin/tokenizer.hpp"

namespace fixtures {

inline marlin::ClipSpec tiny_clip_spec() { return {3, 4, 16, 16, 2}; }

inline marlin::TokenGridSpec tiny_grid() {
    return marlin::TokenGridSpec::for_clip(3, 4, 16, 16, 2, 4, 4);
}

inline marlin::ModelConfig tiny_config() {
    return marlin::ModelConfig::preset(marlin::Variant::tiny, tiny_grid());
}

// Source clip with exactly one valid temporal window for the tiny spec.
inline marlin::VideoClip tiny_source_clip(std::uint64_t seed, bool mouth_open = false) {
    marlin::ClipSpec source_spec{3, 8, 16, 16, 1};
    marlin::MotionParams motion;
    motion.amplitude = 0.5;
    motion.mouth_open = mouth_open;
    return marlin::synth_face_clip(seed, source_spec, motion);
}

// Tiny clip already at model geometry (window sampled with stride 2).
inline marlin::VideoClip tiny_model_clip(std::uint64_t seed, bool mouth_open = false) {
    const auto source = tiny_source_clip(seed, mouth_open);
    return marlin::slice_clip(source, tiny_clip_spec(), 0);
}

inline std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "marlin_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixtures

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "marlin/clip.hpp"
#include "marlin/rng.hpp"

namespace marlin {

// Controls for the procedural face. amplitude is a master scale: 0 yields a
// fully static clip.
struct MotionParams {
    double amplitude = 1.0;
    double drift = 1.0;   // whole-face translation
    double deform = 1.0;  // blink / wobble / mouth modulation
    bool mouth_open = false;
};

namespace detail {

struct Rgb {
    double r, g, b;
    double channel(int c) const {
        switch (c % 3) {
            case 0: return r;
            case 1: return g;
            default: return b;
        }
    }
};

inline bool in_ellipse(double x, double y, double cx, double cy, double rx, double ry) {
    const double dx = (x - cx) / rx;
    const double dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
}

}  // namespace detail

// Procedurally rendered face clip: background, hair cap, skin ellipse, two
// eyes, nose wedge, mouth bar. All parts translate/deform smoothly across
// frames; the segmentation map is exact by construction. Part radii are
// clamped so every region covers at least one pixel center at >= 32x32.
inline VideoClip synth_face_clip(std::uint64_t seed, const ClipSpec& spec, const MotionParams& motion) {
    spec.validate();
    Rng rng(derive_seed(seed, 0x5face));

    const double W = spec.width, H = spec.height;
    const int T = spec.frames;

    // Appearance draws (all RNG happens before the frame loop so static clips
    // are bitwise frame-identical).
    const double u_skin = rng.next_double();
    const double u_hair = rng.next_double();
    const double u_bg = rng.next_double();
    const double u_eye = rng.next_double();
    const double u_geo = rng.next_double();
    const double u_mouth = rng.next_double();

    const detail::Rgb bg{0.15 + 0.20 * u_bg, 0.20 + 0.20 * u_bg, 0.30 + 0.30 * u_bg};
    const detail::Rgb skin{0.55 + 0.25 * u_skin, 0.42 + 0.20 * u_skin, 0.32 + 0.15 * u_skin};
    const detail::Rgb hair{0.05 + 0.25 * u_hair, 0.04 + 0.15 * u_hair, 0.02 + 0.10 * u_hair};
    const detail::Rgb eye{0.05 + 0.10 * u_eye, 0.05 + 0.15 * u_eye, 0.10 + 0.30 * u_eye};
    const detail::Rgb nose{skin.r * 0.82, skin.g * 0.80, skin.b * 0.78};
    // open: dark oral cavity; closed: bright lip bar
    const detail::Rgb mouth = motion.mouth_open
                                  ? detail::Rgb{0.04, 0.02, 0.03}
                                  : detail::Rgb{0.62 + 0.13 * u_mouth, 0.12 + 0.06 * u_mouth, 0.18};

    const double cx0 = 0.50 * W;
    const double cy0 = 0.54 * H;
    // an open mouth drops the jaw, lengthening and slightly widening the face
    const double jaw = motion.mouth_open ? 1.18 : 1.0;
    const double rx0 = (0.28 + 0.04 * u_geo) * W * (motion.mouth_open ? 1.06 : 1.0);
    const double ry0 = (0.33 + 0.04 * u_geo) * H * jaw;

    // Motion waves.
    const double ph1 = rng.next_double() * 6.2831853;
    const double ph2 = rng.next_double() * 6.2831853;
    const double ph3 = rng.next_double() * 6.2831853;
    const double ph4 = rng.next_double() * 6.2831853;
    const double fr1 = 1.0 + 1.5 * rng.next_double();
    const double fr2 = 1.0 + 1.5 * rng.next_double();
    const double fr3 = 0.5 + 1.0 * rng.next_double();
    const double fr4 = 1.0 + 2.0 * rng.next_double();
    const double amp = motion.amplitude;

    VideoClip clip;
    clip.channels = spec.channels;
    clip.frames = T;
    clip.height = spec.height;
    clip.width = spec.width;
    clip.pixels.resize(spec.pixel_count());
    clip.segmap.resize(spec.voxel_count());
    clip.clip_id = "synth-" + std::to_string(seed);

    for (int t = 0; t < T; ++t) {
        const double tau = T > 1 ? static_cast<double>(t) / T : 0.0;
        const double dx = amp * motion.drift * 0.045 * W * std::sin(6.2831853 * fr1 * tau + ph1);
        const double dy = amp * motion.drift * 0.035 * H * std::sin(6.2831853 * fr2 * tau + ph2);
        const double wob = 1.0 + amp * motion.deform * 0.03 * std::sin(6.2831853 * fr3 * tau + ph3);
        const double blink =
            amp * motion.deform * 0.5 * std::max(0.0, std::sin(6.2831853 * fr4 * tau + ph4));

        const double cx = cx0 + dx, cy = cy0 + dy;
        const double rx = rx0 * wob, ry = ry0 * wob;

        const double hair_cy = cy - 0.55 * ry;
        const double hair_rx = 1.03 * rx, hair_ry = 0.62 * ry;

        const double eye_dx = 0.42 * rx, eye_dy = 0.30 * ry;
        const double eye_rx = std::max(0.80, 0.17 * rx);
        const double eye_ry = std::max(0.80, 0.11 * ry * (1.0 - blink));

        const double nose_top = cy - 0.10 * ry, nose_bot = cy + 0.22 * ry;
        const double nose_half = std::max(1.2, 0.13 * rx);

        const double mouth_cy = cy + 0.52 * ry;
        const double mouth_hw = motion.mouth_open ? std::max(1.20, 0.50 * rx) : std::max(0.80, 0.40 * rx);
        double mouth_hh = motion.mouth_open ? std::max(1.20, 0.30 * ry) : std::max(0.60, 0.05 * ry);
        if (motion.mouth_open) {
            mouth_hh *= 1.0 + 0.15 * amp * motion.deform * std::sin(6.2831853 * fr4 * tau + ph2);
            mouth_hh = std::max(1.20, mouth_hh);
        }

        for (int h = 0; h < spec.height; ++h) {
            const double y = h + 0.5;
            for (int w = 0; w < spec.width; ++w) {
                const double x = w + 0.5;

                RegionLabel label;
                if (detail::in_ellipse(x, y, cx - eye_dx, cy - eye_dy, eye_rx, eye_ry)) {
                    label = RegionLabel::left_eye;
                } else if (detail::in_ellipse(x, y, cx + eye_dx, cy - eye_dy, eye_rx, eye_ry)) {
                    label = RegionLabel::right_eye;
                } else if (y >= nose_top && y <= nose_bot &&
                           std::abs(x - cx) <=
                               nose_half * (y - nose_top) / std::max(1e-9, nose_bot - nose_top)) {
                    label = RegionLabel::nose;
                } else if (motion.mouth_open
                               ? detail::in_ellipse(x, y, cx, mouth_cy, mouth_hw, mouth_hh)
                               : (std::abs(x - cx) <= mouth_hw && std::abs(y - mouth_cy) <= mouth_hh)) {
                    label = RegionLabel::mouth;
                } else if (detail::in_ellipse(x, y, cx, cy, rx, ry)) {
                    label = RegionLabel::skin;
                } else if (detail::in_ellipse(x, y, cx, hair_cy, hair_rx, hair_ry)) {
                    label = RegionLabel::hair;
                } else {
                    label = RegionLabel::background;
                }
                clip.segmap[clip.voxel_index(t, h, w)] = static_cast<std::uint8_t>(label);

                detail::Rgb base;
                double shade = 1.0;
                switch (label) {
                    case RegionLabel::background: base = bg; break;
                    case RegionLabel::skin: {
                        base = skin;
                        const double ddx = (x - cx) / rx, ddy = (y - cy) / ry;
                        shade = 1.0 - 0.18 * (ddx * ddx + ddy * ddy);
                        break;
                    }
                    case RegionLabel::left_eye:
                    case RegionLabel::right_eye: base = eye; break;
                    case RegionLabel::nose: base = nose; break;
                    case RegionLabel::mouth: base = mouth; break;
                    case RegionLabel::hair: base = hair; break;
                }
                for (int c = 0; c < spec.channels; ++c) {
                    const double v = std::clamp(base.channel(c) * shade, 0.0, 1.0);
                    clip.pixels[clip.pixel_index(c, t, h, w)] = static_cast<float>(v);
                }
            }
        }
    }
    return clip;
}

}  // namespace marlin

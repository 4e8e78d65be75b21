// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "marlin/common.hpp"
#include "marlin/rng.hpp"

namespace marlin {

// Facial region codes. The priority set covers the sparse face parts that the
// masker hides first.
enum class RegionLabel : std::uint8_t {
    background = 0,
    skin = 1,
    left_eye = 2,
    right_eye = 3,
    nose = 4,
    mouth = 5,
    hair = 6,
};

constexpr int kNumRegionLabels = 7;

constexpr RegionLabel kPrioritySet[] = {
    RegionLabel::left_eye, RegionLabel::right_eye, RegionLabel::nose,
    RegionLabel::mouth, RegionLabel::hair,
};

inline bool is_priority_region(RegionLabel l) {
    return l == RegionLabel::left_eye || l == RegionLabel::right_eye ||
           l == RegionLabel::nose || l == RegionLabel::mouth || l == RegionLabel::hair;
}

// Tie-break rank used when a token vote is split: lower rank wins.
inline int region_priority_rank(RegionLabel l) {
    switch (l) {
        case RegionLabel::left_eye: return 0;
        case RegionLabel::right_eye: return 1;
        case RegionLabel::nose: return 2;
        case RegionLabel::mouth: return 3;
        case RegionLabel::hair: return 4;
        case RegionLabel::skin: return 5;
        case RegionLabel::background: return 6;
    }
    return 7;
}

inline const char* region_name(RegionLabel l) {
    switch (l) {
        case RegionLabel::background: return "background";
        case RegionLabel::skin: return "skin";
        case RegionLabel::left_eye: return "left-eye";
        case RegionLabel::right_eye: return "right-eye";
        case RegionLabel::nose: return "nose";
        case RegionLabel::mouth: return "mouth";
        case RegionLabel::hair: return "hair";
    }
    return "?";
}

struct ClipSpec {
    int channels = 3;
    int frames = 16;
    int height = 224;
    int width = 224;
    int temporal_stride = 2;

    void validate() const {
        require_arg(channels >= 1, "clip spec: channels must be >= 1");
        require_arg(frames >= 1 && height >= 1 && width >= 1, "clip spec: T,H,W must be >= 1");
        require_arg(temporal_stride >= 1, "clip spec: temporal_stride must be >= 1");
    }

    std::size_t pixel_count() const {
        return static_cast<std::size_t>(channels) * frames * height * width;
    }
    std::size_t voxel_count() const {
        return static_cast<std::size_t>(frames) * height * width;
    }
};

// Pixel tensor C x T x H x W in [0,1] plus a per-frame dense segmentation map.
// Pixels are stored C-major: index ((c*T + t)*H + h)*W + w.
struct VideoClip {
    int channels = 0;
    int frames = 0;
    int height = 0;
    int width = 0;
    std::vector<float> pixels;
    std::vector<std::uint8_t> segmap;  // (t*H + h)*W + w
    std::string clip_id;

    std::size_t pixel_index(int c, int t, int h, int w) const {
        return ((static_cast<std::size_t>(c) * frames + t) * height + h) * width + w;
    }
    std::size_t voxel_index(int t, int h, int w) const {
        return (static_cast<std::size_t>(t) * height + h) * width + w;
    }
    float pixel(int c, int t, int h, int w) const { return pixels[pixel_index(c, t, h, w)]; }
    RegionLabel label(int t, int h, int w) const {
        return static_cast<RegionLabel>(segmap[voxel_index(t, h, w)]);
    }

    void validate() const {
        const std::size_t np = static_cast<std::size_t>(channels) * frames * height * width;
        const std::size_t nv = static_cast<std::size_t>(frames) * height * width;
        require_arg(pixels.size() == np, "clip: pixel payload size inconsistent with shape");
        require_arg(segmap.size() == nv, "clip: segmap payload size inconsistent with shape");
        for (float v : pixels)
            require(std::isfinite(v), ErrorKind::numeric, "clip: non-finite pixel value");
        for (std::uint8_t l : segmap)
            require(l < kNumRegionLabels, ErrorKind::format,
                    "clip: label out of range (" + std::to_string(int(l)) + ")");
    }
};

namespace detail {

inline void write_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    require(bool(is), ErrorKind::format, "clip file: truncated length prefix");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

// Host is assumed little-endian (x86/ARM); payloads are specified LE.
static_assert(sizeof(float) == 4, "f32 payloads require 4-byte float");

}  // namespace detail

// Container layout: u32 LE header length, UTF-8 JSON header
// {version,C,T,H,W,dtype,seg_dtype,clip_id} in fixed key order, then
// C*T*H*W f32 LE pixels (C-major), then T*H*W u8 labels.
inline void write_clip(const VideoClip& clip, const std::filesystem::path& path) {
    clip.validate();
    nlohmann::ordered_json header;
    header["version"] = 1;
    header["C"] = clip.channels;
    header["T"] = clip.frames;
    header["H"] = clip.height;
    header["W"] = clip.width;
    header["dtype"] = "f32";
    header["seg_dtype"] = "u8";
    header["clip_id"] = clip.clip_id;
    const std::string htext = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(bool(os), ErrorKind::io, "cannot open for writing: " + path.string());
    detail::write_u32_le(os, static_cast<std::uint32_t>(htext.size()));
    os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    os.write(reinterpret_cast<const char*>(clip.pixels.data()),
             static_cast<std::streamsize>(clip.pixels.size() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(clip.segmap.data()),
             static_cast<std::streamsize>(clip.segmap.size()));
    require(bool(os), ErrorKind::io, "short write: " + path.string());
}

inline VideoClip load_clip(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(bool(is), ErrorKind::io, "missing clip file: " + path.string());

    const std::uint32_t hlen = detail::read_u32_le(is);
    require(hlen <= (1u << 20), ErrorKind::format, "clip file: implausible header length");
    std::string htext(hlen, '\0');
    is.read(htext.data(), hlen);
    require(bool(is), ErrorKind::format, "clip file: truncated header: " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::format, "clip file: bad header JSON: " + std::string(e.what()));
    }
    require(header.value("version", 0) == 1, ErrorKind::format, "clip file: unsupported version");
    require(header.value("dtype", "") == "f32", ErrorKind::format, "clip file: unsupported dtype");
    require(header.value("seg_dtype", "") == "u8", ErrorKind::format, "clip file: unsupported seg_dtype");

    VideoClip clip;
    for (const char* key : {"C", "T", "H", "W"}) {
        require(header.contains(key) && header[key].is_number_integer(), ErrorKind::format,
                std::string("clip file: missing header field ") + key);
    }
    clip.channels = header["C"].get<int>();
    clip.frames = header["T"].get<int>();
    clip.height = header["H"].get<int>();
    clip.width = header["W"].get<int>();
    clip.clip_id = header.value("clip_id", "");
    require(clip.channels >= 1 && clip.frames >= 1 && clip.height >= 1 && clip.width >= 1,
            ErrorKind::format, "clip file: non-positive dimension in header");

    const std::size_t np = static_cast<std::size_t>(clip.channels) * clip.frames * clip.height * clip.width;
    const std::size_t nv = static_cast<std::size_t>(clip.frames) * clip.height * clip.width;

    // Validate payload size against the header before reading.
    const auto payload_start = is.tellg();
    is.seekg(0, std::ios::end);
    const auto file_end = is.tellg();
    is.seekg(payload_start);
    const std::size_t available = static_cast<std::size_t>(file_end - payload_start);
    const std::size_t expected = np * sizeof(float) + nv;
    require(available == expected, ErrorKind::format,
            "clip file: shape mismatch, header declares " + std::to_string(expected) +
                " payload bytes but file holds " + std::to_string(available));

    clip.pixels.resize(np);
    is.read(reinterpret_cast<char*>(clip.pixels.data()), static_cast<std::streamsize>(np * sizeof(float)));
    clip.segmap.resize(nv);
    is.read(reinterpret_cast<char*>(clip.segmap.data()), static_cast<std::streamsize>(nv));
    require(bool(is), ErrorKind::io, "clip file: read failure: " + path.string());

    clip.validate();
    return clip;
}

// Random temporal sampling: frames start + i*stride for i in [0, spec.frames),
// start uniform over [0, T0 - T*stride].
inline VideoClip sample_clip(const VideoClip& source, const ClipSpec& spec, Rng& rng) {
    spec.validate();
    require_arg(source.channels == spec.channels, "sample_clip: channel mismatch");
    require_arg(source.height == spec.height && source.width == spec.width,
                "sample_clip: spatial shape mismatch");
    const int span = spec.frames * spec.temporal_stride;
    require_arg(source.frames >= span,
                "sample_clip: source too short (" + std::to_string(source.frames) + " frames, needs " +
                    std::to_string(span) + ")");

    const int max_start = source.frames - span;
    const int start = max_start == 0 ? 0 : static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_start) + 1));

    VideoClip out;
    out.channels = spec.channels;
    out.frames = spec.frames;
    out.height = spec.height;
    out.width = spec.width;
    out.clip_id = source.clip_id;
    out.pixels.resize(spec.pixel_count());
    out.segmap.resize(spec.voxel_count());
    const std::size_t frame_px = static_cast<std::size_t>(spec.height) * spec.width;
    for (int c = 0; c < spec.channels; ++c) {
        for (int i = 0; i < spec.frames; ++i) {
            const int t = start + i * spec.temporal_stride;
            std::memcpy(&out.pixels[out.pixel_index(c, i, 0, 0)],
                        &source.pixels[source.pixel_index(c, t, 0, 0)], frame_px * sizeof(float));
        }
    }
    for (int i = 0; i < spec.frames; ++i) {
        const int t = start + i * spec.temporal_stride;
        std::memcpy(&out.segmap[out.voxel_index(i, 0, 0)], &source.segmap[source.voxel_index(t, 0, 0)],
                    frame_px);
    }
    return out;
}

// Deterministic slice at a fixed window start (no RNG); used by the sliding
// temporal window during feature extraction.
inline VideoClip slice_clip(const VideoClip& source, const ClipSpec& spec, int start) {
    const int span = spec.frames * spec.temporal_stride;
    require_arg(start >= 0 && start + span <= source.frames, "slice_clip: window out of range");
    VideoClip out;
    out.channels = spec.channels;
    out.frames = spec.frames;
    out.height = spec.height;
    out.width = spec.width;
    out.clip_id = source.clip_id;
    out.pixels.resize(spec.pixel_count());
    out.segmap.resize(spec.voxel_count());
    const std::size_t frame_px = static_cast<std::size_t>(spec.height) * spec.width;
    for (int c = 0; c < spec.channels; ++c)
        for (int i = 0; i < spec.frames; ++i)
            std::memcpy(&out.pixels[out.pixel_index(c, i, 0, 0)],
                        &source.pixels[source.pixel_index(c, start + i * spec.temporal_stride, 0, 0)],
                        frame_px * sizeof(float));
    for (int i = 0; i < spec.frames; ++i)
        std::memcpy(&out.segmap[out.voxel_index(i, 0, 0)],
                    &source.segmap[source.voxel_index(start + i * spec.temporal_stride, 0, 0)], frame_px);
    return out;
}

// ---------------------------------------------------------------------------
// Dataset manifests: JSON lines. First line is a header record with
// schema_version and optional task metadata; each following line is one clip
// entry with a path (relative to the manifest) and an optional label vector.

struct TaskInfo {
    std::string kind;  // "multiclass" | "multilabel"
    int num_outputs = 0;
};

struct ManifestEntry {
    std::filesystem::path path;
    std::optional<std::vector<double>> label;
};

struct DatasetManifest {
    int schema_version = 1;
    std::optional<TaskInfo> task;
    std::vector<ManifestEntry> entries;

    bool labeled() const {
        if (entries.empty()) return false;
        for (const auto& e : entries)
            if (!e.label) return false;
        return true;
    }
};

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    require(bool(os), ErrorKind::io, "cannot open manifest for writing: " + path.string());
    nlohmann::ordered_json header;
    header["schema_version"] = m.schema_version;
    if (m.task) {
        header["task"] = {{"kind", m.task->kind}, {"num_outputs", m.task->num_outputs}};
    }
    os << header.dump() << "\n";
    const auto base = path.parent_path();
    for (const auto& e : m.entries) {
        nlohmann::ordered_json row;
        row["path"] = std::filesystem::relative(e.path, base.empty() ? "." : base).generic_string();
        if (e.label) row["label"] = *e.label;
        os << row.dump() << "\n";
    }
    require(bool(os), ErrorKind::io, "short write: " + path.string());
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(bool(is), ErrorKind::io, "missing manifest: " + path.string());
    DatasetManifest m;
    std::string line;
    bool have_header = false;
    std::optional<std::size_t> label_dim;
    const auto base = path.parent_path();
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json row;
        try {
            row = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::format, "manifest: bad JSON line: " + std::string(e.what()));
        }
        if (!have_header) {
            require(row.contains("schema_version"), ErrorKind::format,
                    "manifest: first line must carry schema_version");
            m.schema_version = row["schema_version"].get<int>();
            require(m.schema_version == 1, ErrorKind::format, "manifest: unsupported schema_version");
            if (row.contains("task")) {
                TaskInfo t;
                t.kind = row["task"].value("kind", "");
                t.num_outputs = row["task"].value("num_outputs", 0);
                require(t.kind == "multiclass" || t.kind == "multilabel", ErrorKind::format,
                        "manifest: task.kind must be multiclass or multilabel");
                require(t.num_outputs >= 1, ErrorKind::format, "manifest: task.num_outputs must be >= 1");
                m.task = t;
            }
            have_header = true;
            continue;
        }
        require(row.contains("path"), ErrorKind::format, "manifest: entry without path");
        ManifestEntry e;
        e.path = base / std::filesystem::path(row["path"].get<std::string>());
        if (row.contains("label")) {
            e.label = row["label"].get<std::vector<double>>();
            require(!label_dim || *label_dim == e.label->size(), ErrorKind::format,
                    "manifest: label vectors must share one dimensionality");
            label_dim = e.label->size();
        }
        m.entries.push_back(std::move(e));
    }
    require(have_header, ErrorKind::format, "manifest: empty file");
    return m;
}

}  // namespace marlin

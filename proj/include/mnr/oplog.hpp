#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

// Append-only operation log backing restart recovery. Frame layout:
//   [u32 little-endian length][1 frame-type byte][payload bytes]
// where length counts the type byte plus the payload. PUSH payloads are one
// event in the NDJSON wire schema; EXPIRE payloads carry {"now","ttl_ms"}.
// A truncated trailing frame (crash mid-write) is ignored on read.

namespace mnr {

enum class FrameType : std::uint8_t { kPush = 0x01, kExpire = 0x02 };

struct Frame {
    FrameType type;
    std::string payload;
};

class OpLog {
public:
    OpLog() = default;
    ~OpLog();

    OpLog(const OpLog&) = delete;
    OpLog& operator=(const OpLog&) = delete;

    /// Opens (creating if absent) for appending.
    bool open(const std::string& path);
    void close();
    bool is_open() const { return fd_ >= 0; }
    const std::string& path() const { return path_; }

    /// Appends one frame and flushes it to the OS before returning, so an
    /// acked operation survives process death.
    bool append(FrameType type, std::string_view payload);

    std::uint64_t frames_appended() const { return frames_appended_; }

    /// Atomically replaces the log contents with `frames` (write temp +
    /// rename). Used by compaction. The log stays open for appending.
    bool rewrite(const std::vector<Frame>& frames);

    /// Reads all complete frames from a log file. Stops silently at a
    /// truncated trailing frame. Returns false only when the file cannot be
    /// opened at all (a missing file reads as zero frames).
    static bool read_frames(const std::string& path,
                            const std::function<void(const Frame&)>& fn);

private:
    int fd_ = -1;
    std::string path_;
    std::uint64_t frames_appended_ = 0;
};

}  // namespace mnr

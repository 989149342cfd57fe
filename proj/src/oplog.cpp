#include "mnr/oplog.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace mnr {

namespace {

void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::string encode_frame(FrameType type, std::string_view payload) {
    std::string buf;
    buf.reserve(5 + payload.size());
    put_u32_le(buf, static_cast<std::uint32_t>(payload.size() + 1));
    buf.push_back(static_cast<char>(type));
    buf.append(payload);
    return buf;
}

bool write_all(int fd, const char* data, std::size_t len) {
    std::size_t off = 0;
    while (off < len) {
        const ssize_t n = ::write(fd, data + off, len - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

}  // namespace

OpLog::~OpLog() { close(); }

bool OpLog::open(const std::string& path) {
    close();
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd_ < 0) return false;
    path_ = path;
    return true;
}

void OpLog::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

bool OpLog::append(FrameType type, std::string_view payload) {
    if (fd_ < 0) return false;
    const std::string buf = encode_frame(type, payload);
    if (!write_all(fd_, buf.data(), buf.size())) return false;
    ++frames_appended_;
    return true;
}

bool OpLog::rewrite(const std::vector<Frame>& frames) {
    if (fd_ < 0) return false;
    const std::string tmp = path_ + ".compact";
    const int tmp_fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (tmp_fd < 0) return false;
    std::string buf;
    for (const auto& frame : frames) {
        buf = encode_frame(frame.type, frame.payload);
        if (!write_all(tmp_fd, buf.data(), buf.size())) {
            ::close(tmp_fd);
            ::unlink(tmp.c_str());
            return false;
        }
    }
    ::fsync(tmp_fd);
    ::close(tmp_fd);
    if (::rename(tmp.c_str(), path_.c_str()) != 0) {
        ::unlink(tmp.c_str());
        return false;
    }
    // Reopen so subsequent appends land in the new file.
    ::close(fd_);
    fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND, 0644);
    frames_appended_ = frames.size();
    return fd_ >= 0;
}

bool OpLog::read_frames(const std::string& path, const std::function<void(const Frame&)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) {
        struct stat st{};
        // Missing file: nothing logged yet, not an error.
        return ::stat(path.c_str(), &st) != 0;
    }
    char len_buf[4];
    for (;;) {
        in.read(len_buf, 4);
        if (in.gcount() < 4) break;
        const std::uint32_t len = static_cast<std::uint8_t>(len_buf[0]) |
                                  (static_cast<std::uint32_t>(static_cast<std::uint8_t>(len_buf[1])) << 8) |
                                  (static_cast<std::uint32_t>(static_cast<std::uint8_t>(len_buf[2])) << 16) |
                                  (static_cast<std::uint32_t>(static_cast<std::uint8_t>(len_buf[3])) << 24);
        if (len == 0) break;
        std::string body(len, '\0');
        in.read(body.data(), len);
        if (static_cast<std::uint32_t>(in.gcount()) < len) break;  // truncated tail
        Frame frame;
        frame.type = static_cast<FrameType>(static_cast<std::uint8_t>(body[0]));
        frame.payload = body.substr(1);
        fn(frame);
    }
    return true;
}

}  // namespace mnr

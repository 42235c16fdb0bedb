#pragma once

// Length-prefixed framing: 4-byte big-endian payload size followed by the
// payload. The decoder is incremental and tolerates arbitrarily split reads.

#include <cstdint>
#include <string>
#include <vector>

#include "minigrid/errors.hpp"

namespace minigrid {

inline constexpr std::size_t kFrameCap = 16 * 1024 * 1024;

inline std::string frame_encode(const std::string& payload) {
  if (payload.size() > kFrameCap) throw Oversize(payload.size());
  std::string out;
  out.reserve(payload.size() + 4);
  std::uint32_t n = std::uint32_t(payload.size());
  out += char((n >> 24) & 0xff);
  out += char((n >> 16) & 0xff);
  out += char((n >> 8) & 0xff);
  out += char(n & 0xff);
  out += payload;
  return out;
}

class FrameDecoder {
public:
  // Feeds more bytes; returns every complete payload that became available.
  std::vector<std::string> feed(const char* data, std::size_t len) {
    buffer_.append(data, len);
    std::vector<std::string> out;
    for (;;) {
      if (buffer_.size() < 4) break;
      std::uint32_t n = (std::uint32_t(std::uint8_t(buffer_[0])) << 24) |
                        (std::uint32_t(std::uint8_t(buffer_[1])) << 16) |
                        (std::uint32_t(std::uint8_t(buffer_[2])) << 8) |
                        std::uint32_t(std::uint8_t(buffer_[3]));
      if (n > kFrameCap) throw Oversize(n);
      if (buffer_.size() < 4 + std::size_t(n)) break;
      out.push_back(buffer_.substr(4, n));
      buffer_.erase(0, 4 + std::size_t(n));
    }
    return out;
  }

  std::vector<std::string> feed(const std::string& data) {
    return feed(data.data(), data.size());
  }

  // Call when the stream closes; a partial frame left in the buffer means
  // the peer hung up mid-message.
  void finish() const {
    if (!buffer_.empty()) throw Truncated();
  }

  bool idle() const { return buffer_.empty(); }

private:
  std::string buffer_;
};

} // namespace minigrid

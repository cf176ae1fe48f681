#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laneseg/errors.hpp"
#include "laneseg/socket.hpp"

namespace laneseg::wire {

// Frame layout on the stream: length u32 big-endian (payload bytes after the
// type byte), msg_type u8, payload. Payload integers are big-endian as well;
// MODEL payloads carry opaque LSEG checkpoint bytes.
enum MsgType : std::uint8_t {
  kFrame = 0x01,
  kLabel = 0x02,
  kTrainRequest = 0x03,
  kModel = 0x04,
  kAck = 0x05,
  kError = 0x06,
};

inline bool known_type(std::uint8_t t) { return t >= kFrame && t <= kError; }

enum class ErrorCode : std::uint8_t {
  framing = 0x01,
  bad_payload = 0x02,
  unknown_type = 0x03,
  id_mismatch = 0x04,
  empty_dataset = 0x05,
  busy = 0x06,
  train_failed = 0x07,
};

constexpr std::size_t kMaxPayload = 64u * 1024 * 1024;

struct Message {
  std::uint8_t type = 0;
  std::vector<std::uint8_t> payload;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
  put_u32(out, static_cast<std::uint32_t>(v));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) << 24 | static_cast<std::uint32_t>(b[at + 1]) << 16 |
         static_cast<std::uint32_t>(b[at + 2]) << 8 | static_cast<std::uint32_t>(b[at + 3]);
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint64_t>(get_u32(b, at)) << 32 | get_u32(b, at + 4);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_message(const Message& msg) {
  if (msg.payload.size() > kMaxPayload) {
    throw DataError("wire: payload exceeds maximum frame size");
  }
  std::vector<std::uint8_t> out;
  out.reserve(5 + msg.payload.size());
  detail::put_u32(out, static_cast<std::uint32_t>(msg.payload.size()));
  out.push_back(msg.type);
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  return out;
}

// Decodes one message from the front of the buffer; `consumed` reports how
// many bytes it spanned. Every framing violation throws before the payload is
// interpreted.
inline Message decode_message(std::span<const std::uint8_t> buf, std::size_t* consumed = nullptr) {
  if (buf.size() < 5) throw DataError("wire: truncated header");
  const std::uint32_t len = detail::get_u32(buf, 0);
  if (len > kMaxPayload) throw DataError("wire: declared payload too large");
  const std::uint8_t type = buf[4];
  if (!known_type(type)) {
    throw DataError("wire: unknown message type 0x" + std::to_string(type));
  }
  if (buf.size() < 5u + len) {
    throw DataError("wire: declared length " + std::to_string(len) + " but only " +
                    std::to_string(buf.size() - 5) + " payload bytes");
  }
  Message msg;
  msg.type = type;
  msg.payload.assign(buf.begin() + 5, buf.begin() + 5 + len);
  if (consumed) *consumed = 5u + len;
  return msg;
}

// Reads one message from a socket. Returns nullopt on a clean close at a
// message boundary; throws NetError/DataError on anything else. The payload
// of an unknown type is consumed so the peer can be answered with ERROR.
inline std::optional<Message> read_message(net::Socket& sock) {
  std::uint8_t header[5];
  const std::size_t first = sock.read_some(header, sizeof(header));
  if (first == 0) return std::nullopt;
  if (first < sizeof(header)) {
    sock.read_exact(header + first, sizeof(header) - first);
  }
  const std::uint32_t len = detail::get_u32(std::span<const std::uint8_t>(header, 5), 0);
  if (len > kMaxPayload) throw DataError("wire: declared payload too large");
  Message msg;
  msg.type = header[4];
  msg.payload.resize(len);
  if (len > 0) sock.read_exact(msg.payload.data(), len);
  return msg;
}

inline void write_message(net::Socket& sock, const Message& msg) {
  const auto bytes = encode_message(msg);
  sock.write_all(bytes.data(), bytes.size());
}

// FRAME / LABEL payload: frame_id u64, width u32, height u32, channels u8,
// then width*height*channels pixel bytes row-major.
struct FramePayload {
  std::uint64_t frame_id = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint8_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

inline std::vector<std::uint8_t> encode_frame_payload(const FramePayload& f) {
  if (f.pixels.size() != static_cast<std::size_t>(f.width) * f.height * f.channels) {
    throw DataError("wire: frame pixel count does not match declared shape");
  }
  std::vector<std::uint8_t> out;
  out.reserve(17 + f.pixels.size());
  detail::put_u64(out, f.frame_id);
  detail::put_u32(out, f.width);
  detail::put_u32(out, f.height);
  out.push_back(f.channels);
  out.insert(out.end(), f.pixels.begin(), f.pixels.end());
  return out;
}

inline FramePayload parse_frame_payload(std::span<const std::uint8_t> payload) {
  if (payload.size() < 17) throw DataError("wire: frame payload header truncated");
  FramePayload f;
  f.frame_id = detail::get_u64(payload, 0);
  f.width = detail::get_u32(payload, 8);
  f.height = detail::get_u32(payload, 12);
  f.channels = payload[16];
  const std::size_t expected = static_cast<std::size_t>(f.width) * f.height * f.channels;
  if (payload.size() - 17 != expected) {
    throw DataError("wire: frame byte count " + std::to_string(payload.size() - 17) +
                    " does not equal width*height*channels " + std::to_string(expected));
  }
  f.pixels.assign(payload.begin() + 17, payload.end());
  return f;
}

// TRAIN_REQUEST payload: epochs u32 (0 means the server's configured value).
inline std::vector<std::uint8_t> encode_train_request(std::uint32_t epochs) {
  std::vector<std::uint8_t> out;
  detail::put_u32(out, epochs);
  return out;
}

inline std::uint32_t parse_train_request(std::span<const std::uint8_t> payload) {
  if (payload.size() != 4) throw DataError("wire: train request payload must be 4 bytes");
  return detail::get_u32(payload, 0);
}

// ACK payload: the acknowledged frame_id u64.
inline std::vector<std::uint8_t> encode_ack(std::uint64_t frame_id) {
  std::vector<std::uint8_t> out;
  detail::put_u64(out, frame_id);
  return out;
}

inline std::uint64_t parse_ack(std::span<const std::uint8_t> payload) {
  if (payload.size() != 8) throw DataError("wire: ack payload must be 8 bytes");
  return detail::get_u64(payload, 0);
}

// ERROR payload: code byte + UTF-8 reason.
struct ErrorPayload {
  ErrorCode code = ErrorCode::framing;
  std::string reason;
};

inline std::vector<std::uint8_t> encode_error(ErrorCode code, const std::string& reason) {
  std::vector<std::uint8_t> out;
  out.push_back(static_cast<std::uint8_t>(code));
  out.insert(out.end(), reason.begin(), reason.end());
  return out;
}

inline ErrorPayload parse_error(std::span<const std::uint8_t> payload) {
  if (payload.empty()) throw DataError("wire: error payload missing code byte");
  ErrorPayload e;
  e.code = static_cast<ErrorCode>(payload[0]);
  e.reason.assign(payload.begin() + 1, payload.end());
  return e;
}

}  // namespace laneseg::wire

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laneseg/datapipe.hpp"
#include "laneseg/errors.hpp"
#include "laneseg/image.hpp"
#include "laneseg/socket.hpp"
#include "laneseg/wire.hpp"

namespace laneseg {

struct SendOptions {
  bool request_training = false;
  std::uint32_t epochs = 0;  // 0 keeps the server's configured value
};

struct SendResult {
  std::size_t pairs_sent = 0;
  std::vector<std::uint8_t> model_bytes;  // empty unless training was requested
};

namespace detail {

inline wire::Message expect_reply(net::Socket& sock, const char* waiting_for) {
  auto msg = wire::read_message(sock);
  if (!msg) {
    throw NetError(std::string("server closed the connection while awaiting ") + waiting_for);
  }
  if (msg->type == wire::kError) {
    const auto err = wire::parse_error(msg->payload);
    throw NetError(std::string("server error (code ") +
                   std::to_string(static_cast<int>(err.code)) + "): " + err.reason);
  }
  return *msg;
}

inline void send_pair(net::Socket& sock, std::uint64_t id, const RgbImage& image,
                      const RgbImage& label) {
  wire::FramePayload frame;
  frame.frame_id = id;
  frame.width = static_cast<std::uint32_t>(image.w);
  frame.height = static_cast<std::uint32_t>(image.h);
  frame.channels = 3;
  frame.pixels = image.pixels;
  wire::write_message(sock, {wire::kFrame, wire::encode_frame_payload(frame)});
  auto ack = expect_reply(sock, "frame ACK");
  if (ack.type != wire::kAck || wire::parse_ack(ack.payload) != id) {
    throw NetError("unexpected reply to frame " + std::to_string(id));
  }

  frame.width = static_cast<std::uint32_t>(label.w);
  frame.height = static_cast<std::uint32_t>(label.h);
  frame.pixels = label.pixels;
  wire::write_message(sock, {wire::kLabel, wire::encode_frame_payload(frame)});
  ack = expect_reply(sock, "label ACK");
  if (ack.type != wire::kAck || wire::parse_ack(ack.payload) != id) {
    throw NetError("unexpected reply to label " + std::to_string(id));
  }
}

}  // namespace detail

// Car-side sender: streams each manifest pair, awaiting an ACK per message,
// then optionally requests a training run and blocks for the returned MODEL.
inline SendResult send_frames(const std::string& host, std::uint16_t port,
                              const std::vector<ManifestEntry>& manifest,
                              const SendOptions& options = {}) {
  net::Socket sock = net::connect_tcp(host, port);
  SendResult result;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const RgbImage image = read_png(manifest[i].input);
    const RgbImage label = read_png(manifest[i].label);
    detail::send_pair(sock, static_cast<std::uint64_t>(i), image, label);
    ++result.pairs_sent;
  }
  if (options.request_training) {
    wire::write_message(sock,
                        {wire::kTrainRequest, wire::encode_train_request(options.epochs)});
    auto reply = detail::expect_reply(sock, "MODEL");
    if (reply.type != wire::kModel) {
      throw NetError("expected MODEL reply, got message type " + std::to_string(reply.type));
    }
    result.model_bytes = std::move(reply.payload);
  }
  return result;
}

}  // namespace laneseg

#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "laneseg/checkpoint.hpp"
#include "laneseg/datapipe.hpp"
#include "laneseg/errors.hpp"
#include "laneseg/image.hpp"
#include "laneseg/socket.hpp"
#include "laneseg/train.hpp"
#include "laneseg/wire.hpp"

namespace laneseg {

enum class SessionStatus : int { idle, training, done, failed };

// Edge-side trainer. Clients stream FRAME/LABEL pairs (each acknowledged),
// then TRAIN_REQUEST runs the training module over the accumulated pairs and
// answers with a MODEL message carrying the LSEG checkpoint. One session per
// server process; several clients may feed it concurrently. At most one
// training run executes at a time; it consumes a snapshot of the pairs, so
// frames arriving during the run do not disturb it.
class EdgeServer {
 public:
  EdgeServer(TrainConfig train_cfg, std::string host = "127.0.0.1", std::uint16_t port = 0)
      : train_cfg_(std::move(train_cfg)), host_(std::move(host)), port_(port) {}

  ~EdgeServer() { stop(); }

  void start() {
    listener_.emplace(host_, port_);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    if (listener_) listener_->close();
    {
      std::lock_guard<std::mutex> lock(conn_mu_);
      for (auto& sock : connections_) {
        if (sock) sock->shutdown_both();
      }
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    std::lock_guard<std::mutex> lock(conn_mu_);
    for (auto& t : threads_) {
      if (t.joinable()) t.join();
    }
    threads_.clear();
    connections_.clear();
    listener_.reset();
  }

  std::uint16_t port() const { return listener_ ? listener_->port() : port_; }

  SessionStatus status() const { return status_.load(); }

  std::size_t stored_pairs() const {
    std::lock_guard<std::mutex> lock(session_mu_);
    return pairs_.size();
  }

  std::vector<std::uint8_t> latest_model_bytes() const {
    std::lock_guard<std::mutex> lock(session_mu_);
    return model_bytes_;
  }

  std::optional<ModelParams<float>> latest_params() const {
    std::lock_guard<std::mutex> lock(session_mu_);
    return latest_params_;
  }

 private:
  void accept_loop() {
    while (running_) {
      net::Socket sock;
      try {
        sock = listener_->accept();
      } catch (const NetError&) {
        break;  // listener closed
      }
      std::lock_guard<std::mutex> lock(conn_mu_);
      if (!running_) break;
      connections_.push_back(std::make_unique<net::Socket>(std::move(sock)));
      net::Socket* raw = connections_.back().get();
      threads_.emplace_back([this, raw] { handle_connection(*raw); });
    }
  }

  static void send_error(net::Socket& sock, wire::ErrorCode code, const std::string& reason) {
    try {
      wire::write_message(sock, {wire::kError, wire::encode_error(code, reason)});
    } catch (const NetError&) {
      // peer already gone; nothing to report to
    }
  }

  void handle_connection(net::Socket& sock) {
    // frames awaiting their label, private to this connection
    std::unordered_map<std::uint64_t, wire::FramePayload> pending;
    try {
      while (running_) {
        std::optional<wire::Message> msg;
        try {
          msg = wire::read_message(sock);
        } catch (const NetError& e) {
          send_error(sock, wire::ErrorCode::framing, e.what());
          break;
        } catch (const DataError& e) {
          send_error(sock, wire::ErrorCode::framing, e.what());
          break;
        }
        if (!msg) break;  // clean close

        if (!wire::known_type(msg->type)) {
          send_error(sock, wire::ErrorCode::unknown_type,
                     "unknown message type " + std::to_string(msg->type));
          break;
        }
        if (!dispatch(sock, *msg, pending)) break;
      }
    } catch (const NetError&) {
      // connection dropped mid-reply
    }
    sock.close();
  }

  // returns false when the connection must close
  bool dispatch(net::Socket& sock, const wire::Message& msg,
                std::unordered_map<std::uint64_t, wire::FramePayload>& pending) {
    switch (msg.type) {
      case wire::kFrame: {
        wire::FramePayload frame;
        try {
          frame = wire::parse_frame_payload(msg.payload);
          if (frame.channels != 3) {
            throw DataError("frame must carry 3 channels, got " +
                            std::to_string(frame.channels));
          }
        } catch (const DataError& e) {
          send_error(sock, wire::ErrorCode::bad_payload, e.what());
          return false;
        }
        const std::uint64_t id = frame.frame_id;
        pending[id] = std::move(frame);
        wire::write_message(sock, {wire::kAck, wire::encode_ack(id)});
        return true;
      }
      case wire::kLabel: {
        wire::FramePayload label;
        try {
          label = wire::parse_frame_payload(msg.payload);
        } catch (const DataError& e) {
          send_error(sock, wire::ErrorCode::bad_payload, e.what());
          return false;
        }
        auto it = pending.find(label.frame_id);
        if (it == pending.end()) {
          send_error(sock, wire::ErrorCode::id_mismatch,
                     "label " + std::to_string(label.frame_id) + " has no pending frame");
          return false;
        }
        const wire::FramePayload& frame = it->second;
        if (label.width != frame.width || label.height != frame.height || label.channels != 3) {
          send_error(sock, wire::ErrorCode::bad_payload,
                     "label shape does not match frame " + std::to_string(label.frame_id));
          return false;
        }
        TrainSample sample;
        sample.image = RgbImage(static_cast<int>(frame.height), static_cast<int>(frame.width));
        sample.image.pixels = frame.pixels;
        RgbImage label_img(static_cast<int>(label.height), static_cast<int>(label.width));
        label_img.pixels = label.pixels;
        try {
          sample.labels = decode_label_colors(label_img);
        } catch (const DataError& e) {
          send_error(sock, wire::ErrorCode::bad_payload, e.what());
          return false;
        }
        {
          std::lock_guard<std::mutex> lock(session_mu_);
          pairs_.push_back(std::move(sample));
        }
        pending.erase(it);
        wire::write_message(sock, {wire::kAck, wire::encode_ack(label.frame_id)});
        return true;
      }
      case wire::kTrainRequest: {
        std::uint32_t epochs = 0;
        try {
          epochs = wire::parse_train_request(msg.payload);
        } catch (const DataError& e) {
          send_error(sock, wire::ErrorCode::bad_payload, e.what());
          return false;
        }
        return run_training(sock, epochs);
      }
      case wire::kAck:
      case wire::kModel:
      case wire::kError:
        send_error(sock, wire::ErrorCode::unknown_type,
                   "message type not accepted by the server");
        return false;
      default:
        return false;
    }
  }

  bool run_training(net::Socket& sock, std::uint32_t epochs) {
    TrainData data;
    {
      std::lock_guard<std::mutex> lock(session_mu_);
      if (pairs_.empty()) {
        send_error(sock, wire::ErrorCode::empty_dataset, "empty dataset");
        return true;  // session stays idle, connection stays open
      }
      SessionStatus expected = status_.load();
      if (expected == SessionStatus::training) {
        send_error(sock, wire::ErrorCode::busy, "training already in progress");
        return true;
      }
      data.train = pairs_;  // snapshot
      status_.store(SessionStatus::training);
    }

    TrainConfig cfg = train_cfg_;
    if (epochs > 0) cfg.epochs = static_cast<int>(epochs);
    try {
      TrainResult result = train(data, cfg);
      auto bytes = serialize_model(result.params);
      {
        std::lock_guard<std::mutex> lock(session_mu_);
        model_bytes_ = bytes;
        latest_params_ = result.params;
        status_.store(SessionStatus::done);
      }
      wire::write_message(sock, {wire::kModel, std::move(bytes)});
      return true;
    } catch (const Error& e) {
      status_.store(SessionStatus::failed);
      send_error(sock, wire::ErrorCode::train_failed, e.what());
      return true;
    }
  }

  TrainConfig train_cfg_;
  std::string host_;
  std::uint16_t port_ = 0;

  std::optional<net::Listener> listener_;
  std::thread accept_thread_;
  std::atomic<bool> running_{false};

  std::mutex conn_mu_;
  std::vector<std::unique_ptr<net::Socket>> connections_;
  std::vector<std::thread> threads_;

  mutable std::mutex session_mu_;
  std::vector<TrainSample> pairs_;
  std::vector<std::uint8_t> model_bytes_;
  std::optional<ModelParams<float>> latest_params_;
  std::atomic<SessionStatus> status_{SessionStatus::idle};
};

}  // namespace laneseg

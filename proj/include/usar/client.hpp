// Copyright 2026 The usar Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "usar/protocol.hpp"

namespace usar::client {

using Clock = std::chrono::steady_clock;

// Arrival of the datagram that completed a frame, and the moment reassembly
// handed the frame over.
struct FrameTiming {
  Clock::time_point last_packet;
  Clock::time_point decoded;
};

// Datagram subscriber: SUBSCRIBE on start, PING every heartbeat interval,
// UNSUBSCRIBE on destruction. Callbacks run on the client's own thread.
class UdpClient {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    std::uint16_t port = 9000;
    std::chrono::milliseconds heartbeat{1000};
    bool keep_packets = false;  // retain raw packet bytes per frame
  };
  using FrameCallback =
      std::function<void(const protocol::CompletedFrame&, const FrameTiming&)>;

  UdpClient(Options options, FrameCallback on_frame);
  ~UdpClient();
  UdpClient(const UdpClient&) = delete;
  UdpClient& operator=(const UdpClient&) = delete;

  // True once the server acknowledged SUBSCRIBE.
  bool WaitSubscribed(Clock::duration wait);
  void SendText(const std::string& text);
  // Stops heartbeats without unsubscribing, as a vanished client would.
  void GoSilent();

  std::vector<std::string> texts() const;
  protocol::ReassemblyStats stats() const;
  // Raw packets of (channel, frame_id) in arrival order; keep_packets only.
  std::vector<protocol::Bytes> packets(protocol::Channel channel,
                                       std::uint32_t frame_id) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace usar::client

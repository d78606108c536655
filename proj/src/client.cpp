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

#include "usar/client.hpp"

#include <sys/socket.h>

#include <array>
#include <atomic>
#include <condition_variable>
#include <cstring>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>

namespace usar::client {

namespace asio = boost::asio;
using asio::ip::udp;

struct UdpClient::Impl {
  Options options;
  FrameCallback on_frame;
  asio::io_context io;
  udp::socket socket{io};
  udp::endpoint server;
  udp::endpoint peer;
  asio::steady_timer timer{io};
  std::array<std::uint8_t, 65536> buffer{};
  protocol::Reassembler reassembler;
  std::atomic<bool> silent{false};
  std::thread thread;

  mutable std::mutex mu;
  std::condition_variable cv;
  bool subscribed = false;
  std::vector<std::string> texts;
  protocol::ReassemblyStats stats;
  std::map<std::pair<int, std::uint32_t>, std::vector<protocol::Bytes>> kept;

  void Send(const std::string& text) {
    boost::system::error_code ec;
    socket.send_to(asio::buffer(text), server, 0, ec);
  }

  void Receive() {
    socket.async_receive_from(
        asio::buffer(buffer), peer, [this](boost::system::error_code ec, std::size_t n) {
          if (ec == asio::error::operation_aborted) return;
          if (!ec) OnDatagram(n);
          Receive();
        });
  }

  void OnDatagram(std::size_t n) {
    const auto arrived = Clock::now();
    const std::span<const std::uint8_t> data(buffer.data(), n);
    if (n >= 4 && std::memcmp(buffer.data(), "USAR", 4) == 0) {
      if (options.keep_packets && n >= protocol::kHeaderSize) {
        const int channel = buffer[5];
        const std::uint32_t id = buffer[8] | (buffer[9] << 8) | (buffer[10] << 16) |
                                 (static_cast<std::uint32_t>(buffer[11]) << 24);
        std::lock_guard lock(mu);
        kept[{channel, id}].emplace_back(data.begin(), data.end());
      }
      auto events = reassembler.Feed(data, arrived);
      const auto decoded = Clock::now();
      {
        std::lock_guard lock(mu);
        stats = reassembler.stats();
      }
      for (auto& ev : events) {
        if (auto* f = std::get_if<protocol::CompletedFrame>(&ev)) {
          if (on_frame) on_frame(*f, FrameTiming{arrived, decoded});
        }
      }
      return;
    }
    std::string text(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(n));
    std::lock_guard lock(mu);
    if (text == "OK" && !subscribed) subscribed = true;
    texts.push_back(std::move(text));
    cv.notify_all();
  }

  void Heartbeat() {
    timer.expires_after(options.heartbeat);
    timer.async_wait([this](boost::system::error_code ec) {
      if (ec) return;
      if (!silent) Send("PING");
      Heartbeat();
    });
  }
};

UdpClient::UdpClient(Options options, FrameCallback on_frame)
    : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  impl_->on_frame = std::move(on_frame);
  impl_->server = udp::endpoint(asio::ip::make_address(impl_->options.host),
                                impl_->options.port);
  impl_->socket.open(impl_->server.protocol());
  const int size = 4 << 20;
  ::setsockopt(impl_->socket.native_handle(), SOL_SOCKET, SO_RCVBUF, &size, sizeof(size));
  impl_->socket.bind(udp::endpoint(impl_->server.protocol(), 0));
  impl_->Receive();
  impl_->Heartbeat();
  impl_->Send("SUBSCRIBE");
  impl_->thread = std::thread([this] { impl_->io.run(); });
}

UdpClient::~UdpClient() {
  impl_->io.stop();
  impl_->thread.join();
  impl_->Send("UNSUBSCRIBE");
}

bool UdpClient::WaitSubscribed(Clock::duration wait) {
  std::unique_lock lock(impl_->mu);
  return impl_->cv.wait_for(lock, wait, [&] { return impl_->subscribed; });
}

void UdpClient::SendText(const std::string& text) {
  asio::post(impl_->io, [this, text] { impl_->Send(text); });
}

void UdpClient::GoSilent() { impl_->silent = true; }

std::vector<std::string> UdpClient::texts() const {
  std::lock_guard lock(impl_->mu);
  return impl_->texts;
}

protocol::ReassemblyStats UdpClient::stats() const {
  std::lock_guard lock(impl_->mu);
  return impl_->stats;
}

std::vector<protocol::Bytes> UdpClient::packets(protocol::Channel channel,
                                                std::uint32_t frame_id) const {
  std::lock_guard lock(impl_->mu);
  auto it = impl_->kept.find({static_cast<int>(channel), frame_id});
  return it == impl_->kept.end() ? std::vector<protocol::Bytes>{} : it->second;
}

}  // namespace usar::client

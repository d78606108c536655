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

#include "usar/server.hpp"

#include <sys/socket.h>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <future>
#include <iostream>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "usar/error.hpp"

namespace usar::server {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using asio::ip::tcp;
using asio::ip::udp;

// --- EventLog --------------------------------------------------------------

EventLog::EventLog(std::ostream* out, Clock::time_point epoch)
    : out_(out), epoch_(epoch) {}

std::unique_ptr<EventLog> EventLog::Open(const std::string& target) {
  if (target.empty()) return std::make_unique<EventLog>();
  if (target == "-") return std::make_unique<EventLog>(&std::cout);
  auto file = std::make_unique<std::ofstream>(target, std::ios::app);
  if (!*file) throw Error(ErrorCode::kInvalidArgument, "cannot open log " + target);
  auto log = std::make_unique<EventLog>(file.get());
  log->owned_ = std::move(file);
  return log;
}

std::int64_t EventLog::Micros(Clock::time_point t) const {
  return std::chrono::duration_cast<std::chrono::microseconds>(t - epoch_).count();
}

void EventLog::Write(nlohmann::json line) {
  if (!out_) return;
  line["t_us"] = Micros(Clock::now());
  const std::string text = line.dump();
  std::lock_guard lock(mu_);
  *out_ << text << '\n';
  out_->flush();
}

void EventLog::Transition(const server::Transition& t, std::string_view cause) {
  Write({{"event", "transition"},
         {"from", ToString(t.from)},
         {"to", ToString(t.to)},
         {"cause", cause}});
}

void EventLog::Frame(const FrameRecord& r) {
  if (!out_) return;
  nlohmann::json j{{"event", "frame"},
                   {"frame_id", r.frame_id},
                   {"outcome", r.outcome},
                   {"acquire_start_us", Micros(r.acquire_start)},
                   {"acquired_us", Micros(r.acquired)},
                   {"encoded_us", Micros(r.encoded)},
                   {"sent_us", Micros(r.sent)},
                   {"submitted_us", Micros(r.submitted)}};
  if (r.segmented) j["segmented_us"] = Micros(*r.segmented);
  if (r.pair_encoded) j["pair_encoded_us"] = Micros(*r.pair_encoded);
  if (r.pair_sent) j["pair_sent_us"] = Micros(*r.pair_sent);
  Write(std::move(j));
}

// --- ClientRegistry --------------------------------------------------------

ClientRegistry::ClientRegistry(Clock::duration heartbeat_timeout)
    : timeout_(heartbeat_timeout) {}

ClientRegistry::ClientId ClientRegistry::Add(std::shared_ptr<Sink> sink,
                                             Clock::time_point now) {
  std::lock_guard lock(mu_);
  const ClientId id = next_id_++;
  clients_[id] = Entry{std::move(sink), now, 0};
  return id;
}

bool ClientRegistry::Heartbeat(ClientId id, Clock::time_point now) {
  std::lock_guard lock(mu_);
  auto it = clients_.find(id);
  if (it == clients_.end()) return false;
  it->second.last_heartbeat = now;
  return true;
}

bool ClientRegistry::Remove(ClientId id) {
  std::lock_guard lock(mu_);
  return clients_.erase(id) > 0;
}

bool ClientRegistry::Contains(ClientId id) const {
  std::lock_guard lock(mu_);
  return clients_.contains(id);
}

std::size_t ClientRegistry::size() const {
  std::lock_guard lock(mu_);
  return clients_.size();
}

std::vector<std::string> ClientRegistry::Evict(Clock::time_point now) {
  std::vector<std::shared_ptr<Sink>> dropped;
  {
    std::lock_guard lock(mu_);
    for (auto it = clients_.begin(); it != clients_.end();) {
      if (now - it->second.last_heartbeat > timeout_) {
        dropped.push_back(it->second.sink);
        it = clients_.erase(it);
      } else {
        ++it;
      }
    }
  }
  std::vector<std::string> labels;
  for (auto& s : dropped) {
    labels.push_back(s->label());
    s->Close();
  }
  return labels;
}

std::vector<std::string> ClientRegistry::Broadcast(const Sink::Packets& packets,
                                                   Clock::time_point now) {
  std::vector<std::string> labels = Evict(now);
  std::vector<std::pair<ClientId, std::shared_ptr<Sink>>> targets;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, e] : clients_) targets.emplace_back(id, e.sink);
  }
  std::vector<std::pair<ClientId, bool>> results;
  for (const auto& [id, sink] : targets) results.emplace_back(id, sink->Send(packets));

  std::vector<std::shared_ptr<Sink>> dropped;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, ok] : results) {
      auto it = clients_.find(id);
      if (it == clients_.end()) continue;
      if (ok) {
        it->second.consecutive_errors = 0;
      } else if (++it->second.consecutive_errors >= kMaxConsecutiveErrors) {
        dropped.push_back(it->second.sink);
        clients_.erase(it);
      }
    }
  }
  for (auto& s : dropped) {
    labels.push_back(s->label());
    s->Close();
  }
  return labels;
}

// --- Transports ------------------------------------------------------------

namespace {

std::string Trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string EndpointLabel(const udp::endpoint& ep) {
  return "udp:" + ep.address().to_string() + ":" + std::to_string(ep.port());
}

class UdpSink : public Sink {
 public:
  UdpSink(int fd, udp::endpoint ep) : fd_(fd), ep_(ep) {}

  bool Send(const Packets& packets) override {
    for (const auto& p : *packets) {
      const auto n = ::sendto(fd_, p.data(), p.size(), MSG_NOSIGNAL, ep_.data(),
                              static_cast<socklen_t>(ep_.size()));
      if (n != static_cast<ssize_t>(p.size())) return false;
    }
    return true;
  }
  std::string label() const override { return EndpointLabel(ep_); }

 private:
  int fd_;
  udp::endpoint ep_;
};

class WsSession;

// What the transports need from the server.
class ConnectionHandler {
 public:
  virtual ~ConnectionHandler() = default;
  virtual void OnOpen(const std::shared_ptr<WsSession>& s) = 0;
  virtual void OnText(const std::shared_ptr<WsSession>& s, std::string text) = 0;
  virtual void OnClosed(const std::shared_ptr<WsSession>& s) = 0;
};

class WsSession : public Sink, public std::enable_shared_from_this<WsSession> {
 public:
  static constexpr std::size_t kMaxQueuedBytes = 64u << 20;

  WsSession(tcp::socket socket, ConnectionHandler* handler)
      : ws_(std::move(socket)), handler_(handler) {
    boost::system::error_code ec;
    const auto ep = ws_.next_layer().socket().remote_endpoint(ec);
    label_ = "ws:" + (ec ? std::string("?") : ep.address().to_string() + ":" +
                                                   std::to_string(ep.port()));
  }

  void Run() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return self->Fail();
      self->handler_->OnOpen(self);
      self->Read();
    });
  }

  bool Send(const Packets& packets) override {
    if (closed_) return false;
    std::size_t bytes = 0;
    for (const auto& p : *packets) bytes += p.size();
    if (queued_bytes_ + bytes > kMaxQueuedBytes) return false;
    queued_bytes_ += bytes;
    asio::post(ws_.get_executor(), [self = shared_from_this(), packets] {
      for (std::size_t i = 0; i < packets->size(); ++i) {
        self->queue_.push_back(Outgoing{packets, i, {}});
      }
      self->Write();
    });
    return true;
  }

  void SendText(std::string text) {
    if (closed_) return;
    asio::post(ws_.get_executor(), [self = shared_from_this(), t = std::move(text)] {
      self->queue_.push_back(Outgoing{nullptr, 0, t});
      self->Write();
    });
  }

  void Close() override {
    asio::post(ws_.get_executor(), [self = shared_from_this()] {
      if (self->closed_.exchange(true)) return;
      self->ws_.async_close(websocket::close_code::going_away,
                            [self](beast::error_code) {});
    });
  }

  std::string label() const override { return label_; }

  std::optional<ClientRegistry::ClientId> id;

 private:
  struct Outgoing {
    Packets packets;  // binary when set
    std::size_t index;
    std::string text;
  };

  void Read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->Fail();
      if (self->ws_.got_text()) {
        self->handler_->OnText(self, beast::buffers_to_string(self->buffer_.data()));
      }
      self->buffer_.consume(self->buffer_.size());
      self->Read();
    });
  }

  void Write() {
    if (writing_ || queue_.empty() || closed_) return;
    writing_ = true;
    const Outgoing& m = queue_.front();
    auto done = [self = shared_from_this()](beast::error_code ec, std::size_t) {
      const Outgoing& sent = self->queue_.front();
      if (sent.packets) self->queued_bytes_ -= (*sent.packets)[sent.index].size();
      self->queue_.pop_front();
      self->writing_ = false;
      if (ec) return self->Fail();
      self->Write();
    };
    if (m.packets) {
      ws_.binary(true);
      ws_.async_write(asio::buffer((*m.packets)[m.index]), std::move(done));
    } else {
      ws_.text(true);
      ws_.async_write(asio::buffer(m.text), std::move(done));
    }
  }

  void Fail() {
    closed_ = true;
    if (reported_) return;
    reported_ = true;
    handler_->OnClosed(shared_from_this());
  }

  websocket::stream<beast::tcp_stream> ws_;
  ConnectionHandler* handler_;
  std::string label_;
  beast::flat_buffer buffer_;
  std::deque<Outgoing> queue_;
  bool writing_ = false;
  bool reported_ = false;
  std::atomic<bool> closed_{false};
  std::atomic<std::size_t> queued_bytes_{0};
};

void EnlargeBuffers(int fd) {
  const int size = 4 << 20;
  ::setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &size, sizeof(size));
  ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &size, sizeof(size));
}

struct Inflight {
  std::shared_ptr<const GrayImage> image;
  double pixel_spacing = 1.0;
  FrameRecord record;
};

}  // namespace

// --- Server ----------------------------------------------------------------

struct Server::Impl : ConnectionHandler {
  ServerConfig config;
  std::unique_ptr<providers::FrameSource> source;
  std::unique_ptr<providers::Provider> provider;
  EventLog null_log;
  EventLog* log;
  std::function<void(const FrameRecord&)> observer;

  // Command context.
  std::mutex control_mu;
  std::condition_variable control_cv;
  std::deque<std::function<void()>> control_queue;
  bool control_stop = false;
  Session session;  // touched only by the control thread
  std::thread control_thread;

  // Client I/O.
  asio::io_context io;
  std::unique_ptr<udp::socket> udp_socket;
  std::unique_ptr<tcp::acceptor> acceptor;
  std::unique_ptr<asio::steady_timer> sweep_timer;
  std::array<std::uint8_t, 2048> udp_buffer{};
  udp::endpoint udp_peer;
  std::map<udp::endpoint, ClientRegistry::ClientId> udp_clients;  // io thread
  std::mutex ws_mu;
  std::set<std::shared_ptr<WsSession>> ws_sessions;
  std::thread io_thread;
  ClientRegistry registry;

  // Pipeline.
  std::atomic<bool> running{false};
  std::atomic<bool> source_done{false};
  std::mutex pace_mu;
  std::condition_variable pace_cv;
  std::mutex inflight_mu;
  std::map<std::uint32_t, Inflight> inflight;
  std::thread acquire_thread;
  std::thread completion_thread;
  std::mutex done_mu;
  std::condition_variable done_cv;
  bool finished = false;
  bool listening = false;
  bool started = false;
  bool stopped = false;

  mutable std::mutex stats_mu;
  ServerStats stats;

  Impl(ServerConfig c, std::unique_ptr<providers::FrameSource> s,
       std::unique_ptr<providers::Provider> p, EventLog* l)
      : config(std::move(c)),
        source(std::move(s)),
        provider(std::move(p)),
        log(l ? l : &null_log),
        registry(config.heartbeat_timeout) {}

  // -- command context
  void Post(std::function<void()> task) {
    {
      std::lock_guard lock(control_mu);
      control_queue.push_back(std::move(task));
    }
    control_cv.notify_one();
  }

  void ControlLoop() {
    std::unique_lock lock(control_mu);
    while (true) {
      control_cv.wait(lock, [&] { return control_stop || !control_queue.empty(); });
      if (control_queue.empty()) return;
      auto task = std::move(control_queue.front());
      control_queue.pop_front();
      lock.unlock();
      task();
      lock.lock();
    }
  }

  void NoteTransition(const std::optional<server::Transition>& t, std::string_view cause) {
    if (t) log->Transition(*t, cause);
  }

  void BroadcastState() {
    const std::string line = "STATE " + session.Describe();
    std::lock_guard lock(ws_mu);
    for (const auto& s : ws_sessions) s->SendText(line);
  }

  // Runs in the command context.
  std::string RunCommand(const std::string& text) {
    {
      std::lock_guard lock(stats_mu);
      ++stats.commands;
    }
    try {
      const Command cmd = Command::Parse(text);
      NoteTransition(session.Handle(cmd), ToString(cmd.kind));
      BroadcastState();
      return "OK " + session.Describe();
    } catch (const Error& e) {
      log->Write({{"event", "command_error"}, {"command", text}, {"error", e.what()}});
      return "ERR " + std::string(ToString(e.code()));
    } catch (const std::exception& e) {
      log->Write({{"event", "command_error"}, {"command", text}, {"error", e.what()}});
      return "ERR " + std::string(ToString(ErrorCode::kInvalidArgument));
    }
  }

  // Any transport: `PING` answers at once, `CMD ...` goes through the
  // command context. `reply` may run on another thread.
  void HandleLine(std::string line, std::function<void(std::string)> reply) {
    line = Trim(std::move(line));
    if (line == "PING") return reply("PONG");
    if (line == "CMD" || line.rfind("CMD ", 0) == 0) {
      std::string rest = line.size() > 3 ? line.substr(4) : "";
      Post([this, rest = std::move(rest), reply = std::move(reply)] {
        reply(RunCommand(rest));
      });
      return;
    }
    reply("ERR " + std::string(ToString(ErrorCode::kUnknownCommand)));
  }

  // -- ConnectionHandler
  void OnOpen(const std::shared_ptr<WsSession>& s) override {
    s->id = registry.Add(s, Clock::now());
    {
      std::lock_guard lock(ws_mu);
      ws_sessions.insert(s);
    }
    log->Write({{"event", "client_subscribed"}, {"client", s->label()}});
    Post([this, s] { s->SendText("STATE " + session.Describe()); });
  }

  void OnText(const std::shared_ptr<WsSession>& s, std::string text) override {
    if (s->id) registry.Heartbeat(*s->id, Clock::now());
    HandleLine(std::move(text), [s](std::string r) { s->SendText(std::move(r)); });
  }

  void OnClosed(const std::shared_ptr<WsSession>& s) override {
    if (s->id && registry.Remove(*s->id)) {
      log->Write({{"event", "client_closed"}, {"client", s->label()}});
    }
    std::lock_guard lock(ws_mu);
    ws_sessions.erase(s);
  }

  // -- io thread
  void ReplyUdp(const udp::endpoint& to, const std::string& text) {
    ::sendto(udp_socket->native_handle(), text.data(), text.size(), MSG_NOSIGNAL,
             to.data(), static_cast<socklen_t>(to.size()));
  }

  void ReceiveUdp() {
    udp_socket->async_receive_from(
        asio::buffer(udp_buffer), udp_peer,
        [this](boost::system::error_code ec, std::size_t n) {
          if (ec == asio::error::operation_aborted) return;
          if (!ec) OnDatagram(std::string(udp_buffer.begin(), udp_buffer.begin() + n));
          ReceiveUdp();
        });
  }

  void OnDatagram(std::string text) {
    const udp::endpoint peer = udp_peer;
    const auto now = Clock::now();
    text = Trim(std::move(text));
    auto it = udp_clients.find(peer);
    const bool live = it != udp_clients.end() && registry.Contains(it->second);
    if (text == "SUBSCRIBE") {
      if (live) {
        registry.Heartbeat(it->second, now);
      } else {
        udp_clients[peer] = registry.Add(
            std::make_shared<UdpSink>(udp_socket->native_handle(), peer), now);
        log->Write({{"event", "client_subscribed"}, {"client", EndpointLabel(peer)}});
      }
      return ReplyUdp(peer, "OK");
    }
    if (text == "UNSUBSCRIBE") {
      if (it != udp_clients.end()) {
        registry.Remove(it->second);
        udp_clients.erase(it);
        log->Write({{"event", "client_unsubscribed"}, {"client", EndpointLabel(peer)}});
      }
      return ReplyUdp(peer, "OK");
    }
    if (text == "PING" && !live) {
      return ReplyUdp(peer, "ERR " + std::string(ToString(ErrorCode::kNotSubscribed)));
    }
    if (live) registry.Heartbeat(it->second, now);
    HandleLine(std::move(text), [this, peer](std::string r) {
      asio::post(io, [this, peer, r = std::move(r)] { ReplyUdp(peer, r); });
    });
  }

  void Accept() {
    acceptor->async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (ec == asio::error::operation_aborted) return;
      if (!ec) {
        socket.set_option(tcp::no_delay(true), ec);
        std::make_shared<WsSession>(std::move(socket), this)->Run();
      }
      Accept();
    });
  }

  void Sweep() {
    sweep_timer->expires_after(std::chrono::milliseconds(250));
    sweep_timer->async_wait([this](boost::system::error_code ec) {
      if (ec) return;
      ReportDropped(registry.Evict(Clock::now()), "heartbeat");
      for (auto it = udp_clients.begin(); it != udp_clients.end();) {
        it = registry.Contains(it->second) ? std::next(it) : udp_clients.erase(it);
      }
      Sweep();
    });
  }

  void ReportDropped(const std::vector<std::string>& labels, std::string_view reason) {
    for (const auto& l : labels) {
      log->Write({{"event", "client_evicted"}, {"client", l}, {"reason", reason}});
    }
  }

  // -- pipeline
  void Fanout(std::vector<protocol::Bytes> packets) {
    auto shared = std::make_shared<const std::vector<protocol::Bytes>>(std::move(packets));
    ReportDropped(registry.Broadcast(shared, Clock::now()), "send_errors");
  }

  void Finish(FrameRecord record) {
    {
      std::lock_guard lock(stats_mu);
      if (record.outcome == "paired") {
        ++stats.paired;
      } else if (record.outcome == "rejected") {
        ++stats.rejected;
      } else {
        ++stats.failed;
      }
    }
    log->Frame(record);
    if (observer) observer(record);
  }

  void AcquireLoop() {
    using namespace std::chrono;
    const auto period = duration_cast<Clock::duration>(duration<double>(1.0 / config.fps));
    auto next = Clock::now();
    std::uint32_t frame_id = 0;
    while (running) {
      {
        std::unique_lock lock(pace_mu);
        pace_cv.wait_until(lock, next, [&] { return !running.load(); });
      }
      if (!running) break;
      if (config.max_frames && frame_id >= *config.max_frames) break;

      FrameRecord rec;
      rec.frame_id = frame_id;
      rec.acquire_start = Clock::now();
      std::optional<providers::SourceFrame> frame;
      try {
        frame = source->Next();
      } catch (const Error& e) {
        log->Write({{"event", "source_error"}, {"error", e.what()}});
        break;
      }
      if (!frame) break;
      rec.acquired = Clock::now();
      auto image = std::make_shared<const GrayImage>(std::move(frame->image));
      auto packets = protocol::EncodeRaw(frame_id, *image);
      rec.encoded = Clock::now();
      Fanout(std::move(packets));
      rec.sent = Clock::now();
      {
        std::lock_guard lock(stats_mu);
        ++stats.frames;
      }

      providers::FrameRequest req{frame_id, *image, std::move(frame->ground_truth),
                                  frame->pixel_spacing};
      rec.submitted = Clock::now();
      {
        std::lock_guard lock(inflight_mu);
        inflight[frame_id] = Inflight{image, frame->pixel_spacing, rec};
      }
      if (!provider->Submit(std::move(req))) {
        {
          std::lock_guard lock(inflight_mu);
          inflight.erase(frame_id);
        }
        rec.outcome = "rejected";
        Finish(rec);
      }

      ++frame_id;
      next += period;
      // After a long stall, restart the schedule instead of bursting.
      if (Clock::now() - next > period) next = Clock::now();
    }
    source_done = true;
    Post([this] { NoteTransition(session.Stop(), "source_exhausted"); });
    log->Write({{"event", "source_done"}, {"frames", frame_id}});
  }

  void CompletionLoop() {
    const auto give_up = providers::Provider::kTimeout + std::chrono::milliseconds(500);
    while (running) {
      if (auto r = provider->Poll(std::chrono::milliseconds(20))) OnResult(std::move(*r));

      // Frames the provider never answered.
      const auto now = Clock::now();
      std::vector<FrameRecord> lost;
      bool empty = false;
      {
        std::lock_guard lock(inflight_mu);
        for (auto it = inflight.begin(); it != inflight.end();) {
          if (now - it->second.record.submitted > give_up) {
            lost.push_back(it->second.record);
            it = inflight.erase(it);
          } else {
            ++it;
          }
        }
        empty = inflight.empty();
      }
      for (auto& rec : lost) {
        rec.outcome = std::string(ToString(ErrorCode::kProviderTimeout));
        Finish(rec);
      }
      if (source_done && empty) {
        std::lock_guard lock(done_mu);
        finished = true;
        done_cv.notify_all();
      }
    }
  }

  void OnResult(providers::SegmentResult r) {
    Inflight entry;
    {
      std::lock_guard lock(inflight_mu);
      auto it = inflight.find(r.frame_id);
      if (it == inflight.end()) return;  // already timed out
      entry = std::move(it->second);
      inflight.erase(it);
    }
    FrameRecord rec = entry.record;
    rec.segmented = r.completed;
    if (r.ok() && (r.mask->width != entry.image->width ||
                   r.mask->height != entry.image->height)) {
      r.error = ErrorCode::kDimensionMismatch;
      r.message = "mask size differs from the image";
      r.mask.reset();
    }
    if (!r.ok()) {
      rec.outcome = std::string(ToString(r.error.value_or(ErrorCode::kProviderCrashed)));
      log->Write({{"event", "provider_error"},
                  {"frame_id", r.frame_id},
                  {"error", rec.outcome},
                  {"message", r.message}});
      Finish(rec);
      return;
    }
    r.mask->pixel_spacing = entry.pixel_spacing;
    auto packets = protocol::EncodePair(r.frame_id, *entry.image, *r.mask);
    rec.pair_encoded = Clock::now();
    Fanout(std::move(packets));
    rec.pair_sent = Clock::now();
    rec.outcome = "paired";

    protocol::AlignedPair pair{r.frame_id, *entry.image, std::move(*r.mask),
                               std::chrono::duration<double, std::milli>(
                                   r.completed - rec.acquired)
                                   .count()};
    Post([this, pair = std::move(pair)]() mutable { session.OnPair(std::move(pair)); });
    Finish(rec);
  }
};

Server::Server(ServerConfig config, std::unique_ptr<providers::FrameSource> source,
               std::unique_ptr<providers::Provider> provider, EventLog* log)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(source),
                                   std::move(provider), log)) {
  impl_->config.Validate();
  impl_->control_thread = std::thread([this] { impl_->ControlLoop(); });
}

Server::~Server() {
  Stop();
  {
    std::lock_guard lock(impl_->control_mu);
    impl_->control_stop = true;
  }
  impl_->control_cv.notify_all();
  impl_->control_thread.join();
}

void Server::SetFrameObserver(std::function<void(const FrameRecord&)> observer) {
  impl_->observer = std::move(observer);
}

void Server::Listen() {
  Impl& s = *impl_;
  if (s.listening) return;
  const auto address = asio::ip::make_address(s.config.bind);

  s.udp_socket = std::make_unique<udp::socket>(s.io);
  s.udp_socket->open(address.is_v6() ? udp::v6() : udp::v4());
  s.udp_socket->set_option(udp::socket::reuse_address(true));
  EnlargeBuffers(s.udp_socket->native_handle());
  s.udp_socket->bind(udp::endpoint(address, s.config.udp_port));

  const tcp::endpoint ws_ep(address, s.config.ws_port);
  s.acceptor = std::make_unique<tcp::acceptor>(s.io);
  s.acceptor->open(ws_ep.protocol());
  s.acceptor->set_option(tcp::acceptor::reuse_address(true));
  s.acceptor->bind(ws_ep);
  s.acceptor->listen();
  s.sweep_timer = std::make_unique<asio::steady_timer>(s.io);

  s.listening = true;
  s.ReceiveUdp();
  s.Accept();
  s.Sweep();
  s.io_thread = std::thread([&s] { s.io.run(); });
}

void Server::Start() {
  Impl& s = *impl_;
  if (s.started) throw Error(ErrorCode::kIllegalTransition, "server already started");
  Listen();
  s.started = true;
  s.running = true;
  s.log->Write({{"event", "server_started"},
                {"udp_port", udp_port()},
                {"ws_port", ws_port()},
                {"source", s.config.source},
                {"provider", s.provider->name()},
                {"fps", s.config.fps}});
  s.Post([&s] { s.NoteTransition(s.session.Start(), "stream_started"); });
  s.completion_thread = std::thread([&s] { s.CompletionLoop(); });
  s.acquire_thread = std::thread([&s] { s.AcquireLoop(); });
}

void Server::Stop() {
  Impl& s = *impl_;
  if (!s.listening || s.stopped) return;
  s.stopped = true;
  s.running = false;
  s.pace_cv.notify_all();
  if (s.acquire_thread.joinable()) s.acquire_thread.join();
  if (s.completion_thread.joinable()) s.completion_thread.join();
  s.io.stop();
  s.io_thread.join();
  {
    std::lock_guard lock(s.ws_mu);
    s.ws_sessions.clear();
  }
  for (const auto& [ep, id] : s.udp_clients) s.registry.Remove(id);
  s.registry.Evict(Clock::time_point::max());
  {
    std::lock_guard lock(s.done_mu);
    s.finished = true;
  }
  s.done_cv.notify_all();
  s.log->Write({{"event", "server_stopped"}});
}

bool Server::Wait(Clock::duration wait) {
  std::unique_lock lock(impl_->done_mu);
  return impl_->done_cv.wait_for(lock, wait, [&] { return impl_->finished; });
}

std::uint16_t Server::udp_port() const {
  return impl_->udp_socket ? impl_->udp_socket->local_endpoint().port() : 0;
}

std::uint16_t Server::ws_port() const {
  return impl_->acceptor ? impl_->acceptor->local_endpoint().port() : 0;
}

ServerStats Server::stats() const {
  std::lock_guard lock(impl_->stats_mu);
  ServerStats out = impl_->stats;
  out.clients = impl_->registry.size();
  return out;
}

std::string Server::Execute(const std::string& line) {
  auto done = std::make_shared<std::promise<std::string>>();
  auto result = done->get_future();
  impl_->HandleLine(line, [done](std::string r) { done->set_value(std::move(r)); });
  return result.get();
}

std::string Server::DescribeSession() {
  auto done = std::make_shared<std::promise<std::string>>();
  auto result = done->get_future();
  impl_->Post([this, done] { done->set_value(impl_->session.Describe()); });
  return result.get();
}

}  // namespace usar::server

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
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "usar/protocol.hpp"
#include "usar/providers.hpp"
#include "usar/session.hpp"
#include "usar/sources.hpp"

namespace usar::server {

using Clock = std::chrono::steady_clock;

// Everything `serve` can be told, from flags or a key=value file.
struct ServerConfig {
  std::string source = "phantom";  // phantom | replay:<dir>
  std::string provider = "oracle";
  providers::LatencyModel latency;
  double fps = 30.0;
  std::string bind = "0.0.0.0";
  std::uint16_t udp_port = 9000;  // 0 picks a free port
  std::uint16_t ws_port = 9001;
  double pixel_spacing = 0.5;
  int width = 512;  // phantom only
  int height = 512;
  std::uint64_t seed = 1;
  providers::ArtifactMode artifact = providers::ArtifactMode::kNone;
  std::optional<std::uint64_t> max_frames;
  std::string event_log;  // path, "-" for stdout, empty for none
  std::chrono::milliseconds heartbeat_timeout{5000};

  // Keys match the long flags; '-' and '_' are interchangeable.
  // Throws kInvalidArgument for unknown keys or bad values.
  void Set(const std::string& key, const std::string& value);
  // Applies `key = value` lines; '#' starts a comment.
  void Load(const std::filesystem::path& path);
  void Validate() const;

  providers::PhantomSpec Phantom() const;
  std::unique_ptr<providers::FrameSource> MakeSource() const;
  std::unique_ptr<providers::Provider> MakeProvider() const;
};

// Per-frame stage timestamps. Channel-0 fields are always set; the rest
// depend on how the provider fared.
struct FrameRecord {
  std::uint32_t frame_id = 0;
  Clock::time_point acquire_start;
  Clock::time_point acquired;
  Clock::time_point encoded;
  Clock::time_point sent;
  Clock::time_point submitted;
  std::optional<Clock::time_point> segmented;
  std::optional<Clock::time_point> pair_encoded;
  std::optional<Clock::time_point> pair_sent;
  std::string outcome;  // paired | rejected | <ERROR_CODE>
};

// JSON lines. Thread-safe; a null stream discards everything.
class EventLog {
 public:
  explicit EventLog(std::ostream* out = nullptr, Clock::time_point epoch = Clock::now());
  static std::unique_ptr<EventLog> Open(const std::string& target);

  void Write(nlohmann::json line);
  void Transition(const server::Transition& t, std::string_view cause);
  void Frame(const FrameRecord& r);

  // Microseconds since the log's epoch.
  std::int64_t Micros(Clock::time_point t) const;

 private:
  std::unique_ptr<std::ofstream> owned_;
  std::ostream* out_;
  Clock::time_point epoch_;
  std::mutex mu_;
};

// Anything that can receive a frame's packets.
class Sink {
 public:
  using Packets = std::shared_ptr<const std::vector<protocol::Bytes>>;
  virtual ~Sink() = default;
  // False on a send error.
  virtual bool Send(const Packets& packets) = 0;
  virtual std::string label() const = 0;
  // Called once the registry has dropped this client.
  virtual void Close() {}
};

// Subscribed clients on every transport, with heartbeat and error tracking.
class ClientRegistry {
 public:
  using ClientId = std::uint64_t;
  static constexpr int kMaxConsecutiveErrors = 3;

  explicit ClientRegistry(Clock::duration heartbeat_timeout = std::chrono::seconds(5));

  ClientId Add(std::shared_ptr<Sink> sink, Clock::time_point now);
  bool Heartbeat(ClientId id, Clock::time_point now);
  bool Remove(ClientId id);
  bool Contains(ClientId id) const;
  std::size_t size() const;

  // Drops clients silent for longer than the heartbeat timeout.
  std::vector<std::string> Evict(Clock::time_point now);

  // Sends to every live client. A client with kMaxConsecutiveErrors failed
  // frames in a row is dropped; returns the labels dropped this call.
  std::vector<std::string> Broadcast(const Sink::Packets& packets, Clock::time_point now);

 private:
  struct Entry {
    std::shared_ptr<Sink> sink;
    Clock::time_point last_heartbeat;
    int consecutive_errors = 0;
  };
  Clock::duration timeout_;
  mutable std::mutex mu_;
  ClientId next_id_ = 1;
  std::map<ClientId, Entry> clients_;
};

struct ServerStats {
  std::uint64_t frames = 0;
  std::uint64_t paired = 0;
  std::uint64_t rejected = 0;
  std::uint64_t failed = 0;
  std::uint64_t commands = 0;
  std::size_t clients = 0;
};

// The live pipeline: acquisition and dispatch, provider completions, client
// I/O, and the session's command context each run on their own thread.
class Server {
 public:
  Server(ServerConfig config, std::unique_ptr<providers::FrameSource> source,
         std::unique_ptr<providers::Provider> provider, EventLog* log = nullptr);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Called once per frame when its lifecycle ends, from whichever pipeline
  // thread ended it. Set before Start().
  void SetFrameObserver(std::function<void(const FrameRecord&)> observer);

  // Binds sockets and starts client I/O, so clients can subscribe before
  // the first frame. Throws on bind failure.
  void Listen();
  // Starts the pipeline, listening first if needed.
  void Start();
  // Stops everything; idempotent.
  void Stop();
  // Blocks until the source ran dry and in-flight frames settled, or until
  // `wait` elapses. True when finished.
  bool Wait(Clock::duration wait);

  std::uint16_t udp_port() const;
  std::uint16_t ws_port() const;
  ServerStats stats() const;

  // Runs one text line (`CMD ...` or `PING`) in the command context and
  // returns the reply.
  std::string Execute(const std::string& line);

  // Session snapshot taken in the command context.
  std::string DescribeSession();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace usar::server

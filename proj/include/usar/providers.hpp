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

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "usar/error.hpp"
#include "usar/mask.hpp"
#include "usar/sources.hpp"

namespace usar::providers {

using Clock = std::chrono::steady_clock;

// Simulated inference delay, truncated at zero.
struct LatencyModel {
  double mean_ms = 0.0;
  double std_ms = 0.0;

  static LatencyModel NnUnetLike() { return {338.0, 45.8}; }
  static LatencyModel SegmenterLike() { return {23.4, 2.5}; }
  // "mean,std" as given on the command line.
  static LatencyModel Parse(const std::string& text);
  void Validate() const;
};

struct FrameRequest {
  std::uint32_t frame_id = 0;
  GrayImage image;
  std::optional<Mask> ground_truth;  // consumed by the oracle only
  double pixel_spacing = 1.0;
};

struct SegmentResult {
  std::uint32_t frame_id = 0;
  std::optional<Mask> mask;
  std::optional<ErrorCode> error;
  std::string message;
  Clock::time_point submitted;
  Clock::time_point completed;

  bool ok() const { return mask.has_value(); }
  double delay_ms() const {
    return std::chrono::duration<double, std::milli>(completed - submitted)
        .count();
  }
};

struct ProviderStats {
  std::uint64_t submitted = 0;
  std::uint64_t rejected = 0;  // not accepted: busy or disconnected
  std::uint64_t completed = 0;
  std::uint64_t failed = 0;
  std::uint64_t mismatched_replies = 0;
};

// Requests go in from one thread; results come out on another, in any order.
class Provider {
 public:
  static constexpr std::chrono::milliseconds kTimeout{2000};

  virtual ~Provider() = default;
  virtual std::string name() const = 0;
  // False when the request was not accepted; no result follows.
  virtual bool Submit(FrameRequest request) = 0;
  // Next finished result, waiting at most `wait`.
  virtual std::optional<SegmentResult> Poll(Clock::duration wait) = 0;
  virtual ProviderStats stats() const = 0;
};

// Blocks until the result for `request.frame_id` arrives. Results for other
// ids that show up meanwhile are dropped. Throws kProviderTimeout,
// kProviderCrashed, or the provider's own error.
Mask Segment(Provider& provider, FrameRequest request,
             Clock::duration timeout = Provider::kTimeout);

// Erodes the union foreground by a disk of radius r; survivors keep labels.
Mask Erode(const Mask& mask, int radius);

// Thread-safe results queue shared by provider implementations.
class ResultQueue {
 public:
  void Push(SegmentResult r);
  std::optional<SegmentResult> Pop(Clock::duration wait);

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<SegmentResult> items_;
};

// Returns the request's ground truth, optionally eroded, after a simulated
// delay. Requests are timed independently, so slow profiles overlap.
class OracleProvider : public Provider {
 public:
  OracleProvider(int erosion_radius = 0, LatencyModel latency = {},
                 std::uint64_t seed = 1);
  ~OracleProvider() override;

  std::string name() const override;
  bool Submit(FrameRequest request) override;
  std::optional<SegmentResult> Poll(Clock::duration wait) override;
  ProviderStats stats() const override;

 private:
  struct Pending {
    Clock::time_point due;
    SegmentResult result;
    bool operator>(const Pending& o) const { return due > o.due; }
  };
  void Run();

  int erosion_radius_;
  LatencyModel latency_;
  std::mt19937_64 rng_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::pair<FrameRequest, Clock::time_point>> inbox_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> waiting_;
  bool stop_ = false;
  ProviderStats stats_;
  ResultQueue results_;
  std::thread worker_;
};

// Integration point for out-of-process models. Listens on host:port and
// accepts one model process at a time. Each request travels as channel-0
// packets, each reply as channel-1 packets with the same frame_id, every
// packet preceded by its length as a little-endian u32.
class BridgeProvider : public Provider {
 public:
  BridgeProvider(const std::string& host, std::uint16_t port,
                 std::size_t max_in_flight = 4);
  ~BridgeProvider() override;

  std::string name() const override;
  bool Submit(FrameRequest request) override;
  std::optional<SegmentResult> Poll(Clock::duration wait) override;
  ProviderStats stats() const override;

  std::uint16_t port() const;
  bool connected() const;
  // Waits until a model process has connected.
  bool WaitForConnection(Clock::duration wait);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// The model side of the bridge: connects, answers every channel-0 frame with
// `segment(frame_id, image)`. Returns when the server closes the connection
// or `stop` becomes true.
using SegmentFn = std::function<Mask(std::uint32_t frame_id, const GrayImage&)>;
void RunBridgeClient(const std::string& host, std::uint16_t port,
                     const SegmentFn& segment,
                     const std::atomic<bool>* stop = nullptr);

// Reference model for the bridge: regenerates phantom ground truth for
// t = frame_id and erodes it like the in-process oracle.
SegmentFn PhantomOracleModel(PhantomSpec spec, int erosion_radius = 0);

// Parses `oracle`, `oracle:erode=<r>`, or `bridge:<host:port>`.
struct ProviderSpec {
  enum class Kind { kOracle, kBridge } kind = Kind::kOracle;
  int erosion_radius = 0;
  std::string host;
  std::uint16_t port = 0;

  static ProviderSpec Parse(const std::string& text);
};

std::unique_ptr<Provider> MakeProvider(const ProviderSpec& spec,
                                       LatencyModel latency,
                                       std::uint64_t seed = 1);

}  // namespace usar::providers

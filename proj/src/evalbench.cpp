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

#include "usar/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "usar/client.hpp"
#include "usar/geometry.hpp"
#include "usar/server.hpp"

namespace usar::evalbench {
namespace {

using Clock = std::chrono::steady_clock;

double Ms(Clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); }

const char* ViewName(geometry::View v) {
  return v == geometry::View::kCoronal ? "coronal" : "transverse";
}

std::optional<double> Get(const geometry::KidneyMeasurement& m, Measure which) {
  switch (which) {
    case Measure::kLength: return m.length_mm;
    case Measure::kWidth: return m.width_mm;
    case Measure::kThickness: return m.thickness_mm;
  }
  return std::nullopt;
}

std::optional<double> AbsDiff(std::optional<double> a, std::optional<double> b) {
  if (!a || !b) return std::nullopt;
  return std::abs(*a - *b);
}

// Sorted by name so every reduction below sees the same order.
std::vector<const providers::SourceFrame*> ByName(
    const std::vector<providers::SourceFrame>& dataset) {
  std::vector<const providers::SourceFrame*> out;
  for (const auto& f : dataset) out.push_back(&f);
  std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) {
    return a->name != b->name ? a->name < b->name : a->index < b->index;
  });
  return out;
}

providers::FrameRequest RequestFor(const providers::SourceFrame& f, std::uint32_t id) {
  providers::FrameRequest r;
  r.frame_id = id;
  r.image = f.image;
  r.ground_truth = f.ground_truth;
  r.pixel_spacing = f.pixel_spacing;
  return r;
}

ErrorRow Reduce(std::string label, const std::vector<SampleError>& samples,
                bool baseline) {
  ErrorRow row;
  row.label = std::move(label);
  for (Measure m : kMeasures) {
    std::vector<double> v;
    for (const auto& s : samples) {
      const auto& e = (baseline ? s.baseline : s.model)[static_cast<int>(m)];
      if (e) v.push_back(*e);
    }
    if (v.empty()) continue;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    row.stats[static_cast<int>(m)] = ErrorStat{mean, std::sqrt(ss / v.size()), int(v.size())};
  }
  return row;
}

nlohmann::json RowJson(const ErrorRow& row) {
  nlohmann::json j{{"label", row.label}};
  for (Measure m : kMeasures) {
    const auto& s = row.at(m);
    j[ToString(m)] = s ? nlohmann::json{{"mean_mm", s->mean_mm},
                                        {"std_mm", s->std_mm},
                                        {"n", s->n}}
                       : nlohmann::json(nullptr);
  }
  return j;
}

nlohmann::json StatsJson(const StageStats& s) {
  return {{"count", s.count}, {"mean_ms", s.mean_ms}, {"std_ms", s.std_ms},
          {"p50_ms", s.p50_ms}, {"p99_ms", s.p99_ms}};
}

}  // namespace

const char* ToString(Measure m) {
  switch (m) {
    case Measure::kLength: return "length";
    case Measure::kWidth: return "width";
    case Measure::kThickness: return "thickness";
  }
  return "?";
}

// --- Segmentation ----------------------------------------------------------

SegmentationEval EvalSegmentation(const std::vector<providers::SourceFrame>& dataset,
                                  providers::Provider& provider) {
  if (dataset.empty()) throw Error(ErrorCode::kEmptyDataset, "dataset has no samples");
  SegmentationEval out;
  std::vector<Mask> preds, gts;
  std::vector<std::string> names;
  std::vector<double> delays;
  std::uint32_t id = 0;
  for (const auto* f : ByName(dataset)) {
    if (!f->ground_truth) {
      throw Error(ErrorCode::kMalformedFile, f->name + ": no ground-truth mask");
    }
    const auto start = Clock::now();
    try {
      preds.push_back(providers::Segment(provider, RequestFor(*f, id++)));
      delays.push_back(Ms(Clock::now() - start));
    } catch (const Error&) {
      out.failed.push_back(f->name);
      preds.emplace_back(f->ground_truth->width, f->ground_truth->height);
    }
    gts.push_back(*f->ground_truth);
    names.push_back(f->name);
  }
  out.report = metrics::Evaluate(preds, gts, names);
  out.report.model = provider.name();
  if (!delays.empty()) {
    const auto s = Summarize(delays);
    out.report.inference = metrics::TimingSummary{s.mean_ms, s.std_ms, s.count};
  }
  return out;
}

nlohmann::json ToJson(const SegmentationEval& eval) {
  auto j = metrics::ToJson(eval.report);
  j["failed"] = eval.failed;
  return j;
}

// --- Measurements ----------------------------------------------------------

ErrorTable EvalMeasurements(const std::vector<providers::SourceFrame>& dataset,
                            providers::Provider& provider) {
  if (dataset.empty()) throw Error(ErrorCode::kEmptyDataset, "dataset has no samples");
  const auto ordered = ByName(dataset);
  for (const auto* f : ordered) {
    if (!f->view) throw Error(ErrorCode::kMalformedFile, f->name + ": no view metadata");
    if (!f->ground_truth) {
      throw Error(ErrorCode::kMalformedFile, f->name + ": no ground-truth mask");
    }
  }

  ErrorTable table;
  std::uint32_t id = 0;
  for (const auto* f : ordered) {
    SampleError s;
    s.name = f->name;
    s.view = *f->view;
    try {
      Mask gt = *f->ground_truth;
      gt.pixel_spacing = f->pixel_spacing;
      Mask pred = providers::Segment(provider, RequestFor(*f, id++));
      pred.pixel_spacing = f->pixel_spacing;
      const auto truth = geometry::MeasureMask(gt, s.view).measurement;
      const auto automatic = geometry::MeasureMask(pred, s.view).measurement;
      for (Measure m : kMeasures) {
        const int i = static_cast<int>(m);
        s.model[i] = AbsDiff(Get(automatic, m), Get(truth, m));
        s.baseline[i] = AbsDiff(Get(truth, m), Get(f->reference, m));
      }
    } catch (const Error& e) {
      table.failed.push_back({f->name, e.code()});
      continue;
    }
    table.samples.push_back(std::move(s));
  }
  table.n_samples = static_cast<int>(table.samples.size());
  table.model = Reduce(provider.name(), table.samples, false);
  table.baseline = Reduce("ground truth", table.samples, true);
  return table;
}

std::string ToText(const ErrorTable& table) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-20s %18s %18s %18s\n", "Errors (mm)", "Length",
                "Width", "Thickness");
  os << line;
  for (const ErrorRow* row : {&table.model, &table.baseline}) {
    std::string cells[3];
    for (Measure m : kMeasures) {
      const auto& s = row->at(m);
      char c[64] = "-";
      if (s) std::snprintf(c, sizeof(c), "%.2f +- %.2f", s->mean_mm, s->std_mm);
      cells[static_cast<int>(m)] = c;
    }
    std::snprintf(line, sizeof(line), "%-20s %18s %18s %18s\n", row->label.c_str(),
                  cells[0].c_str(), cells[1].c_str(), cells[2].c_str());
    os << line;
  }
  os << "n_samples=" << table.n_samples << " failed=" << table.failed.size() << "\n";
  for (const auto& f : table.failed) {
    os << "  failed " << f.name << " " << usar::ToString(f.code) << "\n";
  }
  return os.str();
}

nlohmann::json ToJson(const ErrorTable& table) {
  nlohmann::json j;
  j["kind"] = "measurement";
  j["n_samples"] = table.n_samples;
  j["model"] = RowJson(table.model);
  j["baseline"] = RowJson(table.baseline);
  auto& failed = j["failed"] = nlohmann::json::array();
  for (const auto& f : table.failed) {
    failed.push_back({{"name", f.name}, {"error", usar::ToString(f.code)}});
  }
  auto& samples = j["samples"] = nlohmann::json::array();
  for (const auto& s : table.samples) {
    nlohmann::json e{{"name", s.name}, {"view", ViewName(s.view)}};
    for (Measure m : kMeasures) {
      const int i = static_cast<int>(m);
      if (s.model[i]) e["model_" + std::string(ToString(m)) + "_mm"] = *s.model[i];
      if (s.baseline[i]) e["baseline_" + std::string(ToString(m)) + "_mm"] = *s.baseline[i];
    }
    samples.push_back(std::move(e));
  }
  return j;
}

// --- Latency bench ---------------------------------------------------------

StageStats Summarize(std::vector<double> v) {
  StageStats s;
  s.count = static_cast<long>(v.size());
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  s.mean_ms = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean_ms) * (x - s.mean_ms);
  s.std_ms = std::sqrt(ss / v.size());
  auto pct = [&](double p) {
    const double pos = p * (v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - lo) * (v[hi] - v[lo]);
  };
  s.p50_ms = pct(0.50);
  s.p99_ms = pct(0.99);
  return s;
}

const StageStats& LatencyReport::stage(std::string_view name) const {
  for (std::size_t i = 0; i < kStages.size(); ++i) {
    if (name == kStages[i]) return stages[i];
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown stage " + std::string(name));
}

namespace {

// What the instrumented client saw, keyed by frame id.
struct ClientLog {
  std::mutex mu;
  std::map<std::uint32_t, client::FrameTiming> raw;
  std::map<std::uint32_t, Clock::time_point> pair_decoded;
  std::vector<double> measure_ms;
  std::vector<double> lag;
  std::optional<std::uint32_t> newest_raw;
};

}  // namespace

LatencyReport BenchLatency(const BenchConfig& config) {
  server::ServerConfig sc;
  sc.bind = "127.0.0.1";
  sc.udp_port = 0;
  sc.ws_port = 0;
  sc.fps = config.fps;
  sc.width = config.width;
  sc.height = config.height;
  sc.seed = config.seed;
  sc.latency = config.latency;
  sc.provider = config.provider;
  sc.max_frames = static_cast<std::uint64_t>(
      std::llround(config.fps * std::chrono::duration<double>(config.duration).count()));
  sc.Validate();

  std::mutex records_mu;
  std::map<std::uint32_t, server::FrameRecord> records;
  ClientLog seen;

  server::Server srv(sc, sc.MakeSource(), sc.MakeProvider());
  srv.SetFrameObserver([&](const server::FrameRecord& r) {
    std::lock_guard lock(records_mu);
    records[r.frame_id] = r;
  });
  srv.Listen();

  client::UdpClient::Options opts;
  opts.port = srv.udp_port();
  opts.heartbeat = std::chrono::milliseconds(500);
  {
    client::UdpClient udp(opts, [&](const protocol::CompletedFrame& f,
                                    const client::FrameTiming& t) {
      if (f.channel == protocol::Channel::kRawImage) {
        std::lock_guard lock(seen.mu);
        seen.raw[f.frame_id] = t;
        if (!seen.newest_raw || f.frame_id > *seen.newest_raw) seen.newest_raw = f.frame_id;
        return;
      }
      const auto start = Clock::now();
      double ms = 0.0;
      try {
        const auto pair = protocol::SplitPair(f, sc.pixel_spacing);
        geometry::MeasureMask(pair.mask, geometry::View::kCoronal);
        ms = Ms(Clock::now() - start);
      } catch (const Error&) {
        ms = Ms(Clock::now() - start);
      }
      std::lock_guard lock(seen.mu);
      seen.pair_decoded[f.frame_id] = t.decoded;
      seen.measure_ms.push_back(ms);
      if (seen.newest_raw) {
        seen.lag.push_back(static_cast<double>(*seen.newest_raw) - f.frame_id);
      }
    });
    if (!udp.WaitSubscribed(std::chrono::seconds(2))) {
      throw Error(ErrorCode::kProviderCrashed, "bench client could not subscribe");
    }
    srv.Start();
    srv.Wait(config.duration + std::chrono::seconds(10));
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    srv.Stop();
  }

  LatencyReport rep;
  rep.config = config;
  std::vector<double> acquire, encode, transit, decode, segment, e2e, pair_e2e;
  std::vector<Clock::time_point> arrivals;
  std::lock_guard lock(records_mu);
  std::lock_guard lock2(seen.mu);
  rep.frames_sent = records.size();
  for (const auto& [id, r] : records) {
    acquire.push_back(Ms(r.acquired - r.acquire_start));
    if (r.segmented) segment.push_back(Ms(*r.segmented - r.submitted));
    auto it = seen.raw.find(id);
    if (it != seen.raw.end()) {
      encode.push_back(Ms(r.encoded - r.acquired));
      transit.push_back(Ms(it->second.last_packet - r.encoded));
      decode.push_back(Ms(it->second.decoded - it->second.last_packet));
      e2e.push_back(Ms(it->second.decoded - r.acquire_start));
      arrivals.push_back(it->second.decoded);
    }
    auto p = seen.pair_decoded.find(id);
    if (p != seen.pair_decoded.end()) pair_e2e.push_back(Ms(p->second - r.acquire_start));
  }
  rep.frames_received = seen.raw.size();
  rep.pairs_received = seen.pair_decoded.size();
  rep.stages = {Summarize(acquire), Summarize(encode),  Summarize(transit),
                Summarize(decode),  Summarize(segment), Summarize(seen.measure_ms)};
  rep.end_to_end = Summarize(e2e);
  rep.pair_end_to_end = Summarize(pair_e2e);
  rep.lag_frames = Summarize(seen.lag);
  std::sort(arrivals.begin(), arrivals.end());
  if (arrivals.size() >= 2) {
    const double span = std::chrono::duration<double>(arrivals.back() - arrivals.front()).count();
    if (span > 0) rep.achieved_fps = (arrivals.size() - 1) / span;
  }
  return rep;
}

std::string ToText(const LatencyReport& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %8s %10s %10s %10s %10s\n", "Stage", "count",
                "mean (ms)", "std (ms)", "p50 (ms)", "p99 (ms)");
  os << line;
  auto row = [&](const char* name, const StageStats& s) {
    std::snprintf(line, sizeof(line), "%-16s %8ld %10.2f %10.2f %10.2f %10.2f\n", name,
                  s.count, s.mean_ms, s.std_ms, s.p50_ms, s.p99_ms);
    os << line;
  };
  for (std::size_t i = 0; i < kStages.size(); ++i) row(kStages[i], report.stages[i]);
  row("end_to_end", report.end_to_end);
  row("pair_end_to_end", report.pair_end_to_end);
  std::snprintf(line, sizeof(line), "%-16s %8ld %10.2f %10.2f %10.2f %10.2f  (frames)\n",
                "lag", report.lag_frames.count, report.lag_frames.mean_ms,
                report.lag_frames.std_ms, report.lag_frames.p50_ms, report.lag_frames.p99_ms);
  os << line;
  std::snprintf(line, sizeof(line),
                "achieved_fps=%.2f target_fps=%.2f sent=%llu received=%llu pairs=%llu\n",
                report.achieved_fps, report.config.fps,
                static_cast<unsigned long long>(report.frames_sent),
                static_cast<unsigned long long>(report.frames_received),
                static_cast<unsigned long long>(report.pairs_received));
  os << line;
  return os.str();
}

nlohmann::json ToJson(const LatencyReport& report) {
  nlohmann::json j;
  j["kind"] = "latency";
  for (std::size_t i = 0; i < kStages.size(); ++i) {
    j["stages"][kStages[i]] = StatsJson(report.stages[i]);
  }
  j["end_to_end"] = StatsJson(report.end_to_end);
  j["pair_end_to_end"] = StatsJson(report.pair_end_to_end);
  auto lag = StatsJson(report.lag_frames);
  j["lag_frames"] = {{"count", lag["count"]},  {"mean", lag["mean_ms"]},
                     {"std", lag["std_ms"]},   {"p50", lag["p50_ms"]},
                     {"p99", lag["p99_ms"]}};
  j["achieved_fps"] = report.achieved_fps;
  j["frames_sent"] = report.frames_sent;
  j["frames_received"] = report.frames_received;
  j["pairs_received"] = report.pairs_received;
  j["config"] = {{"fps", report.config.fps},
                 {"size", std::to_string(report.config.width) + "x" +
                              std::to_string(report.config.height)},
                 {"duration_s", report.config.duration.count() / 1000.0},
                 {"latency_profile", {report.config.latency.mean_ms,
                                      report.config.latency.std_ms}},
                 {"provider", report.config.provider}};
  return j;
}

}  // namespace usar::evalbench

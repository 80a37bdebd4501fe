// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#include "lpfp/perf.hpp"

#include <algorithm>
#include <charconv>
#include <string>

#include "lpfp/error.hpp"

namespace lpfp {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

bool compute_layer(const Layer& layer) {
  return layer.kind == LayerKind::conv || layer.kind == LayerKind::fc;
}

struct ComputeDims {
  std::uint64_t ic, oc, kh, kw, ohow, ihiw;
};

ComputeDims dims_of(const Layer& layer) {
  ComputeDims d{};
  d.ic = static_cast<std::uint64_t>(layer.ic);
  d.oc = static_cast<std::uint64_t>(layer.oc);
  if (layer.kind == LayerKind::fc) {
    d.kh = d.kw = 1;
    d.ohow = 1;
    d.ihiw = 1;
  } else {
    d.kh = static_cast<std::uint64_t>(layer.kh);
    d.kw = static_cast<std::uint64_t>(layer.kw);
    d.ohow = static_cast<std::uint64_t>(layer.out_shape.h) * layer.out_shape.w;
    d.ihiw = static_cast<std::uint64_t>(layer.in_shape.h) * layer.in_shape.w;
  }
  return d;
}

// Default buffer capacities model one board's fixed block-RAM budget, so a
// parallelism sweep compares configurations against the same memory. Sized
// so small early tiles stay resident while wide late layers spill.
constexpr std::uint64_t kIfmbCapBytes = 512ULL * 1024;
constexpr std::uint64_t kWbCapBytes = 1024ULL * 1024;
constexpr std::uint64_t kOfmbCapBytes = 256ULL * 1024;

void append_double(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

void validate_config(const PeConfig& cfg) {
  if (cfg.nm <= 0 || cfg.np <= 0 || cfg.pifm <= 0 || cfg.pofm <= 0 ||
      cfg.dsp_count <= 0 || !(cfg.freq_hz > 0.0) || cfg.bw_code_bits <= 0) {
    throw ConstraintError("pe config fields must be positive");
  }
  if (cfg.nm % 4 != 0) {
    throw ConstraintError("nm must be a multiple of 4 (each PE packs 4 multiplies per DSP)");
  }
  if (static_cast<long long>(cfg.nm) * cfg.np != 4LL * cfg.dsp_count) {
    throw ConstraintError("nm * np must equal 4 * dsp_count");
  }
  if (static_cast<long long>(cfg.pifm) * cfg.pofm != cfg.np) {
    throw ConstraintError("pifm * pofm must equal np");
  }
}

double peak_gops(const PeConfig& cfg) {
  return 2.0 * cfg.nm * cfg.np * cfg.freq_hz / 1e9;
}

std::uint64_t ifmb_width_bits(const PeConfig& cfg) {
  return static_cast<std::uint64_t>(cfg.nm) / 2 * cfg.pifm * cfg.bw_code_bits;
}

std::uint64_t wb_width_bits(const PeConfig& cfg) {
  return static_cast<std::uint64_t>(cfg.nm) / 2 * cfg.pofm * cfg.bw_code_bits;
}

std::uint64_t ofmb_width_bits(const PeConfig& cfg) {
  return 64ULL * static_cast<std::uint64_t>(cfg.np);
}

BufferSizes default_buffers(const PeConfig& cfg) {
  validate_config(cfg);
  BufferSizes b;
  b.ifmb_bytes = kIfmbCapBytes;
  b.wb_bytes = kWbCapBytes;
  b.ofmb_bytes = kOfmbCapBytes;
  return b;
}

std::uint64_t layer_macs(const Layer& layer) {
  if (!compute_layer(layer)) return 0;
  const ComputeDims d = dims_of(layer);
  return d.oc * d.ohow * d.ic * d.kh * d.kw;
}

std::uint64_t layer_cycles(const Layer& layer, const PeConfig& cfg) {
  validate_config(cfg);
  if (!compute_layer(layer)) return 0;
  const ComputeDims d = dims_of(layer);
  const std::uint64_t ic_chunks = ceil_div(d.ic, static_cast<std::uint64_t>(cfg.nm) / 4);
  const std::uint64_t oc_tiles = ceil_div(d.oc, 2ULL * cfg.pofm);
  const std::uint64_t px_tiles = ceil_div(d.ohow, 2ULL * cfg.pifm);
  return d.kh * d.kw * ic_chunks * oc_tiles * px_tiles;
}

std::uint64_t layer_traffic_bytes(const Layer& layer, const PeConfig& cfg,
                                  const BufferSizes& buffers) {
  validate_config(cfg);
  if (!compute_layer(layer)) return 0;
  const ComputeDims d = dims_of(layer);
  const std::uint64_t bw = static_cast<std::uint64_t>(cfg.bw_code_bits);
  const std::uint64_t in_bytes = ceil_div(d.ic * d.ihiw * bw, 8);
  const std::uint64_t w_bytes = ceil_div(d.oc * d.ic * d.kh * d.kw * bw, 8);
  const std::uint64_t out_bytes = ceil_div(d.oc * d.ohow * bw, 8);
  const std::uint64_t ic_chunks = ceil_div(d.ic, static_cast<std::uint64_t>(cfg.nm) / 4);
  const std::uint64_t oc_tiles = ceil_div(d.oc, 2ULL * cfg.pofm);
  const std::uint64_t px_tiles = ceil_div(d.ohow, 2ULL * cfg.pifm);

  std::uint64_t traffic = out_bytes;
  traffic += in_bytes * (in_bytes > buffers.ifmb_bytes ? oc_tiles : 1);
  traffic += w_bytes * (w_bytes > buffers.wb_bytes ? px_tiles : 1);
  const std::uint64_t partial_bytes = 2 * d.oc * d.ohow;
  if (ic_chunks > 1 && partial_bytes > buffers.ofmb_bytes) {
    traffic += 2 * partial_bytes * (ic_chunks - 1);  // store + reload per pass
  }
  return traffic;
}

PerfReport network_perf(const NetworkGraph& net, const PeConfig& cfg,
                        const BufferSizes& buffers) {
  validate_config(cfg);
  PerfReport report;
  report.cfg = cfg;
  report.buffers = buffers;
  report.peak_gops = peak_gops(cfg);
  const double lanes = static_cast<double>(cfg.nm) * cfg.np;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& layer = net.layers[i];
    LayerPerf lp;
    lp.index = static_cast<int>(i);
    lp.cycles = layer_cycles(layer, cfg);
    lp.macs = layer_macs(layer);
    lp.traffic_bytes = layer_traffic_bytes(layer, cfg, buffers);
    lp.utilization =
        lp.cycles == 0 ? 0.0 : static_cast<double>(lp.macs) / (static_cast<double>(lp.cycles) * lanes);
    report.layers.push_back(lp);
    report.total_cycles += lp.cycles;
    report.total_macs += lp.macs;
    report.total_traffic_bytes += lp.traffic_bytes;
  }
  if (report.total_cycles == 0) {
    throw DegenerateInputError("network has no compute layers to model");
  }
  report.seconds = static_cast<double>(report.total_cycles) / cfg.freq_hz;
  report.gops = 2.0 * static_cast<double>(report.total_macs) / report.seconds / 1e9;
  report.utilization =
      static_cast<double>(report.total_macs) / (static_cast<double>(report.total_cycles) * lanes);
  report.bandwidth_bytes_per_s =
      static_cast<double>(report.total_traffic_bytes) / report.seconds;
  return report;
}

PerfReport network_perf(const NetworkGraph& net, const PeConfig& cfg) {
  return network_perf(net, cfg, default_buffers(cfg));
}

double bandwidth_requirement(const NetworkGraph& net, const PeConfig& cfg,
                             const BufferSizes& buffers) {
  return network_perf(net, cfg, buffers).bandwidth_bytes_per_s;
}

PeConfig best_split(const std::vector<const NetworkGraph*>& nets, int nm, int np,
                    int dsp_count, double freq_hz, int bw_code_bits) {
  if (nets.empty()) throw DegenerateInputError("no networks to model");
  bool found = false;
  PeConfig best{};
  std::uint64_t best_cycles = 0;
  double best_bw = 0.0;
  for (int pifm = 1; pifm <= np; ++pifm) {
    if (np % pifm != 0) continue;
    PeConfig cfg{nm, np, pifm, np / pifm, dsp_count, freq_hz, bw_code_bits};
    validate_config(cfg);
    const BufferSizes buffers = default_buffers(cfg);
    std::uint64_t cycles = 0;
    double seconds = 0.0, traffic = 0.0;
    for (const NetworkGraph* net : nets) {
      const PerfReport r = network_perf(*net, cfg, buffers);
      cycles += r.total_cycles;
      seconds += r.seconds;
      traffic += static_cast<double>(r.total_traffic_bytes);
    }
    const double bw = traffic / seconds;
    if (!found || cycles < best_cycles ||
        (cycles == best_cycles && bw < best_bw)) {
      found = true;
      best = cfg;
      best_cycles = cycles;
      best_bw = bw;
    }
  }
  return best;
}

std::vector<SweepRow> sweep(const std::vector<const NetworkGraph*>& nets,
                            const std::vector<std::pair<int, int>>& candidates,
                            int dsp_count, double freq_hz, int bw_code_bits) {
  std::vector<std::pair<int, int>> ordered = candidates;
  std::sort(ordered.begin(), ordered.end());
  std::vector<SweepRow> rows;
  for (const auto& [nm, np] : ordered) {
    const PeConfig cfg = best_split(nets, nm, np, dsp_count, freq_hz, bw_code_bits);
    const BufferSizes buffers = default_buffers(cfg);
    SweepRow row;
    row.cfg = cfg;
    std::uint64_t macs = 0;
    double traffic = 0.0;
    for (const NetworkGraph* net : nets) {
      const PerfReport r = network_perf(*net, cfg, buffers);
      row.total_cycles += r.total_cycles;
      macs += r.total_macs;
      traffic += static_cast<double>(r.total_traffic_bytes);
    }
    const double seconds = static_cast<double>(row.total_cycles) / freq_hz;
    row.gops = 2.0 * static_cast<double>(macs) / seconds / 1e9;
    row.utilization = static_cast<double>(macs) /
                      (static_cast<double>(row.total_cycles) * cfg.nm * cfg.np);
    row.bandwidth_bytes_per_s = traffic / seconds;
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "Nm,Np,Pifm,Pofm,GOPS,utilization,bandwidth_MBps,ifmb_bits,wb_bits,ofmb_bits\n";
  for (const SweepRow& row : rows) {
    out += std::to_string(row.cfg.nm) + ',' + std::to_string(row.cfg.np) + ',' +
           std::to_string(row.cfg.pifm) + ',' + std::to_string(row.cfg.pofm) + ',';
    append_double(out, row.gops);
    out += ',';
    append_double(out, row.utilization);
    out += ',';
    append_double(out, row.bandwidth_bytes_per_s / 1e6);
    out += ',';
    out += std::to_string(ifmb_width_bits(row.cfg)) + ',' +
           std::to_string(wb_width_bits(row.cfg)) + ',' +
           std::to_string(ofmb_width_bits(row.cfg)) + '\n';
  }
  return out;
}

}  // namespace lpfp

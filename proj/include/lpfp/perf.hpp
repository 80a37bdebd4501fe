// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#ifndef LPFP_PERF_HPP
#define LPFP_PERF_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "lpfp/network.hpp"

namespace lpfp {

// Parallelism choice of the PE array. nm multipliers feed each of the np
// processing elements; the np-way parallelism splits into pifm pixel lanes
// and pofm output-channel lanes. Every cycle one PE consumes nm/4 input
// channels for a 2-pixel by 2-output-channel tile, so the array as a whole
// retires nm*np multiplies per cycle.
struct PeConfig {
  int nm = 0;
  int np = 0;
  int pifm = 0;
  int pofm = 0;
  int dsp_count = 0;
  double freq_hz = 0.0;
  int bw_code_bits = 8;  // storage width of one activation or weight code
};

// Throws ConstraintError unless nm*np = 4*dsp_count, pifm*pofm = np,
// 4 | nm, and every field is positive.
void validate_config(const PeConfig& cfg);

// 2 ops per multiply-accumulate, nm*np of them per cycle.
double peak_gops(const PeConfig& cfg);

// Per-cycle port widths of the three on-chip buffers, in bits.
std::uint64_t ifmb_width_bits(const PeConfig& cfg);  // nm/2 * pifm * bw
std::uint64_t wb_width_bits(const PeConfig& cfg);    // nm/2 * pofm * bw
std::uint64_t ofmb_width_bits(const PeConfig& cfg);  // 64 * np

// On-chip buffer capacities in bytes; the traffic model refetches any tensor
// that does not fit. Defaults scale each port width by a fixed depth.
struct BufferSizes {
  std::uint64_t ifmb_bytes = 0;
  std::uint64_t wb_bytes = 0;
  std::uint64_t ofmb_bytes = 0;
};
BufferSizes default_buffers(const PeConfig& cfg);

// Multiplies of one layer, padding taps included (the array processes the
// full tile grid; zero padding rides through it). Zero for layers the
// post-processing path absorbs.
std::uint64_t layer_macs(const Layer& layer);

// Cycles to run one layer: kernel taps, times input-channel chunks of nm/4,
// times output-channel tiles of 2*pofm, times pixel tiles of 2*pifm. The
// ceilings are lanes left idle by ragged dimensions.
std::uint64_t layer_cycles(const Layer& layer, const PeConfig& cfg);

// Off-chip bytes one layer moves under the refetch policy:
//   inputs once per output-channel tile unless resident in the IFMB,
//   weights once per pixel tile unless resident in the WB,
//   outputs once,
//   16-bit partials stored and reloaded once per extra input-channel chunk
//   when a full set of partials outgrows the OFMB.
std::uint64_t layer_traffic_bytes(const Layer& layer, const PeConfig& cfg,
                                  const BufferSizes& buffers);

struct LayerPerf {
  int index = 0;
  std::uint64_t cycles = 0;
  std::uint64_t macs = 0;
  std::uint64_t traffic_bytes = 0;
  double utilization = 0.0;
};

struct PerfReport {
  PeConfig cfg;
  BufferSizes buffers;
  std::vector<LayerPerf> layers;
  std::uint64_t total_cycles = 0;
  std::uint64_t total_macs = 0;
  std::uint64_t total_traffic_bytes = 0;
  double seconds = 0.0;
  double gops = 0.0;
  double utilization = 0.0;
  double peak_gops = 0.0;
  double bandwidth_bytes_per_s = 0.0;
};

PerfReport network_perf(const NetworkGraph& net, const PeConfig& cfg,
                        const BufferSizes& buffers);
PerfReport network_perf(const NetworkGraph& net, const PeConfig& cfg);

// Average off-chip bandwidth the configuration needs to keep the array fed.
double bandwidth_requirement(const NetworkGraph& net, const PeConfig& cfg,
                             const BufferSizes& buffers);

// Picks the (pifm, pofm) split of np that minimizes total cycles over the
// networks; ties fall to the lower bandwidth requirement, then the smaller
// pifm. Buffer sizes follow the chosen split's defaults.
PeConfig best_split(const std::vector<const NetworkGraph*>& nets, int nm, int np,
                    int dsp_count, double freq_hz, int bw_code_bits);

// One sweep point: a candidate (nm, np) with its best split, aggregated over
// the network set.
struct SweepRow {
  PeConfig cfg;
  double gops = 0.0;
  double utilization = 0.0;
  double bandwidth_bytes_per_s = 0.0;
  std::uint64_t total_cycles = 0;
};

// Evaluates every candidate (nm, np) pair over the networks; rows come back
// ordered by (nm, np).
std::vector<SweepRow> sweep(const std::vector<const NetworkGraph*>& nets,
                            const std::vector<std::pair<int, int>>& candidates,
                            int dsp_count, double freq_hz, int bw_code_bits);

// CSV with header Nm,Np,Pifm,Pofm,GOPS,utilization,bandwidth_MBps,
// ifmb_bits,wb_bits,ofmb_bits; one row per sweep point.
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace lpfp

#endif

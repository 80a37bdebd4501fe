// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#include "lpfp/engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <mutex>
#include <thread>
#include <utility>

#include "lpfp/error.hpp"

namespace lpfp {
namespace {

int scheme_sf(const QuantScheme& scheme, const std::string& id) {
  auto it = scheme.scale_factors.find(id);
  if (it == scheme.scale_factors.end()) {
    throw ConstraintError("scheme has no scale factor for tensor " + id);
  }
  return it->second;
}

std::vector<double> to_doubles(const std::vector<float>& v) {
  return std::vector<double>(v.begin(), v.end());
}

// Contiguous block split across threads; every index writes only its own
// outputs, so results are identical for any thread count. Exceptions from
// workers (e.g. accumulator overflow) are rethrown on the caller.
void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  threads = std::clamp(threads, 1, n > 0 ? n : 1);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mu;
  for (int t = 0; t < threads; ++t) {
    const int lo = static_cast<int>(static_cast<long long>(n) * t / threads);
    const int hi = static_cast<int>(static_cast<long long>(n) * (t + 1) / threads);
    pool.emplace_back([&, lo, hi] {
      try {
        for (int i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

const CodedTensor& source_tensor(const std::vector<CodedTensor>& outputs,
                                 const CodedTensor& input, int src) {
  return src == kInputSource ? input : outputs[src];
}

const FpTensor& source_fp(const std::vector<FpTensor>& outputs, const FpTensor& input,
                          int src) {
  return src == kInputSource ? input : outputs[src];
}

// Signed value of a code on the format's finest grid 2^(min_exponent - a);
// exact for every representable value that fits the 64-bit grid.
std::int64_t grid_int(const LpfpCode& c) {
  const int sig = significand_int(c);
  const int shift = effective_exponent(c) - c.fmt.min_exponent();
  if (sig != 0 && shift + std::bit_width(static_cast<unsigned>(sig)) > 62) {
    throw FixedOverflowError("code value for " + format_name(c.fmt) +
                             " exceeds the pooling grid range");
  }
  const std::int64_t mag = static_cast<std::int64_t>(sig) << shift;
  return c.sign() ? -mag : mag;
}

}  // namespace

QuantizedModel quantize_model(const NetworkGraph& net, const WeightMap& weights,
                              const QuantScheme& scheme) {
  QuantizedModel model;
  model.fmt = scheme.format;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& layer = net.layers[i];
    if (layer.kind != LayerKind::conv && layer.kind != LayerKind::fc) continue;
    QuantizedLayerParams p;
    p.sf_w = scheme_sf(scheme, layer.w_id);
    p.weights = quantize_tensor(to_doubles(weights.at(layer.w_id)), scheme.format, p.sf_w);
    auto bit = scheme.bias_frac_bits.find(static_cast<int>(i));
    if (bit == scheme.bias_frac_bits.end()) {
      throw ConstraintError("scheme has no bias frac for layer " + std::to_string(i));
    }
    p.bias_frac = bit->second;
    p.bias = quantize_bias(to_doubles(weights.at(layer.b_id)), p.bias_frac);
    model.params.emplace(static_cast<int>(i), std::move(p));
  }
  return model;
}

CodedTensor quantize_input(const NetworkGraph& net, const QuantScheme& scheme,
                           const std::vector<float>& values) {
  if (static_cast<int>(values.size()) != net.input_shape.count()) {
    throw ConstraintError("input has " + std::to_string(values.size()) +
                          " values, network wants " + std::to_string(net.input_shape.count()));
  }
  CodedTensor t;
  t.shape = net.input_shape;
  t.sf = scheme_sf(scheme, "input");
  t.codes = quantize_tensor(to_doubles(values), scheme.format, t.sf);
  return t;
}

Accum conv_accumulate(const Layer& layer, const CodedTensor& input,
                      const std::vector<LpfpCode>& weights, int oc, int oy, int ox) {
  const LpfpFormat fmt = input.codes.empty() ? weights.at(0).fmt : input.codes[0].fmt;
  Accum acc = make_accum(fmt);
  if (layer.kind == LayerKind::fc) {
    const int ic = layer.ic;
    for (int i = 0; i < ic; ++i) {
      accumulate_product(acc, input.codes[i], weights[static_cast<std::size_t>(oc) * ic + i]);
    }
    return acc;
  }
  const int ih = input.shape.h, iw = input.shape.w, ic = layer.ic;
  for (int ky = 0; ky < layer.kh; ++ky) {
    const int iy = oy * layer.stride - layer.pad + ky;
    if (iy < 0 || iy >= ih) continue;  // zero padding adds exact zeros
    for (int kx = 0; kx < layer.kw; ++kx) {
      const int ix = ox * layer.stride - layer.pad + kx;
      if (ix < 0 || ix >= iw) continue;
      for (int c = 0; c < ic; ++c) {
        const std::size_t wi =
            ((static_cast<std::size_t>(oc) * ic + c) * layer.kh + ky) * layer.kw + kx;
        accumulate_product(acc, input.codes[(static_cast<std::size_t>(c) * ih + iy) * iw + ix],
                           weights[wi]);
      }
    }
  }
  return acc;
}

std::vector<CodedTensor> quantized_forward(const NetworkGraph& net,
                                           const QuantizedModel& model,
                                           const QuantScheme& scheme,
                                           const std::vector<float>& input,
                                           const EngineOptions& opts) {
  const LpfpFormat fmt = model.fmt;
  if (fmt != scheme.format) throw ConstraintError("model and scheme formats differ");
  const CodedTensor coded_input = quantize_input(net, scheme, input);
  const std::vector<ExactReal> table = decode_table(fmt);
  const LpfpCode zero = encode(fmt, ExactReal());
  WritebackOptions wb_opts;
  wb_opts.use_intermediate16 = opts.use_intermediate16;

  std::vector<CodedTensor> outputs(net.layers.size());
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& layer = net.layers[li];
    const std::string out_id = NetworkGraph::output_id(static_cast<int>(li));
    CodedTensor& out = outputs[li];
    out.shape = layer.out_shape;
    out.sf = scheme_sf(scheme, out_id);
    out.codes.assign(static_cast<std::size_t>(out.shape.count()), zero);

    switch (layer.kind) {
      case LayerKind::conv:
      case LayerKind::fc: {
        const CodedTensor& in = source_tensor(outputs, coded_input, layer.src[0]);
        const QuantizedLayerParams& p = model.params.at(static_cast<int>(li));
        const int oh = out.shape.h, ow = out.shape.w;
        parallel_for(layer.oc, opts.threads, [&](int oc) {
          for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
              Accum acc = conv_accumulate(layer, in, p.weights, oc, oy, ox);
              add_bias(acc, p.bias[oc], p.bias_frac);
              const WritebackResult wb =
                  writeback(acc, fmt, in.sf, p.sf_w, out.sf, layer.act, wb_opts);
              out.codes[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = wb.code;
            }
          }
        });
        break;
      }
      case LayerKind::maxpool:
      case LayerKind::avgpool: {
        const CodedTensor& in = source_tensor(outputs, coded_input, layer.src[0]);
        if (in.sf != out.sf) {
          throw ConstraintError("scheme moves pooled tensor " + out_id + " off its input scale");
        }
        const int k = layer.pool_k, stride = layer.pool_stride;
        const int ih = in.shape.h, iw = in.shape.w, oh = out.shape.h, ow = out.shape.w;
        const bool is_max = layer.kind == LayerKind::maxpool;
        for (int c = 0; c < out.shape.c; ++c) {
          for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
              if (is_max) {
                // First strictly-greater wins; ties keep the earlier code so
                // +0/-0 windows stay deterministic.
                LpfpCode best = in.codes[(static_cast<std::size_t>(c) * ih + oy * stride) * iw +
                                         ox * stride];
                for (int dy = 0; dy < k; ++dy) {
                  for (int dx = 0; dx < k; ++dx) {
                    const LpfpCode cand =
                        in.codes[(static_cast<std::size_t>(c) * ih + oy * stride + dy) * iw +
                                 ox * stride + dx];
                    if (table[cand.bits] > table[best.bits]) best = cand;
                  }
                }
                out.codes[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] = best;
              } else {
                // Exact integer sum on the finest grid, one rounded division,
                // then the standard encode.
                std::int64_t sum = 0;
                for (int dy = 0; dy < k; ++dy) {
                  for (int dx = 0; dx < k; ++dx) {
                    sum += grid_int(
                        in.codes[(static_cast<std::size_t>(c) * ih + oy * stride + dy) * iw +
                                 ox * stride + dx]);
                  }
                }
                const std::int64_t q = rne_divide(sum, static_cast<std::int64_t>(k) * k);
                const ExactReal avg = ExactReal::make(
                    q < 0, q < 0 ? -q : q, fmt.min_exponent() - fmt.mantissa_bits);
                out.codes[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] = encode(fmt, avg);
              }
            }
          }
        }
        break;
      }
      case LayerKind::relu:
      case LayerKind::leaky: {
        const CodedTensor& in = source_tensor(outputs, coded_input, layer.src[0]);
        if (in.sf != out.sf) {
          throw ConstraintError("scheme moves activation " + out_id + " off its input scale");
        }
        for (std::size_t i = 0; i < in.codes.size(); ++i) {
          const LpfpCode c = in.codes[i];
          if (!c.sign()) {
            out.codes[i] = c;
          } else if (layer.kind == LayerKind::relu) {
            out.codes[i] = zero;
          } else {
            out.codes[i] = encode(fmt, table[c.bits].ldexp2(-layer.leaky_shift));
          }
        }
        break;
      }
      case LayerKind::add: {
        for (std::size_t i = 0; i < out.codes.size(); ++i) {
          ExactReal sum;
          for (int s : layer.src) {
            const CodedTensor& t = source_tensor(outputs, coded_input, s);
            sum += table[t.codes[i].bits].ldexp2(out.sf - t.sf);
          }
          out.codes[i] = encode(fmt, sum);
        }
        break;
      }
      case LayerKind::concat: {
        std::size_t off = 0;
        for (int s : layer.src) {
          const CodedTensor& t = source_tensor(outputs, coded_input, s);
          if (t.sf != out.sf) {
            throw ConstraintError("concat " + out_id + " mixes scale factors");
          }
          std::copy(t.codes.begin(), t.codes.end(), out.codes.begin() + off);
          off += t.codes.size();
        }
        break;
      }
      case LayerKind::bn:
        throw ConstraintError("bn layer survived import; fold it before running");
    }
  }
  return outputs;
}

std::vector<FpTensor> reference_forward(const NetworkGraph& net, const WeightMap& weights,
                                        const std::vector<float>& input) {
  if (static_cast<int>(input.size()) != net.input_shape.count()) {
    throw ConstraintError("input has " + std::to_string(input.size()) +
                          " values, network wants " + std::to_string(net.input_shape.count()));
  }
  const FpTensor input_t{net.input_shape, input};
  std::vector<FpTensor> outputs(net.layers.size());

  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& layer = net.layers[li];
    FpTensor& out = outputs[li];
    out.shape = layer.out_shape;
    out.values.assign(static_cast<std::size_t>(out.shape.count()), 0.0f);

    auto apply_act = [&](double v) -> double {
      switch (layer.act.kind) {
        case Activation::Kind::relu:
          return v < 0.0 ? 0.0 : v;
        case Activation::Kind::leaky:
          return v < 0.0 ? std::ldexp(v, -layer.act.leaky_shift) : v;
        case Activation::Kind::none:
          return v;
      }
      return v;
    };

    switch (layer.kind) {
      case LayerKind::conv:
      case LayerKind::fc: {
        const FpTensor& in = source_fp(outputs, input_t, layer.src[0]);
        const auto& w = weights.at(layer.w_id);
        const auto& b = weights.at(layer.b_id);
        const int oh = out.shape.h, ow = out.shape.w;
        const int ih = in.shape.h, iw = in.shape.w;
        for (int oc = 0; oc < layer.oc; ++oc) {
          for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
              double acc = 0.0;
              if (layer.kind == LayerKind::fc) {
                for (int i = 0; i < layer.ic; ++i) {
                  acc += static_cast<double>(in.values[i]) *
                         static_cast<double>(w[static_cast<std::size_t>(oc) * layer.ic + i]);
                }
              } else {
                for (int ky = 0; ky < layer.kh; ++ky) {
                  const int iy = oy * layer.stride - layer.pad + ky;
                  if (iy < 0 || iy >= ih) continue;
                  for (int kx = 0; kx < layer.kw; ++kx) {
                    const int ix = ox * layer.stride - layer.pad + kx;
                    if (ix < 0 || ix >= iw) continue;
                    for (int c = 0; c < layer.ic; ++c) {
                      const std::size_t wi =
                          ((static_cast<std::size_t>(oc) * layer.ic + c) * layer.kh + ky) *
                              layer.kw + kx;
                      acc += static_cast<double>(
                                 in.values[(static_cast<std::size_t>(c) * ih + iy) * iw + ix]) *
                             static_cast<double>(w[wi]);
                    }
                  }
                }
              }
              acc += static_cast<double>(b[oc]);
              out.values[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] =
                  static_cast<float>(apply_act(acc));
            }
          }
        }
        break;
      }
      case LayerKind::maxpool:
      case LayerKind::avgpool: {
        const FpTensor& in = source_fp(outputs, input_t, layer.src[0]);
        const int k = layer.pool_k, stride = layer.pool_stride;
        const int ih = in.shape.h, iw = in.shape.w, oh = out.shape.h, ow = out.shape.w;
        for (int c = 0; c < out.shape.c; ++c) {
          for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
              if (layer.kind == LayerKind::maxpool) {
                float best = in.values[(static_cast<std::size_t>(c) * ih + oy * stride) * iw +
                                       ox * stride];
                for (int dy = 0; dy < k; ++dy) {
                  for (int dx = 0; dx < k; ++dx) {
                    const float cand =
                        in.values[(static_cast<std::size_t>(c) * ih + oy * stride + dy) * iw +
                                  ox * stride + dx];
                    if (cand > best) best = cand;
                  }
                }
                out.values[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] = best;
              } else {
                double sum = 0.0;
                for (int dy = 0; dy < k; ++dy) {
                  for (int dx = 0; dx < k; ++dx) {
                    sum += static_cast<double>(
                        in.values[(static_cast<std::size_t>(c) * ih + oy * stride + dy) * iw +
                                  ox * stride + dx]);
                  }
                }
                out.values[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] =
                    static_cast<float>(sum / (static_cast<double>(k) * k));
              }
            }
          }
        }
        break;
      }
      case LayerKind::relu:
      case LayerKind::leaky: {
        const FpTensor& in = source_fp(outputs, input_t, layer.src[0]);
        for (std::size_t i = 0; i < in.values.size(); ++i) {
          const float v = in.values[i];
          if (v >= 0.0f) {
            out.values[i] = v;
          } else {
            out.values[i] = layer.kind == LayerKind::relu
                                ? 0.0f
                                : static_cast<float>(
                                      std::ldexp(static_cast<double>(v), -layer.leaky_shift));
          }
        }
        break;
      }
      case LayerKind::add: {
        for (std::size_t i = 0; i < out.values.size(); ++i) {
          double sum = 0.0;
          for (int s : layer.src) sum += static_cast<double>(source_fp(outputs, input_t, s).values[i]);
          out.values[i] = static_cast<float>(sum);
        }
        break;
      }
      case LayerKind::concat: {
        std::size_t off = 0;
        for (int s : layer.src) {
          const FpTensor& t = source_fp(outputs, input_t, s);
          std::copy(t.values.begin(), t.values.end(), out.values.begin() + off);
          off += t.values.size();
        }
        break;
      }
      case LayerKind::bn:
        throw ConstraintError("bn layer survived import; fold it before running");
    }
  }
  return outputs;
}

std::vector<NamedTensor> calibration_tensors(const NetworkGraph& net,
                                             const WeightMap& weights,
                                             const std::vector<std::vector<float>>& batch) {
  if (batch.empty()) throw DegenerateInputError("calibration batch is empty");
  std::vector<NamedTensor> tensors;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& layer = net.layers[i];
    if (layer.kind == LayerKind::conv || layer.kind == LayerKind::fc) {
      tensors.push_back({layer.w_id, to_doubles(weights.at(layer.w_id))});
    }
  }
  NamedTensor input_t{"input", {}};
  std::vector<NamedTensor> acts(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    acts[i].id = NetworkGraph::output_id(static_cast<int>(i));
  }
  for (const auto& sample : batch) {
    const auto layer_outputs = reference_forward(net, weights, sample);
    for (float v : sample) input_t.values.push_back(v);
    for (std::size_t i = 0; i < layer_outputs.size(); ++i) {
      for (float v : layer_outputs[i].values) acts[i].values.push_back(v);
    }
  }
  tensors.push_back(std::move(input_t));
  for (auto& t : acts) tensors.push_back(std::move(t));
  return tensors;
}

std::pair<QuantScheme, QuantReport> build_scheme(const NetworkGraph& net,
                                                 const WeightMap& weights,
                                                 const std::vector<std::vector<float>>& calib,
                                                 const std::vector<LpfpFormat>& candidates,
                                                 const SfWindow& window) {
  const std::vector<NamedTensor> tensors = calibration_tensors(net, weights, calib);
  auto [scheme, report] = search_format(tensors, shared_sf_groups(net), candidates, window);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& layer = net.layers[i];
    if (layer.kind != LayerKind::conv && layer.kind != LayerKind::fc) continue;
    scheme.bias_frac_bits[static_cast<int>(i)] =
        choose_bias_frac(to_doubles(weights.at(layer.b_id)));
  }
  return {std::move(scheme), std::move(report)};
}

namespace {

// Rank of the labeled class when scores are sorted descending, index
// ascending on ties; in-top-k means rank < k.
int label_rank(const std::vector<double>& scores, int label) {
  int rank = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > scores[label]) ++rank;
    else if (scores[j] == scores[label] && static_cast<int>(j) < label) ++rank;
  }
  return rank;
}

}  // namespace

AccuracyReport evaluate(const NetworkGraph& net, const WeightMap& weights,
                        const QuantScheme& scheme, const Dataset& ds,
                        const std::vector<int>& topk, const EngineOptions& opts) {
  if (ds.samples.empty()) throw DegenerateInputError("dataset is empty");
  if (!(ds.shape == net.input_shape)) {
    throw ConstraintError("dataset shape does not match the network input");
  }
  AccuracyReport report;
  report.topk = topk.empty() ? std::vector<int>{1} : topk;
  for (int k : report.topk) {
    if (k < 1 || k > ds.num_classes) throw ConstraintError("top-k out of range");
  }
  const QuantizedModel model = quantize_model(net, weights, scheme);
  const std::vector<ExactReal> table = decode_table(scheme.format);
  std::vector<double> grid(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) grid[i] = table[i].to_double();

  const int classes = ds.num_classes;
  const int last = static_cast<int>(net.layers.size()) - 1;
  if (net.layers[last].out_shape.count() != classes) {
    throw ConstraintError("network emits " + std::to_string(net.layers[last].out_shape.count()) +
                          " scores for " + std::to_string(classes) + " classes");
  }

  report.n = static_cast<int>(ds.samples.size());
  report.quant_topk.assign(report.topk.size(), 0.0);
  report.ref_topk.assign(report.topk.size(), 0.0);
  report.class_count.assign(classes, 0);
  report.per_class_quant.assign(classes, 0.0);
  report.per_class_ref.assign(classes, 0.0);

  double top1_quant = 0.0, top1_ref = 0.0;
  for (std::size_t s = 0; s < ds.samples.size(); ++s) {
    const int label = ds.labels[s];
    report.class_count[label] += 1;

    const auto ref_out = reference_forward(net, weights, ds.samples[s]);
    std::vector<double> ref_scores(ref_out[last].values.begin(), ref_out[last].values.end());
    const int ref_rank = label_rank(ref_scores, label);

    const auto q_out = quantized_forward(net, model, scheme, ds.samples[s], opts);
    std::vector<double> q_scores;
    q_scores.reserve(classes);
    for (const LpfpCode& c : q_out[last].codes) {
      q_scores.push_back(std::ldexp(grid[c.bits], -q_out[last].sf));
    }
    const int q_rank = label_rank(q_scores, label);

    for (std::size_t ki = 0; ki < report.topk.size(); ++ki) {
      if (q_rank < report.topk[ki]) report.quant_topk[ki] += 1.0;
      if (ref_rank < report.topk[ki]) report.ref_topk[ki] += 1.0;
    }
    if (q_rank == 0) {
      top1_quant += 1.0;
      report.per_class_quant[label] += 1.0;
    }
    if (ref_rank == 0) {
      top1_ref += 1.0;
      report.per_class_ref[label] += 1.0;
    }
  }

  const double n = static_cast<double>(report.n);
  for (double& v : report.quant_topk) v /= n;
  for (double& v : report.ref_topk) v /= n;
  for (int c = 0; c < classes; ++c) {
    const double cn = static_cast<double>(report.class_count[c]);
    if (cn > 0) {
      report.per_class_quant[c] /= cn;
      report.per_class_ref[c] /= cn;
    }
  }
  report.gap_top1 = top1_quant / n - top1_ref / n;
  return report;
}

}  // namespace lpfp

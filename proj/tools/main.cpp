// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: quantize, infer, eval, verify-pack, sweep and
// fmt-table over the library modules. Outputs are byte-stable: no timestamps
// unless --stamp, exact decimals for code values, shortest round-trip for
// measured quantities, integers printed as integers.
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "lpfp/codec.hpp"
#include "lpfp/engine.hpp"
#include "lpfp/error.hpp"
#include "lpfp/network.hpp"
#include "lpfp/pe.hpp"
#include "lpfp/perf.hpp"
#include "lpfp/quantize.hpp"

namespace {

using namespace lpfp;

int threads_from_env() {
  const char* raw = std::getenv("LPFP_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  int value = 0;
  const auto res = std::from_chars(raw, raw + std::string_view(raw).size(), value);
  if (res.ec != std::errc{} || *res.ptr != '\0' || value < 1) {
    throw ConstraintError("LPFP_THREADS must be a positive integer");
  }
  return value;
}

std::string format_double(double v) {
  if (std::nearbyint(v) == v && std::fabs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw IoError("cannot open " + path + " for writing");
  out << content;
  if (!out.good()) throw IoError("failed writing " + path);
}

std::string stamp_line() {
  char buf[64];
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof buf, "generated %Y-%m-%dT%H:%M:%SZ\n", &tm);
  return buf;
}

std::vector<float> read_f32_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw IoError("cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) throw ParseError(path + " is not a float32 blob");
  std::vector<float> values(bytes.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 3; b >= 0; --b) {
      u = (u << 8) | static_cast<unsigned char>(bytes[i * 4 + b]);
    }
    float f;
    static_assert(sizeof f == sizeof u);
    __builtin_memcpy(&f, &u, sizeof f);
    values[i] = f;
  }
  return values;
}

// A calibration file is either a dataset (magic-sniffed) or a raw float32
// blob holding a whole number of input samples.
std::vector<std::vector<float>> load_calibration(const std::string& path,
                                                 const Shape& input_shape) {
  {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw IoError("cannot open " + path);
    char magic[8] = {};
    in.read(magic, 8);
    if (in.gcount() == 8 && std::string(magic, 8) == "LPFPDS1\n") {
      const Dataset ds = load_dataset(path);
      if (!(ds.shape == input_shape)) {
        throw ConstraintError("calibration shape does not match the network input");
      }
      return ds.samples;
    }
  }
  const std::vector<float> values = read_f32_blob(path);
  const std::size_t per = static_cast<std::size_t>(input_shape.count());
  if (per == 0 || values.size() == 0 || values.size() % per != 0) {
    throw ParseError("calibration blob is not a whole number of input samples");
  }
  std::vector<std::vector<float>> samples;
  for (std::size_t off = 0; off < values.size(); off += per) {
    samples.emplace_back(values.begin() + off, values.begin() + off + per);
  }
  return samples;
}

std::vector<LpfpFormat> parse_format_list(const std::string& text) {
  std::vector<LpfpFormat> formats;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item =
        text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (item.empty()) throw ConstraintError("empty entry in format list");
    formats.push_back(parse_format(item));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (formats.empty()) throw ConstraintError("no formats given");
  return formats;
}

// ---- quantize ----

struct QuantizeArgs {
  std::string model, weights, calib, formats, out, report;
  int sf_lo = -16, sf_hi = 16;
  bool stamp = false;
};

void run_quantize(const QuantizeArgs& args) {
  auto [net, wmap] = import_network(args.model, args.weights);
  const auto calib = load_calibration(args.calib, net.input_shape);
  const auto candidates = parse_format_list(args.formats);
  if (args.sf_lo > args.sf_hi) throw ConstraintError("empty scale-factor window");
  SfWindow window{args.sf_lo, args.sf_hi};
  const auto [scheme, report] = build_scheme(net, wmap, calib, candidates, window);
  write_scheme(args.out, scheme);

  if (!args.report.empty()) {
    std::string text;
    if (args.stamp) text += stamp_line();
    text += "calibration_samples " + std::to_string(calib.size()) + "\n";
    for (const auto& row : report.formats) {
      text += "format " + format_name(row.format) + " mean_normalized_mse " +
              format_double(row.mean_normalized_mse) + (row.chosen ? " chosen" : "") + "\n";
    }
    for (const auto& row : report.tensors) {
      text += "tensor " + row.id + " sf " + std::to_string(row.sf) + " mse " +
              format_double(row.mse) + " normalized " + format_double(row.normalized_mse) +
              "\n";
    }
    write_file(args.report, text);
  }
}

// ---- infer ----

struct InferArgs {
  std::string model, weights, scheme_path, input, out;
  bool no_intermediate16 = false;
  bool all_layers = false;
};

void run_infer(const InferArgs& args) {
  auto [net, wmap] = import_network(args.model, args.weights);
  const QuantScheme scheme = read_scheme(args.scheme_path);
  const std::vector<float> input = load_input_blob(args.input, net.input_shape);
  EngineOptions opts;
  opts.use_intermediate16 = !args.no_intermediate16;
  opts.threads = threads_from_env();
  const QuantizedModel model = quantize_model(net, wmap, scheme);
  const auto outputs = quantized_forward(net, model, scheme, input, opts);

  std::string text;
  auto dump = [&](std::size_t i) {
    const CodedTensor& t = outputs[i];
    text += "layer " + std::to_string(i) + " " + NetworkGraph::output_id(static_cast<int>(i)) +
            " sf " + std::to_string(t.sf) + " shape " + std::to_string(t.shape.c) + "x" +
            std::to_string(t.shape.h) + "x" + std::to_string(t.shape.w) + "\n";
    for (const LpfpCode& c : t.codes) text += decode(c).to_decimal_string() + "\n";
  };
  if (args.all_layers) {
    for (std::size_t i = 0; i < outputs.size(); ++i) dump(i);
  } else {
    dump(outputs.size() - 1);
  }
  write_file(args.out, text);
}

// ---- eval ----

struct EvalArgs {
  std::string model, weights, scheme_path, dataset, topk = "1", out;
  bool no_intermediate16 = false;
  bool stamp = false;
};

void run_eval(const EvalArgs& args) {
  auto [net, wmap] = import_network(args.model, args.weights);
  const QuantScheme scheme = read_scheme(args.scheme_path);
  const Dataset ds = load_dataset(args.dataset);
  std::vector<int> topk;
  {
    std::size_t pos = 0;
    while (pos <= args.topk.size()) {
      const auto comma = args.topk.find(',', pos);
      const std::string item = args.topk.substr(
          pos, comma == std::string::npos ? std::string::npos : comma - pos);
      int k = 0;
      const auto res = std::from_chars(item.data(), item.data() + item.size(), k);
      if (res.ec != std::errc{} || res.ptr != item.data() + item.size()) {
        throw ConstraintError("bad top-k list entry: " + item);
      }
      topk.push_back(k);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  EngineOptions opts;
  opts.use_intermediate16 = !args.no_intermediate16;
  opts.threads = threads_from_env();
  const AccuracyReport report = evaluate(net, wmap, scheme, ds, topk, opts);

  std::string text;
  if (args.stamp) text += stamp_line();
  text += "samples " + std::to_string(report.n) + "\n";
  text += "format " + format_name(scheme.format) + "\n";
  for (std::size_t i = 0; i < report.topk.size(); ++i) {
    const std::string k = std::to_string(report.topk[i]);
    text += "top" + k + " fp32 " + format_double(report.ref_topk[i]) + "\n";
    text += "top" + k + " " + format_name(scheme.format) + " " +
            format_double(report.quant_topk[i]) + "\n";
  }
  text += "gap_top1 " + format_double(report.gap_top1) + "\n";
  for (std::size_t c = 0; c < report.class_count.size(); ++c) {
    text += "class " + std::to_string(c) + " count " + std::to_string(report.class_count[c]) +
            " fp32 " + format_double(report.per_class_ref[c]) + " " +
            format_name(scheme.format) + " " + format_double(report.per_class_quant[c]) + "\n";
  }
  if (args.out.empty()) {
    std::cout << text;
  } else {
    write_file(args.out, text);
  }
}

// ---- verify-pack ----

struct VerifyPackArgs {
  std::string format = "M4E3";
  bool exhaustive = false;
  long long samples = 100000;
  unsigned int seed = 1;
};

int run_verify_pack(const VerifyPackArgs& args) {
  const LpfpFormat fmt = parse_format(args.format);
  const auto table = decode_table(fmt);
  const int n = 1 << fmt.width();
  long long checked = 0, passed = 0;
  std::uint64_t max_mant = 0;
  std::int64_t max_aligned = 0;

  auto check_quad = [&](const LpfpCode& a, const LpfpCode& b, const LpfpCode& c,
                        const LpfpCode& d) {
    const auto results = packed_quad_mac(a, b, c, d);
    const ExactProduct expect_ac = lpfp_multiply(a, c);
    const ExactProduct expect_ad = lpfp_multiply(a, d);
    const ExactProduct expect_bc = lpfp_multiply(b, c);
    const ExactProduct expect_bd = lpfp_multiply(b, d);
    bool ok = results[0] == expect_ac && results[1] == expect_ad &&
              results[2] == expect_bc && results[3] == expect_bd;
    ok = ok && expect_ac.value() == table[a.bits] * table[c.bits];
    for (const ExactProduct* p : {&expect_ac, &expect_ad, &expect_bc, &expect_bd}) {
      max_mant = std::max<std::uint64_t>(max_mant, p->mant);
      const AlignedFixed af = align(*p);
      max_aligned = std::max<std::int64_t>(max_aligned, std::llabs(af.value));
    }
    ++checked;
    if (ok) ++passed;
  };

  if (args.exhaustive) {
    for (int x = 0; x < n; ++x) {
      for (int y = 0; y < n; ++y) {
        const LpfpCode cx{fmt, static_cast<std::uint8_t>(x)};
        const LpfpCode cy{fmt, static_cast<std::uint8_t>(y)};
        check_quad(cx, cx, cy, cy);
      }
    }
  } else {
    std::mt19937 rng(args.seed);
    for (long long i = 0; i < args.samples; ++i) {
      const auto pick = [&] {
        return LpfpCode{fmt, static_cast<std::uint8_t>(rng() % n)};
      };
      check_quad(pick(), pick(), pick(), pick());
    }
  }

  std::cout << (passed == checked ? "PASS " : "FAIL ") << passed << "/" << checked << "\n"
            << "max_product_mant " << max_mant << "\n"
            << "max_aligned_magnitude " << max_aligned << "\n"
            << "aligned_width " << aligned_width(fmt) << "\n"
            << "frac_bits " << aligned_frac_bits(fmt) << "\n";
  return passed == checked ? 0 : 4;
}

// ---- sweep ----

struct SweepArgs {
  std::vector<std::string> models;
  std::string pairs, out;
  int dsp = 768;
  double freq = 2e8;
  int bw = 8;
  bool stamp = false;
};

void run_sweep(const SweepArgs& args) {
  std::vector<NetworkGraph> nets;
  for (const std::string& path : args.models) nets.push_back(parse_manifest(path));
  std::vector<const NetworkGraph*> net_ptrs;
  for (const NetworkGraph& net : nets) net_ptrs.push_back(&net);

  std::vector<std::pair<int, int>> candidates;
  if (args.pairs.empty()) {
    const long long lanes = 4LL * args.dsp;
    for (int nm = 4; nm <= lanes; nm += 4) {
      if (lanes % nm == 0) candidates.emplace_back(nm, static_cast<int>(lanes / nm));
    }
  } else {
    std::size_t pos = 0;
    while (pos <= args.pairs.size()) {
      const auto comma = args.pairs.find(',', pos);
      const std::string item = args.pairs.substr(
          pos, comma == std::string::npos ? std::string::npos : comma - pos);
      const auto x = item.find('x');
      if (x == std::string::npos) throw ConstraintError("bad pair (want NMxNP): " + item);
      int nm = 0, np = 0;
      const auto r1 = std::from_chars(item.data(), item.data() + x, nm);
      const auto r2 = std::from_chars(item.data() + x + 1, item.data() + item.size(), np);
      if (r1.ec != std::errc{} || r1.ptr != item.data() + x || r2.ec != std::errc{} ||
          r2.ptr != item.data() + item.size()) {
        throw ConstraintError("bad pair (want NMxNP): " + item);
      }
      candidates.emplace_back(nm, np);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }

  const auto rows = sweep(net_ptrs, candidates, args.dsp, args.freq, args.bw);
  std::string csv = sweep_csv(rows);
  if (args.stamp) csv = stamp_line() + csv;
  if (args.out.empty()) {
    std::cout << csv;
  } else {
    write_file(args.out, csv);
  }
}

// ---- fmt-table ----

void run_fmt_table(const std::string& name) {
  const LpfpFormat fmt = parse_format(name);
  const auto table = decode_table(fmt);
  std::vector<int> order(table.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (table[a] != table[b]) return table[a] < table[b];
    return a < b;
  });
  char buf[8];
  for (int bits : order) {
    std::snprintf(buf, sizeof buf, "0x%02X", bits);
    std::cout << buf << " " << table[bits].to_decimal_string() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bit-exact minifloat CNN golden model and FPGA throughput model"};
  app.require_subcommand(1);

  QuantizeArgs q;
  CLI::App* quantize = app.add_subcommand(
      "quantize", "search scale factors and a format over a calibration batch");
  quantize->add_option("--model", q.model)->required();
  quantize->add_option("--weights", q.weights)->required();
  quantize->add_option("--calib", q.calib)->required();
  quantize->add_option("--formats", q.formats)->required();
  quantize->add_option("--out", q.out)->required();
  quantize->add_option("--report", q.report);
  quantize->add_option("--sf-lo", q.sf_lo);
  quantize->add_option("--sf-hi", q.sf_hi);
  quantize->add_flag("--stamp", q.stamp);

  InferArgs inf;
  CLI::App* infer = app.add_subcommand("infer", "run one input through the coded network");
  infer->add_option("--model", inf.model)->required();
  infer->add_option("--weights", inf.weights)->required();
  infer->add_option("--scheme", inf.scheme_path)->required();
  infer->add_option("--input", inf.input)->required();
  infer->add_option("--out", inf.out)->required();
  infer->add_flag("--no-intermediate16", inf.no_intermediate16);
  infer->add_flag("--all-layers", inf.all_layers);

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "accuracy of the coded and fp32 paths");
  eval_cmd->add_option("--model", ev.model)->required();
  eval_cmd->add_option("--weights", ev.weights)->required();
  eval_cmd->add_option("--scheme", ev.scheme_path)->required();
  eval_cmd->add_option("--dataset", ev.dataset)->required();
  eval_cmd->add_option("--topk", ev.topk);
  eval_cmd->add_option("--out", ev.out);
  eval_cmd->add_flag("--no-intermediate16", ev.no_intermediate16);
  eval_cmd->add_flag("--stamp", ev.stamp);

  VerifyPackArgs vp;
  CLI::App* verify = app.add_subcommand(
      "verify-pack", "check the packed quad multiplier against the exact product");
  verify->add_option("--format", vp.format);
  verify->add_flag("--exhaustive", vp.exhaustive);
  verify->add_option("--samples", vp.samples)->check(CLI::PositiveNumber);
  verify->add_option("--seed", vp.seed);

  SweepArgs sw;
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "explore (Nm, Np) parallelism over networks");
  sweep_cmd->add_option("--model", sw.models)->required();
  sweep_cmd->add_option("--pairs", sw.pairs);
  sweep_cmd->add_option("--dsp", sw.dsp)->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--freq", sw.freq)->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--bw", sw.bw)->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--out", sw.out);
  sweep_cmd->add_flag("--stamp", sw.stamp);

  std::string table_format;
  CLI::App* fmt_table = app.add_subcommand("fmt-table", "list every code of a format");
  fmt_table->add_option("format", table_format)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (quantize->parsed()) run_quantize(q);
    if (infer->parsed()) run_infer(inf);
    if (eval_cmd->parsed()) run_eval(ev);
    if (verify->parsed()) return run_verify_pack(vp);
    if (sweep_cmd->parsed()) run_sweep(sw);
    if (fmt_table->parsed()) run_fmt_table(table_format);
    return 0;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const lpfp::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 3;
  } catch (const ConstraintError& e) {
    std::cerr << "constraint error: " << e.what() << "\n";
    return 4;
  } catch (const FixedOverflowError& e) {
    std::cerr << "overflow error: " << e.what() << "\n";
    return 5;
  } catch (const DegenerateInputError& e) {
    std::cerr << "degenerate input: " << e.what() << "\n";
    return 6;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

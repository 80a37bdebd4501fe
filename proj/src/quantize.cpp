// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#include "lpfp/quantize.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "lpfp/error.hpp"

namespace lpfp {
namespace {

void require_finite(const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw ConstraintError("tensor contains a non-finite value");
  }
}

// Population variance, accumulated in index order like the MSE itself.
double population_variance(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(values.size());
}

}  // namespace

std::vector<LpfpCode> quantize_tensor(const std::vector<double>& values,
                                      const LpfpFormat& fmt, int sf) {
  require_finite(values);
  std::vector<LpfpCode> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(encode(fmt, std::ldexp(v, sf)));
  return out;
}

double quantization_mse(const std::vector<double>& values, const LpfpFormat& fmt,
                        int sf) {
  require_finite(values);
  if (values.empty()) throw DegenerateInputError("empty tensor has no MSE");
  // Decoded doubles are exact (all grid points are dyadic and in range), and
  // the 2^-sf rescale is an exact exponent shift, so the only floating-point
  // noise here is the subtraction/accumulation shared with any
  // re-implementation that follows the same index order.
  const std::vector<ExactReal> table = decode_table(fmt);
  std::vector<double> grid(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) grid[i] = table[i].to_double();
  double sum = 0.0;
  for (double v : values) {
    const LpfpCode code = encode(fmt, std::ldexp(v, sf));
    const double dq = std::ldexp(grid[code.bits], -sf);
    const double d = dq - v;
    sum += d * d;
  }
  return sum / static_cast<double>(values.size());
}

ScaleSearchResult search_scale(const std::vector<double>& values,
                               const LpfpFormat& fmt, const SfWindow& window) {
  if (values.empty()) throw DegenerateInputError("cannot search scale of an empty tensor");
  if (window.lo > window.hi) throw ConstraintError("empty scale-factor window");
  ScaleSearchResult best;
  bool have = false;
  for (int sf = window.lo; sf <= window.hi; ++sf) {
    const double mse = quantization_mse(values, fmt, sf);
    if (!have || mse < best.mse) {  // strict: ties keep the smallest sf
      best = {sf, mse};
      have = true;
    }
  }
  return best;
}

std::pair<QuantScheme, QuantReport> search_format(
    const std::vector<NamedTensor>& tensors,
    const std::vector<std::vector<std::string>>& shared_sf_groups,
    const std::vector<LpfpFormat>& candidates, const SfWindow& window) {
  if (tensors.empty()) throw DegenerateInputError("no tensors to quantize");
  if (candidates.empty()) throw ConstraintError("no candidate formats");

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!index.emplace(tensors[i].id, i).second) {
      throw ConstraintError("duplicate tensor id " + tensors[i].id);
    }
  }

  // Search units: one per shared group (pooled values), one per loose tensor.
  struct Unit {
    std::vector<std::size_t> members;
    std::vector<double> pooled;
  };
  std::vector<Unit> units;
  std::set<std::string> grouped;
  for (const auto& group : shared_sf_groups) {
    Unit u;
    for (const std::string& id : group) {
      auto it = index.find(id);
      if (it == index.end()) throw ConstraintError("group references unknown tensor " + id);
      if (!grouped.insert(id).second) {
        throw ConstraintError("tensor " + id + " appears in more than one group");
      }
      u.members.push_back(it->second);
      const auto& vals = tensors[it->second].values;
      u.pooled.insert(u.pooled.end(), vals.begin(), vals.end());
    }
    if (!u.members.empty()) units.push_back(std::move(u));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!grouped.count(tensors[i].id)) units.push_back(Unit{{i}, tensors[i].values});
  }

  QuantReport report;
  QuantScheme scheme;
  std::vector<TensorMseRow> best_rows;
  double best_metric = 0.0;
  bool have = false;

  for (const LpfpFormat& fmt : candidates) {
    std::vector<TensorMseRow> rows(tensors.size());
    double metric_sum = 0.0;
    for (const Unit& u : units) {
      const ScaleSearchResult r = search_scale(u.pooled, fmt, window);
      for (std::size_t ti : u.members) {
        TensorMseRow row;
        row.id = tensors[ti].id;
        row.sf = r.sf;
        row.mse = quantization_mse(tensors[ti].values, fmt, r.sf);
        const double var = population_variance(tensors[ti].values);
        row.normalized_mse = var > 0.0 ? row.mse / var : row.mse;
        rows[ti] = row;
        metric_sum += row.normalized_mse;
      }
    }
    const double metric = metric_sum / static_cast<double>(tensors.size());
    report.formats.push_back({fmt, metric, false});
    if (!have || metric < best_metric) {  // earlier candidates win ties
      best_metric = metric;
      best_rows = rows;
      scheme.format = fmt;
      have = true;
    }
  }

  for (auto& row : report.formats) row.chosen = (row.format == scheme.format);
  report.tensors = best_rows;
  for (const TensorMseRow& row : report.tensors) scheme.scale_factors[row.id] = row.sf;
  return {std::move(scheme), std::move(report)};
}

std::vector<std::int16_t> quantize_bias(const std::vector<double>& values,
                                        int frac_bits) {
  require_finite(values);
  std::vector<std::int16_t> out;
  out.reserve(values.size());
  for (double v : values) {
    // ldexp is exact; nearbyint in the default rounding mode is
    // round-to-nearest, ties to even.
    const double r = std::nearbyint(std::ldexp(v, frac_bits));
    if (r < -32768.0 || r > 32767.0) {
      throw FixedOverflowError("bias does not fit 16 bits at frac_bits " +
                               std::to_string(frac_bits));
    }
    out.push_back(static_cast<std::int16_t>(r));
  }
  return out;
}

int choose_bias_frac(const std::vector<double>& values) {
  require_finite(values);
  for (int frac = 15; frac >= -16; --frac) {
    bool fits = true;
    for (double v : values) {
      const double r = std::nearbyint(std::ldexp(v, frac));
      if (r < -32768.0 || r > 32767.0) {
        fits = false;
        break;
      }
    }
    if (fits) return frac;
  }
  throw ConstraintError("bias magnitude too large for 16-bit fixed at any frac_bits >= -16");
}

void write_scheme(const std::string& path, const QuantScheme& scheme) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "format " << format_name(scheme.format) << "\n";
  for (const auto& [id, sf] : scheme.scale_factors) {
    out << "tensor " << id << " sf " << sf << "\n";
  }
  for (const auto& [layer, frac] : scheme.bias_frac_bits) {
    out << "bias " << layer << " frac " << frac << "\n";
  }
  if (!out.flush()) throw IoError("failed writing " + path);
}

namespace {

int parse_int_token(const std::string& tok, const std::string& context) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError("bad integer '" + tok + "' in " + context);
  }
  return value;
}

}  // namespace

QuantScheme read_scheme(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  QuantScheme scheme;
  bool have_format = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;  // blank line
    const std::string where = path + ":" + std::to_string(lineno);
    if (kind == "format") {
      std::string name, extra;
      if (!(ls >> name) || (ls >> extra)) throw ParseError("malformed format line at " + where);
      if (have_format) throw ParseError("duplicate format line at " + where);
      scheme.format = parse_format(name);
      have_format = true;
    } else if (kind == "tensor") {
      std::string id, kw, sf_tok, extra;
      if (!(ls >> id >> kw >> sf_tok) || kw != "sf" || (ls >> extra)) {
        throw ParseError("malformed tensor line at " + where);
      }
      if (!scheme.scale_factors.emplace(id, parse_int_token(sf_tok, where)).second) {
        throw ParseError("duplicate tensor id '" + id + "' at " + where);
      }
    } else if (kind == "bias") {
      std::string layer_tok, kw, frac_tok, extra;
      if (!(ls >> layer_tok >> kw >> frac_tok) || kw != "frac" || (ls >> extra)) {
        throw ParseError("malformed bias line at " + where);
      }
      const int layer = parse_int_token(layer_tok, where);
      if (!scheme.bias_frac_bits.emplace(layer, parse_int_token(frac_tok, where)).second) {
        throw ParseError("duplicate bias layer " + layer_tok + " at " + where);
      }
    } else {
      throw ParseError("unknown line kind '" + kind + "' at " + where);
    }
  }
  if (!have_format) throw ParseError("scheme file " + path + " has no format line");
  return scheme;
}

}  // namespace lpfp

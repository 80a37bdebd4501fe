// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#include "lpfp/network.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "lpfp/error.hpp"

namespace lpfp {
namespace {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path);
  return bytes;
}

std::uint32_t read_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

float read_f32le(const std::uint8_t* p) { return std::bit_cast<float>(read_u32le(p)); }

void write_u32le(std::ofstream& out, std::uint32_t v) {
  const std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                             static_cast<std::uint8_t>(v >> 16),
                             static_cast<std::uint8_t>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_f32le(std::ofstream& out, float v) { write_u32le(out, std::bit_cast<std::uint32_t>(v)); }

int to_int(const std::string& tok, const std::string& where) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError("bad integer '" + tok + "' at " + where);
  }
  return value;
}

double to_double(const std::string& tok, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw ParseError("bad number '" + tok + "' at " + where);
    return v;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception&) {
    throw ParseError("bad number '" + tok + "' at " + where);
  }
}

// key=value fields of one manifest line.
class FieldSet {
 public:
  FieldSet(std::istringstream& ls, const std::string& where) : where_(where) {
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 >= tok.size()) {
        throw ParseError("expected key=value, got '" + tok + "' at " + where);
      }
      if (!fields_.emplace(tok.substr(0, eq), tok.substr(eq + 1)).second) {
        throw ParseError("duplicate key '" + tok.substr(0, eq) + "' at " + where);
      }
    }
  }

  bool has(const std::string& key) const { return fields_.count(key) != 0; }

  std::string take(const std::string& key) {
    auto it = fields_.find(key);
    if (it == fields_.end()) throw ParseError("missing " + key + "= at " + where_);
    std::string v = it->second;
    fields_.erase(it);
    return v;
  }

  std::string take_or(const std::string& key, const std::string& fallback) {
    return has(key) ? take(key) : fallback;
  }

  int take_int(const std::string& key) { return to_int(take(key), where_); }
  int take_int_or(const std::string& key, int fallback) {
    return has(key) ? take_int(key) : fallback;
  }

  void finish() const {
    if (!fields_.empty()) {
      throw ParseError("unknown key '" + fields_.begin()->first + "' at " + where_);
    }
  }

  const std::string& where() const { return where_; }

 private:
  std::map<std::string, std::string> fields_;
  std::string where_;
};

Activation parse_activation(const std::string& text, const std::string& where) {
  Activation act;
  if (text == "none") return act;
  if (text == "relu") {
    act.kind = Activation::Kind::relu;
    return act;
  }
  if (text.rfind("leaky", 0) == 0 && text.size() > 5) {
    act.kind = Activation::Kind::leaky;
    act.leaky_shift = to_int(text.substr(5), where);
    if (act.leaky_shift < 0 || act.leaky_shift > 15) {
      throw ConstraintError("leaky shift out of range at " + where);
    }
    return act;
  }
  throw ParseError("unknown activation '" + text + "' at " + where +
                   " (expected none, relu, or leaky<shift>)");
}

std::pair<int, int> parse_kernel(const std::string& text, const std::string& where) {
  const auto x = text.find('x');
  if (x == std::string::npos) {
    const int k = to_int(text, where);
    return {k, k};
  }
  return {to_int(text.substr(0, x), where), to_int(text.substr(x + 1), where)};
}

std::vector<int> parse_sources(const std::string& text, int next_index,
                               const std::string& where) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item =
        text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (item == "input") {
      out.push_back(kInputSource);
    } else {
      const int idx = to_int(item, where);
      if (idx < 0 || idx >= next_index) {
        throw ParseError("source " + item + " does not precede the layer at " + where);
      }
      out.push_back(idx);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw ParseError("empty src list at " + where);
  return out;
}

int conv_extent(int in, int pad, int k, int stride, const std::string& where) {
  const int span = in + 2 * pad - k;
  if (k < 1 || stride < 1 || pad < 0 || span < 0) {
    throw ConstraintError("kernel does not fit the input at " + where);
  }
  return span / stride + 1;
}

}  // namespace

std::string NetworkGraph::output_id(int layer_index) {
  return layer_index == kInputSource ? "input" : "act" + std::to_string(layer_index);
}

NetworkGraph parse_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  NetworkGraph net;
  std::set<std::string> seen_ids;
  bool have_input = false;
  std::string line;
  int lineno = 0;

  auto add_tensor = [&](const std::string& id, std::size_t count, const std::string& where) {
    if (id.empty()) throw ParseError("empty tensor id at " + where);
    if (!seen_ids.insert(id).second) {
      throw ParseError("tensor id '" + id + "' reused at " + where);
    }
    net.tensor_order.push_back({id, count});
  };

  auto shape_of = [&](int src) -> const Shape& {
    return src == kInputSource ? net.input_shape : net.layers[src].out_shape;
  };

  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind) || kind[0] == '#') continue;
    const std::string where = path + ":" + std::to_string(lineno);

    if (kind == "input") {
      if (have_input) throw ParseError("duplicate input line at " + where);
      FieldSet f(ls, where);
      net.input_shape = {f.take_int("c"), f.take_int("h"), f.take_int("w")};
      f.finish();
      if (net.input_shape.c < 1 || net.input_shape.h < 1 || net.input_shape.w < 1) {
        throw ConstraintError("input shape must be positive at " + where);
      }
      have_input = true;
      continue;
    }
    if (!have_input) throw ParseError("first manifest line must declare input, at " + where);

    const int index = static_cast<int>(net.layers.size());
    const std::string prev = index > 0 ? std::to_string(index - 1) : "input";
    FieldSet f(ls, where);
    Layer layer;

    if (kind == "conv" || kind == "fc") {
      layer.kind = kind == "conv" ? LayerKind::conv : LayerKind::fc;
      layer.ic = f.take_int("ic");
      layer.oc = f.take_int("oc");
      if (layer.ic < 1 || layer.oc < 1) throw ConstraintError("bad channel count at " + where);
      if (layer.kind == LayerKind::conv) {
        const auto [kh, kw] = parse_kernel(f.take("k"), where);
        layer.kh = kh;
        layer.kw = kw;
        layer.stride = f.take_int_or("stride", 1);
        layer.pad = f.take_int_or("pad", 0);
      } else {
        layer.kh = layer.kw = 1;
        layer.stride = 1;
        layer.pad = 0;
      }
      layer.act = parse_activation(f.take_or("act", "none"), where);
      layer.w_id = f.take("w");
      layer.b_id = f.take("b");
      layer.src = parse_sources(f.take_or("src", prev), index, where);
      f.finish();
      if (layer.src.size() != 1) throw ParseError("conv/fc takes one source at " + where);
      layer.in_shape = shape_of(layer.src[0]);
      if (layer.kind == LayerKind::conv) {
        if (layer.in_shape.c != layer.ic) {
          throw ConstraintError("ic mismatch: layer declares " + std::to_string(layer.ic) +
                                ", input has " + std::to_string(layer.in_shape.c) + " at " + where);
        }
        layer.out_shape = {layer.oc,
                           conv_extent(layer.in_shape.h, layer.pad, layer.kh, layer.stride, where),
                           conv_extent(layer.in_shape.w, layer.pad, layer.kw, layer.stride, where)};
      } else {
        if (layer.in_shape.count() != layer.ic) {
          throw ConstraintError("fc ic " + std::to_string(layer.ic) +
                                " != flattened input " + std::to_string(layer.in_shape.count()) +
                                " at " + where);
        }
        layer.out_shape = {layer.oc, 1, 1};
      }
      add_tensor(layer.w_id, static_cast<std::size_t>(layer.oc) * layer.ic * layer.kh * layer.kw,
                 where);
      add_tensor(layer.b_id, static_cast<std::size_t>(layer.oc), where);
    } else if (kind == "maxpool" || kind == "avgpool") {
      layer.kind = kind == "maxpool" ? LayerKind::maxpool : LayerKind::avgpool;
      layer.pool_k = f.take_int("k");
      layer.pool_stride = f.take_int_or("stride", layer.pool_k);
      layer.src = parse_sources(f.take_or("src", prev), index, where);
      f.finish();
      if (layer.src.size() != 1) throw ParseError("pool takes one source at " + where);
      layer.in_shape = shape_of(layer.src[0]);
      layer.out_shape = {layer.in_shape.c,
                         conv_extent(layer.in_shape.h, 0, layer.pool_k, layer.pool_stride, where),
                         conv_extent(layer.in_shape.w, 0, layer.pool_k, layer.pool_stride, where)};
    } else if (kind == "relu" || kind == "leaky") {
      layer.kind = kind == "relu" ? LayerKind::relu : LayerKind::leaky;
      if (layer.kind == LayerKind::leaky) {
        layer.leaky_shift = f.take_int("shift");
        if (layer.leaky_shift < 0 || layer.leaky_shift > 15) {
          throw ConstraintError("leaky shift out of range at " + where);
        }
      }
      layer.src = parse_sources(f.take_or("src", prev), index, where);
      f.finish();
      if (layer.src.size() != 1) throw ParseError("activation takes one source at " + where);
      layer.in_shape = shape_of(layer.src[0]);
      layer.out_shape = layer.in_shape;
    } else if (kind == "add" || kind == "concat") {
      layer.kind = kind == "add" ? LayerKind::add : LayerKind::concat;
      layer.src = parse_sources(f.take("src"), index, where);
      f.finish();
      if (layer.src.size() < 2) throw ParseError(kind + " needs at least two sources at " + where);
      layer.in_shape = shape_of(layer.src[0]);
      if (layer.kind == LayerKind::add) {
        for (int s : layer.src) {
          if (!(shape_of(s) == layer.in_shape)) {
            throw ConstraintError("add sources disagree on shape at " + where);
          }
        }
        layer.out_shape = layer.in_shape;
      } else {
        int channels = 0;
        for (int s : layer.src) {
          const Shape& sh = shape_of(s);
          if (sh.h != layer.in_shape.h || sh.w != layer.in_shape.w) {
            throw ConstraintError("concat sources disagree on spatial size at " + where);
          }
          channels += sh.c;
        }
        layer.out_shape = {channels, layer.in_shape.h, layer.in_shape.w};
      }
    } else if (kind == "bn") {
      layer.kind = LayerKind::bn;
      layer.gamma_id = f.take("gamma");
      layer.beta_id = f.take("beta");
      layer.mean_id = f.take("mean");
      layer.var_id = f.take("var");
      layer.eps = to_double(f.take_or("eps", "1e-5"), where);
      layer.src = parse_sources(f.take_or("src", prev), index, where);
      f.finish();
      if (layer.src.size() != 1) throw ParseError("bn takes one source at " + where);
      layer.in_shape = shape_of(layer.src[0]);
      layer.out_shape = layer.in_shape;
      const auto n = static_cast<std::size_t>(layer.in_shape.c);
      add_tensor(layer.gamma_id, n, where);
      add_tensor(layer.beta_id, n, where);
      add_tensor(layer.mean_id, n, where);
      add_tensor(layer.var_id, n, where);
    } else {
      throw ParseError("unknown layer kind '" + kind + "' at " + where);
    }

    net.layers.push_back(std::move(layer));
  }

  if (!have_input) throw ParseError("manifest " + path + " declares no input");
  if (net.layers.empty()) throw ParseError("manifest " + path + " has no layers");
  return net;
}

WeightMap load_weights(const NetworkGraph& net, const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  std::size_t total = 0;
  for (const TensorInfo& t : net.tensor_order) total += t.count;
  if (bytes.size() != total * 4) {
    throw ParseError("weight blob " + path + " holds " + std::to_string(bytes.size()) +
                     " bytes, expected " + std::to_string(total * 4));
  }
  WeightMap weights;
  std::size_t off = 0;
  for (const TensorInfo& t : net.tensor_order) {
    std::vector<float> values(t.count);
    for (std::size_t i = 0; i < t.count; ++i, off += 4) values[i] = read_f32le(&bytes[off]);
    weights.emplace(t.id, std::move(values));
  }
  return weights;
}

void fold_batchnorm(NetworkGraph& net, WeightMap& weights) {
  for (;;) {
    int bn_index = -1;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      if (net.layers[i].kind == LayerKind::bn) {
        bn_index = static_cast<int>(i);
        break;
      }
    }
    if (bn_index < 0) return;

    const Layer bn = net.layers[bn_index];
    const std::string tag = "bn layer " + std::to_string(bn_index);
    const int src = bn.src[0];
    if (src == kInputSource) throw ConstraintError(tag + " normalizes the raw input, not foldable");
    Layer& producer = net.layers[src];
    if (producer.kind != LayerKind::conv && producer.kind != LayerKind::fc) {
      throw ConstraintError(tag + " follows a non-compute layer, not foldable");
    }
    if (producer.act.kind != Activation::Kind::none) {
      throw ConstraintError(tag + " follows an already-activated layer, not foldable");
    }
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      if (static_cast<int>(i) == bn_index) continue;
      for (int s : net.layers[i].src) {
        if (s == src) {
          throw ConstraintError(tag + " shares its producer with layer " + std::to_string(i) +
                                ", not foldable");
        }
      }
    }

    const auto& gamma = weights.at(bn.gamma_id);
    const auto& beta = weights.at(bn.beta_id);
    const auto& mean = weights.at(bn.mean_id);
    const auto& var = weights.at(bn.var_id);
    auto& w = weights.at(producer.w_id);
    auto& b = weights.at(producer.b_id);
    const std::size_t per_oc = w.size() / static_cast<std::size_t>(producer.oc);
    for (int c = 0; c < producer.oc; ++c) {
      const double denom = static_cast<double>(var[c]) + bn.eps;
      if (!(denom > 0.0)) throw ConstraintError(tag + " has non-positive variance, degenerate");
      const double scale = static_cast<double>(gamma[c]) / std::sqrt(denom);
      for (std::size_t k = 0; k < per_oc; ++k) {
        auto& wv = w[static_cast<std::size_t>(c) * per_oc + k];
        wv = static_cast<float>(static_cast<double>(wv) * scale);
      }
      b[c] = static_cast<float>((static_cast<double>(b[c]) - mean[c]) * scale + beta[c]);
    }

    // Drop the bn layer: later indices shift down by one; consumers of the bn
    // output move to the producer.
    net.layers.erase(net.layers.begin() + bn_index);
    for (Layer& layer : net.layers) {
      for (int& s : layer.src) {
        if (s == bn_index) {
          s = src;
        } else if (s > bn_index) {
          --s;
        }
      }
    }
  }
}

std::pair<NetworkGraph, WeightMap> import_network(const std::string& manifest_path,
                                                  const std::string& weights_path) {
  NetworkGraph net = parse_manifest(manifest_path);
  WeightMap weights = load_weights(net, weights_path);
  fold_batchnorm(net, weights);
  return {std::move(net), std::move(weights)};
}

std::vector<std::vector<std::string>> shared_sf_groups(const NetworkGraph& net) {
  // Union-find over tensor ids; code-passing layers tie output to input.
  std::map<std::string, std::string> parent;
  auto find = [&](std::string id) {
    while (true) {
      auto it = parent.find(id);
      if (it == parent.end() || it->second == id) return id;
      id = it->second;
    }
  };
  auto unite = [&](const std::string& a, const std::string& b) {
    const std::string ra = find(a), rb = find(b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  };

  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& layer = net.layers[i];
    const std::string out = NetworkGraph::output_id(static_cast<int>(i));
    switch (layer.kind) {
      case LayerKind::maxpool:
      case LayerKind::avgpool:
      case LayerKind::relu:
      case LayerKind::leaky:
        unite(out, NetworkGraph::output_id(layer.src[0]));
        break;
      case LayerKind::concat:
        for (int s : layer.src) unite(out, NetworkGraph::output_id(s));
        break;
      default:
        break;
    }
  }

  std::map<std::string, std::vector<std::string>> buckets;
  auto note = [&](const std::string& id) { buckets[find(id)].push_back(id); };
  note("input");
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    note(NetworkGraph::output_id(static_cast<int>(i)));
  }
  std::vector<std::vector<std::string>> groups;
  for (auto& [root, members] : buckets) {
    if (members.size() >= 2) groups.push_back(std::move(members));
  }
  return groups;
}

Dataset load_dataset(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  static constexpr char kMagic[] = "LPFPDS1\n";
  if (bytes.size() < 28 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw ParseError(path + " is not a dataset blob (bad magic)");
  }
  Dataset ds;
  const std::uint32_t n = read_u32le(&bytes[8]);
  ds.shape = {static_cast<int>(read_u32le(&bytes[12])), static_cast<int>(read_u32le(&bytes[16])),
              static_cast<int>(read_u32le(&bytes[20]))};
  ds.num_classes = static_cast<int>(read_u32le(&bytes[24]));
  if (ds.shape.c < 1 || ds.shape.h < 1 || ds.shape.w < 1 || ds.num_classes < 1) {
    throw ParseError(path + " header has non-positive dimensions");
  }
  const std::size_t per = static_cast<std::size_t>(ds.shape.count());
  const std::size_t expect = 28 + n * (per * 4 + 4);
  if (bytes.size() != expect) {
    throw ParseError(path + " holds " + std::to_string(bytes.size()) + " bytes, expected " +
                     std::to_string(expect));
  }
  std::size_t off = 28;
  ds.samples.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::vector<float> sample(per);
    for (std::size_t k = 0; k < per; ++k, off += 4) sample[k] = read_f32le(&bytes[off]);
    ds.samples.push_back(std::move(sample));
  }
  ds.labels.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i, off += 4) {
    const std::uint32_t label = read_u32le(&bytes[off]);
    if (label >= static_cast<std::uint32_t>(ds.num_classes)) {
      throw ParseError(path + " label " + std::to_string(label) + " out of range");
    }
    ds.labels.push_back(static_cast<int>(label));
  }
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  if (ds.samples.size() != ds.labels.size()) {
    throw ConstraintError("dataset sample/label counts differ");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write("LPFPDS1\n", 8);
  write_u32le(out, static_cast<std::uint32_t>(ds.samples.size()));
  write_u32le(out, static_cast<std::uint32_t>(ds.shape.c));
  write_u32le(out, static_cast<std::uint32_t>(ds.shape.h));
  write_u32le(out, static_cast<std::uint32_t>(ds.shape.w));
  write_u32le(out, static_cast<std::uint32_t>(ds.num_classes));
  for (const auto& sample : ds.samples) {
    if (sample.size() != static_cast<std::size_t>(ds.shape.count())) {
      throw ConstraintError("dataset sample size does not match its shape");
    }
    for (float v : sample) write_f32le(out, v);
  }
  for (int label : ds.labels) write_u32le(out, static_cast<std::uint32_t>(label));
  if (!out.flush()) throw IoError("failed writing " + path);
}

std::vector<float> load_input_blob(const std::string& path, const Shape& shape) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  const std::size_t expect = static_cast<std::size_t>(shape.count()) * 4;
  if (bytes.size() != expect) {
    throw ParseError(path + " holds " + std::to_string(bytes.size()) + " bytes, expected " +
                     std::to_string(expect) + " for the network input");
  }
  std::vector<float> values(shape.count());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = read_f32le(&bytes[i * 4]);
  return values;
}

}  // namespace lpfp

// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: "ckfree-ckpt v1" header, then length-prefixed
// little-endian f64 arrays in (edges, stage weights, stage optimizer state,
// data cursor) order. Step counters and per-stage scalars (step, omega, lr)
// travel as small f64 arrays; restore is bit-exact.

#include <bit>
#include <cstring>
#include <fstream>

#include "ckfree/errors.hpp"
#include "ckfree/recovery.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace ckfree::recovery {

namespace {

constexpr char kMagic[] = "ckfree-ckpt v1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  std::uint8_t buf[8];
  std::memcpy(buf, &v, 8);
  out.insert(out.end(), buf, buf + 8);
}

void put_array(std::vector<std::uint8_t>& out, const double* data, std::size_t n) {
  put_u64(out, n);
  const std::size_t bytes = n * sizeof(double);
  const std::size_t off = out.size();
  out.resize(off + bytes);
  std::memcpy(out.data() + off, data, bytes);
}

void put_array(std::vector<std::uint8_t>& out, const std::vector<double>& v) {
  put_array(out, v.data(), v.size());
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  std::uint64_t u64() {
    if (pos + 8 > bytes.size()) throw ParseError("checkpoint: truncated integer");
    std::uint64_t v;
    std::memcpy(&v, bytes.data() + pos, 8);
    pos += 8;
    return v;
  }

  std::vector<double> array(std::size_t expect) {
    const std::uint64_t n = u64();
    if (n != expect)
      throw ParseError("checkpoint: array length " + std::to_string(n) + ", expected " +
                       std::to_string(expect));
    if (pos + n * sizeof(double) > bytes.size()) throw ParseError("checkpoint: truncated array");
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
    return v;
  }
};

}  // namespace

CheckpointSnapshot checkpoint_save(const ModelState& model, long iteration, std::uint64_t data_cursor) {
  CheckpointSnapshot snap;
  snap.iteration = iteration;
  snap.data_cursor = data_cursor;
  snap.model = model;
  return snap;
}

void checkpoint_restore(const CheckpointSnapshot& snapshot, ModelState& model, long& iteration,
                        std::uint64_t& data_cursor) {
  model = snapshot.model;
  iteration = snapshot.iteration;
  data_cursor = snapshot.data_cursor;
}

std::vector<std::uint8_t> serialize_checkpoint(const CheckpointSnapshot& snapshot) {
  const ModelState& m = snapshot.model;
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + kMagicLen);
  put_u64(out, static_cast<std::uint64_t>(snapshot.iteration));

  // Edges: weights, moments, then scalar state.
  put_array(out, m.edges.layers.embed.values());
  put_array(out, m.edges.opt_embed.m);
  put_array(out, m.edges.opt_embed.v);
  put_array(out, m.edges.layers.deembed.values());
  put_array(out, m.edges.opt_deembed.m);
  put_array(out, m.edges.opt_deembed.v);
  const double edge_scalars[3] = {static_cast<double>(m.edges.opt_embed.step),
                                  static_cast<double>(m.edges.opt_deembed.step), m.edges.lr};
  put_array(out, edge_scalars, 3);

  for (const auto& s : m.stages) put_array(out, s.flat_weights().values());
  for (const auto& s : m.stages) {
    put_array(out, s.opt.m);
    put_array(out, s.opt.v);
    const double scalars[3] = {static_cast<double>(s.opt.step), s.omega, s.lr};
    put_array(out, scalars, 3);
  }

  put_u64(out, snapshot.data_cursor);
  return out;
}

CheckpointSnapshot deserialize_checkpoint(const std::vector<std::uint8_t>& bytes,
                                          const ModelSpec& spec) {
  if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0)
    throw ParseError("checkpoint: missing 'ckfree-ckpt v1' header");

  CheckpointSnapshot snap;
  snap.model.spec = spec;
  Reader r{bytes, kMagicLen};
  snap.iteration = static_cast<long>(r.u64());

  EdgeState& e = snap.model.edges;
  e.layers.embed = ParameterVector(r.array(spec.input_dim * spec.model_dim),
                                   {spec.input_dim, spec.model_dim});
  e.opt_embed.m = r.array(e.layers.embed.size());
  e.opt_embed.v = r.array(e.layers.embed.size());
  e.layers.deembed = ParameterVector(r.array(spec.model_dim * spec.output_dim),
                                     {spec.model_dim, spec.output_dim});
  e.opt_deembed.m = r.array(e.layers.deembed.size());
  e.opt_deembed.v = r.array(e.layers.deembed.size());
  {
    std::vector<double> scalars = r.array(3);
    e.opt_embed.step = static_cast<long>(scalars[0]);
    e.opt_deembed.step = static_cast<long>(scalars[1]);
    e.lr = scalars[2];
  }

  snap.model.stages.resize(spec.num_stages);
  for (std::size_t i = 0; i < spec.num_stages; ++i) {
    StageState& s = snap.model.stages[i];
    s.stage_id = static_cast<int>(i + 1);
    const LayerRange& range = spec.stage_range(s.stage_id);
    s.blocks.resize(range.count());
    for (auto& b : s.blocks) {
      b.w1 = ParameterVector::zeros({spec.model_dim, spec.hidden_dim});
      b.w2 = ParameterVector::zeros({spec.hidden_dim, spec.model_dim});
    }
    s.set_flat_weights(ParameterVector(r.array(s.param_count()), {s.param_count()}));
  }
  for (auto& s : snap.model.stages) {
    s.opt.m = r.array(s.param_count());
    s.opt.v = r.array(s.param_count());
    std::vector<double> scalars = r.array(3);
    s.opt.step = static_cast<long>(scalars[0]);
    s.omega = scalars[1];
    s.lr = scalars[2];
  }

  snap.data_cursor = r.u64();
  if (r.pos != bytes.size()) throw ParseError("checkpoint: trailing bytes after data cursor");
  return snap;
}

void save_checkpoint_file(const CheckpointSnapshot& snapshot, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  const auto bytes = serialize_checkpoint(snapshot);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

CheckpointSnapshot load_checkpoint_file(const std::string& path, const ModelSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint file '" + path + "'");
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes, spec);
}

}  // namespace ckfree::recovery

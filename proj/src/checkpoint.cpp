#include "claws/checkpoint.hpp"

#include "binary_io.hpp"
#include "claws/errors.hpp"

namespace claws {

namespace {

constexpr std::string_view kMagic = "CLWSCKPT";
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
  ckpt.params.validate();
  const ModelDims dims = ckpt.params.dims();
  if (ckpt.opt.square_avg.dims() != dims) {
    throw DimensionError("checkpoint optimizer state does not match parameter dimensions");
  }
  io::Writer w;
  w.bytes(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(dims.d));
  w.u32(static_cast<std::uint32_t>(dims.z1));
  w.u32(static_cast<std::uint32_t>(dims.z2));
  for (const Matrix* t : ckpt.params.tensors())
    for (double v : t->values()) w.f64(v);
  for (const Matrix* t : ckpt.opt.square_avg.tensors())
    for (double v : t->values()) w.f64(v);
  w.u64(ckpt.opt.iteration);
  return w.buffer();
}

Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& source) {
  io::Reader r(bytes, source);
  r.expect_magic(kMagic);
  const auto version = r.u32("version");
  if (version != kVersion) {
    throw FormatError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  ModelDims dims;
  dims.d = r.u32("d");
  dims.z1 = r.u32("z1");
  dims.z2 = r.u32("z2");
  Checkpoint c;
  c.params = ClawsParams::zeros(dims);
  c.opt = OptState::zeros(dims);
  for (Matrix* t : c.params.tensors())
    for (double& v : t->values()) v = r.f64("parameter");
  for (Matrix* t : c.opt.square_avg.tensors())
    for (double& v : t->values()) v = r.f64("optimizer state");
  c.opt.iteration = r.u64("iteration");
  r.expect_end();
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

}  // namespace claws

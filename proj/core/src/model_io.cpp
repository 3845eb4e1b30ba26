#include "diunet/model_io.hpp"

#include "diunet/io_util.hpp"

namespace diunet {

namespace {

void put_record(ByteWriter& w, const std::string& name, const Tensor<float>& t) {
  w.put_string(name);
  w.put(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.put(static_cast<std::uint32_t>(d));
  w.put_span(t.data());
}

// Reads one record into `target`, which must already have the expected name
// and shape; anything else means the file belongs to a different model.
void get_record(ByteReader& r, const std::string& expected_name, Tensor<float>& target) {
  const std::string name = r.get_string();
  if (name != expected_name) {
    throw FormatError("expected tensor '" + expected_name + "', found '" + name + "'");
  }
  const auto ndim = r.get<std::uint32_t>();
  if (ndim > 8) throw FormatError("tensor '" + name + "' claims " + std::to_string(ndim) + " dims");
  Shape shape(ndim);
  for (auto& d : shape) d = r.get<std::uint32_t>();
  if (shape != target.shape()) {
    throw FormatError("tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                      shape_string(target.shape()));
  }
  r.get_span(target.data());
}

}  // namespace

std::vector<std::uint8_t> encode_model(Model<float>& model) {
  const ModelConfig& c = model.config();
  ByteWriter w;
  w.put_magic("DIUN");
  w.put(kModelFormatVersion);
  for (int v : {c.depth, c.base_filters, c.height, c.width, c.channels, c.classes})
    w.put(static_cast<std::uint32_t>(v));
  w.put(static_cast<std::uint8_t>(c.variant == Variant::Dilated ? 0 : 1));

  const auto params = model.parameters();
  w.put(static_cast<std::uint32_t>(params.size()));
  for (const Parameter<float>* p : params) put_record(w, p->name, p->value);
  const auto buffers = model.buffers();
  w.put(static_cast<std::uint32_t>(buffers.size()));
  for (const BufferRef<float>& b : buffers) put_record(w, b.name, *b.tensor);
  return w.bytes();
}

Model<float> decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("DIUN");
  const auto version = r.get<std::uint16_t>();
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version));
  }
  ModelConfig c;
  for (int* field : {&c.depth, &c.base_filters, &c.height, &c.width, &c.channels, &c.classes}) {
    const auto v = r.get<std::uint32_t>();
    if (v > 1u << 20) throw FormatError("implausible model config value " + std::to_string(v));
    *field = static_cast<int>(v);
  }
  const auto variant = r.get<std::uint8_t>();
  if (variant > 1) throw FormatError("invalid variant byte " + std::to_string(variant));
  c.variant = variant == 0 ? Variant::Dilated : Variant::Baseline;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid model config: ") + e.what());
  }

  Model<float> model(c, 0);
  const auto params = model.parameters();
  if (r.get<std::uint32_t>() != params.size()) {
    throw FormatError("parameter count does not match the stored config");
  }
  for (Parameter<float>* p : params) get_record(r, p->name, p->value);
  const auto buffers = model.buffers();
  if (r.get<std::uint32_t>() != buffers.size()) {
    throw FormatError("buffer count does not match the stored config");
  }
  for (const BufferRef<float>& b : buffers) get_record(r, b.name, *b.tensor);
  if (!r.at_end()) throw FormatError("trailing bytes after the model");
  return model;
}

void save_model(const std::filesystem::path& path, Model<float>& model) {
  write_file_atomic(path, encode_model(model));
}

Model<float> load_model(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_model(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace diunet

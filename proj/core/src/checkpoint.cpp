#include "nl2code/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nl2code/errors.hpp"

namespace nl2code {

namespace {

constexpr const char* kMagic = "nl2code-checkpoint 1";

void write_doubles(std::ofstream& out, const std::vector<double>& values) {
  static_assert(sizeof(double) == 8);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("checkpoint manifest: bad number for " + what + ": \"" + s + "\"");
  }
}

}  // namespace

void save_checkpoint(const std::string& path_stem,
                     const std::vector<std::pair<std::string, Tensor>>& params,
                     const AdamState& adam,
                     const std::vector<std::pair<std::string, std::string>>& config_fields,
                     long long step) {
  const std::string manifest_path = path_stem + ".manifest";
  const std::string blob_path = path_stem + ".blob";

  std::ofstream manifest(manifest_path);
  if (!manifest) throw std::runtime_error("cannot write " + manifest_path);
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw std::runtime_error("cannot write " + blob_path);

  manifest << kMagic << '\n';
  manifest << "step " << step << '\n';
  manifest << "adam_step " << adam.step << '\n';
  manifest << "adam_beta1 " << format_double(adam.beta1) << '\n';
  manifest << "adam_beta2 " << format_double(adam.beta2) << '\n';
  manifest << "adam_eps " << format_double(adam.eps) << '\n';
  for (const auto& [key, value] : config_fields) {
    manifest << "config " << key << ' ' << value << '\n';
  }

  std::size_t offset = 0;
  const std::vector<double> empty;
  auto moment_of = [&](const std::map<std::string, std::vector<double>>& slots,
                       const std::string& name) -> const std::vector<double>& {
    auto it = slots.find(name);
    return it == slots.end() ? empty : it->second;
  };

  for (const auto& [name, p] : params) {
    manifest << "param " << name << ' ' << p.ndim();
    for (int d : p.shape()) manifest << ' ' << d;
    manifest << ' ' << offset << '\n';
    write_doubles(blob, p.values());
    offset += p.numel() * sizeof(double);
  }
  for (const char* slot : {"adam_m", "adam_v"}) {
    const bool first_moment = std::strcmp(slot, "adam_m") == 0;
    for (const auto& [name, p] : params) {
      manifest << slot << ' ' << name << ' ' << offset << '\n';
      const auto& values = moment_of(first_moment ? adam.m : adam.v, name);
      if (values.empty()) {
        write_doubles(blob, std::vector<double>(p.numel(), 0.0));
      } else {
        if (values.size() != p.numel()) {
          throw std::runtime_error("checkpoint: optimizer slot size mismatch for " + name);
        }
        write_doubles(blob, values);
      }
      offset += p.numel() * sizeof(double);
    }
  }
  manifest << "blob_bytes " << offset << '\n';
  if (!manifest || !blob) throw std::runtime_error("checkpoint write failed for " + path_stem);
}

LoadedCheckpoint load_checkpoint(const std::string& path_stem) {
  const std::string manifest_path = path_stem + ".manifest";
  const std::string blob_path = path_stem + ".blob";

  std::ifstream manifest(manifest_path);
  if (!manifest) throw ValidationError("cannot open " + manifest_path);
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw ValidationError("cannot open " + blob_path);

  std::string blob_bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());

  LoadedCheckpoint out;
  struct Slot {
    std::string kind, name;
    std::size_t offset;
    std::vector<int> shape;  // params only
  };
  std::vector<Slot> slots;
  long long declared_bytes = -1;

  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = manifest_path + ": line " + std::to_string(line_no);
    if (line_no == 1) {
      if (line != kMagic) throw ValidationError(where + ": not a checkpoint manifest");
      continue;
    }
    std::istringstream fields(line);
    std::string kind;
    fields >> kind;
    if (kind == "step") {
      fields >> out.step;
    } else if (kind == "adam_step") {
      fields >> out.adam.step;
    } else if (kind == "adam_beta1" || kind == "adam_beta2" || kind == "adam_eps") {
      std::string v;
      fields >> v;
      const double parsed = parse_double(v, kind);
      (kind == "adam_beta1" ? out.adam.beta1
                            : kind == "adam_beta2" ? out.adam.beta2 : out.adam.eps) = parsed;
    } else if (kind == "config") {
      std::string key;
      fields >> key;
      std::string value;
      std::getline(fields, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      if (key.empty()) throw ValidationError(where + ": config line missing key");
      out.config_fields.emplace_back(key, value);
    } else if (kind == "param") {
      Slot s;
      s.kind = kind;
      int ndim = -1;
      fields >> s.name >> ndim;
      if (ndim < 0 || ndim > 8) throw ValidationError(where + ": bad tensor rank");
      s.shape.resize(ndim);
      for (int& d : s.shape) fields >> d;
      fields >> s.offset;
      if (!fields) throw ValidationError(where + ": malformed param line");
      slots.push_back(std::move(s));
    } else if (kind == "adam_m" || kind == "adam_v") {
      Slot s;
      s.kind = kind;
      fields >> s.name >> s.offset;
      if (!fields) throw ValidationError(where + ": malformed optimizer slot line");
      slots.push_back(std::move(s));
    } else if (kind == "blob_bytes") {
      fields >> declared_bytes;
    } else {
      throw ValidationError(where + ": unknown record \"" + kind + "\"");
    }
    if (fields.fail()) throw ValidationError(where + ": malformed record");
  }
  if (declared_bytes < 0) throw ValidationError(manifest_path + ": missing blob_bytes record");
  if (static_cast<std::size_t>(declared_bytes) != blob_bytes.size()) {
    throw ValidationError(blob_path + ": expected " + std::to_string(declared_bytes) +
                          " bytes, found " + std::to_string(blob_bytes.size()));
  }

  auto read_slot = [&](const Slot& s, std::size_t count) {
    std::vector<double> values(count);
    const std::size_t bytes = count * sizeof(double);
    if (s.offset + bytes > blob_bytes.size()) {
      throw ValidationError(blob_path + ": slot " + s.name + " overruns the blob");
    }
    std::memcpy(values.data(), blob_bytes.data() + s.offset, bytes);
    return values;
  };

  for (const Slot& s : slots) {
    if (s.kind != "param") continue;
    const std::size_t count = shape_numel(s.shape);
    out.shapes[s.name] = s.shape;
    out.tensors[s.name] = read_slot(s, count);
  }
  for (const Slot& s : slots) {
    if (s.kind == "param") continue;
    auto it = out.shapes.find(s.name);
    if (it == out.shapes.end()) {
      throw ValidationError(manifest_path + ": optimizer slot for unknown parameter " + s.name);
    }
    const std::size_t count = shape_numel(it->second);
    (s.kind == "adam_m" ? out.adam.m : out.adam.v)[s.name] = read_slot(s, count);
  }
  return out;
}

void apply_checkpoint(const LoadedCheckpoint& ckpt,
                      std::vector<std::pair<std::string, Tensor>>& params) {
  for (auto& [name, p] : params) {
    auto values = ckpt.tensors.find(name);
    if (values == ckpt.tensors.end()) {
      throw ValidationError("checkpoint is missing parameter " + name);
    }
    auto shape = ckpt.shapes.find(name);
    if (shape->second != p.shape()) {
      std::ostringstream os;
      os << "checkpoint shape mismatch for " << name << ": stored [";
      for (std::size_t i = 0; i < shape->second.size(); ++i) {
        os << (i ? " " : "") << shape->second[i];
      }
      os << "], model expects [";
      for (std::size_t i = 0; i < p.shape().size(); ++i) os << (i ? " " : "") << p.shape()[i];
      os << "]";
      throw ValidationError(os.str());
    }
    p.values() = values->second;
  }
}

}  // namespace nl2code

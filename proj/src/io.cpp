#include "stochlod/io.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <fstream>

namespace stochlod {
namespace io {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "field serialization assumes a little-endian host");

void write_doubles_le(const std::string& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw IoError("write failed for " + path);
}

std::vector<double> read_doubles_le(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path);
  const std::streamsize bytes = in.tellg();
  if (bytes % static_cast<std::streamsize>(sizeof(double)) != 0)
    throw IoError(path + " is not a double array");
  std::vector<double> values(static_cast<std::size_t>(bytes) / sizeof(double));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(values.data()), bytes);
  if (!in) throw IoError("read failed for " + path);
  return values;
}

void write_field(const std::string& stem, const FieldRealization& field,
                 std::uint64_t seed) {
  write_doubles_le(stem + ".bin", field.values);
  json manifest;
  manifest["kind"] = field.kind == FieldKind::gaussian ? "gaussian" : "lognormal";
  manifest["cells_per_axis"] = field.grid.cells_per_axis();
  manifest["coarse_cells_per_axis"] = field.grid.parent.n;
  manifest["refinement"] = field.grid.refinement;
  manifest["H"] = field.grid.parent.H;
  manifest["h"] = field.grid.h();
  manifest["seed"] = seed;
  manifest["count"] = field.values.size();
  std::ofstream out(stem + ".json", std::ios::trunc);
  if (!out) throw IoError("cannot open " + stem + ".json");
  out << manifest.dump(2) << '\n';
}

FieldRealization read_field(const std::string& stem) {
  std::ifstream in(stem + ".json");
  if (!in) throw IoError("cannot open " + stem + ".json");
  json manifest;
  in >> manifest;
  FieldRealization field;
  const double H = manifest.at("H").get<double>();
  field.grid = refine(build_coarse_grid(H, 2), manifest.at("refinement").get<int>());
  field.kind = manifest.at("kind").get<std::string>() == "gaussian"
                   ? FieldKind::gaussian
                   : FieldKind::lognormal;
  field.values = read_doubles_le(stem + ".bin");
  if (field.values.size() != manifest.at("count").get<std::size_t>())
    throw IoError(stem + ".bin does not match its manifest");
  return field;
}

}  // namespace io
}  // namespace stochlod

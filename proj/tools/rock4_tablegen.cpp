// Regenerates include/stork/detail/rock4_table.inc.
//
//   rock4_tablegen > include/stork/detail/rock4_table.inc
//
// Takes a few minutes; the output is deterministic.

#include <cinttypes>
#include <cstdio>
#include <string>
#include <vector>

#include "stork/rock4_design.hpp"
#include "stork/rock4_table_format.hpp"

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void emit_array(const char* type, const char* name, const std::vector<std::string>& items) {
  std::printf("inline constexpr %s %s[] = {", type, name);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i % 4 == 0) std::printf("\n    ");
    std::printf("%s,%s", items[i].c_str(), (i + 1) % 4 == 0 ? "" : " ");
  }
  std::printf("\n};\n\n");
}

}  // namespace

int main() {
  const auto degrees = stork::rock4_table_format::supported_degrees();
  std::vector<double> scale, extent, mu, kappa, finishing, literal, w4;
  std::vector<int> offsets;
  for (int s : degrees) {
    std::fprintf(stderr, "designing s=%d\n", s);
    const auto m = stork::rock4_design::design(s);
    offsets.push_back(static_cast<int>(mu.size()));
    scale.push_back(static_cast<double>(m.scale));
    extent.push_back(static_cast<double>(m.extent));
    for (int j = 1; j <= s - 4; ++j) {
      mu.push_back(static_cast<double>(m.mu[j]));
      kappa.push_back(static_cast<double>(j >= 2 ? m.kappa[j] : 0.0L));
    }
    for (auto v : m.a) finishing.push_back(static_cast<double>(v));
    for (auto v : m.b) finishing.push_back(static_cast<double>(v));
    for (auto v : m.literal_mu) literal.push_back(static_cast<double>(v));
    for (int k = 1; k <= 4; ++k) w4.push_back(static_cast<double>(m.w4[k]));
  }
  offsets.push_back(static_cast<int>(mu.size()));

  const std::uint64_t checksum = stork::rock4_table_format::checksum(
      {&scale, &extent, &mu, &kappa, &finishing, &literal, &w4});

  auto strs = [](const std::vector<double>& v) {
    std::vector<std::string> out;
    for (double x : v) out.push_back(fmt(x));
    return out;
  };
  std::vector<std::string> deg_s, off_s;
  for (int d : degrees) deg_s.push_back(std::to_string(d));
  for (int o : offsets) off_s.push_back(std::to_string(o));

  std::printf("// Generated by tools/rock4_tablegen. Do not edit.\n");
  std::printf("// Fourth-order orthogonal Runge-Kutta-Chebyshev coefficients.\n\n");
  std::printf("inline constexpr char kVersion[] = \"%s\";\n",
              stork::rock4_table_format::kVersion);
  std::printf("inline constexpr std::uint64_t kChecksum = 0x%016" PRIx64 "ULL;\n\n", checksum);
  emit_array("int", "kDegrees", deg_s);
  emit_array("int", "kOffsets", off_s);
  emit_array("double", "kScale", strs(scale));
  emit_array("double", "kExtent", strs(extent));
  emit_array("double", "kMu", strs(mu));
  emit_array("double", "kKappa", strs(kappa));
  emit_array("double", "kFinishing", strs(finishing));
  emit_array("double", "kLiteralMu", strs(literal));
  emit_array("double", "kW4", strs(w4));
  return 0;
}

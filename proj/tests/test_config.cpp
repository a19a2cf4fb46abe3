#include "gapsol/config.hpp"
#include "gapsol/io.hpp"

#include <gtest/gtest.h>

using namespace gapsol;

namespace {

std::string error_path(const std::string& text) {
  try {
    parse_config_string(text);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gapsol_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Config, DefaultsParse) {
  const RunConfig c = parse_config_string("");
  EXPECT_EQ(c.lattice.kind, "square");
  EXPECT_EQ(c.solver.cutoff, 3);
  EXPECT_EQ(c.edge.side, "upper");
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"homogeneous", "n1_model", "hex_ring"}) {
    const RunConfig c = load_config(std::string(GAPSOL_SOURCE_DIR) + "/configs/" + name + ".toml");
    EXPECT_NO_THROW(validate(c)) << name;
  }
  const RunConfig hex = load_config(std::string(GAPSOL_SOURCE_DIR) + "/configs/hex_ring.toml");
  EXPECT_EQ(hex.lattice.kind, "hexagonal");
  EXPECT_EQ(hex.edge.lower_band, 12);
  EXPECT_EQ(hex.edge.side, "lower");
}

TEST(Config, ReportsFieldPath) {
  EXPECT_EQ(error_path("[solver]\nkappa = 0.0\n"), "solver.kappa");
  EXPECT_EQ(error_path("[solver]\ncutoff = 1.5\n"), "solver.cutoff");
  EXPECT_EQ(error_path("[solver]\ndiscretization = \"collocation\"\ngrid = 8\n"), "solver.grid");
  EXPECT_EQ(error_path("[lattice]\nkind = \"oblique\"\n"), "lattice.kind");
  EXPECT_EQ(error_path("[medium]\nkind = \"ring\"\nr_in = 0.5\nr_out = 0.4\n"), "medium.r_out");
  EXPECT_EQ(error_path("[path]\nlabels = [\"G\", \"X\"]\ncounts = [3, 4]\n"), "path.counts");
  EXPECT_EQ(error_path("[edge]\nside = \"middle\"\n"), "edge.side");
  EXPECT_EQ(error_path("[soliton]\neps_params = [0.2, 0.6]\n"), "soliton.eps_params[1]");
  EXPECT_EQ(error_path("[edge]\nlower_band = 6\n"), "edge.lower_band");
}

TEST(Config, RejectsUnknownFieldsAndSyntax) {
  EXPECT_FALSE(error_path("[solver]\nkapa = 1.0\n").empty());
  EXPECT_FALSE(error_path("[solver\n").empty());
  EXPECT_THROW(load_config("/nonexistent/gapsol.toml"), ConfigError);
}

TEST(Config, HashIgnoresExecutionSettings) {
  const RunConfig a = parse_config_string("[run]\nout = \"x\"\nthreads = 1\n");
  const RunConfig b = parse_config_string("[run]\nout = \"y\"\nthreads = 4\n");
  const RunConfig c = parse_config_string("[solver]\nkappa = 2.0\n");
  EXPECT_EQ(inputs_hash(a), inputs_hash(b));
  EXPECT_NE(inputs_hash(a), inputs_hash(c));
  EXPECT_NE(inputs_hash(a), inputs_hash(a, "extra"));
}

TEST(Csv, RoundTripIsExact) {
  CsvTable t({"a", "b"});
  t.add({0.1, -1.0 / 3.0});
  t.add({1e-300, 12345.678});
  const auto [h, rows] = CsvTable::parse(t.str());
  ASSERT_EQ(h.size(), 2u);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0][1], -1.0 / 3.0);
  EXPECT_EQ(rows[1][0], 1e-300);
  EXPECT_THROW(t.add({1.0}), std::invalid_argument);
  EXPECT_THROW(CsvTable::parse("a\nfoo\n"), IoError);
}

TEST(BinaryArrays, ComplexRoundTrip) {
  const fs::path d = scratch("arrays");
  const std::vector<cdouble> v{{1.0, -2.0}, {0.5, 1e-17}};
  write_complex_array(d / "a.bin", v, {{"shape", {2}}});
  const auto [w, meta] = read_complex_array(d / "a.bin");
  EXPECT_EQ(w, v);
  EXPECT_EQ(meta.at("shape").at(0).get<int>(), 2);
  Eigen::ArrayXXd r(2, 3);
  r << 1, 2, 3, 4, 5, 6;
  write_real_array(d / "r.bin", r);
  EXPECT_TRUE((read_real_array(d / "r.bin") == r).all());
}

TEST(Manifest, FreshnessTracksKeyAndArtifacts) {
  const fs::path d = scratch("manifest");
  {
    Manifest m(d);
    m.set_header("1", "h", json::object());
    write_file(d / "x.csv", "a\n1\n");
    m.record("bands", "k1", {"x.csv"});
    m.save();
  }
  Manifest m(d);
  EXPECT_TRUE(m.fresh("bands", "k1"));
  EXPECT_FALSE(m.fresh("bands", "k2"));
  EXPECT_FALSE(m.fresh("gaps", "k1"));
  write_file(d / "x.csv", "a\n2\n");
  EXPECT_FALSE(m.fresh("bands", "k1"));
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ealg/report.hpp"
#include "ealg/solvers/gls.hpp"
#include "ealg/tsplib.hpp"

using namespace ealg;
namespace fs = std::filesystem;

namespace {

const fs::path data_dir{EALG_TEST_DATA_DIR};

const char* three_nodes = "NAME : tiny\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n"
                          "1 0 0\n2 30 0\n3 0 40\nEOF\n";

void expect_parse_error_at(const std::string& text, std::size_t line)
{
    try {
        parse_tsplib_text(text);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), line) << e.what();
    }
}

} // namespace

TEST(Tsplib, ThreeNodeRoundTrip)
{
    const TsplibFile f = parse_tsplib_text(three_nodes);
    EXPECT_EQ(f.name, "tiny");
    ASSERT_EQ(f.coords.size(), 3u);
    EXPECT_EQ(f.coords[1], (Point{30, 0}));
    EXPECT_EQ(f.coords[2], (Point{0, 40}));
    EXPECT_EQ(parse_tsplib_text(write_tsplib(f)), f);
    EXPECT_EQ(write_tsplib(parse_tsplib_text(write_tsplib(f))), write_tsplib(f));

    const auto [inst, scale] = to_instance(f);
    EXPECT_EQ(scale.scale, 40.0);
    EXPECT_EQ(inst.coords[1], (Point{0.75, 0.0}));
    EXPECT_EQ(inst.coords[2], (Point{0.0, 1.0}));
    const std::vector<std::size_t> order{0, 1, 2};
    EXPECT_EQ(original_tour_cost(f, order), 120.0);  // 30 + 50 + 40
    EXPECT_DOUBLE_EQ(tour_cost(inst, order) * scale.scale, 120.0);
}

TEST(Tsplib, NintOnlyInOriginalUnits)
{
    const TsplibFile f = parse_tsplib_text("NAME : r\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n"
                                           "1 0 0\n2 1 1\n3 2 0\nEOF\n");
    const std::vector<std::size_t> order{0, 1, 2};
    // sqrt(2) rounds to 1, twice, plus 2
    EXPECT_EQ(original_tour_cost(f, order, true), 4.0);
    EXPECT_DOUBLE_EQ(original_tour_cost(f, order, false), 2 * std::sqrt(2.0) + 2);
    EXPECT_EQ(tsplib_nint(2.5), 3.0);
    EXPECT_EQ(tsplib_nint(2.4999), 2.0);
}

TEST(Tsplib, ErrorsCarryLineNumbers)
{
    expect_parse_error_at("NAME : x\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : GEO\n", 4);
    expect_parse_error_at("NAME : x\nDIMENSION : 2\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 0 zz\n", 6);
    expect_parse_error_at("NAME : x\nDIMENSION : 2\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n3 0 1\n", 6);
    expect_parse_error_at("NAME : x\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 0 1\nEOF\n", 7);
    expect_parse_error_at("NAME : x\nTYPE : ATSP\n", 2);
    expect_parse_error_at("garbage line\n", 1);
    EXPECT_THROW(parse_tsplib_file(data_dir / "does-not-exist.tsp"), ParseError);
}

TEST(Tsplib, Pcb442)
{
    const TsplibFile f = parse_tsplib_file(data_dir / "pcb442.tsp");
    EXPECT_EQ(f.dimension, 442u);
    const Instance inst = parse_tsplib(data_dir / "pcb442.tsp");
    EXPECT_EQ(inst.size(), 442u);
    for (const Point& p : inst.coords) {
        EXPECT_GE(std::min(p.x, p.y), 0.0);
        EXPECT_LE(std::max(p.x, p.y), 1.0);
    }
    // the shipped optimal tour costs exactly the sidecar value under nint rounding
    const auto tour = parse_tsplib_tour(read_file(data_dir / "pcb442.opt.tour"));
    const auto best = load_best_known(data_dir / "best_known.csv");
    EXPECT_EQ(original_tour_cost(f, tour), best.at("pcb442"));
}

TEST(Tsplib, BestKnownSidecar)
{
    const auto m = parse_best_known("name,best_known\n# comment\na280, 2579\n\nu574,36905 # trailing\n");
    EXPECT_EQ(m.at("a280"), 2579.0);
    EXPECT_EQ(m.at("u574"), 36905.0);
    EXPECT_THROW(parse_best_known("x;1\n"), ParseError);
    EXPECT_THROW(parse_best_known("x,-3\n"), ParseError);
}

TEST(ReportTableRender, OpAcoRows)
{
    const ReportTable t{"OP_ACO objective values", {"n", "ACO", "EALG"}, {{"400", {17.773, 18.662}}, {"1000", {20.061, 21.205}}}, {3, 3}};
    const std::string csv = render_table(t, TableFormat::csv);
    EXPECT_EQ(csv, "n,ACO,EALG\n400,17.773,18.662\n1000,20.061,21.205\n");
    const std::string md = render_table(t, TableFormat::markdown);
    EXPECT_NE(md.find("| 400 | 17.773 | 18.662 |"), std::string::npos);
    EXPECT_NE(md.find("| 1000 | 20.061 | 21.205 |"), std::string::npos);
    EXPECT_EQ(md.substr(0, 32), "Table: OP_ACO objective values\n\n");
}

TEST(ReportTableRender, TspAcoGapRowAndRoundTrip)
{
    const ReportTable t{"", {"n", "a", "b", "c"}, {{"20", {0.080, 0.525, 0.729}}}, {3, 3, 3}};
    EXPECT_EQ(render_table(t, TableFormat::csv), "n,a,b,c\n20,0.080,0.525,0.729\n");
    const ReportTable back = parse_table_csv(render_table(t, TableFormat::csv));
    EXPECT_EQ(back, t);
    EXPECT_EQ(render_table(back, TableFormat::csv), render_table(t, TableFormat::csv));
}

TEST(ReportTableRender, EmptyAndRagged)
{
    const ReportTable empty{"", {"n", "gap"}, {}, {4}};
    EXPECT_EQ(render_table(empty, TableFormat::csv), "n,gap\n");
    EXPECT_EQ(render_table(empty, TableFormat::markdown), "| n | gap |\n|---|---:|\n");
    const ReportTable ragged{"", {"n", "a", "b"}, {{"20", {1.0, 2.0}}, {"50", {1.0}}}, {1, 1}};
    EXPECT_THROW(render_table(ragged, TableFormat::csv), ShapeError);
    EXPECT_THROW(parse_table_csv("n,a\n1,2,3\n"), ShapeError);
}

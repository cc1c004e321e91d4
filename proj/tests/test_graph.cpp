#include "plantrec/graph.h"
#include "support.h"

#include <doctest.h>

#include <fstream>

using namespace plantrec;
using testsupport::chain;
using testsupport::oracle_is_tree;

TEST_CASE("tree validation rejects cycles, forests and bad roots")
{
  const auto y = testsupport::y_fixture();
  CHECK(is_tree(y));
  CHECK(oracle_is_tree(y));

  auto cyc = y;
  cyc.edges.push_back({ 2, 3 });
  CHECK_FALSE(is_tree(cyc));
  CHECK_THROWS_AS(require_tree(cyc.size(), cyc.edges, cyc.root), StructuralError);

  auto forest = y;
  forest.vertices.push_back(Vec3(5, 5, 5));
  CHECK_FALSE(is_tree(forest));

  auto loop = y;
  loop.edges[2] = { 3, 3 };
  CHECK_FALSE(is_tree(loop));

  auto bad_root = y;
  bad_root.root = 7;
  CHECK_FALSE(is_tree(bad_root));
}

TEST_CASE("joint counts")
{
  CHECK(joint_count(chain({ Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(0, 2, 0), Vec3(0, 3, 0), Vec3(0, 4, 0) })) == 0);
  CHECK(joint_count(testsupport::y_fixture()) == 1);

  SkeletonGraph binary;
  binary.vertices.assign(7, Vec3::Zero());
  binary.edges = { { 0, 1 }, { 0, 2 }, { 1, 3 }, { 1, 4 }, { 2, 5 }, { 2, 6 } };
  CHECK(joint_count(binary) == 2);

  SkeletonGraph broken = binary;
  broken.edges.pop_back();
  CHECK_THROWS_AS(joint_count(broken), StructuralError);
}

TEST_CASE("topology reorients edges away from the root")
{
  SkeletonGraph g;
  g.vertices.assign(4, Vec3::Zero());
  g.edges = { { 1, 0 }, { 2, 1 }, { 1, 3 } };
  const auto t = topology(g);
  CHECK(t.parent[0] == -1);
  CHECK(t.parent[1] == 0);
  CHECK(t.parent[2] == 1);
  CHECK(t.parent[3] == 1);
  CHECK(t.bfs_order.front() == 0);
}

TEST_CASE("compact keeps the root-connected part and renumbers from the root")
{
  SkeletonGraph g;
  g.vertices = { Vec3(9, 9, 9), Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(0, 2, 0) };
  g.edges = { { 1, 2 }, { 2, 3 }, { 2, 0 } };
  g.root = 1;
  const auto c = compact(g, { false, true, true, true });
  CHECK(c.root == 0);
  CHECK(c.size() == 3);
  CHECK(c.vertices[0] == Vec3(0, 0, 0));
  CHECK(oracle_is_tree(c));
}

TEST_CASE("skeleton document round trip")
{
  auto y = testsupport::y_fixture();
  y.vertices[2] = Vec3(0.1234567890123, -1e-17, 3.0 / 7.0);
  const auto text = skeleton_to_json_string(y);
  const auto back = skeleton_from_json_string(text);
  CHECK(back.vertices == y.vertices);
  CHECK(back.edges == y.edges);
  CHECK(back.root == y.root);

  CHECK_THROWS_AS(skeleton_from_json_string("{\"nodes\": [}"), FormatError);
  CHECK_THROWS_AS(skeleton_from_json_string(R"({"nodes":[{"id":0,"x":0,"y":0,"z":0},{"id":1,"x":0,"y":1,"z":0}],"edges":[[0,1],[1,0]],"root":0})"),
                  StructuralError);
}

TEST_CASE("PLY export lists vertices and edges")
{
  testsupport::TempDir dir("ply");
  const auto path = dir.path() / "y.ply";
  save_skeleton_ply(testsupport::y_fixture(), path);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.rfind("ply\nformat ascii 1.0\n", 0) == 0);
  CHECK(text.find("element vertex 4") != std::string::npos);
  CHECK(text.find("element edge 3") != std::string::npos);
  CHECK(text.find("end_header") != std::string::npos);
}

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "egt/container.hpp"
#include "egt/rng.hpp"
#include "egt/tensor.hpp"

using namespace egt;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("container round-trips named tensors") {
  Rng rng(3);
  const auto path = temp_file("egt_container_test.egt");
  Tensor a({3, 4});
  a.fill_uniform(rng, -2.0, 2.0);
  Tensor b({7});
  b.fill_uniform(rng, -2.0, 2.0);
  {
    ContainerWriter w(path.string());
    w.add("weights/a", a);
    w.add("weights/b", b);
  }
  ContainerReader r(path.string());
  const auto all = r.read_all();
  REQUIRE(all.size() == 2);
  REQUIRE(all[0].name == "weights/a");
  REQUIRE(all[0].tensor.shape == a.shape);
  REQUIRE(all[0].tensor.data == a.data);
  REQUIRE(all[1].name == "weights/b");
  REQUIRE(all[1].tensor.data == b.data);
  std::filesystem::remove(path);
}

TEST_CASE("container rejects bad magic") {
  const auto path = temp_file("egt_container_badmagic.egt");
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE" << std::string(32, '\0');
  }
  REQUIRE_THROWS_WITH(ContainerReader(path.string()),
                      Catch::Matchers::ContainsSubstring("magic"));
  std::filesystem::remove(path);
}

TEST_CASE("container rejects truncated payload") {
  const auto path = temp_file("egt_container_trunc.egt");
  Tensor a({4, 4});
  {
    ContainerWriter w(path.string());
    w.add("t", a);
  }
  const auto full_size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full_size - 9);
  ContainerReader r(path.string());
  NamedTensor nt;
  REQUIRE_THROWS_WITH(r.next(nt), Catch::Matchers::ContainsSubstring("truncated"));
  std::filesystem::remove(path);
}

TEST_CASE("container offsets and payload are byte-stable") {
  const auto p1 = temp_file("egt_container_stable1.egt");
  const auto p2 = temp_file("egt_container_stable2.egt");
  auto write = [](const std::string& path) {
    Rng rng(99);
    Tensor t({5, 5});
    t.fill_uniform(rng, -1.0, 1.0);
    ContainerWriter w(path);
    return w.add("x", t);
  };
  const auto off1 = write(p1.string());
  const auto off2 = write(p2.string());
  REQUIRE(off1 == off2);
  REQUIRE(off1 == 4);  // right after the magic
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {});
  const std::string s2((std::istreambuf_iterator<char>(f2)), {});
  REQUIRE(s1 == s2);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

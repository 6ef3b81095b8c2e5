// Regenerates tests/fixtures/tiny_trace and its pinned digests.
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixture <fixtures-dir>\n";
    return 1;
  }
  namespace fs = std::filesystem;
  const fs::path root = argv[1];
  const fs::path dir = root / "tiny_trace";
  fs::remove_all(dir);
  const std::vector<int> layers{1, 3};
  auto m = fixture::make_manifest(layers, 3, 4, 3);
  m.model_name = "tiny-fixture";
  const auto written = rtprobe::trace::write_trace(
      m, {fixture::make_doc("doc-a", {1, 2, 1}, layers, 4, 3, 101), fixture::make_doc("doc-b", {3, 1}, layers, 4, 3, 202)},
      dir);

  std::ofstream sums(root / "tiny_trace.sha256");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path().filename());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) sums << oracle::sha256_file(dir / f) << "  " << f.string() << "\n";

  nlohmann::ordered_json j;
  j["model_name"] = written.model_name;
  j["num_layers"] = written.num_layers;
  j["hidden_dim"] = written.hidden_dim;
  j["iv_sample_count"] = written.iv_sample_count;
  j["layers_exported"] = written.layers_exported;
  j["documents"] = nlohmann::json::array();
  for (const auto& d : written.documents)
    j["documents"].push_back({{"doc_id", d.doc_id}, {"token_count", d.token_count}, {"unit_count", d.unit_count}});
  std::ofstream(root / "tiny_trace.expected.json") << j.dump(2) << "\n";
  return 0;
}

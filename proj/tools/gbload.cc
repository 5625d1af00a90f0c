// gbload: dataset preparation and GET / GetBatch load generation.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "gbstore/loadgen/loadgen.h"

namespace lg = gbstore::loadgen;

int main(int argc, char** argv) {
  CLI::App app{"GetBatch load generator"};
  lg::BenchConfig c;
  std::string mode = "getbatch", size = "10KiB", json_path;
  size_t prepare = 0;
  bool prepare_only = false;
  app.add_option("--mode", mode, "get|getbatch")->check(CLI::IsMember({"get", "getbatch"}));
  app.add_option("--size", size, "object size, e.g. 10KiB");
  app.add_option("--batch", c.batch_size, "entries per GetBatch");
  app.add_option("--workers", c.workers, "concurrent workers");
  app.add_option("--duration", c.duration_s, "seconds to run");
  app.add_option("--bucket", c.bucket);
  app.add_option("--gateway", c.gateway, "proxy URL");
  app.add_option("--seed", c.seed);
  app.add_flag("--coloc", c.coloc, "ask for colocation-aware DT selection");
  app.add_flag("--strm", c.strm, "streaming responses");
  app.add_option("--json", json_path, "write the report as JSON");
  app.add_option("--prepare", prepare, "PUT this many objects before running");
  app.add_option("--count", c.object_count, "objects in an existing dataset");
  app.add_flag("--prepare-only", prepare_only, "stop after preparing");
  app.add_option("--cachedrop", c.cachedrop, "script run after preparation");
  app.add_flag("--compare-gets", c.compare_gets,
               "also fetch each batch sample with per-object GETs");
  CLI11_PARSE(app, argc, argv);

  try {
    c.mode = mode == "get" ? lg::Mode::kGet : lg::Mode::kGetBatch;
    c.object_size = lg::parse_size(size);
    if (prepare > 0) {
      c.object_count = prepare;
      lg::prepare_dataset(c);
      std::cerr << "prepared " << prepare << " objects of " << c.object_size << " bytes\n";
      if (prepare_only) return 0;
    } else if (prepare_only) {
      std::cerr << "--prepare-only needs --prepare <count>\n";
      return 2;
    }
    lg::BenchReport r = lg::run(c);
    std::cout << lg::report_table(r);
    if (!json_path.empty()) {
      std::ofstream(json_path) << lg::report_json(r) << "\n";
    }
    if (r.error_rate() > 0.01) {
      std::cerr << "error rate " << r.error_rate() * 100 << "% exceeds 1%\n";
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "gbload: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

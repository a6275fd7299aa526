// Stand-in for an external image classifier. Prints `filename,score` for every
// image in the directory: the first --positives files (in name order) score
// 0.9, the rest 0.1. Flags inject the failure modes the adapter must catch.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app("mock classifier");
  std::string dir;
  int positives = 40;
  bool malformed = false, omit = false, duplicate = false, out_of_range = false, unknown = false, dot_slash = false;
  int fail = 0;
  double sleep_s = 0;
  app.add_option("dir", dir)->required();
  app.add_option("--positives", positives);
  app.add_flag("--malformed", malformed, "emit a line without a comma");
  app.add_flag("--omit", omit, "skip the last file");
  app.add_flag("--duplicate", duplicate, "score the first file twice");
  app.add_flag("--out-of-range", out_of_range, "score the first file 1.5");
  app.add_flag("--unknown", unknown, "score a file that does not exist");
  app.add_flag("--dot-slash", dot_slash, "prefix names with ./");
  app.add_option("--fail", fail, "exit with this status after printing");
  app.add_option("--sleep", sleep_s, "seconds to sleep before printing");
  CLI11_PARSE(app, argc, argv);

  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) names.push_back(e.path().filename());
  }
  std::sort(names.begin(), names.end());
  if (sleep_s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(sleep_s));

  if (omit && !names.empty()) names.pop_back();
  for (std::size_t i = 0; i < names.size(); ++i) {
    double score = static_cast<int>(i) < positives ? 0.9 : 0.1;
    if (out_of_range && i == 0) score = 1.5;
    std::printf("%s%s,%.3f\n", dot_slash ? "./" : "", names[i].c_str(), score);
    if (duplicate && i == 0) std::printf("%s,%.3f\n", names[i].c_str(), score);
  }
  if (malformed) std::printf("this line has no score\n");
  if (unknown) std::printf("no_such_image.png,0.5\n");
  return fail;
}

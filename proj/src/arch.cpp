#include "kan/arch.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace kan {

namespace {

const std::set<std::string> kModuleOps = {"BaseModule", "BaseSkipModule", "AttnModule",
                                          "AttnSkipModule"};
const std::set<std::string> kAllOps = {"Conv2D3x3",  "BaseModule", "BaseSkipModule",
                                       "AttnModule", "AttnSkipModule", "Conv2D1x1", "AvgPoolFC"};

int parse_field(const std::string& tok, const std::string& what, int line_no) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("arch line " + std::to_string(line_no) + ": bad " + what + " '" +
                                tok + "'");
  }
}

}  // namespace

int stage_out_spatial(const StageSpec& st) {
  if (st.op == "AvgPoolFC") return 1;
  int sp = st.in_spatial;
  const int s = st.s <= 0 ? 1 : st.s;
  sp = (sp + s - 1) / s;  // only the first operator strides
  return sp;
}

ArchSpec parse_arch_text(const std::string& text, int classes) {
  ArchSpec arch;
  arch.classes = classes;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream probe(line);
    std::string first;
    if (!(probe >> first)) continue;  // blank or comment-only line
    std::istringstream ls(line);
    std::string input, op, rs, cs, ns, ss;
    if (!(ls >> input >> op >> rs >> cs >> ns >> ss))
      throw std::invalid_argument("arch line " + std::to_string(line_no) +
                                  ": expected 6 fields 'input op r c n s'");
    StageSpec st;
    auto x = input.find('x');
    if (x == std::string::npos)
      throw std::invalid_argument("arch line " + std::to_string(line_no) +
                                  ": input must look like 224x3");
    st.in_spatial = parse_field(input.substr(0, x), "input spatial", line_no);
    st.in_ch = parse_field(input.substr(x + 1), "input channels", line_no);
    st.op = op;
    st.r = rs == "-" ? -1 : parse_field(rs, "r", line_no);
    st.c = cs == "k" ? classes : parse_field(cs, "c", line_no);
    st.n = ns == "-" ? 1 : parse_field(ns, "n", line_no);
    st.s = ss == "-" ? -1 : parse_field(ss, "s", line_no);
    arch.stages.push_back(st);
  }
  return arch;
}

ArchSpec parse_arch_file(const std::string& path, int classes) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open arch file: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_arch_text(buf.str(), classes);
}

void validate_arch(const ArchSpec& arch) {
  if (arch.stages.empty()) throw std::invalid_argument("arch: no stages");
  auto fail = [](std::size_t idx, const StageSpec& st, const std::string& why) {
    throw std::invalid_argument("arch stage " + std::to_string(idx + 1) + " (" + st.op + ", input " +
                                std::to_string(st.in_spatial) + "x" + std::to_string(st.in_ch) +
                                "): " + why);
  };
  int spatial = arch.stages.front().in_spatial;
  int channels = arch.stages.front().in_ch;
  for (std::size_t i = 0; i < arch.stages.size(); ++i) {
    const StageSpec& st = arch.stages[i];
    if (!kAllOps.count(st.op)) fail(i, st, "unknown operator");
    if (st.in_spatial != spatial)
      fail(i, st, "input spatial " + std::to_string(st.in_spatial) + " does not chain from " +
                      std::to_string(spatial));
    if (st.in_ch != channels)
      fail(i, st, "input channels " + std::to_string(st.in_ch) + " do not chain from " +
                      std::to_string(channels));
    if (st.n < 1) fail(i, st, "repeat count must be >= 1");
    if (kModuleOps.count(st.op)) {
      if (st.r < 1) fail(i, st, "expansion factor r must be >= 1");
      if (st.s != 1 && st.s != 2) fail(i, st, "stride must be 1 or 2");
      if ((st.op == "AttnModule" || st.op == "AttnSkipModule") && st.r < 2)
        fail(i, st, "attention modules need r >= 2 (conv path uses expansion r-1)");
    }
    if (st.op == "Conv2D3x3" || st.op == "Conv2D1x1") {
      if (st.s != 1 && st.s != 2) fail(i, st, "stride must be 1 or 2");
    }
    if (st.op == "AvgPoolFC") {
      if (i + 1 != arch.stages.size()) fail(i, st, "classifier head must be the final stage");
    }
    spatial = stage_out_spatial(st);
    channels = st.c;
  }
  if (arch.stages.back().op != "AvgPoolFC")
    fail(arch.stages.size() - 1, arch.stages.back(), "network must end with AvgPoolFC");
}

}  // namespace kan

#pragma once

#include <string>
#include <vector>

namespace kan {

// One line of the architecture table: "input operator r c n s" with '-' for
// fields an operator does not use and 'k' standing for the class count.
struct StageSpec {
  int in_spatial = 0;  // square spatial size
  int in_ch = 0;
  std::string op;  // Conv2D3x3 | BaseModule | BaseSkipModule | AttnModule | AttnSkipModule |
                   // Conv2D1x1 | AvgPoolFC
  int r = -1;
  int c = 0;  // output channels (class count for AvgPoolFC)
  int n = 1;
  int s = -1;
};

struct ArchSpec {
  std::vector<StageSpec> stages;
  int classes = 1000;
};

// parses the structured text format; 'k' in the channel column resolves to
// `classes`; '#' starts a comment
ArchSpec parse_arch_file(const std::string& path, int classes = 1000);
ArchSpec parse_arch_text(const std::string& text, int classes = 1000);

// throws std::invalid_argument naming the offending stage on inconsistent
// spatial/channel chaining or malformed operators
void validate_arch(const ArchSpec& arch);

// spatial size after a stage's operators (first applies stride s, rest 1)
int stage_out_spatial(const StageSpec& st);

}  // namespace kan

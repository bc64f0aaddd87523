#pragma once

// IOB1 tagging of opinion targets: chunks open with I, and B marks only a
// chunk that starts immediately after another chunk.

#include <cstddef>
#include <string>
#include <vector>

namespace xote {

// Internal index order is (I, O, B); only consistency matters.
enum class Tag : int { I = 0, O = 1, B = 2 };

inline constexpr std::size_t kNumTags = 3;

char tag_char(Tag t);
// Throws FormatError on anything but "I", "O", "B".
Tag parse_tag(const std::string& s);

// Rank used to break exact ties between tag scores: O < I < B.
int tie_rank(Tag t);

// Offsets are in Unicode code points; `end` is exclusive.
struct Token {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

struct TargetSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string surface;

  friend bool operator==(const TargetSpan&, const TargetSpan&) = default;
};

// Spans must be sorted, non-overlapping, and start/end on token boundaries;
// otherwise AlignmentError. `context` names the sentence in error messages.
std::vector<Tag> spans_to_tags(const std::vector<Token>& tokens,
                               const std::vector<TargetSpan>& spans,
                               const std::string& context = "");

// Total decoder. I after O (or at the start) opens a chunk, I after I/B
// continues it, B always opens a new chunk. Surfaces are rebuilt from `text`
// when given (UTF-8, code-point offsets), otherwise by joining token texts
// with single spaces.
std::vector<TargetSpan> tags_to_spans(const std::vector<Token>& tokens,
                                      const std::vector<Tag>& tags,
                                      const std::string* text = nullptr);

}  // namespace xote

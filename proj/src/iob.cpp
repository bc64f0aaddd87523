#include "xote/iob.hpp"

#include <algorithm>
#include <optional>

#include "xote/error.hpp"
#include "xote/text.hpp"

namespace xote {

char tag_char(Tag t) {
  switch (t) {
    case Tag::I: return 'I';
    case Tag::O: return 'O';
    case Tag::B: return 'B';
  }
  return '?';
}

Tag parse_tag(const std::string& s) {
  if (s == "I") return Tag::I;
  if (s == "O") return Tag::O;
  if (s == "B") return Tag::B;
  throw FormatError("unknown IOB tag '" + s + "'");
}

int tie_rank(Tag t) {
  switch (t) {
    case Tag::O: return 0;
    case Tag::I: return 1;
    case Tag::B: return 2;
  }
  return 3;
}

std::vector<Tag> spans_to_tags(const std::vector<Token>& tokens,
                               const std::vector<TargetSpan>& spans,
                               const std::string& context) {
  std::vector<Tag> tags(tokens.size(), Tag::O);
  // Index of the span owning each token, for the chunk-boundary rule.
  std::vector<int> owner(tokens.size(), -1);
  auto fail = [&](const TargetSpan& s, const std::string& why) {
    throw AlignmentError((context.empty() ? std::string() : "sentence " + context + ": ") +
                         "span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                         ") '" + s.surface + "' " + why);
  };

  std::size_t prev_end = 0;
  std::size_t cursor = 0;
  for (std::size_t si = 0; si < spans.size(); ++si) {
    const TargetSpan& s = spans[si];
    if (s.start >= s.end) fail(s, "is empty");
    if (si > 0 && s.start < prev_end) fail(s, "overlaps or precedes the previous span");
    prev_end = s.end;

    while (cursor < tokens.size() && tokens[cursor].start < s.start) ++cursor;
    if (cursor == tokens.size() || tokens[cursor].start != s.start)
      fail(s, "does not start on a token boundary");
    std::size_t last = cursor;
    while (last < tokens.size() && tokens[last].end < s.end) ++last;
    if (last == tokens.size() || tokens[last].end != s.end)
      fail(s, "does not end on a token boundary");

    for (std::size_t t = cursor; t <= last; ++t) {
      tags[t] = Tag::I;
      owner[t] = static_cast<int>(si);
    }
    if (cursor > 0 && owner[cursor - 1] >= 0) tags[cursor] = Tag::B;
    cursor = last + 1;
  }
  return tags;
}

std::vector<TargetSpan> tags_to_spans(const std::vector<Token>& tokens,
                                      const std::vector<Tag>& tags,
                                      const std::string* text) {
  if (tokens.size() != tags.size())
    throw ContractError("tags_to_spans: " + std::to_string(tags.size()) + " tags for " +
                        std::to_string(tokens.size()) + " tokens");
  std::optional<std::u32string> cps;
  if (text) cps = text::decode_utf8(*text);

  auto surface = [&](std::size_t first, std::size_t last) {
    if (cps) {
      const std::size_t b = std::min(tokens[first].start, cps->size());
      const std::size_t e = std::min(tokens[last].end, cps->size());
      return text::encode_utf8(std::u32string_view(*cps).substr(b, e - b));
    }
    std::string s = tokens[first].text;
    for (std::size_t t = first + 1; t <= last; ++t) {
      const std::size_t gap = tokens[t].start - tokens[t - 1].end;
      s.append(gap, ' ');
      s += tokens[t].text;
    }
    return s;
  };

  std::vector<TargetSpan> spans;
  std::optional<std::size_t> open;
  auto close = [&](std::size_t last) {
    if (open) {
      spans.push_back({tokens[*open].start, tokens[last].end, surface(*open, last)});
      open.reset();
    }
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    switch (tags[i]) {
      case Tag::O:
        if (open) close(i - 1);
        break;
      case Tag::I:
        if (!open) open = i;
        break;
      case Tag::B:
        if (open) close(i - 1);
        open = i;
        break;
    }
  }
  if (open) close(tags.size() - 1);
  return spans;
}

}  // namespace xote

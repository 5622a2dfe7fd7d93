#include "m2io/generation.hpp"

#include <algorithm>
#include <cctype>

#include "m2io/text.hpp"

namespace m2io {

namespace {

bool slot_char(char c, bool first) {
  if (c == '_' || (c >= 'a' && c <= 'z')) return true;
  return !first && c >= '0' && c <= '9';
}

// If body[pos] == '{' and a slot name follows, returns the name's length.
std::size_t slot_at(std::string_view body, std::size_t pos) {
  if (body[pos] != '{') return 0;
  std::size_t i = pos + 1;
  while (i < body.size() && slot_char(body[i], i == pos + 1)) ++i;
  if (i == pos + 1 || i >= body.size() || body[i] != '}') return 0;
  return i - pos - 1;
}

}  // namespace

std::set<std::string> PromptTemplate::slots() const {
  std::set<std::string> out;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (auto len = slot_at(body, i)) {
      out.insert(body.substr(i + 1, len));
      i += len + 1;
    }
  }
  return out;
}

std::string render(const PromptTemplate& tmpl, const Bindings& bindings) {
  std::string out;
  out.reserve(tmpl.body.size() + 256);
  std::set<std::string> missing;
  const std::string_view body = tmpl.body;
  for (std::size_t i = 0; i < body.size(); ++i) {
    auto len = slot_at(body, i);
    if (!len) {
      out.push_back(body[i]);
      continue;
    }
    std::string name(body.substr(i + 1, len));
    if (auto it = bindings.find(name); it != bindings.end()) {
      out += it->second;
    } else {
      missing.insert(name);
    }
    i += len + 1;
  }
  if (!missing.empty()) {
    throw Error(ErrorCode::MissingSlot,
                tmpl.name + ": " + text::join(std::vector<std::string>(missing.begin(), missing.end()), ", "));
  }
  return out;
}

std::string build_context(std::span<const DocumentChunk> context) {
  std::vector<std::string> parts;
  for (const auto& d : context) parts.emplace_back(text::trim(d.text));
  return text::join(parts, "\n\n");
}

GeneratedAnswer generate_answer(const Query& query, std::span<const DocumentChunk> context,
                                ChatProvider& provider, const GenerationOptions& options) {
  if (context.empty()) throw Error(ErrorCode::InvalidArgument, "no retrieved context for " + query.id);
  auto ctx = build_context(context);
  ChatRequest req;
  req.model = options.model;
  req.temperature = options.temperature;
  req.max_tokens = options.max_tokens;
  req.user = render(prompts::text_answer(), {{"query_str", query.text}, {"context_str", ctx}});
  req.metadata = {{"task", "text_answer"}, {"context", ctx}};
  auto resp = provider.complete(req);
  auto trimmed = text::trim(resp.text);
  if (trimmed.empty()) throw Error(ErrorCode::EmptyCompletion, "generator returned no text for " + query.id);
  GeneratedAnswer out;
  out.text = std::string(trimmed);
  out.response = std::move(resp);
  return out;
}

// ---------------------------------------------------------------------------
// Sentence splitter

const std::vector<std::string>& splitter_abbreviations() {
  // Frozen with kSplitterVersion; ground-truth indices depend on it.
  static const std::vector<std::string> v{
      "e.g.", "i.e.", "E.g.", "I.e.", "cf.",  "Cf.",   "vs.",   "Vs.",   "viz.",  "al.",
      "Fig.", "Figs.", "fig.", "figs.", "Eq.", "Eqs.", "eq.",  "Tab.",  "Sec.",  "Ch.",
      "Dr.",  "Mr.",  "Mrs.", "Ms.",  "Prof.", "Sr.",  "Jr.",   "St.",   "Mt.",   "No.",
      "no.",  "Nos.", "Vol.", "vol.", "pp.",  "approx.", "Inc.", "Ltd.", "Co.",  "Corp.",
      "Jan.", "Feb.", "Mar.", "Apr.", "Jun.", "Jul.", "Aug.",  "Sep.",  "Sept.", "Oct.",
      "Nov.", "Dec.", "U.S.", "U.K.", "a.m.", "p.m."};
  return v;
}

namespace {

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }
bool is_opener(char c) { return c == '"' || c == '\'' || c == '(' || c == '['; }
bool is_upper_or_digit(char c) { return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Length of a list marker ("12. ", "3) ", "- ", "* ", "• ") at line start, else 0.
std::size_t list_marker(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  std::size_t start = i;
  if (i < line.size() && is_digit(line[i])) {
    while (i < line.size() && is_digit(line[i])) ++i;
    if (i - start > 3 || i >= line.size() || (line[i] != '.' && line[i] != ')')) return 0;
    ++i;
  } else if (i < line.size() && (line[i] == '-' || line[i] == '*')) {
    ++i;
  } else if (line.substr(i).starts_with("\xE2\x80\xA2")) {
    i += 3;
  } else {
    return 0;
  }
  if (i >= line.size() || !text::is_space(line[i])) return 0;
  return i;
}

bool blank(std::string_view line) { return text::trim(line).empty(); }

// Splits the text into segments at hard line breaks: blank lines, and
// newlines before or after a list item.
std::vector<SentenceSpan> hard_segments(std::string_view s) {
  struct Line {
    std::size_t begin, end;
  };
  std::vector<Line> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == '\n') {
      lines.push_back({start, i});
      start = i + 1;
    }
  }
  std::vector<SentenceSpan> segments;
  SentenceSpan current{lines.front().begin, lines.front().begin};
  bool open = false;
  bool prev_item = false;
  for (const auto& ln : lines) {
    auto view = s.substr(ln.begin, ln.end - ln.begin);
    if (blank(view)) {
      if (open) segments.push_back(current);
      open = false;
      prev_item = false;
      continue;
    }
    bool item = list_marker(view) != 0;
    if (open && (item || prev_item)) {
      segments.push_back(current);
      open = false;
    }
    if (!open) {
      current = {ln.begin, ln.end};
      open = true;
    } else {
      current.end = ln.end;
    }
    prev_item = item;
  }
  if (open) segments.push_back(current);
  return segments;
}

bool guarded(std::string_view s, std::size_t sentence_begin, std::size_t dot) {
  // Word preceding the '.', inclusive of it.
  std::size_t w = dot;
  while (w > sentence_begin && !text::is_space(s[w - 1])) --w;
  while (w < dot && is_opener(s[w])) ++w;
  auto word = s.substr(w, dot + 1 - w);
  const auto& abbrevs = splitter_abbreviations();
  if (std::find(abbrevs.begin(), abbrevs.end(), word) != abbrevs.end()) return true;
  // "1. Preheat..." at the start of a sentence is a list number.
  if (w == sentence_begin && word.size() >= 2) {
    bool digits = std::all_of(word.begin(), word.end() - 1, is_digit);
    if (digits) return true;
  }
  return false;
}

void split_segment(std::string_view s, SentenceSpan seg, std::vector<SentenceSpan>& out) {
  std::size_t b = seg.begin;
  std::size_t e = seg.end;
  while (b < e && text::is_space(s[b])) ++b;
  while (e > b && text::is_space(s[e - 1])) --e;
  std::size_t sentence_begin = b;
  std::size_t i = b;
  while (i < e) {
    if (!is_terminator(s[i])) {
      ++i;
      continue;
    }
    std::size_t run_begin = i;
    std::size_t j = i;
    while (j < e && is_terminator(s[j])) ++j;
    std::size_t run_end = j;
    while (j < e && is_closer(s[j])) ++j;
    if (j >= e) break;  // runs to the end of the segment
    if (!text::is_space(s[j])) {
      i = j;
      continue;
    }
    std::size_t k = j;
    while (k < e && text::is_space(s[k])) ++k;
    char next = s[k];
    bool starts = is_upper_or_digit(next) ||
                  (is_opener(next) && k + 1 < e && is_upper_or_digit(s[k + 1]));
    bool single_dot = run_end - run_begin == 1 && s[run_begin] == '.';
    if (starts && !(single_dot && guarded(s, sentence_begin, run_begin))) {
      out.push_back({sentence_begin, j});
      sentence_begin = k;
    }
    i = k;
  }
  if (sentence_begin < e) out.push_back({sentence_begin, e});
}

}  // namespace

std::vector<SentenceSpan> split_sentence_spans(std::string_view answer) {
  std::vector<SentenceSpan> out;
  if (text::trim(answer).empty()) return out;
  for (const auto& seg : hard_segments(answer)) split_segment(answer, seg, out);
  return out;
}

SentenceMap split_sentences(std::string_view answer) {
  std::vector<std::string> sentences;
  for (const auto& span : split_sentence_spans(answer)) {
    sentences.push_back(text::normalize_whitespace(answer.substr(span.begin, span.end - span.begin)));
  }
  return SentenceMap(std::move(sentences));
}

}  // namespace m2io

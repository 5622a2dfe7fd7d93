#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "m2io/core.hpp"
#include "m2io/providers.hpp"

namespace m2io {

/// A prompt body with named `{slot}` markers. Slot names are lowercase
/// identifiers; any other brace text is literal.
struct PromptTemplate {
  std::string name;
  std::string body;

  std::set<std::string> slots() const;
};

using Bindings = std::map<std::string, std::string>;

/// Single-pass substitution; bound values are never re-scanned.
/// Throws MissingSlot listing every unbound slot.
std::string render(const PromptTemplate& tmpl, const Bindings& bindings);

namespace prompts {

const PromptTemplate& text_answer();      // {query_str} {context_str}
const PromptTemplate& insert_r1();        // {question} {ground_truth_dict} {imgs_info}
const PromptTemplate& insert_base();      // same slots, bare-dict output
const PromptTemplate& judge_relevance();  // {query_str} {answer_str} {context_str_list}
                                          // {caption_str_list} {image_number}
const PromptTemplate& judge_position();   // same slots as judge_relevance
/// Not from the published prompt set: one-pass interleaved answer with
/// <imageN> placeholders.
const PromptTemplate& single_shot();  // {query_str} {context_str} {imgs_info}
/// Not from the published prompt set: answerability rubric for difficulty
/// stratification, emitting <difficulty_score>.
const PromptTemplate& difficulty();  // {query_str} {answer_str}

const std::vector<const PromptTemplate*>& all();
const PromptTemplate& by_name(std::string_view name);

}  // namespace prompts

struct GenerationOptions {
  std::string model;
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct GeneratedAnswer {
  std::string text;
  ChatResponse response;
};

/// Retrieved chunk texts in rank order, separated by blank lines.
std::string build_context(std::span<const DocumentChunk> context);

/// Throws InvalidArgument on empty context, EmptyCompletion on a blank
/// reply, ProviderError from the provider.
GeneratedAnswer generate_answer(const Query& query, std::span<const DocumentChunk> context,
                                ChatProvider& provider, const GenerationOptions& options = {});

struct SentenceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
};

/// Byte ranges of the sentences of `answer`, in order.
std::vector<SentenceSpan> split_sentence_spans(std::string_view answer);

/// Rule-based splitter: breaks after . ! ? (plus closing quotes/brackets)
/// when followed by whitespace and an uppercase letter or digit, or at end
/// of text; never after a guarded abbreviation or a leading list number;
/// list items and blank lines always start a new sentence. Each sentence is
/// whitespace-normalized.
SentenceMap split_sentences(std::string_view answer);

/// The frozen abbreviation list consulted by the splitter.
const std::vector<std::string>& splitter_abbreviations();
inline constexpr int kSplitterVersion = 1;

}  // namespace m2io

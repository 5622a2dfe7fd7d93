#include <stdexcept>

#include "m2io/generation.hpp"

namespace m2io::prompts {

namespace {

// Published prompt texts, byte for byte apart from plain ASCII quotes.
constexpr const char* kTextAnswer = R"PROMPT(# Input:
Question:{query_str}
Context:{context_str}

# Task
Imagine you are a text QA expert. You will be provided with a plain text context and a query related to that context. Your task is to answer the query based solely on the content of the context. Ensure that your answer does not include any additional information outside the context . Please note that your answer should be in pure text format.

# Output Format
Provide the answer in pure text format. Do not include any information beyond what is contained in the context.)PROMPT";

constexpr const char* kInsertR1 = R"PROMPT(You are an expert in inserting images into texts, specializing in analyzing the relationship between images and texts and optimizing their alignment for enhanced readability and information clarity.
## Task
Given a question, a dictionary of ground truth answers (where keys are sentence indices and values are sentence content), and a list of candidate images (with captions or contexts), your task is to:
Assess image relevance and select suitable ones. Determine optimal image placements. Output only the selected image-sentence dict, where key is the image ID and value is the sentence index after which the image should be placed.
## Format
Within <think> tags, explain your reasoning, covering: Image content analysis. Relevance to the text. Image placement and justification. Ensuring seamless multimodal integration.
In the <answer> tags, return a dictionary where each key is a selected image ID (e.g., "image20") and the value can only be a single sentence index (integer) indicating the exact sentence after which the image should be inserted.If no image is selected, return an empty dictionary.
Note: Only output the selected images and their respective placements.
Question: {question}
Ground truth answer dict: {ground_truth_dict}
Candidate images information: {imgs_info})PROMPT";

constexpr const char* kInsertBase = R"PROMPT(You are an expert in inserting images into texts, specializing in analyzing the relationship between images and texts and optimizing their alignment for enhanced readability and information clarity.
## Task
Given a question, a dictionary of ground truth answers (where keys are sentence indices and values are sentence content), and a list of candidate images (with captions or contexts), your task is to:
Assess image relevance and select suitable ones. Determine optimal image placements. Output only the selected image-sentence dict, where key is the image ID and value is the sentence index after which the image should be placed.
## Format
Return a dictionary where each key is a selected image ID (e.g., "image20") and the value can only be a single sentence index (integer) indicating the exact sentence after which the image should be inserted. If no image is selected, return an empty dictionary.
Note: Only output the final answer in a single dict, with the selected image ids (e.g., "image20") as keys and their respective placements sentence index as value (e.g., "2").
Question: {question}
Ground truth answer dict: {ground_truth_dict}
Candidate images information: {imgs_info})PROMPT";

constexpr const char* kRelevanceJudge = R"PROMPT(# Input
Query: {query_str}
Answer: {answer_str}
Image Context: {context_str_list}
Image Caption: {caption_str_list}
Image number to be rated: {image_number}

# Task
Imagine you are a multimodal QA evaluation expert. Your task is to evaluate the relevance the selected images within an answer to the given query and the overall quality of the answer. Specifically, the answer contains both text and images. You need to assess whether the selected images are relevant to the QApair in terms of content.

## Answer Input Format
[text_context_1] <img_1> [text_context_2] <img_2>...

Explanation:
Each "[text_context_x]" is a piece of pure text context, and each <img> represents an image. The images will be provided in the same order as the placeholders <img>.

## Image Context Input Format
[context_above] <img> [context_bottom]
Explanation: The image to be evaluated is provided along with its preceding and following context in placeholder form.

# Scoring Criteria of Relevance
When scoring, strictly adhere to the following standards, with a range of 1 to 5:
- 1 point: Completely unrelated: The images in the answer have no connection to the main content of the query and answer, and are irrelevant overall.
- 2 points: Weakly related: The images in the answer have a very tenuous connection to the main content of the query and answer.
- 3 points: Partially related: The images in the answer are somewhat connected to part of the content of the query and answer.
- 4 points: Mostly related: The images in the answer have a fairly clear connection to the main content of the query and answer.
- 5 points: Highly related: The images in the answer are highly relevant to the content of the query and answer.

Provide a brief reason for the evaluation along with a score from 1 to 5. Ensure you do not use any evaluation criteria beyond the query and answer.

# Output Format
Please output two lines for each measure: the first line is your reasoning for the score, and the second line is the score. Strictly follow this format without any additional content.

# requirements
1. There must be an integer output for each score (1-5).
2. There must be a <relevance_score> tag for the relevance score and a <effective_score> tag for the effectiveness score, and a <overall_quality_score> tag for the overall quality score.

# Output Example
Highly relevant: The images in the answer show the number of pillars in front of the gate, which perfectly match the query about the number of pillars. All images in the answer are highly relevant to the content of the query and answer.
<relevance_score>5</relevance_score>)PROMPT";

constexpr const char* kPositionJudge = R"PROMPT(# Input
Query: {query_str}
Answer: {answer_str}
Image Context: {context_str_list}
Image Caption: {caption_str_list}
Image number to be rated: {image_number}

# Task
Imagine you are a multimodal problem-solving expert tasked with evaluating whether the position of each selected image within an answer to the given query is appropriate.
## Requirements
1. If there are repeated images in the answer, only evaluate the first occurrence, and for repeated images, rate them as 0 (except for the first occurrence).
## Answer Input Format
[text_context_1] <img_1> [text_context_2] <img_2>...
Explanation:
Each "[text_context_x]" is a segment of pure text context, and each <img> represents an image. The images will be presented in the same order as the placeholders <img>. 
## Image Context Input Format
[context_above] <img> [context_bottom] 
Explanation: The image under evaluation is provided along with its preceding and following contexts in placeholder form, corresponding to <img>.
# Revised Evaluation Criteria:
Strictly follow the criteria below to assign a score of 0 or 1:
- 0 points, Inappropriate Position: The image is irrelevant to both the preceding and following context, or the position of the image does not enhance content understanding or visual appeal. The insertion of the image does not align with the logical progression of the text and fails to improve the reading experience or information transmission.
- 1 point, Appropriate Position: The image is contextually relevant to at least one of the surrounding contexts (preceding or following), and it enhances content understanding or visual effect. The position of the image aligns with the logical flow of the text and is inserted appropriately, improving the overall information delivery. If the description of the image is detailed, it further clarifies the connection between the image and the text, enhancing the overall expressive effect.
# Output Format
Provide a brief justification for the evaluation and a score of either 0 or 1 for each unique image. Ensure no evaluation criteria beyond the provided query and answer are used.
For images that appear multiple times, evaluate only the first occurrence and do not provide additional scores for repeated occurrences.
Please output two lines for each image: the first line is your reasoning for the score, and the second line is the score. Strictly follow this format without any additional content.

# Output Example
<img_1> shows a decorative lamp post, but the surrounding context describes architectural features unrelated to the lamp post. The image placement disrupts the logical flow and fails to enhance understanding.
<img_1_score>0</img_1_score>
<img_2> depicts three pillars in front of a gate, and its context discusses the number of pillars in front of the gate. Therefore, the position is appropriate.  
<img_2_score>1</img_2_score>)PROMPT";

constexpr const char* kSingleShot = R"PROMPT(# Input
Question: {query_str}
Context: {context_str}
Candidate images information: {imgs_info}

# Task
Answer the question based solely on the context, and illustrate the answer with the candidate images that are relevant to it. Insert each selected image as a placeholder holding its image ID in angle brackets (e.g. <image20>) directly after the sentence it illustrates. Use each image at most once and place at most one image after any sentence. Do not mention images that are not selected.

# Output Format
[text_context_1] <image_a> [text_context_2] <image_b>...)PROMPT";

constexpr const char* kDifficulty = R"PROMPT(# Input
Question: {query_str}
Reference answer: {answer_str}

# Task
Imagine you are a text QA expert. Answer the question on your own, then compare your answer with the reference answer and rate how accurately the question can be answered, on a scale of 1 to 5:
- 1 point: The question cannot be answered accurately; the reference answer requires information or reasoning that is very hard to reproduce.
- 2 points: Only a small part of the reference answer can be reproduced.
- 3 points: About half of the reference answer can be reproduced.
- 4 points: Most of the reference answer can be reproduced with minor omissions.
- 5 points: The reference answer can be reproduced fully and accurately.

# Output Format
Output two lines: the first line is your reasoning, the second line is the score inside a <difficulty_score> tag.

# Output Example
The reference answer lists three steps, and all of them follow directly from common knowledge.
<difficulty_score>5</difficulty_score>)PROMPT";

}  // namespace

const PromptTemplate& text_answer() {
  static const PromptTemplate t{"text_answer", kTextAnswer};
  return t;
}

const PromptTemplate& insert_r1() {
  static const PromptTemplate t{"insert_r1", kInsertR1};
  return t;
}

const PromptTemplate& insert_base() {
  static const PromptTemplate t{"insert_base", kInsertBase};
  return t;
}

const PromptTemplate& judge_relevance() {
  static const PromptTemplate t{"judge_relevance", kRelevanceJudge};
  return t;
}

const PromptTemplate& judge_position() {
  static const PromptTemplate t{"judge_position", kPositionJudge};
  return t;
}

const PromptTemplate& single_shot() {
  static const PromptTemplate t{"single_shot", kSingleShot};
  return t;
}

const PromptTemplate& difficulty() {
  static const PromptTemplate t{"difficulty", kDifficulty};
  return t;
}

const std::vector<const PromptTemplate*>& all() {
  static const std::vector<const PromptTemplate*> v{&text_answer(),     &insert_r1(),
                                                    &insert_base(),     &judge_relevance(),
                                                    &judge_position(),  &single_shot(),
                                                    &difficulty()};
  return v;
}

const PromptTemplate& by_name(std::string_view name) {
  for (const auto* t : all()) {
    if (t->name == name) return *t;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown prompt " + std::string(name));
}

}  // namespace m2io::prompts

#include "m2io/schema.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "m2io/text.hpp"

namespace m2io {

namespace {

std::optional<std::string> optional_string(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(ErrorCode::ParseError, std::string(key) + " must be a string");
  return it->get<std::string>();
}

std::string required_string(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw Error(ErrorCode::ParseError, std::string("missing string field '") + key + "'");
  }
  return it->get<std::string>();
}

std::optional<long long> parse_index_key(const std::string& key) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), value);
  if (ec != std::errc() || ptr != key.data() + key.size() || key.empty()) return std::nullopt;
  return value;
}

void put_optional(Json& j, const char* key, const std::optional<std::string>& value) {
  if (value) j[key] = *value;
}

}  // namespace

std::string LintIssue::to_string() const {
  std::ostringstream os;
  os << (severity == Severity::Error ? "error" : "warning");
  if (line) os << " line " << line;
  if (!sample_id.empty()) os << " [" << sample_id << "]";
  os << " " << rule << ": " << message;
  return os.str();
}

Json image_to_json(const ImageAsset& image) {
  Json j;
  j["id"] = image.id;
  j["uri"] = image.uri;
  put_optional(j, "caption", image.caption);
  put_optional(j, "context_above", image.context_above);
  put_optional(j, "context_below", image.context_below);
  return j;
}

ImageAsset image_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "image entry must be an object");
  ImageAsset img;
  img.id = required_string(j, "id");
  img.uri = optional_string(j, "uri").value_or("");
  img.caption = optional_string(j, "caption");
  img.context_above = optional_string(j, "context_above");
  img.context_below = optional_string(j, "context_below");
  return img;
}

Json document_to_json(const DocumentChunk& doc) {
  Json j;
  j["id"] = doc.id;
  j["text"] = doc.text;
  j["image_ids"] = doc.image_ids;
  return j;
}

DocumentChunk document_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "document entry must be an object");
  DocumentChunk doc;
  doc.id = required_string(j, "id");
  doc.text = required_string(j, "text");
  if (auto it = j.find("image_ids"); it != j.end()) {
    if (!it->is_array()) throw Error(ErrorCode::ParseError, "image_ids must be an array");
    for (const auto& v : *it) {
      if (!v.is_string()) throw Error(ErrorCode::ParseError, "image_ids entries must be strings");
      doc.image_ids.push_back(v.get<std::string>());
    }
  }
  return doc;
}

Json sentences_to_json(const SentenceMap& sentences) {
  Json j = Json::object();
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    j[std::to_string(i + 1)] = sentences.sentences()[i];
  }
  return j;
}

SentenceMap sentences_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "sentences must be an object");
  std::map<long long, std::string> by_index;
  for (const auto& [key, value] : j.items()) {
    auto idx = parse_index_key(key);
    if (!idx) throw Error(ErrorCode::ParseError, "sentence key '" + key + "' is not an integer");
    if (!value.is_string()) throw Error(ErrorCode::ParseError, "sentence " + key + " is not a string");
    by_index[*idx] = value.get<std::string>();
  }
  std::vector<std::string> out;
  long long expected = 1;
  for (auto& [idx, sentence] : by_index) {
    if (idx != expected) {
      throw Error(ErrorCode::ParseError, "sentence indices must be contiguous from 1");
    }
    out.push_back(std::move(sentence));
    ++expected;
  }
  return SentenceMap(std::move(out));
}

Json placements_to_json(const PlacementMap& placements) {
  std::vector<std::pair<int, ImageId>> ordered;
  for (const auto& [id, idx] : placements.entries()) ordered.emplace_back(idx, id);
  std::sort(ordered.begin(), ordered.end());
  Json j = Json::object();
  for (const auto& [idx, id] : ordered) j[id] = idx;
  return j;
}

PlacementMap placements_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "placements must be an object");
  PlacementMap pm;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number_integer()) {
      throw Error(ErrorCode::ParseError, "placement for " + key + " must be an integer");
    }
    pm.insert(key, value.get<int>());
  }
  return pm;
}

std::vector<LintIssue> lint_sample_json(const Json& j) {
  std::vector<LintIssue> issues;
  std::string sid;
  auto error = [&](std::string rule, std::string msg) {
    issues.push_back({sid, 0, Severity::Error, std::move(rule), std::move(msg)});
  };
  auto warn = [&](std::string rule, std::string msg) {
    issues.push_back({sid, 0, Severity::Warning, std::move(rule), std::move(msg)});
  };

  if (!j.is_object()) {
    error("schema", "sample must be a JSON object");
    return issues;
  }
  if (auto it = j.find("id"); it != j.end() && it->is_string()) {
    sid = it->get<std::string>();
    if (sid.empty()) error("empty_id", "sample id is empty");
  } else {
    error("schema", "missing string field 'id'");
  }
  if (auto it = j.find("query"); it == j.end() || !it->is_string()) {
    error("schema", "missing string field 'query'");
  } else if (text::trim(it->get_ref<const std::string&>()).empty()) {
    error("empty_query", "query text is empty");
  }

  std::size_t m = 0;
  auto sit = j.find("sentences");
  if (sit == j.end() || !sit->is_object()) {
    error("schema", "missing object field 'sentences'");
  } else {
    std::set<long long> indices;
    for (const auto& [key, value] : sit->items()) {
      auto idx = parse_index_key(key);
      if (!idx || *idx < 1) {
        error("sentence_index", "sentence key '" + key + "' is not a positive integer");
        continue;
      }
      indices.insert(*idx);
      if (!value.is_string()) {
        error("schema", "sentence " + key + " is not a string");
      } else if (text::trim(value.get_ref<const std::string&>()).empty()) {
        error("blank_sentence", "sentence " + key + " is blank");
      }
    }
    long long expected = 1;
    for (auto idx : indices) {
      if (idx != expected) {
        error("sentence_index", "sentence indices must run 1..m without gaps");
        break;
      }
      ++expected;
    }
    m = indices.size();
    if (m == 0) error("no_sentences", "sample has no sentences");
  }

  std::set<std::string> image_ids;
  auto iit = j.find("images");
  if (iit == j.end() || !iit->is_array()) {
    error("schema", "missing array field 'images'");
  } else {
    for (const auto& img : *iit) {
      if (!img.is_object() || !img.contains("id") || !img["id"].is_string()) {
        error("schema", "image entry needs a string 'id'");
        continue;
      }
      auto id = img["id"].get<std::string>();
      if (id.empty()) error("empty_image_id", "image id is empty");
      if (!image_ids.insert(id).second) error("duplicate_image_id", "image " + id + " listed twice");
      for (const char* key : {"uri", "caption", "context_above", "context_below"}) {
        if (img.contains(key) && !img[key].is_string() && !img[key].is_null()) {
          error("schema", std::string(key) + " of " + id + " must be a string");
        }
      }
      try {
        if (!image_from_json(img).has_text()) {
          warn("image_without_text", "image " + id + " has no caption or context");
        }
      } catch (const Error&) {
      }
    }
  }

  auto pit = j.find("gt_placements");
  if (pit == j.end() || !pit->is_object()) {
    error("schema", "missing object field 'gt_placements'");
  } else {
    std::map<long long, std::string> targets;
    for (const auto& [key, value] : pit->items()) {
      if (!value.is_number_integer()) {
        error("schema", "placement of " + key + " must be an integer");
        continue;
      }
      auto idx = value.get<long long>();
      if (!image_ids.count(key)) {
        error("placement_unknown_image", key + " is not among the sample images");
      }
      if (idx < 1 || static_cast<std::size_t>(idx) > m) {
        error("placement_out_of_range",
              key + " -> " + std::to_string(idx) + " outside [1, " + std::to_string(m) + "]");
        continue;
      }
      auto [it, inserted] = targets.emplace(idx, key);
      if (!inserted) {
        error("duplicate_sentence_target",
              it->second + " and " + key + " both placed after sentence " + std::to_string(idx));
      }
    }
  }

  if (auto it = j.find("difficulty"); it != j.end() && !it->is_null()) {
    if (!it->is_string() || !parse_difficulty(it->get<std::string>())) {
      error("bad_difficulty", "difficulty must be easy, medium or hard");
    }
  }
  if (auto it = j.find("difficulty_score"); it != j.end() && !it->is_null() && !it->is_number()) {
    error("schema", "difficulty_score must be a number");
  }
  if (auto it = j.find("source"); it != j.end() && !it->is_null() && !it->is_string()) {
    error("schema", "source must be a string");
  }
  if (auto it = j.find("documents"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) {
      error("schema", "documents must be an array");
    } else {
      for (const auto& d : *it) {
        try {
          auto doc = document_from_json(d);
          for (const auto& id : doc.image_ids) {
            if (!image_ids.count(id)) {
              warn("document_unknown_image", "document " + doc.id + " references " + id);
            }
          }
        } catch (const Error& e) {
          error("schema", e.what());
        }
      }
    }
  }
  return issues;
}

Json sample_to_json(const DatasetSample& s) {
  Json j;
  j["id"] = s.id;
  j["query"] = s.query.text;
  j["sentences"] = sentences_to_json(s.gt.sentence_map);
  Json images = Json::array();
  for (const auto& img : s.images) images.push_back(image_to_json(img));
  j["images"] = std::move(images);
  j["gt_placements"] = placements_to_json(s.gt.placements);
  if (s.difficulty) j["difficulty"] = std::string(to_string(*s.difficulty));
  if (s.difficulty_score) j["difficulty_score"] = *s.difficulty_score;
  if (s.source) j["source"] = *s.source;
  if (!s.documents.empty()) {
    Json docs = Json::array();
    for (const auto& d : s.documents) docs.push_back(document_to_json(d));
    j["documents"] = std::move(docs);
  }
  return j;
}

DatasetSample sample_from_json(const Json& j) {
  for (const auto& issue : lint_sample_json(j)) {
    if (issue.severity == Severity::Error) {
      throw Error(ErrorCode::ParseError, issue.rule + ": " + issue.message);
    }
  }
  DatasetSample s;
  s.id = j["id"].get<std::string>();
  s.query = Query{s.id, j["query"].get<std::string>()};
  s.gt.sentence_map = sentences_from_json(j["sentences"]);
  for (const auto& img : j["images"]) s.images.push_back(image_from_json(img));
  s.gt.placements = placements_from_json(j["gt_placements"]);
  if (auto d = optional_string(j, "difficulty")) s.difficulty = parse_difficulty(*d);
  if (auto it = j.find("difficulty_score"); it != j.end() && it->is_number()) {
    s.difficulty_score = it->get<double>();
  }
  s.source = optional_string(j, "source");
  if (auto it = j.find("documents"); it != j.end() && it->is_array()) {
    for (const auto& d : *it) s.documents.push_back(document_from_json(d));
  }
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<Json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::ParseError,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<DatasetSample> load_samples(const std::filesystem::path& path) {
  std::vector<DatasetSample> samples;
  std::set<std::string> seen;
  std::size_t row = 0;
  for (const auto& j : read_jsonl(path)) {
    ++row;
    try {
      samples.push_back(sample_from_json(j));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError,
                  path.string() + " record " + std::to_string(row) + ": " + e.what());
    }
    if (!seen.insert(samples.back().id).second) {
      throw Error(ErrorCode::ParseError, "duplicate_sample_id: " + samples.back().id);
    }
  }
  return samples;
}

void save_samples(const std::filesystem::path& path, const std::vector<DatasetSample>& samples) {
  std::vector<Json> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.push_back(sample_to_json(s));
  write_jsonl(path, rows);
}

std::vector<LintIssue> lint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<LintIssue> issues;
  std::map<std::string, std::size_t> first_line;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      issues.push_back({"", lineno, Severity::Error, "invalid_json", e.what()});
      continue;
    }
    for (auto issue : lint_sample_json(j)) {
      issue.line = lineno;
      issues.push_back(std::move(issue));
    }
    if (j.is_object() && j.contains("id") && j["id"].is_string()) {
      auto id = j["id"].get<std::string>();
      auto [it, inserted] = first_line.emplace(id, lineno);
      if (!inserted) {
        issues.push_back({id, lineno, Severity::Error, "duplicate_sample_id",
                          "first defined on line " + std::to_string(it->second)});
      }
    }
  }
  return issues;
}

}  // namespace m2io

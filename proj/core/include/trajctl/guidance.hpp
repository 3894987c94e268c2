#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajctl/attention.hpp"
#include "trajctl/matrix.hpp"

namespace trajctl {

struct PromptBundle {
  std::string original;
  std::string foreground;
  std::string background;
  // Non-fatal findings, e.g. outputs shorter than the 80-word guideline.
  std::vector<std::string> warnings;
};

class SplitterClient {
 public:
  virtual ~SplitterClient() = default;
  virtual PromptBundle split(const std::string& prompt) = 0;
};

// Pure function of the prompt, reproducible across processes and platforms:
// the words before the first locational preposition become the subject
// clause (foreground prompt, with a close-up phrase appended); the words
// after it become the scene clause (background prompt, wrapped in a fixed
// scene phrase that never mentions the subject).
class StubSplitter final : public SplitterClient {
 public:
  PromptBundle split(const std::string& prompt) override;
};

struct RemoteSplitterConfig {
  std::string endpoint;     // e.g. "http://127.0.0.1:8089/v1/complete"
  std::string model;
  int timeout_ms = 10000;
  std::string api_key_env;  // env var holding the bearer token; empty = none
};

// POSTs {"model", "input"} to the endpoint, where "input" is the user prompt
// wrapped in the splitting instruction, and parses the plain-text response
// via the foreground_prompt:/background_prompt: markers.
class RemoteSplitter final : public SplitterClient {
 public:
  explicit RemoteSplitter(RemoteSplitterConfig config);
  PromptBundle split(const std::string& prompt) override;

 private:
  RemoteSplitterConfig config_;
};

// The verbatim instruction text wrapped around user prompts sent to a remote
// splitter, and the composed request payload.
const std::string& split_instruction_template();
std::string build_split_instruction(const std::string& prompt);

// Extracts the two marked fields from a raw response. Throws
// MalformedResponse when a marker is missing or a field is empty.
PromptBundle parse_split_response(const std::string& original,
                                  const std::string& text);

// Validates the prompt (EmptyPrompt), invokes the client, checks both fields
// are present, and attaches word-count warnings.
PromptBundle split_prompt(const std::string& prompt, SplitterClient& client);

// Deterministic stand-in for a text encoder: one key vector per whitespace
// token (capped at max_tokens), each row seeded by fnv1a64(token) ^ seed with
// unit-variance entries. Empty text encodes to zero rows.
struct TextEncoder {
  std::size_t dim = 64;
  std::uint64_t seed = 0;
  std::size_t max_tokens = 64;

  Mat encode(const std::string& text) const;
};

// Concatenates foreground keys above background keys; layout spans
// [0, |fg|) and [|fg|, |fg|+|bg|). Throws WidthMismatch.
ConditionEmbedding union_condition(const Mat& fg_keys, const Mat& bg_keys);

}  // namespace trajctl

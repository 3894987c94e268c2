#include "trajctl/guidance.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>
#include <sstream>
#include <string_view>

#include <httplib.h>

#include <nlohmann/json.hpp>

#include "trajctl/det_rng.hpp"
#include "trajctl/errors.hpp"

namespace trajctl {
namespace {

constexpr std::string_view kFgMarker = "foreground_prompt:";
constexpr std::string_view kBgMarker = "background_prompt:";

const std::string kTemplate =
    "You are a prompt engineer. Users will provide you with a prompt for "
    "generating videos. Your task is to understand this prompt, distinguish "
    "the main subject (foreground) and the background, and finally return a "
    "prompt that only describes the main subject and a prompt that only "
    "describes the background.\n"
    "The requirements are as follows:\n"
    "1. The output format is: foreground_prompt: [prompt describing only the "
    "main subject] background_prompt: [prompt describing only the "
    "background]\n"
    "2. The lengths of foreground_prompt and background_prompt should be "
    "around 80-100 words long.\n"
    "3. The foreground_prompt should include a description of a close-up "
    "shot, indicating that the main subject fills the entire frame.\n"
    "4. The content described in the background_prompt should be consistent "
    "with the background content of the prompt provided by the user, and it "
    "must not contain fields related to the main subject, nor include "
    "information about the foreground subject.\n"
    "Example:\n"
    "User: Realistic photography style, a medium-sized gray-and-white dog "
    "with fluffy fur running to the right. The dog has bright black eyes, "
    "perked ears, and a wagging tail. Its legs are in mid-stride, paws "
    "lifting off the ground, mouth slightly open as if panting. The "
    "background is a sunlit green lawn with a few scattered flowers. The "
    "camera follows the dog in a smooth tracking shot, capturing its "
    "energetic movement. Medium shot from a low angle, emphasizing the dog's "
    "speed and vitality.\n"
    "foreground_prompt: Realistic photography style, a medium-sized "
    "gray-and-white dog with fluffy fur running to the right. The dog has "
    "bright black eyes, perked ears, and a wagging tail. Its legs are in "
    "mid-stride, paws lifting off the ground, mouth slightly open as if "
    "panting. The camera follows the dog in a smooth tracking shot, "
    "capturing its energetic movement. Close shot from a low angle, "
    "emphasizing the dog's speed and vitality.\n"
    "background_prompt: Hyper-realistic photography, a lush garden bathed in "
    "soft afternoon sunlight. Vibrant roses in red, pink, and yellow bloom "
    "densely on climbing trellises, while green ivy creeps up weathered "
    "stone walls. A small stone fountain gurgles gently in the center, with "
    "water rippling and reflecting the sky. Butterflies flit between "
    "lavender bushes, and a honeybee hovers above a daisy. The grass is "
    "neatly trimmed, with a winding gravel path.\n"
    "I will now provide the prompt for you. Please directly output the "
    "foreground_prompt and background_prompt follow the format without extra "
    "responses and quotation mark.";

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::string join_words(const std::vector<std::string>& words, std::size_t b,
                       std::size_t e) {
  std::string out;
  for (std::size_t i = b; i < e; ++i) {
    if (!out.empty()) out += ' ';
    out += words[i];
  }
  return out;
}

// Lowercased, punctuation-stripped view of a word for the preposition test.
std::string normalize_word(const std::string& w) {
  std::size_t b = 0;
  std::size_t e = w.size();
  auto is_punct = [](char c) {
    return std::ispunct(static_cast<unsigned char>(c));
  };
  while (b < e && is_punct(w[b])) ++b;
  while (e > b && is_punct(w[e - 1])) --e;
  std::string out = w.substr(b, e - b);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

bool is_preposition(const std::string& word) {
  static const std::array<std::string_view, 28> kPrepositions = {
      "in",      "on",      "at",      "inside", "outside", "under",
      "over",    "above",   "below",   "across", "along",   "around",
      "through", "near",    "beside",  "behind", "between", "among",
      "amid",    "upon",    "onto",    "into",   "toward",  "towards",
      "against", "during",  "within",  "atop"};
  const std::string n = normalize_word(word);
  return std::find(kPrepositions.begin(), kPrepositions.end(), n) !=
         kPrepositions.end();
}

std::size_t count_words(const std::string& text) {
  return split_words(text).size();
}

}  // namespace

PromptBundle StubSplitter::split(const std::string& prompt) {
  const std::string trimmed = trim(prompt);
  if (trimmed.empty())
    throw Error(ErrorCode::EmptyPrompt, "prompt is empty");
  const std::vector<std::string> words = split_words(trimmed);

  std::size_t cut = words.size();
  for (std::size_t i = 1; i < words.size(); ++i) {
    if (is_preposition(words[i])) {
      cut = i;
      break;
    }
  }

  PromptBundle bundle;
  bundle.original = trimmed;
  std::string subject = join_words(words, 0, cut);
  while (!subject.empty() &&
         (subject.back() == '.' || subject.back() == ','))
    subject.pop_back();
  bundle.foreground =
      subject + ", shown in a detailed close-up view that fills the frame.";

  std::size_t scene_begin = cut;
  while (scene_begin < words.size() && is_preposition(words[scene_begin]))
    ++scene_begin;
  std::string scene = join_words(words, scene_begin, words.size());
  while (!scene.empty() && (scene.back() == '.' || scene.back() == ','))
    scene.pop_back();
  bundle.background =
      scene.empty()
          ? "An open, softly lit scene with no main subject present."
          : "A wide view of " + scene +
                ", softly lit, with no main subject present.";
  return bundle;
}

RemoteSplitter::RemoteSplitter(RemoteSplitterConfig config)
    : config_(std::move(config)) {}

PromptBundle RemoteSplitter::split(const std::string& prompt) {
  // Split the endpoint into base URL and request path.
  const std::string& url = config_.endpoint;
  const std::size_t scheme = url.find("://");
  if (scheme == std::string::npos)
    throw Error(ErrorCode::ConfigError,
                "endpoint '" + url + "' is missing a scheme");
  const std::size_t slash = url.find('/', scheme + 3);
  const std::string base =
      slash == std::string::npos ? url : url.substr(0, slash);
  const std::string path =
      slash == std::string::npos ? std::string("/") : url.substr(slash);

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (!key || !*key)
      throw Error(ErrorCode::ClientUnavailable,
                  "environment variable " + config_.api_key_env +
                      " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  nlohmann::json body;
  body["model"] = config_.model;
  body["input"] = build_split_instruction(prompt);

  httplib::Client cli(base);
  const time_t sec = config_.timeout_ms / 1000;
  const time_t usec = (config_.timeout_ms % 1000) * 1000;
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);

  httplib::Result res = cli.Post(path, headers, body.dump(),
                                 "application/json");
  if (!res)
    throw Error(ErrorCode::ClientUnavailable,
                "request to " + url + " failed: " +
                    httplib::to_string(res.error()));
  if (res->status != 200)
    throw Error(ErrorCode::ClientUnavailable,
                "request to " + url + " returned status " +
                    std::to_string(res->status));
  return parse_split_response(prompt, res->body);
}

const std::string& split_instruction_template() { return kTemplate; }

std::string build_split_instruction(const std::string& prompt) {
  return kTemplate + "\nUser: " + prompt;
}

PromptBundle parse_split_response(const std::string& original,
                                  const std::string& text) {
  const std::size_t fg_at = text.find(kFgMarker);
  if (fg_at == std::string::npos)
    throw Error(ErrorCode::MalformedResponse,
                "response is missing the foreground_prompt: field");
  const std::size_t bg_at = text.find(kBgMarker, fg_at + kFgMarker.size());
  if (bg_at == std::string::npos)
    throw Error(ErrorCode::MalformedResponse,
                "response is missing the background_prompt: field");

  PromptBundle bundle;
  bundle.original = original;
  bundle.foreground = trim(std::string_view(text).substr(
      fg_at + kFgMarker.size(), bg_at - fg_at - kFgMarker.size()));
  bundle.background =
      trim(std::string_view(text).substr(bg_at + kBgMarker.size()));
  if (bundle.foreground.empty())
    throw Error(ErrorCode::MalformedResponse, "foreground_prompt is empty");
  if (bundle.background.empty())
    throw Error(ErrorCode::MalformedResponse, "background_prompt is empty");
  return bundle;
}

PromptBundle split_prompt(const std::string& prompt, SplitterClient& client) {
  if (trim(prompt).empty())
    throw Error(ErrorCode::EmptyPrompt, "prompt is empty");
  PromptBundle bundle = client.split(prompt);
  if (bundle.foreground.empty() || bundle.background.empty())
    throw Error(ErrorCode::MalformedResponse,
                "splitter returned an empty prompt field");
  auto warn_if_short = [&bundle](const char* name, const std::string& value) {
    const std::size_t n = count_words(value);
    if (n < 80)
      bundle.warnings.push_back(std::string(name) + " prompt is " +
                                std::to_string(n) +
                                " words, below the 80-word guideline");
  };
  warn_if_short("foreground", bundle.foreground);
  warn_if_short("background", bundle.background);
  return bundle;
}

Mat TextEncoder::encode(const std::string& text) const {
  const std::vector<std::string> words = split_words(text);
  const std::size_t count = std::min(words.size(), max_tokens);
  Mat keys(count, dim);
  for (std::size_t i = 0; i < count; ++i) {
    DetRng rng(fnv1a64(words[i]) ^ seed);
    double* row = keys.row(i);
    for (std::size_t c = 0; c < dim; ++c) row[c] = rng.normal();
  }
  return keys;
}

ConditionEmbedding union_condition(const Mat& fg_keys, const Mat& bg_keys) {
  if (fg_keys.cols != bg_keys.cols)
    throw Error(ErrorCode::WidthMismatch,
                "foreground keys have width " + std::to_string(fg_keys.cols) +
                    " but background keys have width " +
                    std::to_string(bg_keys.cols));
  ConditionEmbedding cond;
  cond.keys = Mat(fg_keys.rows + bg_keys.rows, fg_keys.cols);
  std::copy(fg_keys.data.begin(), fg_keys.data.end(), cond.keys.data.begin());
  std::copy(bg_keys.data.begin(), bg_keys.data.end(),
            cond.keys.data.begin() + static_cast<std::ptrdiff_t>(
                                         fg_keys.data.size()));
  cond.layout.fg_span = {0, fg_keys.rows};
  cond.layout.bg_span = {fg_keys.rows, fg_keys.rows + bg_keys.rows};
  return cond;
}

}  // namespace trajctl

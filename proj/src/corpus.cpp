#include "cmg/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "cmg/rng.hpp"

namespace cmg {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) || c == '_';
}

bool is_punct(char c) { return !is_space(c) && !is_word_char(c); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

struct CommandResult {
  int status = -1;
  std::string output;
};

CommandResult run_command(const std::string& cmd) {
  CommandResult result;
  FILE* pipe = ::popen((cmd + " 2>/dev/null").c_str(), "r");
  if (pipe == nullptr) return result;
  std::array<char, 65536> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) result.output.append(buf.data(), n);
  result.status = ::pclose(pipe);
  return result;
}

}  // namespace

std::vector<Commit> ingest_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());

  std::vector<Commit> commits;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(where + ": malformed record: " + e.what());
    }
    Commit c;
    for (const char* field : {"id", "diff", "message"}) {
      if (!rec.is_object() || !rec.contains(field) || !rec[field].is_string())
        throw CorpusError(where + ": missing string field \"" + field + "\"");
    }
    c.id = rec["id"].get<std::string>();
    c.diff_text = rec["diff"].get<std::string>();
    c.message_text = rec["message"].get<std::string>();
    c.byte_size = c.diff_text.size();
    if (c.id.empty()) throw CorpusError(where + ": empty id");
    if (!seen.insert(c.id).second) throw CorpusError(where + ": duplicate id " + c.id);
    commits.push_back(std::move(c));
  }
  return commits;
}

std::vector<Commit> ingest_git(const std::filesystem::path& repo, GitIngestReport* report) {
  const std::string git = "git -C " + shell_quote(repo.string()) + " ";
  if (!std::filesystem::is_directory(repo) || run_command(git + "rev-parse --git-dir").status != 0)
    throw CorpusError("not a git repository: " + repo.string());

  GitIngestReport local;
  GitIngestReport& rep = report ? *report : local;
  rep = {};

  const auto listing = run_command(git + "rev-list --reverse --parents HEAD");
  if (listing.status != 0) return {};  // no commits yet

  std::vector<Commit> commits;
  std::istringstream lines(listing.output);
  std::string line;
  while (std::getline(lines, line)) {
    std::istringstream fields(line);
    std::string sha, parent;
    fields >> sha;
    if (sha.empty()) continue;
    ++rep.revisions;
    if (!(fields >> parent)) continue;  // root commit

    const auto msg = run_command(git + "log -1 --format=%B " + sha);
    const auto diff = run_command(git + "diff --no-color --no-ext-diff " + parent + " " + sha);
    if (msg.status != 0 || diff.status != 0) {
      ++rep.skipped;
      rep.warnings.push_back("unreadable revision " + sha);
      continue;
    }
    Commit c;
    c.id = sha;
    c.diff_text = diff.output;
    c.message_text = msg.output;
    c.byte_size = c.diff_text.size();
    commits.push_back(std::move(c));
  }
  return commits;
}

std::string extract_first_sentence(std::string_view message) {
  message = trim(message);
  std::size_t end = message.size();
  for (std::size_t i = 0; i < message.size(); ++i) {
    if (message[i] == '\n' || message[i] == '\r') {
      end = i;
      break;
    }
    if (message[i] == '.' && i + 1 < message.size() && is_space(message[i + 1])) {
      end = i + 1;
      break;
    }
  }
  return std::string(trim(message.substr(0, end)));
}

std::string strip_ids(std::string_view text, IdKind kind) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  if (kind == IdKind::Target) {
    while (i < text.size()) {
      if (text[i] == '#' && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
        ++i;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
        out += kIdPlaceholder;
      } else {
        out += text[i++];
      }
    }
    return out;
  }

  while (i < text.size()) {
    if (!is_word_char(text[i])) {
      out += text[i++];
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_char(text[j])) ++j;
    const auto word = text.substr(i, j - i);
    const bool hex = std::all_of(word.begin(), word.end(),
                                 [](char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; });
    const bool has_digit = std::any_of(word.begin(), word.end(),
                                       [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; });
    if (hex && has_digit && word.size() >= 7)
      out += kIdPlaceholder;
    else
      out += word;
    i = j;
  }
  return out;
}

bool is_merge_or_rollback(std::string_view message) {
  const auto first = lowercase(extract_first_sentence(message));
  for (std::string_view prefix : {"merge", "revert", "rollback", "roll back"}) {
    if (std::string_view(first).substr(0, prefix.size()) == prefix) return true;
  }
  return false;
}

TokenSequence tokenize(std::string_view text) {
  TokenSequence tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (is_space(c)) {
      ++i;
    } else if (text.substr(i, kIdPlaceholder.size()) == kIdPlaceholder) {
      tokens.emplace_back(kIdPlaceholder);
      i += kIdPlaceholder.size();
    } else if (is_punct(c)) {
      tokens.emplace_back(1, c);
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && is_word_char(text[j])) ++j;
      tokens.emplace_back(text.substr(i, j - i));
      i = j;
    }
  }
  return tokens;
}

std::string join_tokens(const TokenSequence& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::size_t FilterReport::total_removed() const {
  std::size_t n = 0;
  for (const auto& [reason, count] : removed) n += count;
  return n;
}

TokenSequence preprocess_diff(std::string_view diff_text) {
  return tokenize(strip_ids(diff_text, IdKind::Source));
}

PreparedPair preprocess(const Commit& commit) {
  PreparedPair p;
  p.id = commit.id;
  p.source = preprocess_diff(commit.diff_text);
  p.target = tokenize(strip_ids(extract_first_sentence(commit.message_text), IdKind::Target));
  return p;
}

FilterResult apply_filters(const std::vector<Commit>& commits, const CorpusLimits& limits) {
  FilterResult result;
  result.report.input = commits.size();
  for (const char* reason : {removal::kMergeOrRollback, removal::kDiffTooLarge, removal::kEmptyTarget,
                             removal::kSourceTooLong, removal::kTargetTooLong})
    result.report.removed[reason] = 0;

  for (const auto& c : commits) {
    if (is_merge_or_rollback(c.message_text)) {
      ++result.report.removed[removal::kMergeOrRollback];
      continue;
    }
    if (c.byte_size > limits.max_diff_bytes) {
      ++result.report.removed[removal::kDiffTooLarge];
      continue;
    }
    auto p = preprocess(c);
    if (p.target.empty()) {
      ++result.report.removed[removal::kEmptyTarget];
    } else if (p.source.size() > limits.max_source_len) {
      ++result.report.removed[removal::kSourceTooLong];
    } else if (p.target.size() > limits.max_target_len) {
      ++result.report.removed[removal::kTargetTooLong];
    } else {
      result.kept.push_back(std::move(p));
    }
  }
  result.report.kept = result.kept.size();
  return result;
}

// --- Vocabulary ------------------------------------------------------------

const std::vector<std::string>& Vocabulary::special_tokens() {
  static const std::vector<std::string> specials = {"<pad>", "<unk>", "<s>", "</s>"};
  return specials;
}

Vocabulary::Vocabulary() {
  for (const auto& s : special_tokens()) {
    token_to_id_[s] = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(s);
  }
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  for (const auto& t : tokens) {
    if (t.empty()) throw CorpusError("empty vocabulary token");
    if (v.contains(t)) throw CorpusError("duplicate or reserved vocabulary token: " + t);
    v.token_to_id_[t] = static_cast<int>(v.id_to_token_.size());
    v.id_to_token_.push_back(t);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  const auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw CorpusError("vocabulary id out of range: " + std::to_string(id));
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const TokenSequence& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

TokenSequence Vocabulary::decode(const std::vector<int>& ids) const {
  TokenSequence out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::vector<std::string> Vocabulary::corpus_tokens() const {
  return {id_to_token_.begin() + kNumSpecials, id_to_token_.end()};
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : id_to_token_) {
    for (char c : t) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CorpusError("cannot write vocabulary " + path.string());
  for (const auto& t : corpus_tokens()) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(tokens);
}

Vocabulary build_vocab(const std::vector<TokenSequence>& sequences, std::optional<std::size_t> cap) {
  if (cap && *cap < 1) throw CorpusError("vocabulary cap must be at least 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& seq : sequences)
    for (const auto& t : seq) ++counts[t];

  const auto& specials = Vocabulary::special_tokens();
  std::vector<std::pair<std::string, std::size_t>> ranked;
  ranked.reserve(counts.size());
  for (auto& [tok, n] : counts) {
    if (std::find(specials.begin(), specials.end(), tok) == specials.end()) ranked.emplace_back(tok, n);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (cap && ranked.size() > *cap) ranked.resize(*cap);

  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [tok, n] : ranked) tokens.push_back(tok);
  return Vocabulary::from_tokens(tokens);
}

DatasetSplit split_dataset(std::vector<PreparedPair> pairs, const SplitSizes& sizes, std::uint64_t seed) {
  const std::size_t n = pairs.size();
  const auto from_fraction = [n](double f) {
    if (f < 0.0 || f > 1.0) throw CorpusError("split fraction out of [0, 1]");
    return static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
  };
  const std::size_t n_test = sizes.test_count ? *sizes.test_count : from_fraction(sizes.test_fraction);
  const std::size_t n_valid = sizes.valid_count ? *sizes.valid_count : from_fraction(sizes.valid_fraction);
  if (n_test + n_valid > n)
    throw CorpusError("requested " + std::to_string(n_test) + " test + " + std::to_string(n_valid) +
                      " validation pairs from a corpus of " + std::to_string(n));

  Rng rng(seed);
  rng.shuffle(pairs);

  DatasetSplit split;
  split.seed = seed;
  auto first = std::make_move_iterator(pairs.begin());
  split.test.assign(first, first + static_cast<std::ptrdiff_t>(n_test));
  split.valid.assign(first + static_cast<std::ptrdiff_t>(n_test),
                     first + static_cast<std::ptrdiff_t>(n_test + n_valid));
  split.train.assign(first + static_cast<std::ptrdiff_t>(n_test + n_valid), std::make_move_iterator(pairs.end()));
  return split;
}

void write_sequences(const std::filesystem::path& path, const std::vector<TokenSequence>& seqs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& s : seqs) out << join_tokens(s) << '\n';
}

std::vector<TokenSequence> read_sequences(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::vector<TokenSequence> seqs;
  std::string line;
  while (std::getline(in, line)) {
    TokenSequence seq;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) seq.push_back(tok);
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

}  // namespace cmg

#include "softflow/seq_env.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace softflow {

void Dfa::validate() const {
  if (num_states <= 0) throw std::invalid_argument("Dfa: need at least one state");
  if (alphabet.empty()) throw std::invalid_argument("Dfa: empty alphabet");
  std::set<char> seen(alphabet.begin(), alphabet.end());
  if (seen.size() != alphabet.size()) throw std::invalid_argument("Dfa: duplicate alphabet symbol");
  if (start < 0 || start >= num_states) throw std::invalid_argument("Dfa: start state out of range");
  if (static_cast<int>(accepting.size()) != num_states)
    throw std::invalid_argument("Dfa: accepting flags do not cover all states");
  if (static_cast<int>(next.size()) != num_states)
    throw std::invalid_argument("Dfa: transition table must be total over states");
  for (const auto& row : next) {
    if (row.size() != alphabet.size())
      throw std::invalid_argument("Dfa: transition table must be total over the alphabet");
    for (int to : row) {
      if (to < 0 || to >= num_states) throw std::invalid_argument("Dfa: transition target out of range");
    }
  }
  if (min_len < 0) throw std::invalid_argument("Dfa: min_len must be >= 0");
}

int Dfa::symbol_index(char c) const {
  const size_t pos = alphabet.find(c);
  if (pos == std::string::npos)
    throw std::invalid_argument(std::string("Dfa: symbol '") + c + "' outside alphabet");
  return static_cast<int>(pos);
}

bool Dfa::accepts(const std::string& s) const {
  if (static_cast<int>(s.size()) < min_len) return false;
  if (max_len_bound >= 0 && static_cast<int>(s.size()) > max_len_bound) return false;
  int state = start;
  for (char c : s) state = next[static_cast<size_t>(state)][static_cast<size_t>(symbol_index(c))];
  return accepting[static_cast<size_t>(state)];
}

Dfa make_depth_dfa(int max_depth, const std::string& letters) {
  if (max_depth < 0) throw std::invalid_argument("make_depth_dfa: max_depth must be >= 0");
  Dfa dfa;
  dfa.alphabet = letters + "()";
  dfa.num_states = max_depth + 2;  // depths 0..max_depth plus a dead state
  const int dead = max_depth + 1;
  dfa.start = 0;
  dfa.accepting.assign(static_cast<size_t>(dfa.num_states), false);
  dfa.accepting[0] = true;
  dfa.next.assign(static_cast<size_t>(dfa.num_states),
                  std::vector<int>(dfa.alphabet.size(), dead));
  for (int d = 0; d <= max_depth; ++d) {
    for (size_t i = 0; i < letters.size(); ++i) dfa.next[d][i] = d;
    dfa.next[d][letters.size()] = d < max_depth ? d + 1 : dead;        // '('
    dfa.next[d][letters.size() + 1] = d > 0 ? d - 1 : dead;            // ')'
  }
  dfa.min_len = 1;
  dfa.validate();
  return dfa;
}

Dfa dfa_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("Dfa: malformed JSON: ") + e.what());
  }
  for (const char* key : {"states", "alphabet", "start", "accepting", "transitions"}) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("Dfa: missing key '") + key + "'");
  }
  Dfa dfa;
  std::vector<int> states = j.at("states").get<std::vector<int>>();
  std::sort(states.begin(), states.end());
  dfa.num_states = static_cast<int>(states.size());
  for (int i = 0; i < dfa.num_states; ++i) {
    if (states[static_cast<size_t>(i)] != i)
      throw std::invalid_argument("Dfa: states must be 0..n-1");
  }
  for (const auto& tok : j.at("alphabet")) {
    std::string t = tok.get<std::string>();
    if (t.size() != 1) throw std::invalid_argument("Dfa: alphabet tokens must be single characters");
    dfa.alphabet += t[0];
  }
  dfa.start = j.at("start").get<int>();
  dfa.accepting.assign(static_cast<size_t>(dfa.num_states), false);
  for (int s : j.at("accepting").get<std::vector<int>>()) {
    if (s < 0 || s >= dfa.num_states) throw std::invalid_argument("Dfa: accepting state out of range");
    dfa.accepting[static_cast<size_t>(s)] = true;
  }
  dfa.next.assign(static_cast<size_t>(dfa.num_states), std::vector<int>(dfa.alphabet.size(), -1));
  for (const auto& tr : j.at("transitions")) {
    if (!tr.is_array() || tr.size() != 3)
      throw std::invalid_argument("Dfa: transitions must be [from, token, to] triples");
    const int from = tr[0].get<int>();
    const std::string tok = tr[1].get<std::string>();
    const int to = tr[2].get<int>();
    if (from < 0 || from >= dfa.num_states || to < 0 || to >= dfa.num_states)
      throw std::invalid_argument("Dfa: transition state out of range");
    if (tok.size() != 1) throw std::invalid_argument("Dfa: transition token must be one character");
    const int col = dfa.symbol_index(tok[0]);
    if (dfa.next[static_cast<size_t>(from)][static_cast<size_t>(col)] != -1)
      throw std::invalid_argument("Dfa: duplicate transition (nondeterministic)");
    dfa.next[static_cast<size_t>(from)][static_cast<size_t>(col)] = to;
  }
  for (const auto& row : dfa.next) {
    for (int to : row) {
      if (to == -1) throw std::invalid_argument("Dfa: transition table not total");
    }
  }
  if (j.contains("min_len")) dfa.min_len = j.at("min_len").get<int>();
  if (j.contains("max_len")) dfa.max_len_bound = j.at("max_len").get<int>();
  dfa.validate();
  return dfa;
}

std::string dfa_to_json_text(const Dfa& dfa) {
  nlohmann::json j;
  std::vector<int> states(static_cast<size_t>(dfa.num_states));
  for (int i = 0; i < dfa.num_states; ++i) states[static_cast<size_t>(i)] = i;
  j["states"] = states;
  std::vector<std::string> alphabet;
  for (char c : dfa.alphabet) alphabet.emplace_back(1, c);
  j["alphabet"] = alphabet;
  j["start"] = dfa.start;
  std::vector<int> accepting;
  for (int s = 0; s < dfa.num_states; ++s) {
    if (dfa.accepting[static_cast<size_t>(s)]) accepting.push_back(s);
  }
  j["accepting"] = accepting;
  nlohmann::json transitions = nlohmann::json::array();
  for (int s = 0; s < dfa.num_states; ++s) {
    for (size_t c = 0; c < dfa.alphabet.size(); ++c) {
      transitions.push_back({s, std::string(1, dfa.alphabet[c]), dfa.next[static_cast<size_t>(s)][c]});
    }
  }
  j["transitions"] = transitions;
  j["min_len"] = dfa.min_len;
  if (dfa.max_len_bound >= 0) j["max_len"] = dfa.max_len_bound;
  return j.dump(2);
}

Dfa load_dfa(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dfa: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return dfa_from_json_text(buf.str());
}

void SeqSpec::validate() const {
  int eos_count = 0;
  std::set<char> chars;
  for (const std::string& tok : vocab) {
    if (tok == kEosToken) {
      ++eos_count;
      continue;
    }
    if (tok.size() != 1)
      throw std::invalid_argument("SeqSpec: vocab tokens must be single characters");
    if (!chars.insert(tok[0]).second) throw std::invalid_argument("SeqSpec: duplicate vocab token");
  }
  if (eos_count != 1) throw std::invalid_argument("SeqSpec: vocab needs exactly one <eos>");
  if (chars.size() < 2) throw std::invalid_argument("SeqSpec: need at least 2 non-terminal tokens");
  if (max_len < 1) throw std::invalid_argument("SeqSpec: max_len must be >= 1");
  if (motif.empty()) throw std::invalid_argument("SeqSpec: motif must be non-empty");
  if (static_cast<int>(motif.size()) > max_len)
    throw std::invalid_argument("SeqSpec: max_len must cover the motif");
  for (char c : motif) {
    if (!chars.count(c)) throw std::invalid_argument("SeqSpec: motif uses non-vocab token");
  }
  oracle.validate();
  std::set<char> oracle_chars(oracle.alphabet.begin(), oracle.alphabet.end());
  if (oracle_chars != chars)
    throw std::invalid_argument("SeqSpec: oracle alphabet must equal vocab minus <eos>");
}

int SeqSpec::eos_action() const {
  for (size_t i = 0; i < vocab.size(); ++i) {
    if (vocab[i] == kEosToken) return static_cast<int>(i);
  }
  throw std::invalid_argument("SeqSpec: vocab has no <eos>");
}

std::string SeqSpec::letters() const {
  std::string out;
  for (const std::string& tok : vocab) {
    if (tok != kEosToken) out += tok;
  }
  return out;
}

char SeqSpec::action_char(int action) const {
  if (action < 0 || action >= static_cast<int>(vocab.size()) || action == eos_action())
    throw std::invalid_argument("SeqSpec: no token for action " + std::to_string(action));
  return vocab[static_cast<size_t>(action)][0];
}

int SeqSpec::char_action(char c) const {
  for (size_t i = 0; i < vocab.size(); ++i) {
    if (vocab[i].size() == 1 && vocab[i][0] == c) return static_cast<int>(i);
  }
  throw std::invalid_argument(std::string("SeqSpec: character '") + c + "' not in vocab");
}

SeqState seq_step(const SeqSpec& spec, const SeqState& state, int action) {
  if (state.terminated) throw std::invalid_argument("seq_step: state already terminal");
  if (action < 0 || action >= static_cast<int>(spec.vocab.size()))
    throw std::invalid_argument("seq_step: unknown action");
  if (action == spec.eos_action()) return {state.prefix, true};
  if (static_cast<int>(state.prefix.size()) >= spec.max_len)
    throw std::invalid_argument("seq_step: prefix already at max_len");
  SeqState out{state.prefix, false};
  out.prefix += spec.action_char(action);
  return out;
}

bool seq_feasible(const SeqSpec& spec, const std::string& s) {
  for (char c : s) spec.oracle.symbol_index(c);  // reject out-of-alphabet tokens
  if (static_cast<int>(s.size()) > spec.max_len) return false;
  return spec.oracle.accepts(s);
}

double seq_reward(const SeqSpec& spec, const std::string& s) {
  int count = 0;
  if (s.size() >= spec.motif.size()) {
    for (size_t i = 0; i + spec.motif.size() <= s.size(); ++i) {
      if (s.compare(i, spec.motif.size(), spec.motif) == 0) ++count;
    }
  }
  return kSeqRewardBase + count;
}

std::string mutate_sequence(const SeqSpec& spec, const std::string& s, RngStream& rng) {
  if (s.empty()) throw std::invalid_argument("mutate_sequence: empty input");
  const std::string letters = spec.letters();
  const int len = static_cast<int>(s.size());
  int op = -1;
  for (;;) {
    op = static_cast<int>(rng.uniform_int(3));
    if (op == 2 && len == 1) continue;                 // delete would empty the string
    if (op == 1 && len >= spec.max_len) continue;      // insert would overflow
    break;
  }
  std::string out = s;
  if (op == 0) {
    const int pos = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(len)));
    const size_t cur = letters.find(s[static_cast<size_t>(pos)]);
    if (cur == std::string::npos)
      throw std::invalid_argument("mutate_sequence: input token outside vocab");
    // Draw from the alphabet minus the current token via index skip.
    uint64_t k = rng.uniform_int(letters.size() - 1);
    if (k >= cur) ++k;
    out[static_cast<size_t>(pos)] = letters[static_cast<size_t>(k)];
  } else if (op == 1) {
    const int pos = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(len) + 1));
    const char c = letters[static_cast<size_t>(rng.uniform_int(letters.size()))];
    out.insert(out.begin() + pos, c);
  } else {
    const int pos = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(len)));
    out.erase(out.begin() + pos);
  }
  return out;
}

}  // namespace softflow

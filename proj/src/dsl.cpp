#include "latcens/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>

namespace latcens {
namespace dsl {

namespace {

struct Token {
  std::string text;
  int col = 0;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

[[noreturn]] void fail(const std::string& msg, int line, int col) {
  throw ParseError(msg + " (col " + std::to_string(col) + ")", line);
}

// Splits a statement into identifiers, punctuation ("<-", "*", "(", ")", ","),
// and @-tags.
std::vector<Token> lex(const std::string& s, int line) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }
    const int col = static_cast<int>(i) + 1;
    if (c == '<' && i + 1 < s.size() && s[i + 1] == '-') {
      out.push_back({"<-", col});
      i += 2;
    } else if (c == '*' || c == '(' || c == ')' || c == ',') {
      out.push_back({std::string(1, c), col});
      ++i;
    } else if (c == '@') {
      size_t j = i + 1;
      while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j])) &&
             s[j] != ')' && s[j] != ',')
        ++j;
      if (j == i + 1) fail("empty @-tag", line, col);
      out.push_back({s.substr(i, j - i), col});
      i = j;
    } else if (ident_start(c) || c == '-' || c == '+' ||
               std::isdigit(static_cast<unsigned char>(c))) {
      size_t j = i + 1;
      while (j < s.size() && (ident_char(s[j]) || s[j] == '-' || s[j] == '+'))
        ++j;
      out.push_back({s.substr(i, j - i), col});
      i = j;
    } else {
      fail(std::string("unexpected character '") + c + "'", line, col);
    }
  }
  return out;
}

Tag parse_tag(const Token& t, int line) {
  Tag tag;
  const std::string body = t.text.substr(1);
  char* end = nullptr;
  const double v = std::strtod(body.c_str(), &end);
  if (end && *end == '\0' && end != body.c_str()) {
    tag.kind = Tag::Kind::Fixed;
    tag.value = v;
  } else {
    if (!ident_start(body[0])) fail("malformed @-tag '" + t.text + "'", line, t.col);
    tag.kind = Tag::Kind::Label;
    tag.label = body;
  }
  return tag;
}

void expect_ident(const Token& t, int line) {
  if (t.text.empty() || !ident_start(t.text[0]))
    fail("expected a name, got '" + t.text + "'", line, t.col);
}

// Raw statements prior to classification.
struct RawModel {
  std::vector<std::string> latent;
  std::vector<std::pair<std::string, VarKind>> kinds;  // binary/censored decls
  std::vector<int> kind_lines;
  std::vector<Edge> edges;
  std::vector<Slope> slopes;
  std::vector<Cov> covs;
  std::vector<Intercept> intercepts;
  // Names that become manifest unless latent, in file order; fixes the
  // manifest ordering (and with it the printed parameter ordering).
  // Names appearing only in binary/censored declarations rank after all
  // structurally mentioned ones, so kind blocks may sit anywhere in the file
  // without perturbing the measurement ordering.
  std::vector<std::string> mentions;
  std::vector<std::string> kind_mentions;
  // Path endpoints in file order, for inferring undeclared latent variables.
  std::vector<std::string> path_names;
};

void parse_line(const std::string& stmt, int line, RawModel& raw) {
  const auto tok = lex(stmt, line);
  if (tok.empty()) return;
  const std::string& head = tok[0].text;

  auto tail_tag = [&](size_t from) {
    Tag tag;
    if (from < tok.size() && tok[from].text[0] == '@') {
      tag = parse_tag(tok[from], line);
      ++from;
    }
    if (from != tok.size()) fail("trailing tokens after statement", line, tok[from].col);
    return tag;
  };

  if (head == "latent" || head == "binary") {
    if (tok.size() < 2) fail("expected variable names after '" + head + "'", line, tok[0].col);
    for (size_t i = 1; i < tok.size(); ++i) {
      expect_ident(tok[i], line);
      if (head == "latent") raw.latent.push_back(tok[i].text);
      else {
        raw.kinds.emplace_back(tok[i].text, VarKind::Binary);
        raw.kind_lines.push_back(line);
        raw.kind_mentions.push_back(tok[i].text);
      }
    }
    return;
  }
  if (head == "censored") {
    if (tok.size() < 3) fail("expected 'censored <left|right|both> <name>...'", line, tok[0].col);
    VarKind k;
    const std::string& side = tok[1].text;
    if (side == "left") k = VarKind::CensoredLeft;
    else if (side == "right") k = VarKind::CensoredRight;
    else if (side == "both") k = VarKind::CensoredBoth;
    else fail("censoring side must be left, right or both", line, tok[1].col);
    for (size_t i = 2; i < tok.size(); ++i) {
      expect_ident(tok[i], line);
      raw.kinds.emplace_back(tok[i].text, k);
      raw.kind_lines.push_back(line);
      raw.kind_mentions.push_back(tok[i].text);
    }
    return;
  }
  if (head == "slope") {
    // slope <outcome> <- <latent> * <covariate> [@tag]
    if (tok.size() < 6 || tok[2].text != "<-" || tok[4].text != "*")
      fail("expected 'slope <outcome> <- <latent> * <covariate>'", line, tok[0].col);
    expect_ident(tok[1], line);
    expect_ident(tok[3], line);
    expect_ident(tok[5], line);
    Slope s{tok[1].text, tok[3].text, tok[5].text, tail_tag(6), line};
    raw.slopes.push_back(s);
    raw.mentions.push_back(s.outcome);
    raw.path_names.push_back(s.outcome);
    raw.path_names.push_back(s.latent);
    return;
  }
  if (head == "intercept") {
    if (tok.size() < 2) fail("expected a variable name after 'intercept'", line, tok[0].col);
    expect_ident(tok[1], line);
    raw.intercepts.push_back({tok[1].text, tail_tag(2), line});
    raw.mentions.push_back(tok[1].text);
    return;
  }
  if (head == "cov") {
    if (tok.size() < 6 || tok[1].text != "(" || tok[3].text != "," || tok[5].text != ")")
      fail("expected 'cov(<a>,<b>)'", line, tok[0].col);
    expect_ident(tok[2], line);
    expect_ident(tok[4], line);
    raw.covs.push_back({tok[2].text, tok[4].text, tail_tag(6), line});
    raw.mentions.push_back(tok[2].text);
    raw.mentions.push_back(tok[4].text);
    return;
  }
  if (tok.size() >= 3 && tok[1].text == "<-") {
    expect_ident(tok[0], line);
    expect_ident(tok[2], line);
    raw.edges.push_back({tok[0].text, tok[2].text, tail_tag(3), line});
    raw.mentions.push_back(tok[0].text);
    raw.path_names.push_back(tok[0].text);
    raw.path_names.push_back(tok[2].text);
    return;
  }
  fail("unrecognized statement '" + head + "'", line, tok[0].col);
}

}  // namespace

bool ModelSpec::is_manifest(const std::string& n) const { return manifest_index(n) >= 0; }
bool ModelSpec::is_latent(const std::string& n) const { return latent_index(n) >= 0; }
bool ModelSpec::is_covariate(const std::string& n) const { return covariate_index(n) >= 0; }

int ModelSpec::manifest_index(const std::string& n) const {
  auto it = std::find(manifest.begin(), manifest.end(), n);
  return it == manifest.end() ? -1 : static_cast<int>(it - manifest.begin());
}
int ModelSpec::latent_index(const std::string& n) const {
  auto it = std::find(latent.begin(), latent.end(), n);
  return it == latent.end() ? -1 : static_cast<int>(it - latent.begin());
}
int ModelSpec::covariate_index(const std::string& n) const {
  auto it = std::find(covariates.begin(), covariates.end(), n);
  return it == covariates.end() ? -1 : static_cast<int>(it - covariates.begin());
}
VarKind ModelSpec::kind_of(const std::string& n) const {
  auto it = kind.find(n);
  return it == kind.end() ? VarKind::Continuous : it->second;
}
bool ModelSpec::censorable(const std::string& n) const {
  return kind_of(n) != VarKind::Continuous;
}

ModelSpec parse_model(const std::string& text) {
  RawModel raw;
  {
    std::istringstream in(text);
    std::string full;
    int line = 0;
    while (std::getline(in, full)) {
      ++line;
      const size_t hash = full.find('#');
      parse_line(hash == std::string::npos ? full : full.substr(0, hash), line, raw);
    }
  }

  ModelSpec spec;
  auto add_unique = [](std::vector<std::string>& v, const std::string& n) {
    if (std::find(v.begin(), v.end(), n) == v.end()) v.push_back(n);
  };

  for (const auto& n : raw.latent) {
    if (spec.is_latent(n)) throw ParseError("variable '" + n + "' declared latent twice", 0);
    spec.latent.push_back(n);
  }

  // A variable that both receives and emits paths is latent even without a
  // declaration, unless a kind statement pins it as observed.
  {
    std::set<std::string> targets, sources, kinded;
    for (const auto& e : raw.edges) {
      targets.insert(e.to);
      sources.insert(e.from);
    }
    for (const auto& s : raw.slopes) {
      targets.insert(s.outcome);
      sources.insert(s.latent);
    }
    for (const auto& [n, k] : raw.kinds) {
      (void)k;
      kinded.insert(n);
    }
    for (const auto& n : raw.path_names)
      if (targets.count(n) && sources.count(n) && !kinded.count(n) &&
          !spec.is_latent(n))
        spec.latent.push_back(n);
  }

  // Edge targets, slope outcomes and cov()/intercept subjects become manifest
  // (unless latent) in file order; that order fixes the printed parameter
  // ordering. Variables known only from kind declarations follow.
  for (const auto& n : raw.mentions)
    if (!spec.is_latent(n)) add_unique(spec.manifest, n);
  for (const auto& n : raw.kind_mentions)
    if (!spec.is_latent(n)) add_unique(spec.manifest, n);
  for (size_t i = 0; i < raw.kinds.size(); ++i) {
    const auto& [n, k] = raw.kinds[i];
    const int line = raw.kind_lines[i];
    if (spec.is_latent(n))
      throw ParseError("latent variable '" + n + "' cannot be binary or censored", line);
    if (spec.kind.count(n))
      throw ParseError("conflicting kind declarations for '" + n + "'", line);
    spec.kind[n] = k;
  }
  for (const auto& n : spec.manifest)
    if (!spec.kind.count(n)) spec.kind[n] = VarKind::Continuous;

  // Classify edges; remaining names are covariates.
  std::set<std::pair<std::string, std::string>> seen_edges;
  for (const auto& e : raw.edges) {
    if (e.to == e.from)
      throw ParseError("self-loop '" + e.to + " <- " + e.from + "'", e.line);
    if (!seen_edges.insert({e.to, e.from}).second)
      throw ParseError("duplicate edge '" + e.to + " <- " + e.from + "'", e.line);
    if (spec.is_manifest(e.from))
      throw ParseError("manifest variable '" + e.from + "' cannot act as a predictor",
                       e.line);
    const bool to_latent = spec.is_latent(e.to);
    const bool from_latent = spec.is_latent(e.from);
    if (!from_latent) add_unique(spec.covariates, e.from);
    if (to_latent && from_latent) spec.lregressions.push_back(e);
    else if (to_latent) spec.lcovariates.push_back(e);
    else if (from_latent) spec.loadings.push_back(e);
    else spec.mregressions.push_back(e);
  }

  for (const auto& s : raw.slopes) {
    if (!spec.is_latent(s.latent))
      throw ParseError("slope term requires a latent variable, got '" + s.latent + "'",
                       s.line);
    if (spec.is_latent(s.moderator) || spec.is_manifest(s.moderator))
      throw ParseError("slope moderator '" + s.moderator + "' must be a covariate",
                       s.line);
    add_unique(spec.covariates, s.moderator);
    if (spec.is_latent(s.outcome)) {
      if (s.outcome == s.latent)
        throw ParseError("self-loop in slope term for '" + s.outcome + "'", s.line);
      spec.tau_slopes.push_back(s);
    } else {
      spec.delta_slopes.push_back(s);
    }
  }

  std::set<std::pair<std::string, std::string>> seen_covs;
  for (const auto& c : raw.covs) {
    const bool a_l = spec.is_latent(c.a), b_l = spec.is_latent(c.b);
    if (a_l != b_l)
      throw ParseError("cov(" + c.a + "," + c.b +
                           ") mixes a latent and a manifest variable", c.line);
    auto key = std::minmax(c.a, c.b);
    if (!seen_covs.insert(key).second)
      throw ParseError("duplicate cov(" + c.a + "," + c.b + ")", c.line);
    if (c.a == c.b && spec.is_manifest(c.a) &&
        spec.kind_of(c.a) == VarKind::Binary) {
      const bool fixed_one =
          c.tag.kind == Tag::Kind::Fixed && c.tag.value == 1.0;
      if (!fixed_one)
        throw ParseError("binary variable '" + c.a +
                             "' must keep residual variance fixed at 1", c.line);
    }
    spec.covs.push_back(c);
  }

  std::set<std::string> seen_ic;
  for (const auto& ic : raw.intercepts) {
    if (!seen_ic.insert(ic.name).second)
      throw ParseError("duplicate intercept statement for '" + ic.name + "'", ic.line);
    spec.intercepts.push_back(ic);
  }

  // Reject cyclic latent dependencies: at parameter values where the cycle
  // product reaches 1, (I - B) is singular, so only recursive structures
  // are accepted.
  {
    const int l = static_cast<int>(spec.latent.size());
    std::vector<std::vector<int>> adj(l);
    for (const auto& e : spec.lregressions)
      adj[spec.latent_index(e.to)].push_back(spec.latent_index(e.from));
    for (const auto& s : spec.tau_slopes)
      adj[spec.latent_index(s.outcome)].push_back(spec.latent_index(s.latent));
    std::vector<int> state(l, 0);
    std::function<bool(int)> has_cycle = [&](int v) {
      state[v] = 1;
      for (int w : adj[v]) {
        if (state[w] == 1) return true;
        if (state[w] == 0 && has_cycle(w)) return true;
      }
      state[v] = 2;
      return false;
    };
    for (int v = 0; v < l; ++v)
      if (state[v] == 0 && has_cycle(v))
        throw ParseError("cyclic dependency among latent variables", 0);
  }

  if (spec.manifest.empty())
    throw ParseError("model declares no manifest variables", 0);
  return spec;
}

}  // namespace dsl
}  // namespace latcens

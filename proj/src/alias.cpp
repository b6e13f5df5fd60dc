#include "claritykit/alias.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "claritykit/disjoint_set.hpp"

namespace clarity::alias {

using nlohmann::json;

namespace {

std::u32string to_u32(std::string_view utf8) {
  const auto us = icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  std::u32string out;
  out.reserve(static_cast<std::size_t>(us.length()));
  for (int32_t i = 0; i < us.length();) {
    const UChar32 c = us.char32At(i);
    out.push_back(static_cast<char32_t>(c));
    i += U16_LENGTH(c);
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

// NFKC case fold, then every non-alphanumeric code point becomes a space.
std::string fold_and_clean(std::string_view name) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfkc = icu::Normalizer2::getNFKCCasefoldInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFKC_Casefold unavailable");
  const auto src = icu::UnicodeString::fromUTF8(icu::StringPiece(name.data(), static_cast<int32_t>(name.size())));
  icu::UnicodeString folded = nfkc->normalize(src, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU normalization failed");
  icu::UnicodeString cleaned;
  for (int32_t i = 0; i < folded.length();) {
    const UChar32 c = folded.char32At(i);
    cleaned.append(u_isalnum(c) ? c : static_cast<UChar32>(' '));
    i += U16_LENGTH(c);
  }
  std::string out;
  cleaned.toUTF8String(out);
  return join(split_tokens(out));
}

}  // namespace

PreprocessRules PreprocessRules::from_json(const json& j) {
  PreprocessRules r;
  if (auto it = j.find("modifiers"); it != j.end()) {
    r.modifiers.clear();
    for (const auto& m : *it) r.modifiers.insert(fold_and_clean(m.get<std::string>()));
  }
  if (auto it = j.find("expansions"); it != j.end())
    for (const auto& [k, v] : it->items()) r.expansions[fold_and_clean(k)] = fold_and_clean(v.get<std::string>());
  return r;
}

json PreprocessRules::to_json() const {
  return json{{"modifiers", modifiers}, {"expansions", expansions}};
}

std::string preprocess(std::string_view name, const PreprocessRules& rules) {
  auto tokens = split_tokens(fold_and_clean(name));
  // Expansion output may itself contain modifiers or abbreviations; iterate
  // (bounded) until stable so that preprocess is idempotent.
  for (int pass = 0; pass < 8; ++pass) {
    std::vector<std::string> next;
    for (const auto& t : tokens) {
      if (auto it = rules.expansions.find(t); it != rules.expansions.end()) {
        for (auto& e : split_tokens(it->second)) next.push_back(std::move(e));
      } else if (!rules.modifiers.count(t)) {
        next.push_back(t);
      }
    }
    if (next == tokens) break;
    tokens = std::move(next);
  }
  return join(tokens);
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double levenshtein_ratio(std::string_view a, std::string_view b) {
  const auto ua = to_u32(a), ub = to_u32(b);
  const std::size_t m = std::max(ua.size(), ub.size());
  if (m == 0) return 1.0;
  return static_cast<double>(m - levenshtein(ua, ub)) / static_cast<double>(m);
}

double token_sort_ratio(std::string_view a, std::string_view b) {
  auto ta = split_tokens(a), tb = split_tokens(b);
  std::sort(ta.begin(), ta.end());
  std::sort(tb.begin(), tb.end());
  return levenshtein_ratio(join(ta), join(tb));
}

double AliasEntry::authority() const noexcept {
  double s = 0;
  for (const auto& src : sources) s += src.weight;
  return s;
}

std::string_view to_string(MatchStatus s) noexcept {
  switch (s) {
    case MatchStatus::kAccept: return "ACCEPT";
    case MatchStatus::kReview: return "REVIEW";
    case MatchStatus::kNoMatch: return "NO_MATCH";
  }
  return "?";
}

MatchStatus status_for(double score) noexcept {
  if (score >= kAcceptThreshold) return MatchStatus::kAccept;
  if (score >= kReviewThreshold) return MatchStatus::kReview;
  return MatchStatus::kNoMatch;
}

// ---- knowledge base -------------------------------------------------------

namespace {

void check_entry(const AliasEntry& e, std::size_t i) {
  const auto where = "entries[" + std::to_string(i) + "]";
  if (e.canonical_name.empty()) throw std::invalid_argument(where + ": empty canonical_name");
  if (e.aliases.empty()) throw std::invalid_argument(where + ": empty alias set");
  if (!e.aliases.count(e.canonical_name))
    throw std::invalid_argument(where + ": canonical_name '" + e.canonical_name + "' not among aliases");
  for (const auto& s : e.sources)
    if (!(s.weight >= 0.0 && s.weight <= 1.0))
      throw std::invalid_argument(where + ": source weight outside [0, 1] for '" + s.name + "'");
}

}  // namespace

KnowledgeBase::KnowledgeBase(std::vector<AliasEntry> entries, PreprocessRules rules)
    : entries_(std::move(entries)), rules_(std::move(rules)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) check_entry(entries_[i], i);
  build_index();
  std::unordered_map<std::string, std::size_t> owner;
  for (std::size_t i = 0; i < index_.size(); ++i)
    for (const auto& [pre, raw] : index_[i]) {
      auto [it, fresh] = owner.emplace(pre, i);
      if (!fresh && it->second != i)
        throw std::invalid_argument("alias '" + raw + "' appears in both '" + entries_[it->second].canonical_name +
                                    "' and '" + entries_[i].canonical_name + "'");
    }
}

KnowledgeBase KnowledgeBase::raw(std::vector<AliasEntry> entries, PreprocessRules rules) {
  KnowledgeBase kb;
  kb.entries_ = std::move(entries);
  kb.rules_ = std::move(rules);
  for (std::size_t i = 0; i < kb.entries_.size(); ++i) check_entry(kb.entries_[i], i);
  kb.build_index();
  return kb;
}

void KnowledgeBase::build_index() {
  index_.clear();
  for (const auto& e : entries_) {
    auto& idx = index_.emplace_back();
    for (const auto& a : e.aliases) {
      auto pre = preprocess(a, rules_);
      if (!pre.empty()) idx.emplace_back(std::move(pre), a);
    }
  }
}

KnowledgeBase KnowledgeBase::from_json(const json& j, bool strict) {
  PreprocessRules rules;
  if (auto it = j.find("rules"); it != j.end()) rules = PreprocessRules::from_json(*it);
  std::vector<AliasEntry> entries;
  for (const auto& ej : j.at("entries")) {
    AliasEntry e;
    e.canonical_name = ej.at("canonical_name").get<std::string>();
    for (const auto& a : ej.at("aliases")) e.aliases.insert(a.get<std::string>());
    e.aliases.insert(e.canonical_name);
    if (auto it = ej.find("sources"); it != ej.end())
      for (const auto& s : *it) {
        if (s.is_string()) e.sources.push_back({s.get<std::string>(), 0.5});
        else e.sources.push_back({s.at("name").get<std::string>(), s.value("weight", 0.5)});
      }
    e.last_updated = parse_iso_date(ej.value("last_updated", std::string("1990-01-01")));
    entries.push_back(std::move(e));
  }
  return strict ? KnowledgeBase(std::move(entries), std::move(rules)) : raw(std::move(entries), std::move(rules));
}

json KnowledgeBase::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["rules"] = rules_.to_json();
  j["entries"] = json::array();
  for (const auto& e : entries_) {
    json sources = json::array();
    for (const auto& s : e.sources) sources.push_back({{"name", s.name}, {"weight", s.weight}});
    j["entries"].push_back({{"canonical_name", e.canonical_name},
                            {"aliases", e.aliases},
                            {"sources", sources},
                            {"last_updated", format_iso_date(e.last_updated)}});
  }
  return j;
}

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open knowledge base " + path.string());
  return from_json(json::parse(in), strict);
}

void KnowledgeBase::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

MatchResult KnowledgeBase::match(std::string_view name) const {
  MatchResult best;
  const auto q = preprocess(name, rules_);
  if (q.empty()) return best;
  std::size_t best_entry = entries_.size();
  for (std::size_t i = 0; i < entries_.size(); ++i)
    for (const auto& [pre, raw] : index_[i]) {
      const double s = std::max(levenshtein_ratio(q, pre), token_sort_ratio(q, pre));
      bool better = best_entry == entries_.size() || s > best.score;
      if (!better && s == best.score) {
        const auto& cur = entries_[best_entry];
        const double wa = entries_[i].authority(), wb = cur.authority();
        better = wa > wb || (wa == wb && entries_[i].canonical_name < cur.canonical_name);
      }
      if (better) {
        best.score = s;
        best.matched_alias = raw;
        best_entry = i;
      }
    }
  if (best_entry == entries_.size()) return best;
  best.status = status_for(best.score);
  if (best.status == MatchStatus::kNoMatch) {
    best.matched_alias.reset();
    return best;
  }
  best.entry = entries_[best_entry];
  return best;
}

// ---- merging --------------------------------------------------------------

namespace {

std::set<std::string> preprocessed_aliases(const AliasEntry& e, const PreprocessRules& rules) {
  std::set<std::string> out;
  for (const auto& a : e.aliases)
    if (auto p = preprocess(a, rules); !p.empty()) out.insert(std::move(p));
  return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

bool high_authority(const AliasEntry& e, double cutoff) {
  return std::any_of(e.sources.begin(), e.sources.end(), [&](const SourceRef& s) { return s.weight >= cutoff; });
}

AliasEntry combine(const std::vector<const AliasEntry*>& group) {
  // Canonical: highest summed authority over the entries claiming it.
  std::map<std::string, double> claim;
  for (const auto* e : group) claim[e->canonical_name] += e->authority();
  std::string canonical;
  double best = -1;
  for (const auto& [name, w] : claim)
    if (w > best) {
      best = w;
      canonical = name;
    }
  AliasEntry out;
  out.canonical_name = canonical;
  std::map<std::string, double> sources;
  for (const auto* e : group) {
    out.aliases.insert(e->aliases.begin(), e->aliases.end());
    for (const auto& s : e->sources) sources[s.name] = std::max(sources[s.name], s.weight);
    if (std::chrono::sys_days{e->last_updated} > std::chrono::sys_days{out.last_updated})
      out.last_updated = e->last_updated;
  }
  for (const auto& [n, w] : sources) out.sources.push_back({n, w});
  return out;
}

}  // namespace

double alias_jaccard(const AliasEntry& a, const AliasEntry& b, const PreprocessRules& rules) {
  return jaccard(preprocessed_aliases(a, rules), preprocessed_aliases(b, rules));
}

MergeResult merge_entities(const KnowledgeBase& kb, double jaccard_threshold, double high_auth) {
  if (!(jaccard_threshold > 0.0 && jaccard_threshold <= 1.0))
    throw std::invalid_argument("jaccard threshold must lie in (0, 1]");
  const auto& rules = kb.rules();
  std::vector<AliasEntry> entries = kb.entries();
  std::vector<MergeConflict> conflicts;
  std::set<std::pair<std::string, std::string>> reported;

  for (bool merged = true; merged;) {
    merged = false;
    const std::size_t n = entries.size();
    std::vector<std::set<std::string>> pre(n);
    std::vector<std::string> canon(n);
    for (std::size_t i = 0; i < n; ++i) {
      pre[i] = preprocessed_aliases(entries[i], rules);
      canon[i] = preprocess(entries[i].canonical_name, rules);
    }
    struct Candidate {
      double j;
      std::size_t a, b;
    };
    std::vector<Candidate> cands;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) {
        const double j = jaccard(pre[a], pre[b]);
        if (j >= jaccard_threshold || canon[a] == canon[b]) cands.push_back({j, a, b});
      }
    std::stable_sort(cands.begin(), cands.end(), [](const auto& x, const auto& y) { return x.j > y.j; });

    // Each set tracks the canonical names claimed by its high-authority members.
    DisjointSet dsu(n);
    std::vector<std::set<std::string>> claims(n);
    for (std::size_t i = 0; i < n; ++i)
      if (high_authority(entries[i], high_auth)) claims[i].insert(canon[i]);
    for (const auto& c : cands) {
      const auto ra = dsu.find(c.a), rb = dsu.find(c.b);
      if (ra == rb) continue;
      if (!claims[ra].empty() && !claims[rb].empty() && claims[ra] != claims[rb]) {
        auto key = std::minmax(entries[c.a].canonical_name, entries[c.b].canonical_name);
        if (reported.emplace(key.first, key.second).second)
          conflicts.push_back({"canonical_claim",
                               {key.first, key.second},
                               "jaccard " + std::to_string(c.j) + "; both canonical names backed by sources >= " +
                                   std::to_string(high_auth)});
        continue;
      }
      dsu.unite(ra, rb);
      auto root = dsu.find(ra);
      claims[root].insert(claims[ra].begin(), claims[ra].end());
      claims[root].insert(claims[rb].begin(), claims[rb].end());
      merged = true;
    }
    if (!merged) break;
    std::vector<AliasEntry> next;
    for (const auto& group : dsu.groups()) {
      std::vector<const AliasEntry*> members;
      for (auto i : group) members.push_back(&entries[i]);
      next.push_back(members.size() == 1 ? *members.front() : combine(members));
    }
    entries = std::move(next);
  }

  // Residual overlaps (below the Jaccard threshold or blocked as conflicts).
  std::map<std::string, std::vector<std::size_t>> owners;
  for (std::size_t i = 0; i < entries.size(); ++i)
    for (const auto& p : preprocessed_aliases(entries[i], rules)) owners[p].push_back(i);
  for (const auto& [alias, who] : owners) {
    if (who.size() < 2) continue;
    auto keep = who.front();
    for (auto i : who) {
      const auto& a = entries[i];
      const auto& b = entries[keep];
      const bool a_canon = preprocess(a.canonical_name, rules) == alias;
      const bool b_canon = preprocess(b.canonical_name, rules) == alias;
      if (a_canon != b_canon ? a_canon
                             : (a.authority() != b.authority() ? a.authority() > b.authority()
                                                               : a.canonical_name < b.canonical_name))
        keep = i;
    }
    MergeConflict c{"alias_overlap", {}, "alias '" + alias + "' kept by '" + entries[keep].canonical_name + "'"};
    for (auto i : who) {
      c.canonical_names.push_back(entries[i].canonical_name);
      if (i == keep) continue;
      std::erase_if(entries[i].aliases, [&](const std::string& raw) {
        return raw != entries[i].canonical_name && preprocess(raw, rules) == alias;
      });
    }
    conflicts.push_back(std::move(c));
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.canonical_name < b.canonical_name; });
  return {KnowledgeBase(std::move(entries), rules), std::move(conflicts)};
}

// ---- label normalization --------------------------------------------------

NormalizeResult normalize_labels(std::vector<SampleRecord> samples, const KnowledgeBase& kb) {
  NormalizeResult out;
  std::map<std::string, std::set<std::string>> absorbed;  // canonical -> raw labels
  std::unordered_map<std::string, MatchResult> cache;
  for (auto& s : samples) {
    for (auto& l : s.org_labels) {
      auto it = cache.find(l.label);
      if (it == cache.end()) it = cache.emplace(l.label, kb.match(l.label)).first;
      const auto& m = it->second;
      switch (m.status) {
        case MatchStatus::kAccept:
          ++out.report.accepted;
          absorbed[m.entry->canonical_name].insert(l.label);
          l.label = m.entry->canonical_name;
          break;
        case MatchStatus::kReview:
          ++out.report.review;
          out.review_queue.push_back({s.sha256, l.label, m.entry->canonical_name, m.score, *m.matched_alias});
          break;
        case MatchStatus::kNoMatch:
          ++out.report.no_match;
          break;
      }
    }
  }
  for (const auto& [canon, raws] : absorbed) out.report.unified_label_groups += raws.size() >= 2;
  out.samples = std::move(samples);
  return out;
}

json to_json(const MatchResult& m) {
  json j{{"status", to_string(m.status)}, {"score", m.score}};
  if (m.matched_alias) j["matched_alias"] = *m.matched_alias;
  if (m.entry) {
    json sources = json::array();
    for (const auto& s : m.entry->sources) sources.push_back({{"name", s.name}, {"weight", s.weight}});
    j["canonical_name"] = m.entry->canonical_name;
    j["aliases"] = m.entry->aliases;
    j["sources"] = sources;
  }
  return j;
}

json to_json(const ReviewItem& r) {
  return {{"sha256", r.sample_sha256},
          {"label", r.label},
          {"candidate", r.candidate},
          {"score", r.score},
          {"matched_alias", r.matched_alias}};
}

json to_json(const NormalizeReport& r) {
  return {{"accepted", r.accepted},
          {"review", r.review},
          {"no_match", r.no_match},
          {"unified_label_groups", r.unified_label_groups}};
}

}  // namespace clarity::alias

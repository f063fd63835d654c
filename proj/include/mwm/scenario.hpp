#pragma once

// Scenario files: a line-oriented, section-based text format.
//
//   scenario <name>
//   param <name> <number>          # defaults, overridable per run
//   semantics standard|qif
//   [persons]     <label> [quality=<n>]
//   [initial]     quantum [weight=<n>] | ensemble n=<n>
//                 population <kind> [count=] [consciousness=] [quality=] [worlds=<a>..<b>]
//   [events]      split <sel> <label>=<n>...      death <sel> <kind> [fraction=] [instant|lingering duration= quality=]
//                 decline <sel> <kind> schedule=<n>,...   time <n>   stage <name>   mark <name>
//                 repeat <n> ... end              (any event may carry when=<n>; zero skips it)
//   [queries]     predicate / hypothesis / choice / quality declarations and query lines
//
// Selectors: all, id:<id>, last:<label>, has:<label>, alive:<kind>, worlds:<a>..<b>.
// `#` starts a comment. Numbers may be arithmetic over $parameters.

#include "mwm/expression.hpp"
#include "mwm/inference.hpp"

#include <set>
#include <sstream>

namespace mwm {

struct SchemaIssue {
  int line = 0;
  std::string message;
};

class SchemaError : public Error {
public:
  explicit SchemaError(std::vector<SchemaIssue> issues) : Error(format(issues)), issues_(std::move(issues)) {}
  const std::vector<SchemaIssue>& issues() const { return issues_; }

private:
  static std::string format(const std::vector<SchemaIssue>& issues) {
    std::string out;
    for (const auto& i : issues) {
      if (!out.empty()) out += '\n';
      out += "line " + std::to_string(i.line) + ": " + i.message;
    }
    return out;
  }
  std::vector<SchemaIssue> issues_;
};

/// Source position; not part of a scenario's identity.
struct SourceLine {
  int value = 0;
  friend bool operator==(const SourceLine&, const SourceLine&) { return true; }
};

struct ParamDecl {
  std::string name;
  Number value;
  friend bool operator==(const ParamDecl&, const ParamDecl&) = default;
};

struct KindDecl {
  std::string label;
  std::optional<Number> quality;
  SourceLine line;
  friend bool operator==(const KindDecl&, const KindDecl&) = default;
};

struct Range {
  Number first, last;
  friend bool operator==(const Range&, const Range&) = default;
};

struct PopulationDecl {
  std::string kind;
  std::optional<Number> count, consciousness, quality;
  std::optional<Range> worlds;
  SourceLine line;
  friend bool operator==(const PopulationDecl&, const PopulationDecl&) = default;
};

struct InitialDecl {
  bool ensemble = false;
  std::optional<Number> size; // quantum: weight, ensemble: number of worlds
  std::vector<PopulationDecl> populations;
  friend bool operator==(const InitialDecl&, const InitialDecl&) = default;
};

struct SelectorSpec {
  BranchSelector::Kind kind = BranchSelector::Kind::all;
  std::string label;
  std::optional<Range> worlds;
  friend bool operator==(const SelectorSpec&, const SelectorSpec&) = default;
};

struct SplitSpec {
  SelectorSpec where;
  std::vector<std::pair<std::string, Number>> outcomes;
  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};
struct DeathSpec {
  SelectorSpec where;
  std::string kind;
  std::optional<Number> fraction;
  bool lingering = false;
  std::optional<Number> duration, quality;
  friend bool operator==(const DeathSpec&, const DeathSpec&) = default;
};
struct DeclineSpec {
  SelectorSpec where;
  std::string kind;
  std::vector<Number> schedule;
  friend bool operator==(const DeclineSpec&, const DeclineSpec&) = default;
};
struct TimeSpec {
  Number dt;
  friend bool operator==(const TimeSpec&, const TimeSpec&) = default;
};
struct StageSpec {
  Stage stage = Stage::post_reveal;
  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};
struct MarkSpec {
  std::string name;
  friend bool operator==(const MarkSpec&, const MarkSpec&) = default;
};

struct EventSpec;
struct RepeatSpec {
  Number count;
  std::vector<EventSpec> body;
};
bool operator==(const RepeatSpec&, const RepeatSpec&);

struct EventSpec {
  std::variant<SplitSpec, DeathSpec, DeclineSpec, TimeSpec, StageSpec, MarkSpec, RepeatSpec> body;
  std::optional<Number> when;
  SourceLine line;
  friend bool operator==(const EventSpec&, const EventSpec&) = default;
};

inline bool operator==(const RepeatSpec& a, const RepeatSpec& b) { return a.count == b.count && a.body == b.body; }

struct PredicateDecl {
  std::string name;
  std::vector<std::string> terms; // as written, e.g. "kind=trier", "!last=fire"
  SourceLine line;
  friend bool operator==(const PredicateDecl&, const PredicateDecl&) = default;
};

/// A hypothesis or a choice: this scenario re-instantiated with parameter
/// overrides.
struct VariantDecl {
  std::string label;
  std::optional<Number> prior;
  std::vector<std::pair<std::string, Number>> overrides;
  SourceLine line;
  friend bool operator==(const VariantDecl&, const VariantDecl&) = default;
};

struct QualityDecl {
  std::string outcome, kind;
  Number quality;
  SourceLine line;
  friend bool operator==(const QualityDecl&, const QualityDecl&) = default;
};

struct QueryDecl {
  std::string verb, id;
  std::vector<std::pair<std::string, std::string>> args;
  SourceLine line;

  std::optional<std::string> arg(std::string_view key) const {
    for (const auto& [k, v] : args)
      if (k == key) return v;
    return std::nullopt;
  }
  friend bool operator==(const QueryDecl&, const QueryDecl&) = default;
};

struct Scenario {
  std::string name;
  SemanticsMode semantics = SemanticsMode::standard;
  std::vector<ParamDecl> params;
  std::vector<KindDecl> persons;
  InitialDecl initial;
  std::vector<EventSpec> events;
  std::vector<PredicateDecl> predicates;
  std::vector<VariantDecl> hypotheses;
  std::vector<VariantDecl> choices;
  std::vector<QualityDecl> quality;
  std::vector<QueryDecl> queries;
  friend bool operator==(const Scenario&, const Scenario&) = default;

  const PredicateDecl* find_predicate(std::string_view name) const {
    for (const auto& p : predicates)
      if (p.name == name) return &p;
    return nullptr;
  }
};

/// Keys each query verb accepts, and which of them are required.
struct QueryShape {
  std::vector<std::string> required, optional;
};

inline const std::map<std::string, QueryShape>& query_shapes() {
  static const std::map<std::string, QueryShape> shapes = {
      {"measure", {{"pred"}, {"at"}}},
      {"probability", {{"pred"}, {"given", "at"}}},
      {"weight_fraction", {{"pred"}, {"at"}}},
      {"integral", {{"pred", "from", "to"}, {}}},
      {"moments", {{"pred", "within", "horizons"}, {}}},
      {"trajectory", {{}, {"kind"}}},
      {"reflection", {{"kind"}, {"at"}}},
      {"bayes", {{"observe"}, {}}},
      {"accuracy", {{"truth"}, {"observer"}}},
      {"caring", {{}, {"source"}}},
      {"prob_utility", {{}, {"source"}}},
      {"causal", {{"decider", "hidden"}, {"dead_quality", "source"}}},
      {"lifespan", {{"lifespan", "afterlife"}, {"duration", "half_life", "horizon", "horizons"}}},
      {"oracle", {{"pred"}, {"given"}}},
  };
  return shapes;
}

namespace detail {

inline std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t p = s.find(sep, start);
    out.emplace_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) return out;
    start = p + 1;
  }
}

inline std::optional<Range> parse_range(std::string_view s) {
  const std::size_t p = s.find("..");
  if (p == std::string_view::npos || p == 0 || p + 2 >= s.size()) return std::nullopt;
  return Range{Number(std::string(s.substr(0, p))), Number(std::string(s.substr(p + 2)))};
}

inline std::optional<Stage> parse_stage(std::string_view s) {
  if (s == "pre_split") return Stage::pre_split;
  if (s == "post_split_pre_reveal") return Stage::post_split_pre_reveal;
  if (s == "post_reveal") return Stage::post_reveal;
  return std::nullopt;
}

inline std::optional<std::pair<std::string, std::string>> key_value(std::string_view tok) {
  const std::size_t p = tok.find('=');
  if (p == std::string_view::npos || p == 0) return std::nullopt;
  return std::pair{std::string(tok.substr(0, p)), std::string(tok.substr(p + 1))};
}

class ScenarioParser {
public:
  Scenario parse(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string raw;
    int lineno = 0;
    stack_.push_back(&sc_.events);
    while (std::getline(in, raw)) {
      ++lineno;
      line_ = lineno;
      if (auto h = raw.find('#'); h != std::string::npos) raw.erase(h);
      std::istringstream ls(raw);
      std::vector<std::string> toks;
      for (std::string t; ls >> t;) toks.push_back(t);
      if (toks.empty()) continue;
      try {
        dispatch(toks);
      } catch (const Error& e) {
        issue(e.what());
      }
    }
    if (stack_.size() > 1) {
      line_ = lineno;
      issue("'repeat' without matching 'end'");
    }
    check();
    if (!issues_.empty()) throw SchemaError(issues_);
    return std::move(sc_);
  }

private:
  void issue(std::string msg, int line = -1) { issues_.push_back({line < 0 ? line_ : line, std::move(msg)}); }

  void dispatch(const std::vector<std::string>& t) {
    if (t[0].front() == '[') {
      static const std::set<std::string> sections = {"[persons]", "[initial]", "[events]", "[queries]"};
      if (!sections.count(t[0]) || t.size() != 1) return issue("unknown section '" + t[0] + "'");
      section_ = t[0];
      return;
    }
    if (section_.empty()) return header(t);
    if (section_ == "[persons]") return person(t);
    if (section_ == "[initial]") return initial(t);
    if (section_ == "[events]") return event(t);
    return query(t);
  }

  void header(const std::vector<std::string>& t) {
    if (t[0] == "scenario" && t.size() == 2) {
      sc_.name = t[1];
    } else if (t[0] == "param" && t.size() == 3) {
      for (const auto& p : sc_.params)
        if (p.name == t[1]) return issue("duplicate parameter '" + t[1] + "'");
      sc_.params.push_back({t[1], Number(t[2])});
    } else if (t[0] == "semantics" && t.size() == 2) {
      if (t[1] == "standard") sc_.semantics = SemanticsMode::standard;
      else if (t[1] == "qif") sc_.semantics = SemanticsMode::qif_renormalize;
      else issue("unknown semantics '" + t[1] + "'");
    } else {
      issue("unknown header line '" + t[0] + "'");
    }
  }

  void person(const std::vector<std::string>& t) {
    KindDecl k{t[0], std::nullopt, {line_}};
    for (std::size_t i = 1; i < t.size(); ++i) {
      auto kv = key_value(t[i]);
      if (kv && kv->first == "quality") k.quality = Number(kv->second);
      else issue("unknown key '" + t[i] + "' for person kind");
    }
    sc_.persons.push_back(std::move(k));
  }

  void initial(const std::vector<std::string>& t) {
    if (t[0] == "quantum" || t[0] == "ensemble") {
      if (seen_initial_) issue("initial state declared twice");
      seen_initial_ = true;
      sc_.initial.ensemble = t[0] == "ensemble";
      const std::string key = sc_.initial.ensemble ? "n" : "weight";
      for (std::size_t i = 1; i < t.size(); ++i) {
        auto kv = key_value(t[i]);
        if (kv && kv->first == key) sc_.initial.size = Number(kv->second);
        else issue("unknown key '" + t[i] + "' for " + t[0]);
      }
      if (sc_.initial.ensemble && !sc_.initial.size) issue("ensemble needs n=<worlds>");
      return;
    }
    if (t[0] != "population" || t.size() < 2) return issue("expected 'quantum', 'ensemble' or 'population <kind>'");
    PopulationDecl p{t[1], {}, {}, {}, {}, {line_}};
    for (std::size_t i = 2; i < t.size(); ++i) {
      auto kv = key_value(t[i]);
      if (!kv) issue("expected key=value, got '" + t[i] + "'");
      else if (kv->first == "count") p.count = Number(kv->second);
      else if (kv->first == "consciousness") p.consciousness = Number(kv->second);
      else if (kv->first == "quality") p.quality = Number(kv->second);
      else if (kv->first == "worlds") {
        p.worlds = parse_range(kv->second);
        if (!p.worlds) issue("worlds expects <a>..<b>");
      } else issue("unknown key '" + kv->first + "' for population");
    }
    sc_.initial.populations.push_back(std::move(p));
  }

  SelectorSpec selector(const std::string& s) {
    using K = BranchSelector::Kind;
    if (s == "all") return {};
    const std::size_t p = s.find(':');
    if (p == std::string::npos || p + 1 >= s.size()) throw Error("bad branch selector '" + s + "'");
    const std::string head = s.substr(0, p), arg = s.substr(p + 1);
    if (head == "id") return {K::id, arg, {}};
    if (head == "last") return {K::last, arg, {}};
    if (head == "has") return {K::has, arg, {}};
    if (head == "alive") return {K::alive, arg, {}};
    if (head == "worlds") {
      auto r = parse_range(arg);
      if (!r) throw Error("worlds selector expects <a>..<b>");
      return {K::worlds, {}, r};
    }
    throw Error("bad branch selector '" + s + "'");
  }

  void event(const std::vector<std::string>& t) {
    if (t[0] == "end") {
      if (t.size() != 1) issue("'end' takes no arguments");
      if (stack_.size() == 1) return issue("'end' without 'repeat'");
      stack_.pop_back();
      return;
    }
    EventSpec ev;
    ev.line = {line_};
    std::vector<std::string> rest;
    for (std::size_t i = 1; i < t.size(); ++i) {
      auto kv = key_value(t[i]);
      if (kv && kv->first == "when") ev.when = Number(kv->second);
      else rest.push_back(t[i]);
    }
    const auto need = [&](std::size_t n, const char* usage) {
      if (rest.size() < n) throw Error(std::string("usage: ") + usage);
    };
    if (t[0] == "split") {
      need(2, "split <selector> <label>=<fraction>...");
      SplitSpec s{selector(rest[0]), {}};
      for (std::size_t i = 1; i < rest.size(); ++i) {
        auto kv = key_value(rest[i]);
        if (!kv) throw Error("split outcome must be <label>=<fraction>, got '" + rest[i] + "'");
        s.outcomes.emplace_back(kv->first, Number(kv->second));
      }
      ev.body = std::move(s);
    } else if (t[0] == "death") {
      need(2, "death <selector> <kind> [fraction=] [instant|lingering duration= quality=]");
      DeathSpec d{selector(rest[0]), rest[1], {}, false, {}, {}};
      for (std::size_t i = 2; i < rest.size(); ++i) {
        auto kv = key_value(rest[i]);
        if (rest[i] == "instant") d.lingering = false;
        else if (rest[i] == "lingering") d.lingering = true;
        else if (kv && kv->first == "fraction") d.fraction = Number(kv->second);
        else if (kv && kv->first == "duration") d.duration = Number(kv->second);
        else if (kv && kv->first == "quality") d.quality = Number(kv->second);
        else throw Error("unknown death argument '" + rest[i] + "'");
      }
      if (d.lingering && !d.duration) throw Error("lingering death needs duration=");
      if (!d.lingering && (d.duration || d.quality)) throw Error("duration/quality apply to lingering deaths only");
      ev.body = std::move(d);
    } else if (t[0] == "decline") {
      need(3, "decline <selector> <kind> schedule=<d>,<d>,...");
      DeclineSpec d{selector(rest[0]), rest[1], {}};
      auto kv = key_value(rest[2]);
      if (!kv || kv->first != "schedule" || rest.size() != 3) throw Error("decline expects schedule=<d>,<d>,...");
      for (auto& x : split_on(kv->second, ',')) d.schedule.emplace_back(std::move(x));
      ev.body = std::move(d);
    } else if (t[0] == "time") {
      if (rest.size() != 1) throw Error("usage: time <dt>");
      ev.body = TimeSpec{Number(rest[0])};
    } else if (t[0] == "stage") {
      if (rest.size() != 1) throw Error("usage: stage <name>");
      auto st = parse_stage(rest[0]);
      if (!st) throw Error("unknown stage '" + rest[0] + "'");
      ev.body = StageSpec{*st};
    } else if (t[0] == "mark") {
      if (rest.size() != 1) throw Error("usage: mark <name>");
      if (!marks_.insert(rest[0]).second) throw Error("duplicate mark '" + rest[0] + "'");
      ev.body = MarkSpec{rest[0]};
    } else if (t[0] == "repeat") {
      if (rest.size() != 1) throw Error("usage: repeat <n>");
      ev.body = RepeatSpec{Number(rest[0]), {}};
      stack_.back()->push_back(std::move(ev));
      stack_.push_back(&std::get<RepeatSpec>(stack_.back()->back().body).body);
      return;
    } else {
      throw Error("unknown event '" + t[0] + "'");
    }
    stack_.back()->push_back(std::move(ev));
  }

  void query(const std::vector<std::string>& t) {
    if (t.size() < 2) throw Error("'" + t[0] + "' needs a name");
    if (t[0] == "predicate") {
      if (sc_.find_predicate(t[1])) throw Error("duplicate predicate '" + t[1] + "'");
      sc_.predicates.push_back({t[1], {t.begin() + 2, t.end()}, {line_}});
      return;
    }
    if (t[0] == "hypothesis" || t[0] == "choice") {
      VariantDecl v{t[1], {}, {}, {line_}};
      for (std::size_t i = 2; i < t.size(); ++i) {
        auto kv = key_value(t[i]);
        if (!kv) throw Error("expected key=value, got '" + t[i] + "'");
        if (kv->first == "prior" && t[0] == "hypothesis") v.prior = Number(kv->second);
        else v.overrides.emplace_back(kv->first, Number(kv->second));
      }
      if (t[0] == "hypothesis" && !v.prior) throw Error("hypothesis needs prior=");
      auto& list = t[0] == "hypothesis" ? sc_.hypotheses : sc_.choices;
      for (const auto& o : list)
        if (o.label == v.label) throw Error("duplicate " + t[0] + " '" + v.label + "'");
      list.push_back(std::move(v));
      return;
    }
    if (t[0] == "quality") {
      if (t.size() != 4) throw Error("usage: quality <outcome|*> <kind|*> <q>");
      sc_.quality.push_back({t[1], t[2], Number(t[3]), {line_}});
      return;
    }
    auto shape = query_shapes().find(t[0]);
    if (shape == query_shapes().end()) throw Error("unknown query '" + t[0] + "'");
    for (const auto& q : sc_.queries)
      if (q.id == t[1]) throw Error("duplicate query id '" + t[1] + "'");
    QueryDecl q{t[0], t[1], {}, {line_}};
    for (std::size_t i = 2; i < t.size(); ++i) {
      auto kv = key_value(t[i]);
      if (!kv) throw Error("expected key=value, got '" + t[i] + "'");
      const auto& s = shape->second;
      if (std::find(s.required.begin(), s.required.end(), kv->first) == s.required.end() &&
          std::find(s.optional.begin(), s.optional.end(), kv->first) == s.optional.end())
        throw Error("unknown key '" + kv->first + "' for query '" + t[0] + "'");
      q.args.push_back(std::move(*kv));
    }
    for (const auto& r : shape->second.required)
      if (!q.arg(r)) throw Error("query '" + t[0] + "' needs " + r + "=");
    sc_.queries.push_back(std::move(q));
  }

  // ---- semantic checks, run once everything is read ----

  bool kind_ok(const std::string& k) const {
    return std::any_of(sc_.persons.begin(), sc_.persons.end(), [&](const KindDecl& d) { return d.label == k; });
  }

  void check_number(const Number& n, int line, const ParamMap& params) {
    try {
      (void)n.eval(params);
    } catch (const Error& e) {
      issue(e.what(), line);
    }
  }

  void collect_labels(const std::vector<EventSpec>& evs) {
    for (const auto& e : evs) {
      if (const auto* s = std::get_if<SplitSpec>(&e.body))
        for (const auto& [l, f] : s->outcomes) labels_.insert(l);
      if (const auto* r = std::get_if<RepeatSpec>(&e.body)) collect_labels(r->body);
    }
  }

  void check_selector(const SelectorSpec& s, int line, const ParamMap& params) {
    using K = BranchSelector::Kind;
    if (s.kind == K::alive && !kind_ok(s.label)) issue("selector references undeclared kind '" + s.label + "'", line);
    if ((s.kind == K::last || s.kind == K::has) && !labels_.count(s.label))
      issue("selector references unknown outcome label '" + s.label + "'", line);
    if (s.worlds) {
      check_number(s.worlds->first, line, params);
      check_number(s.worlds->last, line, params);
    }
  }

  void check_events(const std::vector<EventSpec>& evs, const ParamMap& params) {
    for (const auto& e : evs) {
      const int line = e.line.value;
      if (e.when) check_number(*e.when, line, params);
      if (const auto* s = std::get_if<SplitSpec>(&e.body)) {
        check_selector(s->where, line, params);
        if (s->outcomes.empty()) issue("split needs outcomes", line);
        std::set<std::string> seen;
        double sum = 0.0;
        bool numeric = true;
        std::string names;
        for (const auto& [l, f] : s->outcomes) {
          if (!seen.insert(l).second) issue("duplicate outcome label '" + l + "'", line);
          names += (names.empty() ? "" : ",") + l;
          try {
            const double v = f.eval(params);
            if (v < 0.0) issue("split '" + l + "' has a negative fraction", line);
            sum += v;
          } catch (const Error& err) {
            numeric = false;
            issue(err.what(), line);
          }
        }
        if (numeric && std::abs(sum - 1.0) > kFractionTolerance) {
          std::ostringstream os;
          os << "split '" << names << "' fractions sum to " << sum << ", not 1";
          issue(os.str(), line);
        }
      } else if (const auto* d = std::get_if<DeathSpec>(&e.body)) {
        check_selector(d->where, line, params);
        if (!kind_ok(d->kind)) issue("death references undeclared kind '" + d->kind + "'", line);
        if (d->fraction) {
          check_number(*d->fraction, line, params);
          try {
            const double f = d->fraction->eval(params);
            if (f < 0.0 || f > 1.0) issue("fraction killed must lie in [0,1]", line);
          } catch (const Error&) {
          }
        }
        if (d->duration) check_number(*d->duration, line, params);
        if (d->quality) check_number(*d->quality, line, params);
      } else if (const auto* dc = std::get_if<DeclineSpec>(&e.body)) {
        check_selector(dc->where, line, params);
        if (!kind_ok(dc->kind)) issue("decline references undeclared kind '" + dc->kind + "'", line);
        for (const auto& n : dc->schedule) check_number(n, line, params);
      } else if (const auto* t = std::get_if<TimeSpec>(&e.body)) {
        check_number(t->dt, line, params);
      } else if (const auto* r = std::get_if<RepeatSpec>(&e.body)) {
        try {
          (void)eval_count(r->count, params);
        } catch (const Error& err) {
          issue(err.what(), line);
        }
        check_events(r->body, params);
      }
    }
  }

  void check_predicate_ref(const QueryDecl& q, const char* key) {
    if (auto v = q.arg(key); v && !sc_.find_predicate(*v))
      issue("query '" + q.id + "' references undeclared predicate '" + *v + "'", q.line.value);
  }

  void check() {
    if (sc_.name.empty()) issue("missing 'scenario <name>' line", 1);
    ParamMap params;
    for (const auto& p : sc_.params) {
      try {
        params[p.name] = p.value.eval(params);
      } catch (const Error& e) {
        issue(std::string("parameter '") + p.name + "': " + e.what(), 1);
        params[p.name] = 0.0;
      }
    }
    std::set<std::string> kinds;
    for (const auto& k : sc_.persons) {
      if (!kinds.insert(k.label).second) issue("duplicate person kind '" + k.label + "'", k.line.value);
      if (k.quality) check_number(*k.quality, k.line.value, params);
    }
    if (sc_.persons.empty()) issue("no person kinds declared", 1);
    if (sc_.initial.size) check_number(*sc_.initial.size, 1, params);
    for (const auto& p : sc_.initial.populations) {
      if (!kind_ok(p.kind)) issue("population references undeclared kind '" + p.kind + "'", p.line.value);
      for (const auto* n : {&p.count, &p.consciousness, &p.quality})
        if (*n) check_number(**n, p.line.value, params);
      if (p.worlds) {
        check_number(p.worlds->first, p.line.value, params);
        check_number(p.worlds->last, p.line.value, params);
      }
    }
    labels_.insert("root");
    int worlds = 1;
    if (sc_.initial.ensemble && sc_.initial.size) {
      try {
        worlds = static_cast<int>(eval_count(*sc_.initial.size, params));
      } catch (const Error&) {
      }
    }
    for (int i = 1; i <= worlds; ++i) labels_.insert("world" + std::to_string(i));
    collect_labels(sc_.events);
    check_events(sc_.events, params);

    for (const auto& pd : sc_.predicates) {
      for (const auto& term : pd.terms) {
        std::string_view t = term;
        if (!t.empty() && t.front() == '!') t.remove_prefix(1);
        auto kv = key_value(t);
        if (!kv) {
          issue("predicate term must be key=value, got '" + term + "'", pd.line.value);
          continue;
        }
        const auto& [k, v] = *kv;
        if (k == "kind") {
          if (!kind_ok(v)) issue("predicate references undeclared kind '" + v + "'", pd.line.value);
        } else if (k == "status") {
          if (v != "alive" && v != "dying" && v != "dead" && v != "living")
            issue("unknown status '" + v + "'", pd.line.value);
        } else if (k == "label" || k == "last") {
          if (!labels_.count(v)) issue("predicate references unknown outcome label '" + v + "'", pd.line.value);
        } else if (k == "worlds") {
          auto r = parse_range(v);
          if (!r) issue("worlds expects <a>..<b>", pd.line.value);
          else {
            check_number(r->first, pd.line.value, params);
            check_number(r->last, pd.line.value, params);
          }
        } else if (k != "branch") {
          issue("unknown predicate field '" + k + "'", pd.line.value);
        }
      }
    }
    std::set<std::string> pnames;
    for (const auto& p : sc_.params) pnames.insert(p.name);
    for (const auto* list : {&sc_.hypotheses, &sc_.choices}) {
      for (const auto& v : *list) {
        if (v.prior) check_number(*v.prior, v.line.value, params);
        for (const auto& [k, n] : v.overrides) {
          if (!pnames.count(k)) issue("'" + v.label + "' overrides undeclared parameter '" + k + "'", v.line.value);
          check_number(n, v.line.value, params);
        }
      }
    }
    for (const auto& q : sc_.quality) {
      if (q.kind != "*" && !kind_ok(q.kind)) issue("quality references undeclared kind '" + q.kind + "'", q.line.value);
      if (q.outcome != "*" && !labels_.count(q.outcome))
        issue("quality references unknown outcome label '" + q.outcome + "'", q.line.value);
      check_number(q.quality, q.line.value, params);
    }
    for (const auto& q : sc_.queries) {
      const int line = q.line.value;
      for (const char* key : {"pred", "given", "observe", "observer"}) check_predicate_ref(q, key);
      if (auto at = q.arg("at"); at && *at != "end" && !marks_.count(*at))
        issue("query '" + q.id + "' references unknown mark '" + *at + "'", line);
      for (const char* key : {"kind", "decider"})
        if (auto k = q.arg(key); k && !kind_ok(*k))
          issue("query '" + q.id + "' references undeclared kind '" + *k + "'", line);
      if (auto truth = q.arg("truth");
          truth && std::none_of(sc_.hypotheses.begin(), sc_.hypotheses.end(),
                                [&](const VariantDecl& h) { return h.label == *truth; }))
        issue("query '" + q.id + "' references unknown hypothesis '" + *truth + "'", line);
      if ((q.verb == "bayes" || q.verb == "accuracy") && sc_.hypotheses.empty())
        issue("query '" + q.id + "' needs hypothesis declarations", line);
      if ((q.verb == "caring" || q.verb == "causal" || q.verb == "prob_utility") && sc_.choices.empty())
        issue("query '" + q.id + "' needs choice declarations", line);
      if (auto src = q.arg("source"); src && *src != "table" && *src != "population")
        issue("source must be 'table' or 'population'", line);
      for (const char* key : {"from", "to", "within", "lifespan", "half_life", "dead_quality"})
        if (auto v = q.arg(key)) check_number(Number(*v), line, params);
      for (const char* key : {"horizons"})
        if (auto v = q.arg(key))
          for (const auto& x : split_on(*v, ','))
            if (x != "inf") check_number(Number(x), line, params);
      for (const char* key : {"horizon", "duration"})
        if (auto v = q.arg(key); v && *v != "inf") check_number(Number(*v), line, params);
      if (auto a = q.arg("afterlife"); a && *a != "none" && *a != "constant" && *a != "exponential")
        issue("afterlife must be none, constant or exponential", line);
      if (auto h = q.arg("hidden")) {
        for (const auto& item : split_on(*h, ',')) {
          const std::size_t p = item.find(':');
          if (p == std::string::npos) {
            issue("hidden expects <label>:<probability>,...", line);
            continue;
          }
          check_number(Number(item.substr(p + 1)), line, params);
        }
      }
    }
  }

  Scenario sc_;
  std::vector<SchemaIssue> issues_;
  std::vector<std::vector<EventSpec>*> stack_;
  std::set<std::string> marks_, labels_;
  std::string section_;
  bool seen_initial_ = false;
  int line_ = 0;
};

inline std::string selector_text(const SelectorSpec& s) {
  using K = BranchSelector::Kind;
  switch (s.kind) {
  case K::all: return "all";
  case K::id: return "id:" + s.label;
  case K::last: return "last:" + s.label;
  case K::has: return "has:" + s.label;
  case K::alive: return "alive:" + s.label;
  case K::worlds: return "worlds:" + s.worlds->first.text + ".." + s.worlds->last.text;
  }
  return "all";
}

inline void write_events(std::ostream& os, const std::vector<EventSpec>& evs, int depth) {
  const std::string indent(2 * depth, ' ');
  for (const auto& e : evs) {
    os << indent;
    std::visit(
        [&](const auto& b) {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, SplitSpec>) {
            os << "split " << selector_text(b.where);
            for (const auto& [l, f] : b.outcomes) os << ' ' << l << '=' << f.text;
          } else if constexpr (std::is_same_v<T, DeathSpec>) {
            os << "death " << selector_text(b.where) << ' ' << b.kind;
            if (b.fraction) os << " fraction=" << b.fraction->text;
            os << (b.lingering ? " lingering" : " instant");
            if (b.duration) os << " duration=" << b.duration->text;
            if (b.quality) os << " quality=" << b.quality->text;
          } else if constexpr (std::is_same_v<T, DeclineSpec>) {
            os << "decline " << selector_text(b.where) << ' ' << b.kind << " schedule=";
            for (std::size_t i = 0; i < b.schedule.size(); ++i) os << (i ? "," : "") << b.schedule[i].text;
          } else if constexpr (std::is_same_v<T, TimeSpec>) {
            os << "time " << b.dt.text;
          } else if constexpr (std::is_same_v<T, StageSpec>) {
            os << "stage " << to_string(b.stage);
          } else if constexpr (std::is_same_v<T, MarkSpec>) {
            os << "mark " << b.name;
          } else {
            os << "repeat " << b.count.text;
          }
        },
        e.body);
    if (e.when) os << " when=" << e.when->text;
    os << '\n';
    if (const auto* r = std::get_if<RepeatSpec>(&e.body)) {
      write_events(os, r->body, depth + 1);
      os << indent << "end\n";
    }
  }
}

} // namespace detail

/// Parses scenario text, collecting every schema and reference problem with
/// its line number before throwing SchemaError.
inline Scenario parse_scenario(std::string_view text) { return detail::ScenarioParser().parse(text); }

/// Canonical text form; parse_scenario(to_text(s)) == s.
inline std::string to_text(const Scenario& s) {
  std::ostringstream os;
  os << "scenario " << s.name << '\n';
  for (const auto& p : s.params) os << "param " << p.name << ' ' << p.value.text << '\n';
  os << "semantics " << to_string(s.semantics) << "\n\n[persons]\n";
  for (const auto& k : s.persons) {
    os << k.label;
    if (k.quality) os << " quality=" << k.quality->text;
    os << '\n';
  }
  os << "\n[initial]\n" << (s.initial.ensemble ? "ensemble" : "quantum");
  if (s.initial.size) os << (s.initial.ensemble ? " n=" : " weight=") << s.initial.size->text;
  os << '\n';
  for (const auto& p : s.initial.populations) {
    os << "population " << p.kind;
    if (p.count) os << " count=" << p.count->text;
    if (p.consciousness) os << " consciousness=" << p.consciousness->text;
    if (p.quality) os << " quality=" << p.quality->text;
    if (p.worlds) os << " worlds=" << p.worlds->first.text << ".." << p.worlds->last.text;
    os << '\n';
  }
  os << "\n[events]\n";
  detail::write_events(os, s.events, 0);
  os << "\n[queries]\n";
  for (const auto& p : s.predicates) {
    os << "predicate " << p.name;
    for (const auto& t : p.terms) os << ' ' << t;
    os << '\n';
  }
  for (const auto& h : s.hypotheses) {
    os << "hypothesis " << h.label << " prior=" << h.prior->text;
    for (const auto& [k, v] : h.overrides) os << ' ' << k << '=' << v.text;
    os << '\n';
  }
  for (const auto& c : s.choices) {
    os << "choice " << c.label;
    for (const auto& [k, v] : c.overrides) os << ' ' << k << '=' << v.text;
    os << '\n';
  }
  for (const auto& q : s.quality) os << "quality " << q.outcome << ' ' << q.kind << ' ' << q.quality.text << '\n';
  for (const auto& q : s.queries) {
    os << q.verb << ' ' << q.id;
    for (const auto& [k, v] : q.args) os << ' ' << k << '=' << v;
    os << '\n';
  }
  return os.str();
}

/// Parameter defaults in declaration order, then overrides.
inline ParamMap resolve_params(const Scenario& s, const ParamMap& overrides = {}) {
  ParamMap params;
  for (const auto& p : s.params) {
    auto it = overrides.find(p.name);
    params[p.name] = it != overrides.end() ? it->second : p.value.eval(params);
  }
  for (const auto& [k, v] : overrides)
    if (!params.count(k)) throw SchemaError({{0, "unknown parameter '" + k + "'"}});
  return params;
}

/// Applies a hypothesis's or choice's overrides on top of base parameters.
/// Parameters declared after an overridden one are re-derived from it.
inline ParamMap variant_params(const Scenario& s, const VariantDecl& v, const ParamMap& base) {
  ParamMap overrides = base;
  ParamMap scratch;
  for (const auto& p : s.params) scratch[p.name] = base.at(p.name);
  for (const auto& [k, n] : v.overrides) overrides[k] = n.eval(scratch);
  return resolve_params(s, overrides);
}

inline OutcomePredicate build_predicate(const Scenario& s, std::string_view name, const ParamMap& params) {
  const PredicateDecl* d = s.find_predicate(name);
  if (!d) throw Error("unknown predicate '" + std::string(name) + "'");
  OutcomePredicate pred;
  using F = PredicateTerm::Field;
  for (const auto& term : d->terms) {
    std::string_view t = term;
    PredicateTerm pt;
    if (!t.empty() && t.front() == '!') {
      pt.negate = true;
      t.remove_prefix(1);
    }
    auto kv = detail::key_value(t);
    if (!kv) throw Error("bad predicate term '" + term + "'");
    pt.value = kv->second;
    if (kv->first == "kind") pt.field = F::kind;
    else if (kv->first == "status") pt.field = F::status;
    else if (kv->first == "label") pt.field = F::label;
    else if (kv->first == "last") pt.field = F::last;
    else if (kv->first == "branch") pt.field = F::branch;
    else if (kv->first == "worlds") {
      pt.field = F::worlds;
      auto r = detail::parse_range(kv->second);
      if (!r) throw Error("bad worlds range '" + kv->second + "'");
      pt.first = static_cast<int>(eval_count(r->first, params));
      pt.last = static_cast<int>(eval_count(r->last, params));
    } else throw Error("unknown predicate field '" + kv->first + "'");
    pred.terms.push_back(std::move(pt));
  }
  return pred;
}

namespace detail {

inline BranchSelector build_selector(const SelectorSpec& s, const ParamMap& params) {
  BranchSelector out{s.kind, s.label};
  if (s.worlds) {
    out.first = static_cast<int>(eval_count(s.worlds->first, params));
    out.last = static_cast<int>(eval_count(s.worlds->last, params));
  }
  return out;
}

inline void expand(const std::vector<EventSpec>& specs, const ParamMap& params, std::vector<Event>& out) {
  for (const auto& e : specs) {
    try {
      if (e.when && e.when->eval(params) == 0.0) continue;
      std::visit(
          [&](const auto& b) {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, SplitSpec>) {
              SplitEvent ev{build_selector(b.where, params), {}};
              for (const auto& [l, f] : b.outcomes) ev.outcomes.push_back({l, f.eval(params)});
              out.emplace_back(std::move(ev));
            } else if constexpr (std::is_same_v<T, DeathSpec>) {
              DeathEvent ev{build_selector(b.where, params), b.kind, b.fraction ? b.fraction->eval(params) : 1.0,
                            DeathMode::instant()};
              if (b.lingering)
                ev.mode = DeathMode::lingering(b.duration->eval(params), b.quality ? b.quality->eval(params) : 0.0);
              out.emplace_back(std::move(ev));
            } else if constexpr (std::is_same_v<T, DeclineSpec>) {
              DeclineEvent ev{build_selector(b.where, params), b.kind, {}};
              for (const auto& n : b.schedule) ev.schedule.push_back(n.eval(params));
              out.emplace_back(std::move(ev));
            } else if constexpr (std::is_same_v<T, TimeSpec>) {
              out.emplace_back(TimeStep{b.dt.eval(params)});
            } else if constexpr (std::is_same_v<T, StageSpec>) {
              out.emplace_back(StageEvent{b.stage});
            } else if constexpr (std::is_same_v<T, MarkSpec>) {
              out.emplace_back(MarkEvent{b.name});
            } else {
              const long long n = eval_count(b.count, params);
              for (long long i = 0; i < n; ++i) expand(b.body, params, out);
            }
          },
          e.body);
    } catch (const SchemaError&) {
      throw;
    } catch (const Error& err) {
      throw SchemaError({{e.line.value, err.what()}});
    }
  }
}

} // namespace detail

/// Builds the initial state and flattens the event script under the given
/// parameter values.
inline Script instantiate(const Scenario& s, const ParamMap& params) {
  Script script;
  WorldState& st = script.initial;
  for (const auto& k : s.persons) st.kinds.push_back({k.label, k.quality ? k.quality->eval(params) : 1.0});
  const auto baseline = [&](const std::string& kind) { return st.find_kind(kind)->baseline_quality; };
  if (s.initial.ensemble) {
    const long long n = eval_count(*s.initial.size, params);
    if (n < 1) throw SchemaError({{1, "ensemble needs at least one world"}});
    script.initial = classical_ensemble(static_cast<int>(n), {}, st.kinds);
  } else {
    const double w = s.initial.size ? s.initial.size->eval(params) : 1.0;
    script.initial = quantum_state({}, st.kinds, w);
  }
  for (const auto& p : s.initial.populations) {
    Population pop;
    pop.kind = p.kind;
    pop.count = p.count ? p.count->eval(params) : 1.0;
    pop.consciousness = p.consciousness ? p.consciousness->eval(params) : 1.0;
    pop.quality = p.quality ? p.quality->eval(params) : baseline(p.kind);
    int first = 1, last = static_cast<int>(script.initial.branches.size());
    if (p.worlds) {
      first = static_cast<int>(eval_count(p.worlds->first, params));
      last = static_cast<int>(eval_count(p.worlds->last, params));
    }
    for (auto& b : script.initial.branches)
      if (b.world() >= first && b.world() <= last) b.populations.push_back(pop);
  }
  detail::expand(s.events, params, script.events);
  return script;
}

} // namespace mwm

#include "hipal/logstore.hpp"

#include "hipal/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace hipal {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const std::string s = trim(text);
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::optional<std::int64_t> parse_iso8601(const std::string& s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &consumed) != 3 || consumed != 10) return std::nullopt;
  std::size_t pos = 10;
  if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
    consumed = 0;
    if (std::sscanf(s.c_str() + pos + 1, "%2d:%2d:%2d%n", &h, &mi, &sec, &consumed) != 3 || consumed != 8)
      return std::nullopt;
    pos += 9;
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    }
  }
  std::int64_t offset = 0;
  if (pos < s.size()) {
    if (s[pos] == 'Z' && pos + 1 == s.size()) {
      ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
      const int sign = s[pos] == '-' ? -1 : 1;
      int oh = 0, om = 0;
      std::string rest = s.substr(pos + 1);
      rest.erase(std::remove(rest.begin(), rest.end(), ':'), rest.end());
      if (rest.size() != 2 && rest.size() != 4) return std::nullopt;
      if (!parse_number(rest.substr(0, 2), oh)) return std::nullopt;
      if (rest.size() == 4 && !parse_number(rest.substr(2, 2), om)) return std::nullopt;
      offset = sign * (oh * 3600 + om * 60);
      pos = s.size();
    } else {
      return std::nullopt;
    }
  }
  if (pos != s.size()) return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60) return std::nullopt;
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 + h * 3600 + mi * 60 +
         sec - offset;
}

void check_event(const ActionEvent& e, int vocab_size, std::size_t line) {
  if (e.timestamp < 0) throw ValidationError("line " + std::to_string(line) + ": negative timestamp");
  if (e.action_code < 0) throw ValidationError("line " + std::to_string(line) + ": negative action_code");
  if (vocab_size > 0 && e.action_code >= vocab_size)
    throw ValidationError("line " + std::to_string(line) + ": action_code " + std::to_string(e.action_code) +
                          " >= vocab_size " + std::to_string(vocab_size));
}

void sort_events(std::vector<ActionEvent>& events) {
  std::stable_sort(events.begin(), events.end(), [](const ActionEvent& a, const ActionEvent& b) {
    if (a.participant_id != b.participant_id) return a.participant_id < b.participant_id;
    return a.timestamp < b.timestamp;
  });
}

SequenceStats summarize(const std::vector<std::size_t>& lengths) {
  SequenceStats s;
  s.count = lengths.size();
  if (lengths.empty()) return s;
  double total = 0.0;
  for (auto n : lengths) total += static_cast<double>(n);
  s.mean = total / static_cast<double>(lengths.size());
  double var = 0.0;
  for (auto n : lengths) var += (static_cast<double>(n) - s.mean) * (static_cast<double>(n) - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(lengths.size()));
  s.max = *std::max_element(lengths.begin(), lengths.end());
  return s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

Shift Shift::from_actions(std::vector<Action> events) {
  if (events.empty()) throw ContractViolation("shift must contain at least one event");
  Shift s;
  s.start_time = events.front().timestamp;
  s.end_time = events.back().timestamp;
  s.events = std::move(events);
  return s;
}

std::size_t MonthRecord::num_events() const {
  std::size_t n = 0;
  for (const auto& s : shifts) n += s.size();
  return n;
}

std::vector<const MonthRecord*> Dataset::labeled() const {
  std::vector<const MonthRecord*> out;
  for (const auto& m : months)
    if (m.label) out.push_back(&m);
  return out;
}

std::vector<const MonthRecord*> Dataset::unlabeled() const {
  std::vector<const MonthRecord*> out;
  for (const auto& m : months)
    if (!m.label) out.push_back(&m);
  return out;
}

std::vector<const MonthRecord*> Dataset::all() const {
  std::vector<const MonthRecord*> out;
  out.reserve(months.size());
  for (const auto& m : months) out.push_back(&m);
  return out;
}

std::vector<std::string> Dataset::participants() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& m : months)
    if (seen.insert(m.participant_id).second) out.push_back(m.participant_id);
  return out;
}

void Dataset::validate() const {
  std::set<std::pair<std::string, int>> keys;
  for (const auto& m : months) {
    if (!keys.insert({m.participant_id, m.month_index}).second)
      throw ValidationError("duplicate month " + m.participant_id + "/" + std::to_string(m.month_index));
    if (m.shifts.empty()) throw ValidationError("month without shifts: " + m.participant_id);
    if (m.pfi_score) {
      if (*m.pfi_score < 0.0 || *m.pfi_score > 4.0) throw ValidationError("pfi_score out of range");
      if (m.label != derive_label(*m.pfi_score)) throw ValidationError("label disagrees with pfi_score");
    }
    std::int64_t prev_start = INT64_MIN;
    for (const auto& s : m.shifts) {
      if (s.events.empty()) throw ValidationError("empty shift");
      if (s.start_time < prev_start) throw ValidationError("shifts out of order");
      prev_start = s.start_time;
      std::int64_t prev = s.events.front().timestamp;
      for (const auto& e : s.events) {
        if (e.code < 0 || e.code >= vocab_size) throw ValidationError("action_code outside vocabulary");
        if (e.timestamp < prev) throw ValidationError("shift events out of order");
        prev = e.timestamp;
      }
      if (s.start_time != s.events.front().timestamp || s.end_time != s.events.back().timestamp)
        throw ValidationError("shift bounds disagree with events");
    }
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r' && c != '\n') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::int64_t parse_timestamp(const std::string& text) {
  const std::string s = trim(text);
  std::int64_t v = 0;
  if (!s.empty() && s[0] == '-' && parse_number(s, v)) return v;  // caller validates the sign
  if (parse_number(s, v)) return v;
  if (auto iso = parse_iso8601(s)) return *iso;
  throw Error("unrecognised timestamp '" + s + "'");
}

std::vector<ActionEvent> parse_events(std::istream& in, EventFormat format, int vocab_size) {
  std::vector<ActionEvent> events;
  std::string line;
  std::size_t lineno = 0;
  if (format == EventFormat::csv) {
    int col_pid = -1, col_ts = -1, col_code = -1;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      auto fields = split_csv_line(line);
      if (col_pid < 0) {
        for (int i = 0; i < static_cast<int>(fields.size()); ++i) {
          const auto f = trim(fields[i]);
          if (f == "participant_id") col_pid = i;
          if (f == "timestamp") col_ts = i;
          if (f == "action_code") col_code = i;
        }
        if (col_pid < 0 || col_ts < 0 || col_code < 0)
          throw ParseError(lineno, "header must name participant_id,timestamp,action_code");
        continue;
      }
      const int need = std::max({col_pid, col_ts, col_code});
      if (static_cast<int>(fields.size()) <= need) throw ParseError(lineno, "too few fields");
      ActionEvent e;
      e.participant_id = trim(fields[col_pid]);
      if (e.participant_id.empty()) throw ParseError(lineno, "empty participant_id");
      try {
        e.timestamp = parse_timestamp(fields[col_ts]);
      } catch (const Error& err) {
        throw ParseError(lineno, err.what());
      }
      if (!parse_number(fields[col_code], e.action_code)) throw ParseError(lineno, "bad action_code");
      check_event(e, vocab_size, lineno);
      events.push_back(std::move(e));
    }
  } else {
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& err) {
        throw ParseError(lineno, err.what());
      }
      if (!j.is_object() || !j.contains("participant_id") || !j.contains("timestamp") || !j.contains("action_code"))
        throw ParseError(lineno, "record must carry participant_id, timestamp, action_code");
      ActionEvent e;
      const auto& pid = j["participant_id"];
      e.participant_id = pid.is_string() ? pid.get<std::string>() : pid.dump();
      const auto& ts = j["timestamp"];
      try {
        if (ts.is_number_integer())
          e.timestamp = ts.get<std::int64_t>();
        else if (ts.is_string())
          e.timestamp = parse_timestamp(ts.get<std::string>());
        else
          throw Error("timestamp must be an integer or ISO-8601 string");
      } catch (const Error& err) {
        throw ParseError(lineno, err.what());
      }
      if (!j["action_code"].is_number_integer()) throw ParseError(lineno, "action_code must be an integer");
      e.action_code = j["action_code"].get<int>();
      check_event(e, vocab_size, lineno);
      events.push_back(std::move(e));
    }
  }
  sort_events(events);
  return events;
}

std::vector<ActionEvent> read_events(const std::filesystem::path& path, int vocab_size) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  const auto fmt = path.extension() == ".jsonl" ? EventFormat::jsonl : EventFormat::csv;
  return parse_events(in, fmt, vocab_size);
}

std::vector<Shift> segment_shifts(const std::vector<Action>& events, std::int64_t gap_seconds) {
  std::vector<Shift> shifts;
  std::vector<Action> cur;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (i > 0) {
      const auto gap = events[i].timestamp - events[i - 1].timestamp;
      if (gap < 0) throw ContractViolation("segment_shifts: events not sorted by timestamp");
      if (gap >= gap_seconds) {
        shifts.push_back(Shift::from_actions(std::move(cur)));
        cur.clear();
      }
    }
    cur.push_back(events[i]);
  }
  if (!cur.empty()) shifts.push_back(Shift::from_actions(std::move(cur)));
  return shifts;
}

std::vector<Shift> segment_shifts(const std::vector<ActionEvent>& events, std::int64_t gap_seconds) {
  std::vector<Action> actions;
  actions.reserve(events.size());
  for (const auto& e : events) {
    if (!events.empty() && e.participant_id != events.front().participant_id)
      throw ContractViolation("segment_shifts: events from more than one participant");
    actions.push_back({e.timestamp, e.action_code});
  }
  return segment_shifts(actions, gap_seconds);
}

bool derive_label(double pfi_score) {
  if (!(pfi_score >= 0.0 && pfi_score <= 4.0))
    throw ValidationError("pfi_score " + std::to_string(pfi_score) + " outside [0, 4]");
  return pfi_score >= kBurnoutThreshold;
}

std::vector<SurveyWindow> parse_surveys(std::istream& in) {
  std::vector<SurveyWindow> out;
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (header) {
      header = false;
      if (trim(f[0]) == "participant_id") continue;
    }
    if (f.size() < 5) throw ParseError(lineno, "survey rows need 5 fields");
    SurveyWindow w;
    w.participant_id = trim(f[0]);
    try {
      if (!parse_number(f[1], w.month_index)) throw Error("bad month_index");
      w.month_start = parse_timestamp(f[2]);
      w.month_end = parse_timestamp(f[3]);
    } catch (const Error& err) {
      throw ParseError(lineno, err.what());
    }
    if (w.month_end <= w.month_start) throw ValidationError("line " + std::to_string(lineno) + ": empty window");
    if (!trim(f[4]).empty()) {
      double p = 0.0;
      if (!parse_number(f[4], p)) throw ParseError(lineno, "bad pfi_score");
      derive_label(p);
      w.pfi_score = p;
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<SurveyWindow> read_surveys(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_surveys(in);
}

void write_surveys(std::ostream& out, const std::vector<SurveyWindow>& surveys) {
  out << "participant_id,month_index,month_start,month_end,pfi_score\n";
  char buf[64];
  for (const auto& w : surveys) {
    out << w.participant_id << ',' << w.month_index << ',' << w.month_start << ',' << w.month_end << ',';
    if (w.pfi_score) {
      std::snprintf(buf, sizeof(buf), "%.4f", *w.pfi_score);
      out << buf;
    }
    out << '\n';
  }
}

AssembleReport assemble_dataset(const std::vector<ActionEvent>& events, const std::vector<SurveyWindow>& surveys,
                                std::int64_t gap_seconds, int vocab_size) {
  std::map<std::string, std::vector<const SurveyWindow*>> windows;
  for (const auto& w : surveys) windows[w.participant_id].push_back(&w);
  for (auto& [pid, ws] : windows) {
    std::sort(ws.begin(), ws.end(), [](auto* a, auto* b) { return a->month_start < b->month_start; });
    for (std::size_t i = 1; i < ws.size(); ++i)
      if (ws[i]->month_start < ws[i - 1]->month_end)
        throw ValidationError("overlapping survey windows for participant " + pid);
  }

  std::map<std::string, std::vector<ActionEvent>> by_pid;
  for (const auto& e : events) {
    if (vocab_size > 0 && (e.action_code < 0 || e.action_code >= vocab_size))
      throw ValidationError("action_code outside vocabulary");
    by_pid[e.participant_id].push_back(e);
  }

  AssembleReport report;
  report.dataset.vocab_size = vocab_size;
  for (auto& [pid, evs] : by_pid) {
    std::stable_sort(evs.begin(), evs.end(), [](auto& a, auto& b) { return a.timestamp < b.timestamp; });
    auto wit = windows.find(pid);
    if (wit == windows.end()) {
      report.dropped_events += evs.size();
      continue;
    }
    const auto& ws = wit->second;
    std::vector<std::vector<Action>> bucket(ws.size());
    for (const auto& e : evs) {
      auto it = std::upper_bound(ws.begin(), ws.end(), e.timestamp,
                                 [](std::int64_t t, const SurveyWindow* w) { return t < w->month_start; });
      if (it == ws.begin()) {
        ++report.dropped_events;
        continue;
      }
      const std::size_t idx = static_cast<std::size_t>(std::distance(ws.begin(), it)) - 1;
      if (e.timestamp >= ws[idx]->month_end) {
        ++report.dropped_events;
        continue;
      }
      bucket[idx].push_back({e.timestamp, e.action_code});
    }
    for (std::size_t i = 0; i < ws.size(); ++i) {
      if (bucket[i].empty()) {
        ++report.empty_windows;
        continue;
      }
      MonthRecord m;
      m.participant_id = pid;
      m.month_index = ws[i]->month_index;
      m.window_start = ws[i]->month_start;
      m.window_end = ws[i]->month_end;
      m.shifts = segment_shifts(bucket[i], gap_seconds);
      if (ws[i]->pfi_score) {
        m.pfi_score = ws[i]->pfi_score;
        m.label = derive_label(*ws[i]->pfi_score);
      }
      report.dataset.months.push_back(std::move(m));
    }
  }
  // Windows of participants that logged nothing at all.
  for (const auto& [pid, ws] : windows)
    if (!by_pid.count(pid)) report.empty_windows += ws.size();
  report.dataset.validate();
  return report;
}

DatasetStats dataset_stats(const Dataset& ds) {
  DatasetStats st;
  std::map<std::string, std::size_t> per_participant;
  std::vector<std::size_t> month_lengths, shift_lengths;
  for (const auto& m : ds.months) {
    const std::size_t n = m.num_events();
    st.events += n;
    ++st.months;
    if (m.label) ++st.labeled_months;
    st.shifts += m.shifts.size();
    per_participant[m.participant_id] += n;
    month_lengths.push_back(n);
    for (const auto& s : m.shifts) shift_lengths.push_back(s.size());
  }
  std::vector<std::size_t> participant_lengths;
  for (const auto& [pid, n] : per_participant) participant_lengths.push_back(n);
  st.participants = per_participant.size();
  st.shifts_per_month = st.months ? static_cast<double>(st.shifts) / static_cast<double>(st.months) : 0.0;
  st.by_participant = summarize(participant_lengths);
  st.by_month = summarize(month_lengths);
  st.by_shift = summarize(shift_lengths);
  return st;
}

void write_stats(std::ostream& out, const DatasetStats& st) {
  out << "events," << st.events << "\nparticipants," << st.participants << "\nmonths," << st.months
      << "\nlabeled_months," << st.labeled_months << "\nshifts," << st.shifts << "\nshifts_per_month,"
      << st.shifts_per_month << "\n";
  out << "group,sequences,mean,std,max\n";
  auto row = [&](const char* name, const SequenceStats& s) {
    out << name << ',' << s.count << ',' << s.mean << ',' << s.stddev << ',' << s.max << '\n';
  };
  row("participant", st.by_participant);
  row("participant_month", st.by_month);
  row("participant_month_shift", st.by_shift);
}

std::vector<std::string> Vocabulary::categories() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& e : entries)
    if (seen.insert(e.category).second) out.push_back(e.category);
  return out;
}

std::vector<int> Vocabulary::category_of_code() const {
  const auto cats = categories();
  std::map<std::string, int> index;
  for (int i = 0; i < static_cast<int>(cats.size()); ++i) index[cats[i]] = i;
  std::vector<int> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(index.at(e.category));
  return out;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  };
  mix(std::to_string(entries.size()));
  for (const auto& e : entries) {
    mix(std::to_string(e.code));
    mix(e.name);
    mix(e.category);
  }
  return h;
}

Vocabulary parse_vocabulary(std::istream& in) {
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (header) {
      header = false;
      if (trim(f[0]) == "action_code") continue;
    }
    if (f.size() < 3) throw ParseError(lineno, "vocabulary rows need action_code,action_name,category");
    VocabEntry e;
    if (!parse_number(f[0], e.code)) throw ParseError(lineno, "bad action_code");
    e.name = trim(f[1]);
    e.category = trim(f[2]);
    if (e.code != static_cast<int>(v.entries.size()))
      throw ParseError(lineno, "action codes must be listed densely from 0");
    v.entries.push_back(std::move(e));
  }
  return v;
}

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_vocabulary(in);
}

void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  out << "action_code,action_name,category\n";
  for (const auto& e : vocab.entries) out << e.code << ',' << csv_field(e.name) << ',' << csv_field(e.category) << '\n';
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  out << nlohmann::json{{"vocab_size", ds.vocab_size}}.dump() << '\n';
  for (const auto& m : ds.months) {
    nlohmann::json j;
    j["participant_id"] = m.participant_id;
    j["month_index"] = m.month_index;
    j["window_start"] = m.window_start;
    j["window_end"] = m.window_end;
    if (m.label) j["label"] = *m.label;
    if (m.pfi_score) j["pfi_score"] = *m.pfi_score;
    nlohmann::json shifts = nlohmann::json::array();
    for (const auto& s : m.shifts) {
      nlohmann::json evs = nlohmann::json::array();
      for (const auto& e : s.events) evs.push_back({e.timestamp, e.code});
      shifts.push_back(std::move(evs));
    }
    j["shifts"] = std::move(shifts);
    out << j.dump() << '\n';
  }
}

Dataset parse_dataset(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (header) {
        ds.vocab_size = j.at("vocab_size").get<int>();
        header = false;
        continue;
      }
      MonthRecord m;
      m.participant_id = j.at("participant_id").get<std::string>();
      m.month_index = j.at("month_index").get<int>();
      m.window_start = j.at("window_start").get<std::int64_t>();
      m.window_end = j.at("window_end").get<std::int64_t>();
      if (j.contains("label") && !j["label"].is_null()) m.label = j["label"].get<bool>();
      if (j.contains("pfi_score")) m.pfi_score = j["pfi_score"].get<double>();
      for (const auto& s : j.at("shifts")) {
        std::vector<Action> evs;
        for (const auto& e : s) evs.push_back({e.at(0).get<std::int64_t>(), e.at(1).get<int>()});
        m.shifts.push_back(Shift::from_actions(std::move(evs)));
      }
      ds.months.push_back(std::move(m));
    } catch (const nlohmann::json::exception& err) {
      throw ParseError(lineno, err.what());
    }
  }
  if (header) throw ParseError(lineno, "missing dataset header line");
  ds.validate();
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_dataset(out, ds);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_dataset(in);
}

void write_events_csv(std::ostream& out, const std::vector<ActionEvent>& events) {
  out << "participant_id,timestamp,action_code\n";
  for (const auto& e : events) out << e.participant_id << ',' << e.timestamp << ',' << e.action_code << '\n';
}

}  // namespace hipal

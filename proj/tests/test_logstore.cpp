#include "hipal/error.hpp"
#include "hipal/logstore.hpp"
#include "hipal/synthgen.hpp"
#include "support.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace hipal;

namespace {

std::vector<ActionEvent> events_at(const std::vector<std::int64_t>& ts, const std::string& pid = "A") {
  std::vector<ActionEvent> out;
  for (auto t : ts) out.push_back({pid, t, 0});
  return out;
}

std::vector<ActionEvent> flatten(const std::vector<Shift>& shifts, const std::string& pid) {
  std::vector<ActionEvent> out;
  for (const auto& s : shifts)
    for (const auto& a : s.events) out.push_back({pid, a.timestamp, a.code});
  return out;
}

}  // namespace

TEST_CASE("parse_events: empty stream gives no events") {
  std::istringstream csv("participant_id,timestamp,action_code\n");
  CHECK(parse_events(csv, EventFormat::csv).empty());
  std::istringstream jsonl("");
  CHECK(parse_events(jsonl, EventFormat::jsonl).empty());
}

TEST_CASE("parse_events: rows are sorted per participant") {
  std::istringstream in("participant_id,timestamp,action_code\nB,7,1\nA,100,2\nA,50,3\n");
  const auto ev = parse_events(in, EventFormat::csv, 10);
  REQUIRE(ev.size() == 3);
  CHECK(ev[0] == ActionEvent{"A", 50, 3});
  CHECK(ev[1] == ActionEvent{"A", 100, 2});
  CHECK(ev[2] == ActionEvent{"B", 7, 1});
}

TEST_CASE("parse_events: stable order for simultaneous timestamps") {
  std::istringstream in("participant_id,timestamp,action_code\nA,5,9\nA,5,1\nA,5,4\n");
  const auto ev = parse_events(in, EventFormat::csv);
  CHECK(ev[0].action_code == 9);
  CHECK(ev[1].action_code == 1);
  CHECK(ev[2].action_code == 4);
}

TEST_CASE("parse_events: ISO-8601 timestamps become epoch seconds") {
  std::istringstream in(
      "{\"participant_id\":\"A\",\"timestamp\":\"2020-09-01T08:00:00Z\",\"action_code\":1}\n"
      "{\"participant_id\":\"A\",\"timestamp\":\"2020-09-01T10:00:00+02:00\",\"action_code\":2}\n"
      "{\"participant_id\":\"A\",\"timestamp\":1598947200,\"action_code\":3}\n");
  const auto ev = parse_events(in, EventFormat::jsonl, 5);
  REQUIRE(ev.size() == 3);
  // 2020-09-01T00:00:00Z = 1598918400
  CHECK(ev[0].timestamp == 1598918400 + 8 * 3600);
  CHECK(ev[1].timestamp == 1598918400 + 8 * 3600);
  CHECK(ev[2].timestamp == 1598947200);
  CHECK(parse_timestamp("1970-01-02") == 86400);
  CHECK_THROWS(parse_timestamp("yesterday"));
}

TEST_CASE("parse_events: errors") {
  SUBCASE("malformed record carries its line number") {
    std::istringstream in("participant_id,timestamp,action_code\nA,10,1\nA,abc,2\n");
    try {
      parse_events(in, EventFormat::csv);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("broken json line") {
    std::istringstream in("{\"participant_id\":\"A\",\"timestamp\":1,\"action_code\":1}\n{oops\n");
    CHECK_THROWS_AS(parse_events(in, EventFormat::jsonl), ParseError);
  }
  SUBCASE("negative timestamp") {
    std::istringstream in("participant_id,timestamp,action_code\nA,-5,1\n");
    CHECK_THROWS_AS(parse_events(in, EventFormat::csv), ValidationError);
  }
  SUBCASE("action code equal to the vocabulary size") {
    std::istringstream in("participant_id,timestamp,action_code\nA,5,1961\n");
    CHECK_THROWS_AS(parse_events(in, EventFormat::csv, 1961), ValidationError);
    std::istringstream ok("participant_id,timestamp,action_code\nA,5,1960\n");
    CHECK(parse_events(ok, EventFormat::csv, 1961).size() == 1);
  }
}

TEST_CASE("segment_shifts: gap rule") {
  CHECK(segment_shifts(std::vector<ActionEvent>{}, kDefaultGapSeconds).empty());
  const std::int64_t h5 = 5 * 3600;
  const auto shifts = segment_shifts(events_at({0, 600, 1200, 1200 + h5, 1200 + h5 + 60}), 4 * 3600);
  REQUIRE(shifts.size() == 2);
  CHECK(shifts[0].size() == 3);
  CHECK(shifts[1].size() == 2);
  CHECK(shifts[1].start_time == 1200 + h5);
  CHECK(shifts[1].end_time == 1200 + h5 + 60);
  CHECK(segment_shifts(events_at({0, 100, 200, 300}), 4 * 3600).size() == 1);
  // A gap exactly at the threshold starts a new shift.
  CHECK(segment_shifts(events_at({0, 100, 100 + 4 * 3600}), 4 * 3600).size() == 2);
}

TEST_CASE("segment_shifts: unsorted input is a contract violation") {
  CHECK_THROWS_AS(segment_shifts(events_at({10, 5}), 100), ContractViolation);
}

TEST_CASE("segment_shifts: partition and threshold monotonicity") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> gap(0, 20000);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::int64_t> ts;
    std::int64_t t = 0;
    const int n = 1 + static_cast<int>(rng() % 60);
    for (int i = 0; i < n; ++i) {
      t += gap(rng);
      ts.push_back(t);
    }
    const auto ev = events_at(ts);
    std::size_t prev_count = SIZE_MAX;
    for (std::int64_t thr : {1000, 3600, 7200, 14400, 20000}) {
      const auto shifts = segment_shifts(ev, thr);
      CHECK(flatten(shifts, "A") == ev);
      CHECK(shifts.size() <= prev_count);
      prev_count = shifts.size();
      for (const auto& s : shifts) {
        CHECK(s.start_time == s.events.front().timestamp);
        CHECK(s.end_time == s.events.back().timestamp);
        for (std::size_t i = 1; i < s.events.size(); ++i)
          CHECK(s.events[i].timestamp - s.events[i - 1].timestamp < thr);
      }
    }
  }
}

TEST_CASE("derive_label") {
  CHECK(derive_label(1.33));
  CHECK_FALSE(derive_label(0.0));
  CHECK(derive_label(4.0));
  CHECK_THROWS_AS(derive_label(-0.1), ValidationError);
  CHECK_THROWS_AS(derive_label(4.01), ValidationError);
  for (int i = 0; i <= 4000; ++i) {
    const double p = i / 1000.0;
    CHECK(derive_label(p) == (p >= 1.33));
  }
}

TEST_CASE("assemble_dataset: minimal month") {
  const auto rep = assemble_dataset({{"A", 150, 2}}, {{"A", 0, 100, 200, 2.0}}, kDefaultGapSeconds, 5);
  REQUIRE(rep.dataset.months.size() == 1);
  const auto& m = rep.dataset.months[0];
  CHECK(m.shifts.size() == 1);
  CHECK(m.label == std::optional<bool>(true));
  CHECK(m.pfi_score == std::optional<double>(2.0));
  CHECK(rep.dropped_events == 0);
}

TEST_CASE("assemble_dataset: unlabeled windows, dropped events and interleaving") {
  std::vector<ActionEvent> ev{{"A", 10, 0}, {"B", 12, 1}, {"A", 20, 1}, {"B", 30000, 2}, {"A", 500, 0}, {"B", 9999999, 0}};
  std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
    return a.participant_id != b.participant_id ? a.participant_id < b.participant_id : a.timestamp < b.timestamp;
  });
  std::vector<SurveyWindow> sv{{"A", 0, 0, 1000, std::nullopt}, {"B", 0, 0, 100000, 0.5}, {"C", 0, 0, 10, 1.0}};
  const auto rep = assemble_dataset(ev, sv, 14400, 3);
  CHECK(rep.dropped_events == 1);
  CHECK(rep.empty_windows == 1);
  REQUIRE(rep.dataset.months.size() == 2);
  const auto& a = rep.dataset.months[0];
  const auto& b = rep.dataset.months[1];
  CHECK(a.participant_id == "A");
  CHECK_FALSE(a.label.has_value());
  CHECK(a.shifts.size() == 1);
  CHECK(a.num_events() == 3);
  CHECK(b.label == std::optional<bool>(false));
  CHECK(b.shifts.size() == 2);
  rep.dataset.validate();
}

TEST_CASE("assemble_dataset: overlapping windows are rejected") {
  std::vector<SurveyWindow> sv{{"A", 0, 0, 100, 1.0}, {"A", 1, 50, 200, 1.0}};
  CHECK_THROWS_AS(assemble_dataset({{"A", 10, 0}}, sv, 100, 3), ValidationError);
}

TEST_CASE("dataset_stats: empty and synthetic") {
  const DatasetStats empty = dataset_stats(Dataset{});
  CHECK(empty.events == 0);
  CHECK(empty.months == 0);
  CHECK(empty.shifts == 0);
  CHECK(empty.labeled_months == 0);

  GeneratorConfig g;
  g.n_participants = 6;
  g.months_per_participant = 3;
  g.seed = 11;
  const GeneratedData data = generate_dataset(g);
  const DatasetStats s = dataset_stats(data.dataset);
  CHECK(s.events == data.counts.events);
  CHECK(s.shifts == data.counts.shifts);
  CHECK(s.months == data.counts.months);
  CHECK(s.labeled_months == data.counts.labeled_months);
  CHECK(s.participants == data.counts.participants);
  CHECK(s.by_shift.count == s.shifts);
  CHECK(s.by_month.count == s.months);
}

TEST_CASE("dataset JSONL round-trip is exact") {
  GeneratorConfig g;
  g.n_participants = 4;
  g.months_per_participant = 2;
  g.seed = 5;
  const Dataset ds = generate_dataset(g).dataset;
  std::stringstream buf;
  write_dataset(buf, ds);
  const Dataset back = parse_dataset(buf);
  CHECK(back == ds);
  const auto path = hipal::testing::temp_dir("logstore") / "ds.jsonl";
  save_dataset(path, ds);
  CHECK(load_dataset(path) == ds);
}

TEST_CASE("surveys and vocabulary round-trip") {
  std::vector<SurveyWindow> sv{{"A", 0, 0, 100, 1.5}, {"B", 3, 10, 20, std::nullopt}};
  std::stringstream s;
  write_surveys(s, sv);
  const auto back = parse_surveys(s);
  REQUIRE(back.size() == 2);
  CHECK(back[0].pfi_score == std::optional<double>(1.5));
  CHECK_FALSE(back[1].pfi_score.has_value());
  CHECK(back[1].month_index == 3);

  std::istringstream v("action_code,action_name,category\n0,open note,notes\n1,sign order,orders\n2,\"read, chart\",notes\n");
  const Vocabulary vocab = parse_vocabulary(v);
  CHECK(vocab.size() == 3);
  CHECK(vocab.entries[2].name == "read, chart");
  CHECK(vocab.categories() == std::vector<std::string>{"notes", "orders"});
  CHECK(vocab.category_of_code() == std::vector<int>{0, 1, 0});
  std::stringstream out;
  write_vocabulary(out, vocab);
  CHECK(parse_vocabulary(out).hash() == vocab.hash());
}

TEST_CASE("split_csv_line honours quotes") {
  CHECK(split_csv_line("a,\"b,c\",\"d\"\"e\"") == std::vector<std::string>{"a", "b,c", "d\"e"});
}

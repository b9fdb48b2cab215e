// Activity-log ingestion: parsing, shift segmentation, survey labelling and
// the three-level (event -> shift -> survey month) dataset.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hipal {

/// PFI cut-off for burnout (inclusive).
inline constexpr double kBurnoutThreshold = 1.33;
/// Default idle gap that separates two shifts: 4 hours.
inline constexpr std::int64_t kDefaultGapSeconds = 4 * 3600;

struct ActionEvent {
  std::string participant_id;
  std::int64_t timestamp = 0;  // epoch seconds, UTC
  int action_code = 0;

  bool operator==(const ActionEvent&) const = default;
};

/// One logged action inside a shift; the participant lives on the month.
struct Action {
  std::int64_t timestamp = 0;
  int code = 0;

  bool operator==(const Action&) const = default;
};

struct Shift {
  std::vector<Action> events;
  std::int64_t start_time = 0;
  std::int64_t end_time = 0;

  std::size_t size() const { return events.size(); }
  bool operator==(const Shift&) const = default;

  /// Builds a shift from non-empty, time-sorted actions.
  static Shift from_actions(std::vector<Action> events);
};

struct MonthRecord {
  std::string participant_id;
  int month_index = 0;
  std::int64_t window_start = 0;
  std::int64_t window_end = 0;
  std::vector<Shift> shifts;
  std::optional<bool> label;
  std::optional<double> pfi_score;

  std::size_t num_events() const;
  std::int64_t first_time() const { return shifts.front().start_time; }
  std::int64_t last_time() const { return shifts.back().end_time; }
  bool operator==(const MonthRecord&) const = default;
};

struct Dataset {
  std::vector<MonthRecord> months;
  int vocab_size = 0;

  std::vector<const MonthRecord*> labeled() const;
  std::vector<const MonthRecord*> unlabeled() const;
  std::vector<const MonthRecord*> all() const;
  /// Distinct participant ids in order of first appearance.
  std::vector<std::string> participants() const;

  /// Throws ValidationError when an invariant is broken.
  void validate() const;
  bool operator==(const Dataset&) const = default;
};

enum class EventFormat { csv, jsonl };

/// Parses an event stream. Events come back grouped by participant id
/// (lexicographic) and stably sorted by timestamp within each participant.
/// A vocab_size of 0 disables the code range check.
std::vector<ActionEvent> parse_events(std::istream& in, EventFormat format, int vocab_size = 0);
std::vector<ActionEvent> read_events(const std::filesystem::path& path, int vocab_size = 0);

/// Epoch seconds from an integer string or an ISO-8601 date-time.
std::int64_t parse_timestamp(const std::string& text);

/// Splits one participant's time-sorted events wherever the gap to the
/// previous event is >= gap_seconds.
std::vector<Shift> segment_shifts(const std::vector<ActionEvent>& events, std::int64_t gap_seconds);
std::vector<Shift> segment_shifts(const std::vector<Action>& events, std::int64_t gap_seconds);

/// True iff the PFI score is at or above the burnout threshold.
bool derive_label(double pfi_score);

struct SurveyWindow {
  std::string participant_id;
  int month_index = 0;
  std::int64_t month_start = 0;  // inclusive
  std::int64_t month_end = 0;    // exclusive
  std::optional<double> pfi_score;
};

std::vector<SurveyWindow> parse_surveys(std::istream& in);
std::vector<SurveyWindow> read_surveys(const std::filesystem::path& path);
void write_surveys(std::ostream& out, const std::vector<SurveyWindow>& surveys);

struct AssembleReport {
  Dataset dataset;
  std::size_t dropped_events = 0;  // outside every survey window
  std::size_t empty_windows = 0;   // survey windows without any event
};

AssembleReport assemble_dataset(const std::vector<ActionEvent>& events, const std::vector<SurveyWindow>& surveys,
                                std::int64_t gap_seconds, int vocab_size);

struct SequenceStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t max = 0;
};

struct DatasetStats {
  std::size_t events = 0;
  std::size_t participants = 0;
  std::size_t months = 0;
  std::size_t labeled_months = 0;
  std::size_t shifts = 0;
  double shifts_per_month = 0.0;
  SequenceStats by_participant;
  SequenceStats by_month;
  SequenceStats by_shift;
};

DatasetStats dataset_stats(const Dataset& ds);
void write_stats(std::ostream& out, const DatasetStats& stats);

struct VocabEntry {
  int code = 0;
  std::string name;
  std::string category;
};

struct Vocabulary {
  std::vector<VocabEntry> entries;  // indexed by code

  int size() const { return static_cast<int>(entries.size()); }
  /// Distinct categories in order of first appearance.
  std::vector<std::string> categories() const;
  /// Category index of every code, aligned with categories().
  std::vector<int> category_of_code() const;
  /// FNV-1a hash of the vocabulary rows.
  std::uint64_t hash() const;
};

Vocabulary parse_vocabulary(std::istream& in);
Vocabulary read_vocabulary(const std::filesystem::path& path);
void write_vocabulary(std::ostream& out, const Vocabulary& vocab);

/// Dataset JSONL: a header line {"vocab_size": N} followed by one month per line.
void write_dataset(std::ostream& out, const Dataset& ds);
Dataset parse_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

void write_events_csv(std::ostream& out, const std::vector<ActionEvent>& events);

/// Splits a CSV line, honouring double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace hipal

#pragma once

// Text formats: demand-bit fixtures and transmission listings.
//
// Fixture:
//   # comment
//   n_files 5
//   n_users 5
//   file_size_bits 4
//   a_1 1 1 1 2,4        <label> <file> <bit> <intended user> <cover set | ->
//
// Listing, one line per slot, then the total:
//   1 {1,2,3,5} 0^b_1^0^0 zeros=3
//   total_slots 7
//
// All indices are 1-based. In a padded slot the signal lists one term per
// addressed user in ascending order with "0" for padded users; otherwise it
// lists the payload in stored order.

#include <cstddef>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcc/model.hpp"

namespace dcc {

/// Malformed fixture or configuration text.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Fixture {
  std::size_t n_files = 0;
  std::size_t n_users = 0;
  std::size_t file_size_bits = 0;
  std::vector<BitRecord> bits;
  std::vector<std::string> labels;
};

namespace detail {

inline std::size_t parse_index(const std::string& token, std::size_t line_no) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size() || token.empty() || token[0] == '-' || v == 0)
    throw FormatError("line " + std::to_string(line_no) + ": expected a positive integer, got '" + token + "'");
  return static_cast<std::size_t>(v);
}

inline UserSet parse_user_list(const std::string& token, std::size_t line_no) {
  UserSet s;
  if (token == "-") return s;
  std::stringstream ss(token);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::size_t u = parse_index(item, line_no);
    if (u > kMaxUsers) throw FormatError("line " + std::to_string(line_no) + ": user index too large");
    s.insert(u - 1);
  }
  return s;
}

}  // namespace detail

inline Fixture parse_fixture(std::istream& in) {
  Fixture fx;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;

    if (tok.size() == 2 && (tok[0] == "n_files" || tok[0] == "n_users" || tok[0] == "file_size_bits")) {
      const std::size_t v = detail::parse_index(tok[1], line_no);
      (tok[0] == "n_files" ? fx.n_files : tok[0] == "n_users" ? fx.n_users : fx.file_size_bits) = v;
      continue;
    }
    if (tok.size() != 5) throw FormatError("line " + std::to_string(line_no) + ": expected 5 fields");
    if (fx.n_files == 0 || fx.n_users == 0 || fx.file_size_bits == 0)
      throw FormatError("line " + std::to_string(line_no) + ": header must precede records");
    BitRecord b;
    b.file = detail::parse_index(tok[1], line_no) - 1;
    b.bit_index = detail::parse_index(tok[2], line_no) - 1;
    b.intended_user = detail::parse_index(tok[3], line_no) - 1;
    b.cover_set = detail::parse_user_list(tok[4], line_no);
    if (b.file >= fx.n_files || b.bit_index >= fx.file_size_bits || b.intended_user >= fx.n_users ||
        !b.cover_set.fits_within(fx.n_users))
      throw FormatError("line " + std::to_string(line_no) + ": index out of range");
    if (b.cover_set.contains(b.intended_user))
      throw FormatError("line " + std::to_string(line_no) + ": intended user inside its cover set");
    fx.bits.push_back(b);
    fx.labels.push_back(tok[0]);
  }
  if (fx.n_files == 0 || fx.n_users == 0 || fx.file_size_bits == 0)
    throw FormatError("fixture header incomplete");
  return fx;
}

inline Fixture load_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open fixture '" + path + "'");
  return parse_fixture(in);
}

inline std::string format_fixture(const Fixture& fx) {
  std::ostringstream out;
  out << "n_files " << fx.n_files << "\nn_users " << fx.n_users << "\nfile_size_bits " << fx.file_size_bits << "\n";
  for (std::size_t i = 0; i < fx.bits.size(); ++i) {
    const auto& b = fx.bits[i];
    std::string cover = b.cover_set.empty() ? "-" : format_user_set(b.cover_set);
    if (!b.cover_set.empty()) cover = cover.substr(1, cover.size() - 2);
    out << fx.labels[i] << ' ' << b.file + 1 << ' ' << b.bit_index + 1 << ' ' << b.intended_user + 1 << ' '
        << cover << "\n";
  }
  return out.str();
}

inline std::string format_transmission(const Transmission& tx, const std::vector<BitRecord>& bits,
                                       const std::vector<std::string>& labels) {
  std::string signal;
  auto append = [&](const std::string& term) {
    if (!signal.empty()) signal += '^';
    signal += term;
  };
  if (tx.padded_zero_count > 0) {
    tx.group.for_each([&](std::size_t user) {
      for (std::size_t idx : tx.payload)
        if (bits[idx].intended_user == user) return append(labels[idx]);
      append("0");
    });
  } else {
    for (std::size_t idx : tx.payload) append(labels[idx]);
  }
  return format_user_set(tx.group) + " " + signal + " zeros=" + std::to_string(tx.padded_zero_count);
}

inline std::string format_log(const TransmissionLog& log, const std::vector<BitRecord>& bits,
                              const std::vector<std::string>& labels) {
  std::string out;
  for (std::size_t t = 0; t < log.transmissions.size(); ++t)
    out += std::to_string(t + 1) + " " + format_transmission(log.transmissions[t], bits, labels) + "\n";
  out += "total_slots " + std::to_string(log.slots()) + "\n";
  return out;
}

/// Listing with labels derived from file and bit indices.
inline std::string format_log(const TransmissionLog& log, const std::vector<BitRecord>& bits, std::size_t n_files) {
  std::vector<std::string> labels;
  labels.reserve(bits.size());
  for (const auto& b : bits) labels.push_back(default_bit_label(b, n_files));
  return format_log(log, bits, labels);
}

}  // namespace dcc

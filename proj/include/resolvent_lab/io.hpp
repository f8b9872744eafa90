#pragma once

// CSV and JSON emission for run artifacts.

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "resolvent_lab/verify.hpp"

namespace resolvent_lab {

/// 17 significant digits, so every double round-trips.
inline std::string format_double(double v) {
  if (std::isnan(v)) {
    return "nan";
  }
  if (std::isinf(v)) {
    return v > 0 ? "inf" : "-inf";
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using CsvCell = std::variant<double, long, std::string>;

/// Comma-separated writer with a fixed header; cells are checked against it.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header)
      : out_(path, std::ios::binary), width_(header.size()) {
    if (!out_) {
      throw std::runtime_error("cannot write " + path.string());
    }
    write_fields(header);
  }

  void row(const std::vector<CsvCell>& cells) {
    if (cells.size() != width_) {
      throw std::logic_error("CSV row width does not match its header");
    }
    std::vector<std::string> text;
    text.reserve(cells.size());
    for (const CsvCell& c : cells) {
      if (const double* d = std::get_if<double>(&c)) {
        text.push_back(format_double(*d));
      } else if (const long* i = std::get_if<long>(&c)) {
        text.push_back(std::to_string(*i));
      } else {
        text.push_back(std::get<std::string>(c));
      }
    }
    write_fields(text);
  }

 private:
  void write_fields(const std::vector<std::string>& fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (k) {
        out_ << ',';
      }
      const std::string& f = fields[k];
      if (f.find_first_of(",\"\n") != std::string::npos) {
        out_ << '"';
        for (char ch : f) {
          out_ << (ch == '"' ? "\"\"" : std::string(1, ch));
        }
        out_ << '"';
      } else {
        out_ << f;
      }
    }
    out_ << '\n';
  }

  std::ofstream out_;
  std::size_t width_;
};

/// Non-finite doubles become strings so the JSON stays valid and explicit.
inline nlohmann::json json_number(double v) {
  if (std::isfinite(v)) {
    return v;
  }
  return format_double(v);
}

inline nlohmann::json json_numbers(const std::vector<double>& v) {
  nlohmann::json out = nlohmann::json::array();
  for (double x : v) {
    out.push_back(json_number(x));
  }
  return out;
}

inline nlohmann::json report_json(const BoundReport& r) {
  nlohmann::json j;
  j["inequality_id"] = r.id;
  j["lambda"] = json_numbers(r.lambdas);
  j["c_hat"] = json_numbers(r.c_hat);
  j["ratio"] = json_numbers(r.ratios);
  j["pass"] = r.pass;
  j["ceiling"] = json_number(r.ceiling);
  j["direction"] = r.lower ? "lower" : "upper";
  j["informational"] = r.informational;
  j["notes"] = r.notes;
  return j;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

inline void write_probe_csv(const std::filesystem::path& path, const BoundReport& r) {
  CsvWriter csv(path, {"inequality_id", "lambda", "payoff", "x", "p", "lhs", "lhs_err", "rhs"});
  for (const ProbeRecord& p : r.probes) {
    csv.row({r.id, p.lambda, p.payoff, p.x, p.p, p.lhs, p.lhs_err, p.rhs});
  }
}

/// One row per (report, lambda); the ratio cell of row k compares lambda_k
/// with the previous lambda and is empty on the first row.
inline void write_c_hat_table(const std::filesystem::path& path,
                              const std::vector<BoundReport>& reports) {
  CsvWriter csv(path, {"inequality_id", "lambda", "c_hat", "ratio", "pass"});
  for (const BoundReport& r : reports) {
    for (std::size_t k = 0; k < r.lambdas.size(); ++k) {
      bool ok = std::isfinite(r.c_hat[k]) && (!r.lower || r.c_hat[k] > 0.0);
      CsvCell ratio = std::string();
      if (k > 0 && k - 1 < r.ratios.size()) {
        ratio = r.ratios[k - 1];
        ok = ok && r.ratios[k - 1] <= r.ceiling;
      }
      csv.row({r.id, r.lambdas[k], r.c_hat[k], ratio, std::string(ok ? "true" : "false")});
    }
  }
}

inline void write_skeleton_tail_csv(const std::filesystem::path& path, const SkeletonTailSweep& s) {
  CsvWriter csv(path, {"lambda", "rho", "bin_lo", "bin_hi", "hits", "density", "density_err",
                       "identity_mean", "identity_diff", "identity_err", "reference"});
  for (std::size_t k = 0; k < s.probes.size(); ++k) {
    const SkeletonTailReport& r = s.probes[k];
    for (std::size_t b = 0; b < r.bin_lo.size(); ++b) {
      csv.row({r.lambda, r.rho, r.bin_lo[b], r.bin_hi[b], static_cast<long>(r.hits[b]),
               r.density[b], r.density_err[b], r.identity_mean[b], r.identity_diff[b],
               r.identity_err[b], std::string(k == 0 ? "true" : "false")});
    }
  }
}

}  // namespace resolvent_lab

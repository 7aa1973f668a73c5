#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <array>
#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dates.hpp"
#include "error.hpp"

namespace granular {

enum class ClaimType : std::uint8_t { BodilyInjury = 0, MaterialDamage = 1 };

inline constexpr std::array<ClaimType, 2> kClaimTypes{ClaimType::BodilyInjury, ClaimType::MaterialDamage};

inline std::string_view to_string(ClaimType t)
{
    return t == ClaimType::BodilyInjury ? "bodily_injury" : "material_damage";
}

inline std::optional<ClaimType> parse_claim_type(std::string_view token)
{
    std::string lower(token);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "bodily_injury" || lower == "bi" || lower == "bodilyinjury") return ClaimType::BodilyInjury;
    if (lower == "material_damage" || lower == "md" || lower == "materialdamage") return ClaimType::MaterialDamage;
    return std::nullopt;
}

struct PaymentEvent {
    Day date = 0;
    double amount = 0.0;

    friend bool operator==(const PaymentEvent&, const PaymentEvent&) = default;
};

struct ClaimRecord {
    std::string id;
    ClaimType type = ClaimType::BodilyInjury;
    Day accident_date = 0;
    Day reporting_date = 0;
    std::vector<PaymentEvent> payments; // sorted by date

    Day reporting_delay() const { return reporting_date - accident_date; }

    friend bool operator==(const ClaimRecord&, const ClaimRecord&) = default;
};

/// Claims ordered by accident date; immutable once built.
struct Portfolio {
    std::vector<ClaimRecord> claims;
    Day data_cutoff = 0;

    bool empty() const { return claims.empty(); }

    friend bool operator==(const Portfolio&, const Portfolio&) = default;
};

struct IngestIssue {
    std::size_t line = 0;
    std::string message;
};

struct IngestReport {
    std::vector<IngestIssue> errors;
    std::vector<IngestIssue> warnings;
    std::size_t rows = 0;
    std::size_t negative_amounts = 0;

    bool ok() const { return errors.empty(); }

    /// Line-oriented text for the diagnostic stream.
    std::string to_text() const
    {
        std::ostringstream os;
        for (const auto& e : errors) os << "error: line " << e.line << ": " << e.message << '\n';
        for (const auto& w : warnings) os << "warning: line " << w.line << ": " << w.message << '\n';
        return os.str();
    }
};

struct IngestResult {
    Portfolio portfolio;
    IngestReport report;
};

inline constexpr std::string_view kCsvHeader = "claim_id,claim_type,accident_date,reporting_date,payment_date,amount";

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            return out;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
}

inline std::optional<double> parse_amount(std::string_view s)
{
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return v;
}

inline std::string format_amount(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

} // namespace detail

/// Reads the claim-payment CSV. Invalid rows are rejected and collected into
/// the report; valid rows are grouped by claim id.
inline IngestResult ingest_csv(std::istream& in, std::optional<Day> cutoff_override = std::nullopt)
{
    IngestResult result;
    auto& report = result.report;
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) {
        report.errors.push_back({0, "missing header"});
        return result;
    }
    ++line_no;
    std::string_view header = detail::trim(line);
    if (header.size() >= 3 && static_cast<unsigned char>(header[0]) == 0xEF) header.remove_prefix(3);
    if (header != kCsvHeader) {
        report.errors.push_back({1, "unexpected header '" + std::string(header) + "'"});
        return result;
    }

    std::unordered_map<std::string, std::size_t> index;
    std::vector<ClaimRecord> claims;
    std::set<std::string> seen_rows;
    Day max_date = 0;
    bool any_date = false;
    auto bump = [&](Day d) {
        max_date = any_date ? std::max(max_date, d) : d;
        any_date = true;
    };

    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view raw = detail::trim(line);
        if (raw.empty()) continue;
        ++report.rows;
        const auto fields = detail::split_commas(raw);
        if (fields.size() != 6) {
            report.errors.push_back({line_no, "malformed row: expected 6 fields, got " + std::to_string(fields.size())});
            continue;
        }
        if (fields[0].empty()) {
            report.errors.push_back({line_no, "malformed row: empty claim_id"});
            continue;
        }
        const auto type = parse_claim_type(fields[1]);
        if (!type) {
            report.errors.push_back({line_no, "unknown claim_type '" + std::string(fields[1]) + "'"});
            continue;
        }
        const auto acc = parse_iso_date(fields[2]);
        const auto rep = parse_iso_date(fields[3]);
        if (!acc || !rep) {
            report.errors.push_back({line_no, "malformed row: invalid accident or reporting date"});
            continue;
        }
        if (*rep < *acc) {
            report.errors.push_back({line_no, "reporting_date before accident_date"});
            continue;
        }
        std::optional<PaymentEvent> payment;
        if (!fields[4].empty() || !fields[5].empty()) {
            const auto pd = parse_iso_date(fields[4]);
            const auto amt = detail::parse_amount(fields[5]);
            if (!pd || !amt) {
                report.errors.push_back({line_no, "malformed row: invalid payment_date or amount"});
                continue;
            }
            if (*amt == 0.0) {
                report.errors.push_back({line_no, "zero payment amount"});
                continue;
            }
            if (*pd < *rep) {
                report.errors.push_back({line_no, "payment_date before reporting_date"});
                continue;
            }
            payment = PaymentEvent{*pd, *amt};
        }

        const std::string id(fields[0]);
        auto it = index.find(id);
        if (it == index.end()) {
            it = index.emplace(id, claims.size()).first;
            claims.push_back(ClaimRecord{id, *type, *acc, *rep, {}});
        } else {
            const auto& c = claims[it->second];
            if (c.accident_date != *acc || c.reporting_date != *rep) {
                report.errors.push_back({line_no, "inconsistent accident/reporting dates for claim '" + id + "'"});
                continue;
            }
            if (c.type != *type) {
                report.errors.push_back({line_no, "inconsistent claim_type for claim '" + id + "'"});
                continue;
            }
        }
        if (!seen_rows.insert(std::string(raw)).second) {
            report.warnings.push_back({line_no, "exact duplicate row kept"});
        }
        bump(*acc);
        bump(*rep);
        if (payment) {
            if (payment->amount < 0.0) {
                ++report.negative_amounts;
                report.warnings.push_back({line_no, "negative payment amount (recovery) kept"});
            }
            bump(payment->date);
            claims[it->second].payments.push_back(*payment);
        }
    }

    for (auto& c : claims) {
        std::stable_sort(c.payments.begin(), c.payments.end(),
                         [](const PaymentEvent& a, const PaymentEvent& b) { return a.date < b.date; });
    }
    std::stable_sort(claims.begin(), claims.end(),
                     [](const ClaimRecord& a, const ClaimRecord& b) { return a.accident_date < b.accident_date; });
    result.portfolio.claims = std::move(claims);
    result.portfolio.data_cutoff = cutoff_override ? *cutoff_override : max_date;
    if (cutoff_override) {
        for (const auto& c : result.portfolio.claims) {
            const Day last = c.payments.empty() ? c.reporting_date : c.payments.back().date;
            if (last > *cutoff_override) {
                report.errors.push_back({0, "claim '" + c.id + "' has dates after the data cutoff"});
            }
        }
    }
    return result;
}

/// Ingests and throws DataError on any rejected row.
inline Portfolio ingest_csv_strict(std::istream& in, std::optional<Day> cutoff_override = std::nullopt)
{
    auto res = ingest_csv(in, cutoff_override);
    if (!res.report.ok()) {
        const auto& e = res.report.errors.front();
        throw DataError("line " + std::to_string(e.line) + ": " + e.message + " (" +
                        std::to_string(res.report.errors.size()) + " error(s))");
    }
    return std::move(res.portfolio);
}

inline void write_csv(std::ostream& out, const Portfolio& p)
{
    out << kCsvHeader << '\n';
    for (const auto& c : p.claims) {
        const std::string prefix = c.id + ',' + std::string(to_string(c.type)) + ',' + format_iso_date(c.accident_date) +
                                   ',' + format_iso_date(c.reporting_date) + ',';
        if (c.payments.empty()) {
            out << prefix << ",\n";
        }
        for (const auto& pay : c.payments) {
            out << prefix << format_iso_date(pay.date) << ',' << detail::format_amount(pay.amount) << '\n';
        }
    }
}

struct RbnsIbnrSplit {
    std::vector<ClaimRecord> rbns;   // reported by a, payments truncated to <= a
    std::vector<ClaimRecord> future; // incurred by a, reported after a (realized IBNR)
};

inline RbnsIbnrSplit split_rbns_ibnr(const Portfolio& p, Day a)
{
    if (a > p.data_cutoff) {
        throw DataError("valuation date " + format_iso_date(a) + " is after the data cutoff " + format_iso_date(p.data_cutoff));
    }
    RbnsIbnrSplit out;
    for (const auto& c : p.claims) {
        if (c.accident_date > a) continue;
        if (c.reporting_date <= a) {
            ClaimRecord r = c;
            std::erase_if(r.payments, [a](const PaymentEvent& e) { return e.date > a; });
            out.rbns.push_back(std::move(r));
        } else {
            out.future.push_back(c);
        }
    }
    return out;
}

/// The portfolio as it was observable at date a: claims reported by a,
/// payments up to a, cutoff a.
inline Portfolio censor_at(const Portfolio& p, Day a)
{
    Portfolio out;
    out.data_cutoff = a;
    out.claims = split_rbns_ibnr(p, a).rbns;
    return out;
}

/// Cumulative paid amounts by origin period (rows) and development period
/// (columns). Cells past the cutoff diagonal are absent.
struct RunOffTriangle {
    int first_year = 2000;
    int granularity_years = 1;
    std::vector<std::vector<std::optional<double>>> cells;

    std::size_t origins() const { return cells.size(); }

    std::optional<double> latest(std::size_t origin) const
    {
        const auto& row = cells.at(origin);
        for (auto it = row.rbegin(); it != row.rend(); ++it) {
            if (*it) return *it;
        }
        return std::nullopt;
    }
};

inline RunOffTriangle aggregate_triangle(const Portfolio& p, int granularity_years = 1)
{
    if (p.claims.empty()) {
        throw DataError("cannot aggregate an empty portfolio");
    }
    if (granularity_years < 1) {
        throw DataError("origin granularity must be at least one year");
    }
    RunOffTriangle tri;
    tri.first_year = calendar_year(p.claims.front().accident_date);
    tri.granularity_years = granularity_years;
    auto period = [&](Day d) { return (calendar_year(d) - tri.first_year) / granularity_years; };
    const int last = period(p.data_cutoff);
    const auto n = static_cast<std::size_t>(last + 1);
    std::vector<std::vector<double>> incremental(n, std::vector<double>(n, 0.0));
    for (const auto& c : p.claims) {
        const int i = period(c.accident_date);
        for (const auto& pay : c.payments) {
            if (pay.date > p.data_cutoff) continue;
            const int j = period(pay.date) - i;
            incremental[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += pay.amount;
        }
    }
    tri.cells.assign(n, std::vector<std::optional<double>>(n));
    for (std::size_t i = 0; i < n; ++i) {
        double cum = 0.0;
        for (std::size_t j = 0; i + j < n; ++j) {
            cum += incremental[i][j];
            tri.cells[i][j] = cum;
        }
    }
    return tri;
}

} // namespace granular

#include "evoalloc/accounting.hpp"

#include "evoalloc/common.hpp"

#include <sstream>

namespace evoalloc {

double flops_to_double(Flops v) { return static_cast<double>(v); }

std::string flops_to_string(Flops v) {
    if (v == 0) return "0";
    bool neg = v < 0;
    unsigned __int128 u = neg ? static_cast<unsigned __int128>(-v) : static_cast<unsigned __int128>(v);
    std::string digits;
    while (u > 0) {
        digits.push_back(static_cast<char>('0' + static_cast<int>(u % 10)));
        u /= 10;
    }
    if (neg) digits.push_back('-');
    return {digits.rbegin(), digits.rend()};
}

Flops flops_for_call(const UsageRecord& usage, const ModelSpec& model) {
    if (model.p_active <= 0) throw input_error("P_active must be positive");
    if (usage.prompt_tokens < 0 || usage.cached_tokens < 0 || usage.completion_tokens < 0)
        throw input_error("token counts must be non-negative");
    if (usage.cached_tokens > usage.prompt_tokens)
        throw input_error("cached tokens exceed prompt tokens");
    Flops tokens = Flops{usage.prompt_tokens - usage.cached_tokens} + Flops{usage.completion_tokens};
    return Flops{2} * Flops{model.p_active} * tokens;
}

FlopsLedger cumulative_flops(const std::vector<UsageRecord>& records, const ModelSpec& model) {
    FlopsLedger ledger;
    ledger.per_call.reserve(records.size());
    ledger.cumulative.reserve(records.size());
    Flops running = 0;
    for (const auto& rec : records) {
        Flops v = flops_for_call(rec, model);
        running += v;
        ledger.per_call.push_back(v);
        ledger.cumulative.push_back(running);
    }
    return ledger;
}

std::string ledger_to_csv(const FlopsLedger& ledger) {
    std::ostringstream os;
    os << "call_index,flops,cumulative_flops\n";
    for (std::size_t i = 0; i < ledger.per_call.size(); ++i)
        os << (i + 1) << ',' << flops_to_string(ledger.per_call[i]) << ','
           << flops_to_string(ledger.cumulative[i]) << '\n';
    return os.str();
}

} // namespace evoalloc

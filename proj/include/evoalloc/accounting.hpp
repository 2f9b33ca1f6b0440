#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace evoalloc {

// Token usage for one issued LLM call (one attempt). Simulated mode fills
// the same record so downstream accounting is mode-agnostic.
struct UsageRecord {
    std::int64_t prompt_tokens = 0;
    std::int64_t cached_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::string model_id;
};

struct ModelSpec {
    std::string model_id;
    std::int64_t p_active = 0; // dense parameter count
};

// 128-bit FLOPs values: 512 calls at ~1e13 FLOPs each brushes against the
// int64 range once multiplied out, so per-call values and prefix sums are
// carried in __int128 and exposed as double / decimal string for I/O.
using Flops = __int128;

double flops_to_double(Flops v);
std::string flops_to_string(Flops v);

struct FlopsLedger {
    std::vector<Flops> per_call;
    std::vector<Flops> cumulative; // prefix sums of per_call

    Flops total() const { return cumulative.empty() ? Flops{0} : cumulative.back(); }
};

// FLOPs = 2 * P_active * (prompt - cached + completion). cached > prompt
// throws input_error; negative counts throw input_error.
Flops flops_for_call(const UsageRecord& usage, const ModelSpec& model);

FlopsLedger cumulative_flops(const std::vector<UsageRecord>& records, const ModelSpec& model);

// CSV export: call_index,per_call_flops,cumulative_flops
std::string ledger_to_csv(const FlopsLedger& ledger);

} // namespace evoalloc

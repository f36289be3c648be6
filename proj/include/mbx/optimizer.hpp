#pragma once

// Cross-module inlining and the clean-up simplifier.  Both work on
// normalized modules and preserve normal form, so their output feeds
// straight back into the checker and interpreter.

#include "mbx/ir.hpp"
#include "mbx/typecheck.hpp"

namespace mbx {

struct InlinePolicy {
  uint64_t max_body_size = 20;  // candidate bodies above this many bindings stay calls
  int max_depth = 4;            // nested inlining bound
};

// Replaces eligible direct calls with the callee body: parameters become the
// argument variables, bound names are freshened, and each return turns into
// the continuation with result variables substituted.  Recursive functions
// (direct or mutual) are never inlined.
MbiDocument inline_module(const TypeEnv& env, const MbiDocument& doc,
                          const InlinePolicy& policy = {});

// Constant folding (32-bit wraparound), copy propagation, select-of-alloc
// forwarding (with a coarse store barrier), literal-condition pruning, and
// dead binding elimination, iterated to a fixpoint.  Stores, ccalls, calls,
// and stack allocations are never removed.
TermPtr simplify(const TermPtr& t);
MbiDocument simplify_module(const MbiDocument& doc);

// inline_module followed by simplify_module.
MbiDocument optimize(const TypeEnv& env, const MbiDocument& doc,
                     const InlinePolicy& policy = {});

}  // namespace mbx

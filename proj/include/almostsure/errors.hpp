#pragma once

#include <stdexcept>
#include <string>

namespace almostsure {

// Base for every failure raised by the library. Each subclass names one
// contract violation so callers (and tests) can catch precisely.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define ALMOSTSURE_DEFINE_ERROR(Name)          \
    class Name : public Error {                \
    public:                                    \
        using Error::Error;                    \
    }

ALMOSTSURE_DEFINE_ERROR(InvalidArgument);
ALMOSTSURE_DEFINE_ERROR(NegativeEntry);
ALMOSTSURE_DEFINE_ERROR(RowSumMismatch);
ALMOSTSURE_DEFINE_ERROR(NotErgodic);
ALMOSTSURE_DEFINE_ERROR(NoConvergence);
ALMOSTSURE_DEFINE_ERROR(EnvelopeViolated);
ALMOSTSURE_DEFINE_ERROR(SingularA);
ALMOSTSURE_DEFINE_ERROR(NotNegativeDefinite);
ALMOSTSURE_DEFINE_ERROR(RankDeficient);
ALMOSTSURE_DEFINE_ERROR(HorizonExceeded);
ALMOSTSURE_DEFINE_ERROR(NuOutOfRange);
ALMOSTSURE_DEFINE_ERROR(TraceTooShort);
ALMOSTSURE_DEFINE_ERROR(GrowthViolated);
ALMOSTSURE_DEFINE_ERROR(RecursionInfeasible);
ALMOSTSURE_DEFINE_ERROR(ScheduleNotRobbinsMonro);
ALMOSTSURE_DEFINE_ERROR(ParseError);

#undef ALMOSTSURE_DEFINE_ERROR

}  // namespace almostsure

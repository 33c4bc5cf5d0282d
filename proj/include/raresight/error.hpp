#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace raresight {

/// Base class for every error raised by the library. `stage()` names the
/// pipeline stage that raised it so the CLI can report where a run failed.
class Error : public std::runtime_error
{
public:
    explicit Error(const std::string& what, std::string stage = {})
        : std::runtime_error(what), stage_(std::move(stage))
    {}

    const std::string& stage() const noexcept { return stage_; }
    void set_stage(std::string stage) { stage_ = std::move(stage); }

private:
    std::string stage_;
};

struct ParseError : Error { using Error::Error; };
struct DuplicateKey : Error { using Error::Error; };
struct InvalidArgument : Error { using Error::Error; };
struct ConstantColumn : Error { using Error::Error; };
struct DegenerateOutcome : Error { using Error::Error; };
struct FoldDegenerate : Error { using Error::Error; };
struct RankDeficient : Error { using Error::Error; };
struct SingularCovariance : Error { using Error::Error; };

/// Raised when an iterative fit runs out of iterations. Carries the last
/// iterate and the per-iteration convergence measure.
class NonConvergence : public Error
{
public:
    NonConvergence(const std::string& what, std::vector<double> last,
                   std::vector<double> trace)
        : Error(what), last_(std::move(last)), trace_(std::move(trace))
    {}

    const std::vector<double>& last_estimate() const noexcept { return last_; }
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> last_;
    std::vector<double> trace_;
};

/// Non-convergence where some standardized coefficient ran away, which for
/// a binary outcome almost always means (quasi-)separation.
class SeparationSuspected : public NonConvergence
{
public:
    using NonConvergence::NonConvergence;
};

} // namespace raresight

#pragma once

namespace irrclr::cli {

// Full command-line front end. Returns the process exit code:
// 0 success, 1 validation/config error, 2 runtime failure.
int dispatch(int argc, const char* const* argv);

}  // namespace irrclr::cli

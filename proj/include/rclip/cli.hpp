#pragma once

namespace rclip {

// Routes argv to the library operations. Exit codes: 0 success, 1 user error
// (usage, missing files, bad config), 2 internal error.
int dispatch(int argc, const char* const* argv);

}  // namespace rclip

#pragma once

#include <cstdio>
#include <functional>
#include <string>

namespace coevo {

/// Process-wide warning sink, replaceable by embedders and tests.
inline std::function<void(const std::string&)>& warn_handler() {
	static std::function<void(const std::string&)> handler = [](const std::string& msg) {
		std::fprintf(stderr, "[coevo] warning: %s\n", msg.c_str());
	};
	return handler;
}

inline void warn(const std::string& msg) { warn_handler()(msg); }

} // namespace coevo

#pragma once

#include <httplib.h>

#include <chrono>
#include <functional>
#include <string>
#include <thread>

#include "malade/errors.hpp"

namespace malade {

struct HttpRetryPolicy {
    int max_retries = 5;      // attempts beyond the first
    int base_delay_ms = 250;  // doubled per retry
};

inline bool retriable_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

// Runs the request, retrying rate-limit/server errors and transport failures
// with exponential backoff. Returns the last result; the caller decides how
// to surface failure.
inline httplib::Result http_with_retry(const std::function<httplib::Result()>& request,
                                       const HttpRetryPolicy& policy = {}) {
    int delay_ms = policy.base_delay_ms;
    httplib::Result res = request();
    for (int attempt = 0; attempt < policy.max_retries; ++attempt) {
        if (res && !retriable_status(res->status)) return res;
        std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        delay_ms *= 2;
        res = request();
    }
    return res;
}

// RFC 3986 percent-encoding for query-string values.
inline std::string url_encode(const std::string& s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        bool unreserved = std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~';
        if (unreserved) {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 0xF];
        }
    }
    return out;
}

}  // namespace malade

#pragma once

#include <functional>
#include <stdexcept>
#include <string>

#include "doctest.h"

// Asserts fn throws and the message mentions substr.
inline void expect_throw_containing(const std::function<void()>& fn, const std::string& substr) {
    bool threw = false;
    std::string msg;
    try {
        fn();
    } catch (const std::exception& e) {
        threw = true;
        msg = e.what();
    }
    CHECK_MESSAGE(threw, "expected an exception mentioning '", substr, "'");
    if (threw)
        CHECK_MESSAGE(msg.find(substr) != std::string::npos, "message was: ", msg);
}

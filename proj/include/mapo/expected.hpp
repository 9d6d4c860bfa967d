#pragma once

#include <stdexcept>
#include <utility>
#include <variant>

namespace mapo {

// Minimal value-or-error type (std::expected is C++23).
template <typename T, typename E>
class Expected {
public:
    Expected(T value) : v_(std::move(value)) {}
    Expected(E error) : v_(std::move(error)) {}

    bool ok() const { return std::holds_alternative<T>(v_); }
    explicit operator bool() const { return ok(); }

    const T& value() const {
        if (!ok()) throw std::logic_error("Expected: no value");
        return std::get<T>(v_);
    }
    T& value() {
        if (!ok()) throw std::logic_error("Expected: no value");
        return std::get<T>(v_);
    }
    const E& error() const {
        if (ok()) throw std::logic_error("Expected: no error");
        return std::get<E>(v_);
    }

private:
    std::variant<T, E> v_;
};

}  // namespace mapo

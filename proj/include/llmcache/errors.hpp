#pragma once

#include <stdexcept>
#include <string>

namespace llmcache {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptySequence : Error {
    EmptySequence() : Error("empty token/row sequence") {}
    explicit EmptySequence(const std::string& what) : Error(what) {}
};

struct DegenerateFingerprint : Error {
    explicit DegenerateFingerprint(const std::string& what = "zero vector cannot be fingerprinted")
        : Error(what) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(what) {}
};

struct KeyKindError : Error {
    explicit KeyKindError(const std::string& what = "dense/signature key kind mismatch")
        : Error(what) {}
};

struct EmptyBank : Error {
    EmptyBank() : Error("cannot evict from an empty bank") {}
};

struct VocabError : Error {
    explicit VocabError(const std::string& what) : Error(what) {}
};

struct NumericsError : Error {
    explicit NumericsError(const std::string& what) : Error(what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace llmcache

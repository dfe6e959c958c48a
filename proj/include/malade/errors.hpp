#pragma once

#include <stdexcept>
#include <string>

namespace malade {

// Base for all artifact-specific failures so callers can catch one family.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct MalformedTool : Error {
    explicit MalformedTool(const std::string& what) : Error("malformed tool: " + what) {}
};

struct DuplicateTool : Error {
    explicit DuplicateTool(const std::string& name) : Error("duplicate tool: " + name) {}
};

struct CycleDetected : Error {
    explicit CycleDetected(const std::string& what) : Error("task cycle detected: " + what) {}
};

struct StepLimitExceeded : Error {
    explicit StepLimitExceeded(const std::string& task, int limit)
        : Error("step limit exceeded in task '" + task + "' (max " + std::to_string(limit) + ")") {}
};

struct BackendError : Error {
    int status = 0;
    bool retriable = false;
    BackendError(int status_, bool retriable_, const std::string& what)
        : Error("backend error (status " + std::to_string(status_) + "): " + what),
          status(status_),
          retriable(retriable_) {}
};

struct EmbeddingError : Error {
    std::string chunk_id;
    EmbeddingError(const std::string& chunk, const std::string& what)
        : Error("embedding failed for chunk '" + chunk + "': " + what), chunk_id(chunk) {}
};

struct IndexVersionMismatch : Error {
    explicit IndexVersionMismatch(const std::string& what) : Error("index version mismatch: " + what) {}
};

struct NotFound : Error {
    explicit NotFound(const std::string& what) : Error("not found: " + what) {}
};

struct UpstreamError : Error {
    explicit UpstreamError(const std::string& what) : Error("upstream error: " + what) {}
};

struct DatasetMissing : Error {
    explicit DatasetMissing(const std::string& what) : Error("dataset missing: " + what) {}
};

struct EmptyCategory : Error {
    explicit EmptyCategory(const std::string& category) : Error("no candidate drugs for category: " + category) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error("validation failed: " + what) {}
};

struct MissingCells : Error {
    explicit MissingCells(const std::string& what) : Error("predictions missing for cells: " + what) {}
};

struct DegenerateClasses : Error {
    explicit DegenerateClasses(const std::string& what) : Error("degenerate classes: " + what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

}  // namespace malade

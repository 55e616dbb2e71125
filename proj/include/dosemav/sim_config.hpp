#pragma once

#include "dosemav/simlab.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>

namespace dosemav {

inline constexpr int kConfigSchemaVersion = 1;

/// Invalid study configuration; `pointer` is the JSON pointer of the
/// offending field.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string pointer, const std::string& message)
        : std::invalid_argument(pointer + ": " + message), pointer_(std::move(pointer))
    {
    }
    const std::string& pointer() const noexcept { return pointer_; }

private:
    std::string pointer_;
};

/// Designs with fewer doses than this drop the sigmoid Emax candidate.
inline constexpr std::size_t kMinDosesForSigEmax = 5;

/// Expands a grid config into scenarios (design-major, then N, then true model).
StudyConfig parse_study_config(const nlohmann::json& config);
StudyConfig load_study_config(const std::filesystem::path& path);

/// The 40-scenario grid without ANOVA among the candidates.
nlohmann::json default_study_config();

}  // namespace dosemav

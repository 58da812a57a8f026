#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "refpaint/error.hpp"
#include "refpaint/mask.hpp"
#include "refpaint/model_config.hpp"
#include "refpaint/schedule.hpp"

namespace refpaint::detail {

using nlohmann::json;

/// Reads keys from one JSON object and rejects any key that was not read.
class StrictObject {
public:
    StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        require(j.is_object(), ErrorKind::configuration, where_ + " must be a JSON object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            raise(ErrorKind::configuration, where_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            require(seen_.count(k) != 0, ErrorKind::configuration, "unknown key '" + k + "' in " + where_);
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

json to_json(const DenoiserConfig& c);
DenoiserConfig model_from_json(const json& j, const std::string& where);

json to_json(const ScheduleSpec& s);
ScheduleSpec schedule_from_json(const json& j, const std::string& where);

json to_json(const StrokeParams& p);
/// Overrides fields of `base`.
StrokeParams strokes_from_json(const json& j, StrokeParams base, const std::string& where);

}  // namespace refpaint::detail

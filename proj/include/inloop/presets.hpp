#pragma once

#include <string>
#include <vector>

#include "inloop/config.hpp"
#include "inloop/errors.hpp"
#include "inloop/presets_data.hpp"

namespace inloop {

struct PresetEntry {
    const char* name;
    const char* text;
};

[[nodiscard]] inline const std::vector<PresetEntry>& preset_table() {
    static const std::vector<PresetEntry> table = {
        {"fig2", presets::preset_fig2},
        {"fig3", presets::preset_fig3},
        {"fig4", presets::preset_fig4},
        {"figs1", presets::preset_figs1},
    };
    return table;
}

[[nodiscard]] inline std::string preset_text(const std::string& name) {
    for (const auto& e : preset_table())
        if (name == e.name) return e.text;
    std::string names;
    for (const auto& e : preset_table()) {
        if (!names.empty()) names += ", ";
        names += e.name;
    }
    throw ConfigError("unknown preset '" + name + "' (available: " + names +
                      ")");
}

[[nodiscard]] inline RunConfig load_preset(const std::string& name) {
    return parse_config(parse_json_text(preset_text(name), "preset:" + name));
}

}  // namespace inloop

#include "blend/config.hpp"

#include "blend/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace blend {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin)
{
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, ErrorKind::invalid_input,
                origin + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        require(!key.empty(), ErrorKind::invalid_input, origin + ":" + std::to_string(lineno) + ": empty key");
        require(cfg.values_.emplace(key, trim(line.substr(eq + 1))).second, ErrorKind::invalid_input,
                origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& file)
{
    std::ifstream is(file);
    require(static_cast<bool>(is), ErrorKind::invalid_input, "cannot read config " + file.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), file.string());
}

std::optional<std::string> KeyValueConfig::raw(const std::string& key) const
{
    auto it = values_.find(key);
    if (it == values_.end())
        return std::nullopt;
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const
{
    return raw(key).value_or(fallback);
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const
{
    auto v = raw(key);
    if (!v)
        return fallback;
    long long out = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    require(ec == std::errc() && ptr == v->data() + v->size(), ErrorKind::invalid_input,
            "config key " + key + ": '" + *v + "' is not an integer");
    return out;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const
{
    auto v = raw(key);
    if (!v)
        return fallback;
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    require(ec == std::errc() && ptr == v->data() + v->size(), ErrorKind::invalid_input,
            "config key " + key + ": '" + *v + "' is not a number");
    return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const
{
    auto v = raw(key);
    if (!v)
        return fallback;
    if (*v == "true" || *v == "1" || *v == "yes")
        return true;
    if (*v == "false" || *v == "0" || *v == "no")
        return false;
    fail(ErrorKind::invalid_input, "config key " + key + ": '" + *v + "' is not a boolean");
}

void KeyValueConfig::check_known(const std::set<std::string>& known) const
{
    for (const auto& [k, v] : values_)
        require(known.count(k) != 0, ErrorKind::invalid_input, "unknown config key '" + k + "'");
}

} // namespace blend

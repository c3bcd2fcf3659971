#ifndef PROJCGAN_CONFIG_HPP
#define PROJCGAN_CONFIG_HPP

#include <map>
#include <string>
#include <vector>

namespace projcgan {

/// Flat `key = value` run configuration. Every known key has a default;
/// parsing overlays a file onto the defaults and rejects anything else, and
/// all complaints about a file are raised in one error. `echo()` renders the
/// fully resolved table, which every command writes beside its outputs.
class RunConfig {
public:
    struct Entry {
        const char* key;
        const char* value;
    };

    /// Full key table with defaults, in echo order.
    static const std::vector<Entry>& schema();

    static RunConfig defaults();
    static RunConfig from_text(const std::string& text);
    static RunConfig from_file(const std::string& path);

    const std::string& str(const std::string& key) const;
    int integer(const std::string& key) const;
    double real(const std::string& key) const;
    bool boolean(const std::string& key) const;
    /// Comma-separated list value; an empty string is an empty list.
    std::vector<std::string> list(const std::string& key) const;
    std::vector<double> real_list(const std::string& key) const;

    void set(const std::string& key, const std::string& value);

    std::string echo() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace projcgan

#endif

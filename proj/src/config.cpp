#include "projcgan/config.hpp"

#include <fstream>
#include <sstream>

#include "projcgan/errors.hpp"

namespace projcgan {

namespace {

std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

const std::vector<RunConfig::Entry>& RunConfig::schema() {
    static const std::vector<Entry> table = {
        // task selection
        {"task", "classgen"},          // classgen | superres
        {"variant", "projection"},     // projection | concat_input | concat_hidden |
                                       // concat_output | acgan
        {"loss", "hinge"},             // hinge | standard
        {"lambda_cls", "1.0"},
        // data
        {"dataset", "vector2d"},       // vector2d | blob_images | cifar
        {"dataset_path", ""},
        {"classes", "8"},
        {"n_per_class", "500"},
        {"img_size", "16"},
        {"data_seed", "1"},
        // model widths
        {"z_dim", "8"},
        {"hidden", "32"},
        {"ch", "16"},
        {"embed_dim", "16"},
        {"hidden_insert", "-1"},
        {"sn_embedding", "true"},
        // schedule
        {"iterations", "20000"},
        {"decay_start", "15000"},
        {"n_dis", "5"},
        {"batch", "64"},
        {"lr", "0.0002"},
        {"beta1", "0.0"},
        {"beta2", "0.9"},
        // run plumbing
        {"seed", "1"},
        {"out", "run_out"},
        {"metric_every", "1000"},
        {"ckpt_every", "5000"},
        {"resume", "false"},
        {"panel", "64"},
        // evaluation
        {"n_gen", "1000"},
        {"fx_iters", "400"},
        {"fx_hidden", "64"},
        {"n_eval", "64"},
        {"score_splits", "10"},
        // sweep grids
        {"sweep_lr", ""},
        {"sweep_beta1", ""},
        {"sweep_variants", "projection,concat_hidden"},
        // morphing
        {"checkpoint", ""},
        {"morph_from", "0"},
        {"morph_to", "1"},
        {"morph_steps", "8"},
        {"morph_chain", ""},
        {"morph_seeds", "3"},
        // super-resolution
        {"sr_factor", "4"},
        {"n_mc", "10"},
    };
    return table;
}

RunConfig RunConfig::defaults() {
    RunConfig c;
    for (const Entry& e : schema()) c.values_[e.key] = e.value;
    return c;
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig c = defaults();
    std::vector<std::string> problems;
    std::map<std::string, int> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            problems.push_back("line " + std::to_string(lineno) + ": expected 'key = value'");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            problems.push_back("line " + std::to_string(lineno) + ": empty key");
            continue;
        }
        if (c.values_.find(key) == c.values_.end()) {
            problems.push_back("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
            continue;
        }
        if (seen.count(key)) {
            problems.push_back("line " + std::to_string(lineno) + ": duplicate key '" + key +
                               "' (first at line " + std::to_string(seen[key]) + ")");
            continue;
        }
        seen[key] = lineno;
        c.values_[key] = value;
    }
    if (!problems.empty()) {
        std::string msg = "config rejected:";
        for (const std::string& p : problems) msg += "\n  " + p;
        throw ValueError(msg);
    }
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

const std::string& RunConfig::str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValueError("unknown config key '" + key + "'");
    return it->second;
}

int RunConfig::integer(const std::string& key) const {
    const std::string& v = str(key);
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return static_cast<int>(x);
    } catch (const std::exception&) {
        throw ValueError("config key '" + key + "': '" + v + "' is not an integer");
    }
}

double RunConfig::real(const std::string& key) const {
    const std::string& v = str(key);
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ValueError("config key '" + key + "': '" + v + "' is not a number");
    }
}

bool RunConfig::boolean(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValueError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
    const std::string& v = str(key);
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> RunConfig::real_list(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& item : list(key)) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw ValueError("config key '" + key + "': '" + item + "' is not a number");
        }
    }
    return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValueError("unknown config key '" + key + "'");
    it->second = value;
}

std::string RunConfig::echo() const {
    std::string out;
    for (const Entry& e : schema()) {
        out += e.key;
        out += " = ";
        out += values_.at(e.key);
        out += "\n";
    }
    return out;
}

}  // namespace projcgan

#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "projcgan/commands.hpp"
#include "projcgan/config.hpp"
#include "projcgan/errors.hpp"

using namespace projcgan;

namespace {

/// The engine is sequential; PROJCGAN_THREADS exists so schedulers can pin a
/// worker count without changing results. Anything but a positive integer is
/// rejected up front.
void check_thread_env() {
    const char* raw = std::getenv("PROJCGAN_THREADS");
    if (raw == nullptr) return;
    char* end = nullptr;
    const long n = std::strtol(raw, &end, 10);
    if (end == raw || *end != '\0' || n < 1)
        throw ValueError("PROJCGAN_THREADS must be a positive integer, got '" + std::string(raw) +
                         "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conditional GAN training and evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    std::int64_t seed = 0;
    std::string out;
    for (const char* name : {"train", "sweep", "eval", "morph", "superres"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "run configuration file")->required();
        sub->add_option("--seed", seed, "override the config's seed");
        sub->add_option("--out", out, "override the config's output directory");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        check_thread_env();
        RunConfig cfg = RunConfig::from_file(config_path);
        CLI::App* sub = app.get_subcommands().front();
        if (sub->count("--seed") > 0) cfg.set("seed", std::to_string(seed));
        if (sub->count("--out") > 0) cfg.set("out", out);

        const std::string name = sub->get_name();
        if (name == "train")
            cmd_train(cfg);
        else if (name == "sweep")
            cmd_sweep(cfg);
        else if (name == "eval")
            cmd_eval(cfg);
        else if (name == "morph")
            cmd_morph(cfg);
        else
            cmd_superres(cfg);
    } catch (const std::exception& e) {
        std::cerr << "projcgan: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "mfgraph/io/run.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Mean field games on graphs: gradient flows, transport distances, equilibria and master fields"};
    std::string config;
    std::string out_dir;
    mfgraph::io::RunOptions opts;
    app.add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "Output directory (overrides output.dir)");
    app.add_option("--threads", opts.threads, "Worker threads for the master grid (0: all cores)")
        ->check(CLI::NonNegativeNumber);
    app.add_flag("--quiet", opts.quiet, "Print nothing on success");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : mfgraph::io::exit_config;
    }
    if (!out_dir.empty()) opts.out_dir = out_dir;
    return mfgraph::io::run_file(config, opts, std::cout);
}

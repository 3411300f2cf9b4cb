// drum-datagen: writes the bundled benchmark datasets.
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drum/synth.hpp"

int main(int argc, char** argv) {
    CLI::App app{"drum-datagen: deterministic benchmark knowledge graphs"};
    std::string out = "data";
    std::uint64_t seed = 7;
    std::vector<std::string> which = {"family", "umls", "kinship", "wn"};
    app.add_option("--out", out, "output root (one subdirectory per dataset)")->capture_default_str();
    app.add_option("--seed", seed, "generator seed")->capture_default_str();
    app.add_option("--which", which, "datasets to generate")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    try {
        for (const std::string& name : which) {
            drum::synth::Dataset d;
            if (name == "family")
                d = drum::synth::gen_family(seed);
            else if (name == "umls")
                d = drum::synth::gen_umls_like(seed);
            else if (name == "kinship")
                d = drum::synth::gen_kinship_like(seed);
            else if (name == "wn")
                d = drum::synth::gen_wn_like(seed);
            else {
                std::cerr << "unknown dataset '" << name << "'\n";
                return 2;
            }
            drum::synth::write_dataset(out + "/" + name, d);
            std::cout << name << ": train " << d.train.size() << " + test " << d.test.size() << " = "
                      << d.total() << " triples\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

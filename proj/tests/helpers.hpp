#ifndef SILAB_TEST_HELPERS_HPP
#define SILAB_TEST_HELPERS_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "silab/silab.hpp"

namespace silab::testing {

inline ParamVector vec(std::vector<double> v, const std::string& name = "g") {
    const std::size_t n = v.size();
    return ParamVector({{name, Tensor({n}, std::move(v))}});
}

inline NetSpec small_spec(std::uint64_t seed, std::vector<std::size_t> hidden = {8, 6}, int classes = 2,
                          std::size_t input_dim = 3) {
    NetSpec s;
    s.input_dim = input_dim;
    s.hidden_widths = std::move(hidden);
    s.n_classes = classes;
    s.seed = seed;
    return s;
}

/// Gaussian features and uniform labels from a counter stream.
inline std::pair<Tensor, std::vector<int>> random_batch(std::uint64_t seed, std::size_t n, std::size_t d,
                                                        int classes) {
    CounterRng rng(seed, "test-batch");
    Tensor x({n, d});
    for (double& v : x.data) v = rng.normal();
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    return {std::move(x), std::move(y)};
}

inline std::filesystem::path temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("silab_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace silab::testing

#endif

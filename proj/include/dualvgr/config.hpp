#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace dualvgr {

// Flat key=value run configuration. Defaults are the desk-scale setup; the
// paper-scale values live in configs/paper_scale.cfg.
struct ModelConfig {
    // model dimensions
    int d = 64;           // clip/question feature width
    int d1 = 16;          // per-head graph width; heads * d1 must equal d
    int heads = 4;        // attention heads per graph
    int steps = 2;        // reasoning iterations
    int n_clips = 8;
    int frames_per_clip = 4;
    int d_word = 64;      // word embedding width
    int d_app = 64;       // appearance feature width per frame
    int d_mot = 64;       // motion feature width per clip
    int mfb_factor = 5;

    // loss weights
    double gamma = 1.0;   // consistency weight
    double beta = 1e-6;   // disparity weight

    // optimization
    double learning_rate = 1e-4;
    int batch_size = 32;
    int epochs = 25;
    uint64_t seed = 1234;
    bool deterministic = true;

    std::string variant = "DualVGR";
    std::string activation = "elu";  // graph node update: elu | sigmoid
    bool tied_steps = false;

    // synthetic data generation
    int data_train_pairs = 2000;
    int data_test_pairs = 400;
    int data_qa_per_video = 5;
    int data_min_objects = 2;
    int data_max_objects = 4;
    double data_noise_sigma = 0.02;
    double data_long_fraction = 0.5;  // fraction of long compositional questions

    void validate() const;

    std::string to_key_values() const;
    static ModelConfig from_key_values(const std::string& text);
    static ModelConfig load_file(const std::string& path);

    // Applies "key=value" overrides on top of this config.
    void apply_override(const std::string& key, const std::string& value);
};

}  // namespace dualvgr

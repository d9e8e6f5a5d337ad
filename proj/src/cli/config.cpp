// SPDX-License-Identifier: Apache-2.0
#include "distilla/cli/config.hpp"

#include <concepts>
#include <cstdlib>
#include <set>

#include "distilla/core/error.hpp"

namespace distilla::cli {
namespace {

[[noreturn]] void config_error(const std::string& message) { throw Error(Errc::config, message); }

// An object whose keys must all be consumed; finish() rejects the leftovers.
class Section {
public:
    Section(const Json* j, std::string path) : j_(j), path_(std::move(path)) {
        if (j_ != nullptr && !j_->is_object()) config_error(describe() + " must be an object");
    }

    [[nodiscard]] std::string key_path(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    const Json* find(const std::string& key) {
        if (j_ == nullptr) return nullptr;
        const auto it = j_->find(key);
        if (it == j_->end()) return nullptr;
        used_.insert(key);
        return &*it;
    }

    bool has(const std::string& key) const { return j_ != nullptr && j_->contains(key); }

    Section section(const std::string& key) { return Section(find(key), key_path(key)); }

    template <std::unsigned_integral T>
        requires(!std::is_same_v<T, bool>)
    void read(const std::string& key, T& out) {
        if (const auto* v = find(key)) out = static_cast<T>(unsigned_value(*v, key));
    }
    void read(const std::string& key, double& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number()) config_error(key_path(key) + " must be a number");
            out = v->get<double>();
        }
    }
    void read(const std::string& key, bool& out) {
        if (const auto* v = find(key)) {
            if (!v->is_boolean()) config_error(key_path(key) + " must be a boolean");
            out = v->get<bool>();
        }
    }
    void read(const std::string& key, std::string& out) {
        if (const auto* v = find(key)) out = string_value(*v, key);
    }

    std::optional<std::string> maybe_string(const std::string& key) {
        if (const auto* v = find(key)) return string_value(*v, key);
        return std::nullopt;
    }

    template <typename F>
    void read_array(const std::string& key, F&& each) {
        const auto* v = find(key);
        if (v == nullptr) return;
        if (!v->is_array()) config_error(key_path(key) + " must be an array");
        for (std::size_t i = 0; i < v->size(); ++i) each((*v)[i], key_path(key) + "[" + std::to_string(i) + "]");
    }

    std::size_t unsigned_value(const Json& v, const std::string& key) const {
        if (!v.is_number_unsigned()) config_error(key_path(key) + " must be a nonnegative integer");
        return v.get<std::size_t>();
    }
    std::string string_value(const Json& v, const std::string& key) const {
        if (!v.is_string()) config_error(key_path(key) + " must be a string");
        return v.get<std::string>();
    }

    void finish() const {
        if (j_ == nullptr) return;
        for (const auto& [key, value] : j_->items())
            if (!used_.contains(key)) config_error("unknown key '" + key_path(key) + "'");
    }

private:
    [[nodiscard]] std::string describe() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

    const Json* j_;
    std::string path_;
    std::set<std::string> used_;
};

// Enum parsers raise their own codes; report them as config errors at the key.
template <typename F>
auto parse_enum(const std::string& text, const std::string& where, F&& parse) {
    try {
        return parse(text);
    } catch (const Error&) {
        config_error(where + ": unrecognized value '" + text + "'");
    }
}

void read_train(Section& s, nn::TrainConfig& cfg, bool with_epochs) {
    s.read("lr", cfg.lr);
    s.read("momentum", cfg.momentum);
    s.read("weight_decay", cfg.weight_decay);
    s.read("batch_size", cfg.batch_size);
    s.read("seed", cfg.seed);
    if (with_epochs) s.read("epochs", cfg.epochs);
}

DatasetConfig read_dataset(Section s) {
    DatasetConfig d;
    s.read("kind", d.kind);
    if (d.kind == "blobs") {
        s.read("seed", d.seed);
        s.read("test_seed", d.test_seed);
        s.read("classes", d.classes);
        s.read("per_class", d.per_class);
        s.read("test_per_class", d.test_per_class);
        s.read("side", d.side);
        s.read("noise", d.noise);
        if (d.classes < 2) config_error("dataset.classes must be at least 2");
        if (d.per_class < 1 || d.test_per_class < 1) config_error("dataset sizes must be positive");
        if (d.side < 1) config_error("dataset.side must be positive");
        if (!(d.noise >= 0.0)) config_error("dataset.noise must be nonnegative");
        d.shape = ImageShape{1, d.side, d.side};
    } else if (d.kind == "idx") {
        for (auto [key, field] : {std::pair{"train_images", &d.train_images}, std::pair{"train_labels", &d.train_labels},
                                  std::pair{"test_images", &d.test_images}, std::pair{"test_labels", &d.test_labels}}) {
            const auto v = s.maybe_string(key);
            if (!v) config_error(s.key_path(key) + " is required for idx datasets");
            *field = *v;
        }
        if (!s.has("classes") || !s.has("shape")) config_error("idx datasets need dataset.classes and dataset.shape");
        s.read("classes", d.classes);
        std::vector<std::size_t> dims;
        s.read_array("shape", [&](const Json& v, const std::string& where) {
            if (!v.is_number_unsigned() || v.get<std::size_t>() == 0) config_error(where + " must be positive");
            dims.push_back(v.get<std::size_t>());
        });
        if (dims.size() != 3) config_error("dataset.shape must be [channels, height, width]");
        d.shape = ImageShape{dims[0], dims[1], dims[2]};
        if (d.classes < 2) config_error("dataset.classes must be at least 2");
    } else {
        config_error("dataset.kind must be \"blobs\" or \"idx\"");
    }
    s.finish();
    return d;
}

std::filesystem::path resolve(const std::filesystem::path& dir, const std::filesystem::path& p) {
    return p.is_absolute() ? p : dir / p;
}

}  // namespace

ExperimentConfig parse_config(const Json& document) {
    ExperimentConfig c;
    Section root(&document, "");
    if (!root.has("version")) config_error("missing key 'version'");
    std::size_t version = 0;
    root.read("version", version);
    if (version != kConfigVersion) config_error("unsupported config version " + std::to_string(version));

    c.dataset = read_dataset(root.section("dataset"));
    auto& p = c.pdd;
    p.spec.input = c.dataset.shape;
    p.spec.class_count = c.dataset.classes;

    {
        auto s = root.section("model");
        if (const auto v = s.maybe_string("family")) p.spec.family = parse_enum(*v, "model.family", nn::parse_family);
        if (const auto v = s.maybe_string("norm")) p.spec.norm = parse_enum(*v, "model.norm", nn::parse_norm);
        s.read("depth", p.spec.depth);
        s.read("width", p.spec.width);
        s.finish();
    }
    {
        auto s = root.section("pdd");
        s.read("stages", p.stages);
        s.read("per_stage_ipc", p.per_stage_ipc);
        if (const auto v = s.maybe_string("base")) p.base = parse_enum(*v, "pdd.base", pdd::parse_base_method);
        if (s.has("seeds")) {
            p.seeds.clear();
            s.read_array("seeds", [&](const Json& v, const std::string& where) {
                if (!v.is_number_unsigned()) config_error(where + " must be a nonnegative integer");
                p.seeds.push_back(v.get<std::uint64_t>());
            });
        }
        s.read("distill_seed", p.distill_seed);
        s.read("no_transition", p.no_transition);
        s.read("no_conditioning", p.no_conditioning);
        s.read("jobs", p.jobs);
        if (const auto v = s.maybe_string("curriculum")) c.curriculum = *v;
        s.read("bin_width", c.bin_width);
        s.finish();
    }
    {
        auto s = root.section("budget");
        auto& b = p.budget;
        s.read("outer_iterations", b.outer_iterations);
        s.read("inner_steps", b.inner_steps);
        s.read("expert_span", b.expert_span);
        s.read("outer_lr", b.outer_lr);
        if (const auto v = s.maybe_string("match_metric"))
            b.match_metric = parse_enum(*v, "budget.match_metric", distill::parse_match_metric);
        s.read("student_lr", b.student_lr);
        s.read("student_momentum", b.student_momentum);
        s.read("real_batch_per_class", b.real_batch_per_class);
        s.read("real_batch", b.real_batch);
        s.read("initial_student_lr", b.initial_student_lr);
        s.read("learn_lr", b.learn_lr);
        s.read("lr_lr", b.lr_lr);
        s.read("max_anchor_step", b.max_anchor_step);
        s.read_array("augment", [&](const Json& v, const std::string& where) {
            if (!v.is_string()) config_error(where + " must be a string");
            b.augment.push_back(parse_enum(v.get<std::string>(), where, distill::parse_augment_op));
        });
        if (const auto v = s.maybe_string("init_mode")) b.init_mode = parse_enum(*v, "budget.init_mode", parse_init_mode);
        s.finish();
    }
    {
        auto s = root.section("transition");
        read_train(s, p.transition, true);
        s.finish();
    }
    {
        auto s = root.section("expert");
        read_train(s, p.expert, true);
        s.read("snapshot_every", p.expert_snapshot_every);
        s.finish();
    }
    {
        auto s = root.section("eval");
        read_train(s, c.eval.train, false);
        s.read("epoch_multiplier", c.eval.epoch_multiplier);
        s.read_array("epoch_schedule", [&](const Json& v, const std::string& where) {
            if (!v.is_number_unsigned()) config_error(where + " must be a nonnegative integer");
            c.eval.epoch_schedule.push_back(v.get<std::size_t>());
        });
        s.read("seeds", c.eval.seeds);
        s.read("seed_base", c.eval.seed_base);
        if (s.has("modes")) {
            c.eval.modes.clear();
            s.read_array("modes", [&](const Json& v, const std::string& where) {
                if (!v.is_string()) config_error(where + " must be a string");
                c.eval.modes.push_back(parse_enum(v.get<std::string>(), where, eval::parse_mode));
            });
        }
        s.finish();
    }
    {
        auto s = root.section("forgetting");
        read_train(s, c.forgetting.train, true);
        if (s.has("eval_every")) {
            std::size_t every = 0;
            s.read("eval_every", every);
            if (every == 0) config_error("forgetting.eval_every must be at least 1");
            c.forgetting.eval_every = every;
        }
        s.finish();
    }
    {
        auto s = root.section("continual");
        s.read("phases", c.continual_phases);
        s.finish();
    }
    if (const auto v = root.maybe_string("output")) c.output = *v;
    root.finish();

    if (!c.eval.epoch_schedule.empty() && c.eval.epoch_schedule.size() != p.stages)
        config_error("eval.epoch_schedule needs one entry per stage");
    if (c.eval.seeds < 1) config_error("eval.seeds must be at least 1");
    if (c.eval.modes.empty()) config_error("eval.modes must not be empty");
    if (!(c.eval.epoch_multiplier > 0.0)) config_error("eval.epoch_multiplier must be positive");
    if (c.bin_width < 1) config_error("pdd.bin_width must be at least 1");
    if (c.continual_phases < 1 || c.continual_phases > c.dataset.classes)
        config_error("continual.phases must lie in [1, classes]");
    if (c.output.empty()) config_error("output must not be empty");
    try {
        p.validate();
        c.eval.train.validate();
        c.forgetting.train.validate();
    } catch (const Error& e) {
        config_error(e.what());
    }

    c.digest = fnv1a_hex(document.dump());
    p.config_digest = c.digest;
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    Json document;
    try {
        document = read_json(path);
    } catch (const Error& e) {
        config_error(std::string("cannot read ") + path.string() + " (" + e.what() + ")");
    }
    auto config = parse_config(document);
    // Relative dataset paths are taken relative to the config file.
    const auto dir = path.parent_path();
    auto& d = config.dataset;
    if (d.kind == "idx") {
        d.train_images = resolve(dir, d.train_images);
        d.train_labels = resolve(dir, d.train_labels);
        d.test_images = resolve(dir, d.test_images);
        d.test_labels = resolve(dir, d.test_labels);
    }
    return config;
}

std::filesystem::path output_dir(const ExperimentConfig& config) {
    if (config.output.is_absolute()) return config.output;
    const char* root = std::getenv("DISTILLA_WORKDIR");
    const std::filesystem::path base = root != nullptr && *root != '\0' ? root : std::filesystem::current_path();
    return base / config.output;
}

Datasets load_datasets(const DatasetConfig& d) {
    if (d.kind == "blobs")
        return {make_blobs_dataset(d.seed, d.classes, d.per_class, d.side, d.noise),
                make_blobs_dataset(d.test_seed, d.classes, d.test_per_class, d.side, d.noise)};
    auto train = load_idx_dataset(d.train_images, d.train_labels, d.classes);
    auto test = load_idx_dataset(d.test_images, d.test_labels, d.classes);
    require(train.shape() == d.shape && test.shape() == d.shape, Errc::config,
            "idx images do not have the configured dataset.shape");
    return {std::move(train), std::move(test)};
}

nn::ModelSpec architecture_preset(const std::string& name, const nn::ModelSpec& base) {
    nn::ModelSpec spec = base;
    if (name == "convnet") return spec;
    if (name == "convnet-bn") {
        spec.family = nn::Family::convnet;
        spec.norm = nn::Norm::batch;
        return spec;
    }
    if (name == "mlp") {
        spec.family = nn::Family::mlp;
        spec.depth = 1;
        spec.width = 4 * base.width;
        spec.norm = nn::Norm::none;
        return spec;
    }
    config_error("unknown architecture '" + name + "' (expected convnet, convnet-bn or mlp)");
}

std::vector<std::size_t> eval_schedule(const ExperimentConfig& config) {
    if (!config.eval.epoch_schedule.empty()) return config.eval.epoch_schedule;
    return eval::default_schedule(config.pdd.stages, config.eval.epoch_multiplier);
}

}  // namespace distilla::cli

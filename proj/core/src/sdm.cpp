#include "atlas/sdm.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "atlas/error.hpp"
#include "atlas/rng.hpp"
#include "json.hpp"

namespace atlas {
namespace {

double sigmoid(double z) noexcept {
    if (z >= 0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double activate(Activation a, double z) noexcept {
    return a == Activation::Relu ? (z > 0.0 ? z : 0.0) : z;
}

double activation_slope(Activation a, double z) noexcept {
    return a == Activation::Relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0;
}

void affine(const DenseLayer& layer, std::span<const double> in, std::span<double> out) noexcept {
    for (std::size_t o = 0; o < layer.outputs; ++o) {
        const double* w = layer.weights.data() + o * layer.inputs;
        double acc = layer.bias[o];
        for (std::size_t i = 0; i < layer.inputs; ++i) acc += w[i] * in[i];
        out[o] = acc;
    }
}

void check_tensor(const ModalityTensor& t, const SdmArchitecture& arch, Modality expected) {
    if (t.empty()) {
        throw ValidationError("missing " + std::string(modality_name(expected)) + " modality");
    }
    if (t.modality != expected) {
        throw ValidationError("tensor tagged " + std::string(modality_name(t.modality)) +
                              " supplied for the " + std::string(modality_name(expected)) + " branch");
    }
    const auto& want = arch.input_shapes[static_cast<std::size_t>(expected)];
    if (t.shape != want || t.values.size() != t.element_count()) {
        std::ostringstream msg;
        msg << modality_name(expected) << " tensor shape mismatch: expected [";
        for (std::size_t i = 0; i < want.size(); ++i) msg << (i ? "," : "") << want[i];
        msg << "], got [";
        for (std::size_t i = 0; i < t.shape.size(); ++i) msg << (i ? "," : "") << t.shape[i];
        msg << "] with " << t.values.size() << " values";
        throw ValidationError(msg.str());
    }
}

// Per-layer pre-activations and outputs of one branch.
struct BranchTrace {
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> post;
};

BranchTrace run_branch(const std::vector<DenseLayer>& layers, Activation act, std::span<const double> input) {
    BranchTrace trace;
    trace.pre.reserve(layers.size());
    trace.post.reserve(layers.size());
    std::span<const double> current = input;
    for (const auto& layer : layers) {
        auto& z = trace.pre.emplace_back(layer.outputs);
        affine(layer, current, z);
        auto& a = trace.post.emplace_back(layer.outputs);
        for (std::size_t i = 0; i < z.size(); ++i) a[i] = activate(act, z[i]);
        current = a;
    }
    return trace;
}

struct ForwardTrace {
    std::array<BranchTrace, kModalityCount> branches;
    std::vector<double> concat;
    std::vector<double> logits;
};

ForwardTrace forward(const Features& features, const SdmModel& model, BranchMask mask) {
    const auto& arch = model.architecture();
    const std::size_t d = arch.embedding_width;
    ForwardTrace t;
    t.concat.assign(kModalityCount * d, 0.0);
    for (const auto m : kModalities) {
        const auto& tensor = features[m];
        check_tensor(tensor, arch, m);
        const auto b = static_cast<std::size_t>(m);
        if (!mask[m]) continue;
        t.branches[b] = run_branch(model.branch(m), arch.activation, tensor.values);
        const auto& emb = t.branches[b].post.back();
        std::copy(emb.begin(), emb.end(), t.concat.begin() + static_cast<std::ptrdiff_t>(b * d));
    }
    t.logits.assign(arch.species_count, 0.0);
    affine(model.classifier(), t.concat, t.logits);
    return t;
}

std::uint64_t checkpoint_f32_bits(double v) { return std::bit_cast<std::uint32_t>(static_cast<float>(v)); }

}  // namespace

std::string_view modality_name(Modality m) noexcept {
    switch (m) {
        case Modality::Sentinel: return "sentinel";
        case Modality::Climate: return "climate";
        case Modality::Landsat: return "landsat";
    }
    return "?";
}

std::size_t ModalityTensor::element_count() const noexcept {
    if (shape.empty()) return 0;
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t SdmArchitecture::input_size(Modality m) const noexcept {
    const auto& s = input_shapes[static_cast<std::size_t>(m)];
    if (s.empty()) return 0;
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

void SdmArchitecture::validate() const {
    for (const auto m : kModalities) {
        if (input_size(m) == 0) {
            throw ValidationError("input shape for " + std::string(modality_name(m)) + " must be nonempty");
        }
    }
    if (embedding_width == 0) throw ValidationError("embedding width must be positive");
    if (layers_per_branch == 0) throw ValidationError("each branch needs at least one layer");
    if (species_count == 0) throw ValidationError("species count must be positive");
}

SdmModel::SdmModel(SdmArchitecture arch) : arch_(std::move(arch)) {
    arch_.validate();
    for (const auto m : kModalities) {
        auto& layers = branches_[static_cast<std::size_t>(m)];
        std::size_t in = arch_.input_size(m);
        for (std::size_t l = 0; l < arch_.layers_per_branch; ++l) {
            layers.emplace_back(in, arch_.embedding_width);
            in = arch_.embedding_width;
        }
    }
    classifier_ = DenseLayer(kModalityCount * arch_.embedding_width, arch_.species_count);
}

SdmModel SdmModel::initialize(SdmArchitecture arch, std::uint64_t seed) {
    SdmModel model(std::move(arch));
    Rng rng(seed);
    for (auto& layers : model.branches_) {
        for (auto& layer : layers) {
            const double limit = std::sqrt(6.0 / static_cast<double>(layer.inputs));
            for (auto& w : layer.weights) w = rng.uniform(-limit, limit);
        }
    }
    auto& c = model.classifier_;
    const double limit = std::sqrt(6.0 / static_cast<double>(c.inputs + c.outputs));
    for (auto& w : c.weights) w = rng.uniform(-limit, limit);
    return model;
}

std::size_t SdmModel::parameter_count() const noexcept {
    std::size_t n = classifier_.parameter_count();
    for (const auto& layers : branches_) {
        for (const auto& l : layers) n += l.parameter_count();
    }
    return n;
}

std::vector<double> SdmModel::parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    auto push = [&out](const DenseLayer& l) {
        out.insert(out.end(), l.weights.begin(), l.weights.end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    };
    for (const auto& layers : branches_) {
        for (const auto& l : layers) push(l);
    }
    push(classifier_);
    return out;
}

void SdmModel::set_parameters(std::span<const double> params) {
    if (params.size() != parameter_count()) {
        throw ValidationError("parameter vector has " + std::to_string(params.size()) +
                              " entries, model expects " + std::to_string(parameter_count()));
    }
    std::size_t pos = 0;
    auto pull = [&](DenseLayer& l) {
        std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(pos), l.weights.size(), l.weights.begin());
        pos += l.weights.size();
        std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(pos), l.bias.size(), l.bias.begin());
        pos += l.bias.size();
    };
    for (auto& layers : branches_) {
        for (auto& l : layers) pull(l);
    }
    pull(classifier_);
}

bool SdmModel::all_finite() const noexcept {
    auto ok = [](const DenseLayer& l) {
        for (double w : l.weights) if (!std::isfinite(w)) return false;
        for (double b : l.bias) if (!std::isfinite(b)) return false;
        return true;
    };
    for (const auto& layers : branches_) {
        for (const auto& l : layers) if (!ok(l)) return false;
    }
    return ok(classifier_);
}

std::vector<double> encode_modality(const ModalityTensor& input, const SdmModel& model) {
    check_tensor(input, model.architecture(), input.modality);
    auto trace = run_branch(model.branch(input.modality), model.architecture().activation, input.values);
    return std::move(trace.post.back());
}

std::vector<double> predict_logits(const Features& features, const SdmModel& model, BranchMask branches) {
    return forward(features, model, branches).logits;
}

ProbabilityVector predict(const Features& features, const SdmModel& model, BranchMask branches) {
    auto logits = predict_logits(features, model, branches);
    for (auto& z : logits) z = sigmoid(z);
    return logits;
}

double bce_loss(std::span<const double> pred, std::span<const std::uint8_t> truth) {
    if (pred.size() != truth.size()) {
        throw ValidationError("bce_loss: prediction has " + std::to_string(pred.size()) +
                              " entries, truth has " + std::to_string(truth.size()));
    }
    if (pred.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (truth[i] > 1) throw ValidationError("bce_loss: truth entries must be 0 or 1");
        const double p = std::clamp(pred[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
        sum += truth[i] ? -std::log(p) : -std::log1p(-p);
    }
    return sum / static_cast<double>(pred.size());
}

double loss_and_gradient(const Features& features, std::span<const std::uint8_t> labels,
                         const SdmModel& model, std::span<double> grad, BranchMask branches) {
    const auto& arch = model.architecture();
    if (labels.size() != arch.species_count) {
        throw ValidationError("label vector length does not match species count");
    }
    if (grad.size() != model.parameter_count()) {
        throw ValidationError("gradient buffer has the wrong size");
    }
    const ForwardTrace t = forward(features, model, branches);
    const std::size_t S = arch.species_count;
    const std::size_t d = arch.embedding_width;

    std::vector<double> probs(S);
    std::vector<double> dlogit(S);
    for (std::size_t s = 0; s < S; ++s) {
        const double p = sigmoid(t.logits[s]);
        probs[s] = p;
        const bool clamped = p < kProbabilityClamp || p > 1.0 - kProbabilityClamp;
        dlogit[s] = clamped ? 0.0 : (p - static_cast<double>(labels[s])) / static_cast<double>(S);
    }
    const double loss = bce_loss(probs, labels);

    // Offsets of each layer inside the flattened parameter vector.
    std::array<std::vector<std::size_t>, kModalityCount> offsets;
    std::size_t pos = 0;
    for (const auto m : kModalities) {
        for (const auto& l : model.branch(m)) {
            offsets[static_cast<std::size_t>(m)].push_back(pos);
            pos += l.parameter_count();
        }
    }
    const std::size_t classifier_offset = pos;

    const auto& cls = model.classifier();
    std::vector<double> dconcat(cls.inputs, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
        const double g = dlogit[s];
        if (g == 0.0) continue;
        double* gw = grad.data() + classifier_offset + s * cls.inputs;
        const double* w = cls.weights.data() + s * cls.inputs;
        for (std::size_t j = 0; j < cls.inputs; ++j) {
            gw[j] += g * t.concat[j];
            dconcat[j] += g * w[j];
        }
        grad[classifier_offset + cls.weights.size() + s] += g;
    }

    for (const auto m : kModalities) {
        if (!branches[m]) continue;
        const auto b = static_cast<std::size_t>(m);
        const auto& layers = model.branch(m);
        const auto& trace = t.branches[b];
        std::vector<double> dpost(dconcat.begin() + static_cast<std::ptrdiff_t>(b * d),
                                  dconcat.begin() + static_cast<std::ptrdiff_t>((b + 1) * d));
        for (std::size_t li = layers.size(); li-- > 0;) {
            const auto& layer = layers[li];
            std::span<const double> input =
                li == 0 ? std::span<const double>(features[m].values) : std::span<const double>(trace.post[li - 1]);
            std::vector<double> dz(layer.outputs);
            for (std::size_t o = 0; o < layer.outputs; ++o) {
                dz[o] = dpost[o] * activation_slope(arch.activation, trace.pre[li][o]);
            }
            double* gw = grad.data() + offsets[b][li];
            double* gb = gw + layer.weights.size();
            std::vector<double> dinput(layer.inputs, 0.0);
            for (std::size_t o = 0; o < layer.outputs; ++o) {
                const double g = dz[o];
                if (g == 0.0) continue;
                const double* w = layer.weights.data() + o * layer.inputs;
                double* row = gw + o * layer.inputs;
                for (std::size_t i = 0; i < layer.inputs; ++i) {
                    row[i] += g * input[i];
                    dinput[i] += g * w[i];
                }
                gb[o] += g;
            }
            dpost = std::move(dinput);
        }
    }
    return loss;
}

double mean_loss(std::span<const Sample> data, const SdmModel& model, BranchMask branches) {
    if (data.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& s : data) sum += bce_loss(predict(s.features, model, branches), s.labels);
    return sum / static_cast<double>(data.size());
}

SdmModel train(std::span<const Sample> data, const TrainConfig& config, TrainReport* report) {
    return train_from(SdmModel::initialize(config.architecture, config.seed), data, config, report);
}

SdmModel train_from(SdmModel model, std::span<const Sample> data, const TrainConfig& config,
                    TrainReport* report) {
    if (data.empty()) throw ValidationError("training data is empty");
    if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
        throw ValidationError("learning rate must be finite and nonnegative");
    }
    if (config.epochs == 0) throw ValidationError("epochs must be at least 1");
    if (config.batch_size == 0) throw ValidationError("batch size must be at least 1");
    if (!(model.architecture() == config.architecture)) {
        throw ValidationError("model architecture does not match the training configuration");
    }
    for (const auto& s : data) {
        if (s.labels.size() != config.architecture.species_count) {
            throw ValidationError("sample label count does not match species count");
        }
    }

    TrainReport local;
    local.initial_loss = mean_loss(data, model, config.branches);
    if (!std::isfinite(local.initial_loss)) {
        throw RuntimeFailure("initial training loss is not finite");
    }

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(splitmix64(config.seed ^ 0x5D5EEDull));
    std::vector<double> params = model.parameters();
    std::vector<double> grad(params.size());

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t k = start; k < end; ++k) {
                const auto& s = data[order[k]];
                epoch_loss += loss_and_gradient(s.features, s.labels, model, grad, config.branches);
            }
            const double scale = config.learning_rate / static_cast<double>(end - start);
            if (scale != 0.0) {
                for (std::size_t i = 0; i < params.size(); ++i) params[i] -= scale * grad[i];
                model.set_parameters(params);
            }
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss) || !model.all_finite()) {
            std::ostringstream msg;
            msg << "training diverged in epoch " << epoch + 1 << " (loss " << epoch_loss
                << "); lower the learning rate";
            throw RuntimeFailure(msg.str());
        }
        local.epoch_losses.push_back(epoch_loss);
    }
    local.final_loss = mean_loss(data, model, config.branches);
    if (report) *report = std::move(local);
    return model;
}

std::vector<std::uint8_t> encode_checkpoint(const SdmModel& model) {
    using nlohmann::json;
    const auto& a = model.architecture();
    json meta;
    meta["shapes"] = json::object();
    for (const auto m : kModalities) {
        meta["shapes"][std::string(modality_name(m))] = a.input_shapes[static_cast<std::size_t>(m)];
    }
    meta["embedding_width"] = a.embedding_width;
    meta["layers_per_branch"] = a.layers_per_branch;
    meta["species_count"] = a.species_count;
    meta["activation"] = a.activation == Activation::Relu ? "relu" : "identity";
    meta["parameter_count"] = model.parameter_count();
    const std::string text = meta.dump();

    std::vector<std::uint8_t> out{'A', 'T', 'L', 'S', 'D', 'M', '1'};
    const auto len = static_cast<std::uint32_t>(text.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
    out.insert(out.end(), text.begin(), text.end());
    for (double p : model.parameters()) {
        const auto bits = checkpoint_f32_bits(p);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    return out;
}

SdmModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
    using nlohmann::json;
    constexpr std::string_view magic = "ATLSDM1";
    if (bytes.size() < magic.size() + 4 ||
        std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
        throw ValidationError("not an SDM checkpoint (bad magic)");
    }
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[magic.size() + i]) << (8 * i);
    const std::size_t meta_start = magic.size() + 4;
    if (bytes.size() < meta_start + len) throw ValidationError("checkpoint metadata truncated");

    SdmArchitecture arch;
    std::size_t declared = 0;
    try {
        const auto meta = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(meta_start),
                                      bytes.begin() + static_cast<std::ptrdiff_t>(meta_start + len));
        for (const auto m : kModalities) {
            arch.input_shapes[static_cast<std::size_t>(m)] =
                meta.at("shapes").at(std::string(modality_name(m))).get<std::vector<std::size_t>>();
        }
        arch.embedding_width = meta.at("embedding_width").get<std::size_t>();
        arch.layers_per_branch = meta.at("layers_per_branch").get<std::size_t>();
        arch.species_count = meta.at("species_count").get<std::size_t>();
        const auto act = meta.at("activation").get<std::string>();
        if (act == "relu") {
            arch.activation = Activation::Relu;
        } else if (act == "identity") {
            arch.activation = Activation::Identity;
        } else {
            throw ValidationError("unknown activation '" + act + "' in checkpoint");
        }
        declared = meta.at("parameter_count").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("checkpoint metadata invalid: ") + e.what());
    }

    SdmModel model(arch);
    if (declared != model.parameter_count()) {
        throw ValidationError("checkpoint parameter count disagrees with its architecture");
    }
    const std::size_t payload = bytes.size() - meta_start - len;
    if (payload != declared * 4) {
        throw ValidationError("checkpoint payload has " + std::to_string(payload) + " bytes, expected " +
                              std::to_string(declared * 4));
    }
    std::vector<double> params(declared);
    const std::uint8_t* p = bytes.data() + meta_start + len;
    for (std::size_t i = 0; i < declared; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[4 * i + b]) << (8 * b);
        params[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    model.set_parameters(params);
    if (!model.all_finite()) throw ValidationError("checkpoint contains non-finite parameters");
    return model;
}

void save_checkpoint(const SdmModel& model, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(model);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw RuntimeFailure("cannot write checkpoint " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw RuntimeFailure("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

SdmModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_checkpoint(bytes);
}

}  // namespace atlas

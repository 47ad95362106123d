#pragma once

// Desk-scale multimodal species distribution model.
//
// Three branches (Sentinel patch, climate cube, Landsat cube) each encode a
// flattened modality tensor through a stack of affine+activation layers into
// an embedding of width d. The three embeddings are concatenated and one
// affine layer maps the 3d vector to one logit per species; a sigmoid turns
// logits into independent presence probabilities. Training minimizes mean
// binary cross-entropy with plain minibatch SGD.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace atlas {

enum class Modality : std::uint8_t { Sentinel = 0, Climate = 1, Landsat = 2 };
inline constexpr std::size_t kModalityCount = 3;
inline constexpr std::array<Modality, kModalityCount> kModalities{Modality::Sentinel, Modality::Climate,
                                                                 Modality::Landsat};
std::string_view modality_name(Modality m) noexcept;

struct ModalityTensor {
    Modality modality = Modality::Sentinel;
    std::vector<std::size_t> shape;
    std::vector<double> values;

    std::size_t element_count() const noexcept;
    bool empty() const noexcept { return values.empty() && shape.empty(); }
};

// A missing modality is represented by an empty tensor.
struct Features {
    std::array<ModalityTensor, kModalityCount> tensors;

    const ModalityTensor& operator[](Modality m) const { return tensors[static_cast<std::size_t>(m)]; }
    ModalityTensor& operator[](Modality m) { return tensors[static_cast<std::size_t>(m)]; }
};

// Per-species presence probabilities, dense over the catalog.
using ProbabilityVector = std::vector<double>;

enum class Activation : std::uint8_t { Relu, Identity };

struct DenseLayer {
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::vector<double> weights;  // outputs x inputs, row-major
    std::vector<double> bias;     // outputs

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out) : inputs(in), outputs(out), weights(in * out), bias(out) {}
    std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct SdmArchitecture {
    std::array<std::vector<std::size_t>, kModalityCount> input_shapes;
    std::size_t embedding_width = 16;
    std::size_t layers_per_branch = 2;
    std::size_t species_count = 1;
    Activation activation = Activation::Relu;

    std::size_t input_size(Modality m) const noexcept;
    void validate() const;
    friend bool operator==(const SdmArchitecture&, const SdmArchitecture&) = default;
};

// Which branch embeddings feed the classifier; disabled branches contribute
// zeros. Used for per-modality evaluation.
struct BranchMask {
    std::array<bool, kModalityCount> enabled{true, true, true};

    static BranchMask only(Modality m) {
        BranchMask b{{false, false, false}};
        b.enabled[static_cast<std::size_t>(m)] = true;
        return b;
    }
    bool operator[](Modality m) const { return enabled[static_cast<std::size_t>(m)]; }
};

class SdmModel {
public:
    SdmModel() = default;
    // All parameters zero.
    explicit SdmModel(SdmArchitecture arch);
    // He-uniform encoder weights, Glorot-uniform classifier, zero biases.
    static SdmModel initialize(SdmArchitecture arch, std::uint64_t seed);

    const SdmArchitecture& architecture() const noexcept { return arch_; }
    std::size_t species_count() const noexcept { return arch_.species_count; }

    std::vector<DenseLayer>& branch(Modality m) { return branches_[static_cast<std::size_t>(m)]; }
    const std::vector<DenseLayer>& branch(Modality m) const {
        return branches_[static_cast<std::size_t>(m)];
    }
    DenseLayer& classifier() noexcept { return classifier_; }
    const DenseLayer& classifier() const noexcept { return classifier_; }

    // Declaration order: branches in modality order, each layer's weights
    // then bias, then the classifier's weights then bias.
    std::size_t parameter_count() const noexcept;
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> params);
    bool all_finite() const noexcept;

    friend bool operator==(const SdmModel&, const SdmModel&) = default;

private:
    SdmArchitecture arch_;
    std::array<std::vector<DenseLayer>, kModalityCount> branches_;
    DenseLayer classifier_;
};

// Branch embedding for one modality tensor.
std::vector<double> encode_modality(const ModalityTensor& input, const SdmModel& model);

std::vector<double> predict_logits(const Features& features, const SdmModel& model,
                                   BranchMask branches = {});
ProbabilityVector predict(const Features& features, const SdmModel& model, BranchMask branches = {});

inline constexpr double kProbabilityClamp = 1e-7;

// Mean over species of -[y ln p + (1-y) ln(1-p)], p clamped to
// [1e-7, 1 - 1e-7].
double bce_loss(std::span<const double> pred, std::span<const std::uint8_t> truth);

// Loss of one sample and the gradient of that loss with respect to every
// parameter (declaration order), accumulated into grad.
double loss_and_gradient(const Features& features, std::span<const std::uint8_t> labels,
                         const SdmModel& model, std::span<double> grad, BranchMask branches = {});

struct Sample {
    Features features;
    std::vector<std::uint8_t> labels;
};

struct TrainConfig {
    SdmArchitecture architecture;
    double learning_rate = 0.05;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    BranchMask branches;
};

struct TrainReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> epoch_losses;
};

double mean_loss(std::span<const Sample> data, const SdmModel& model, BranchMask branches = {});

// Fixed-epoch minibatch SGD from SdmModel::initialize(arch, seed). Sample
// order per epoch is a seeded shuffle; everything is deterministic.
SdmModel train(std::span<const Sample> data, const TrainConfig& config, TrainReport* report = nullptr);
// Continues from an existing model.
SdmModel train_from(SdmModel model, std::span<const Sample> data, const TrainConfig& config,
                    TrainReport* report = nullptr);

// Checkpoint layout: "ATLSDM1", u32 little-endian metadata length, JSON
// metadata (shapes, embedding width, layer count, species count,
// activation, parameter count), then every parameter as a little-endian f32
// in declaration order.
std::vector<std::uint8_t> encode_checkpoint(const SdmModel& model);
SdmModel decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const SdmModel& model, const std::filesystem::path& path);
SdmModel load_checkpoint(const std::filesystem::path& path);

}  // namespace atlas

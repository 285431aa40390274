#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "diffeo/sampler.hpp"

namespace diffeo::fno {

enum class Activation { Linear, Relu, Gelu, Tanh };

const char* to_string(Activation a);
Activation parse_activation(const std::string& name);

struct FnoConfig {
    int fourier_layers = 6;
    int width = 32;
    int modes_x = 12;
    int modes_y = 12;
    int lift_layers = 1;   // P
    int proj_layers = 3;   // Q
    int proj_hidden = 128;
    Activation activation = Activation::Gelu;

    double learning_rate = 1e-3;
    int batch_size = 32;
    int epochs = 800;
    int lr_decay_every = 100;
    double lr_decay = 0.5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    bool double_precision = false;

    static constexpr int kInputChannels = 3;  // a, x, y

    void validate() const;
    /// Throws ShapeMismatch unless rx, ry >= 2 * modes.
    void check_resolution(int rx, int ry) const;
};

void to_json(nlohmann::json& j, const FnoConfig& c);
void from_json(const nlohmann::json& j, FnoConfig& c);

/// Per-channel affine input normalization from training-set statistics.
struct Normalization {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> stddev{1.0, 1.0, 1.0};
};

Normalization fit_normalization(std::span<const GridSample> samples);

struct ParamSpec {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/// Layout of every parameter tensor for a configuration, in manifest order.
std::vector<ParamSpec> parameter_layout(const FnoConfig& config);

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct SpectralBasis;

/// Fourier neural operator Q o L_N o ... o L_1 o P over an rx x ry grid.
/// Fields are stored as (rx * ry) x channels matrices, point index i + rx * j.
///
/// The spectral convolution works with Fourier modes of period 1 over the
/// vertex-centred lattice x_i = i / (rx - 1), so a mode names the same
/// continuous function at every resolution. It keeps kx in [0, modes_x)
/// (half spectrum of a real field) and ky in [-modes_y, modes_y), with
/// coefficients from the periodic trapezoid rule, evaluated by separable
/// partial transforms.
/// Mode (0, -modes_y) is skipped because its conjugate is not retained; its
/// weights stay in the layout and receive zero gradient.
template <typename T>
class FnoModel {
public:
    explicit FnoModel(const FnoConfig& config);

    const FnoConfig& config() const { return config_; }
    const std::vector<ParamSpec>& layout() const { return layout_; }

    Vector<T>& params() { return params_; }
    const Vector<T>& params() const { return params_; }

    Normalization normalization;

    /// Uniform +-1/sqrt(fan_in) dense weights, spectral weights U[0, 1/width^2).
    void initialize(std::uint64_t seed);

    /// Normalized network input for a sample (rx * ry) x 3.
    Matrix<T> make_input(const GridSample& sample) const;

    Vector<T> forward(const Matrix<T>& input, int rx, int ry) const;

    /// Forward + reverse pass for one sample. Adds `weight` x d(loss)/d(theta)
    /// into `grad`, where loss = ||pred - target|| / ||target||. Returns the
    /// sample's loss.
    double forward_backward(const Matrix<T>& input, const Vector<T>& target, int rx, int ry, T weight,
                            Vector<T>& grad) const;

    /// Reverse pass driven by an arbitrary output cotangent d(loss)/d(pred).
    void backward_from(const Matrix<T>& input, const Vector<T>& output_grad, int rx, int ry, Vector<T>& grad) const;

private:
    struct Tape;

    std::shared_ptr<const SpectralBasis<T>> basis(int rx, int ry) const;
    Vector<T> run_forward(const Matrix<T>& input, int rx, int ry, Tape* tape) const;
    void run_backward(const Tape& tape, Vector<T> output_grad, int rx, int ry, Vector<T>& grad) const;

    FnoConfig config_;
    std::vector<ParamSpec> layout_;
    Vector<T> params_;

    // Shared between copies; keyed by resolution and modes.
    struct BasisCache;
    std::shared_ptr<BasisCache> bases_;
};

/// Mean over samples of ||pred - truth||_2 / ||truth||_2. Inputs are one
/// vector per sample. Throws ZeroTruthNorm for a truth norm below 1e-14.
double relative_l2(std::span<const std::vector<double>> pred, std::span<const std::vector<double>> truth);
double relative_l2(std::span<const double> pred, std::span<const double> truth);

/// Training state serialized with the model.
struct OptimizerState {
    std::int64_t step = 0;
    int epochs_completed = 0;
    std::vector<double> m;
    std::vector<double> v;
};

/// Everything a checkpoint stores; parameters as float64 regardless of the
/// training precision.
struct Checkpoint {
    FnoConfig config;
    Normalization normalization;
    std::vector<double> params;
    OptimizerState optimizer;
};

/// JSON header line (config, normalization, manifest of shapes and byte
/// offsets) followed by little-endian float64 blocks in manifest order.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
FnoModel<T> model_from_checkpoint(const Checkpoint& ckpt);
template <typename T>
Checkpoint checkpoint_from_model(const FnoModel<T>& model, const OptimizerState& optimizer);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    long long wall_ms = 0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochLog> log;
};

struct TrainOptions {
    /// Continue from this checkpoint (config must match).
    const Checkpoint* resume = nullptr;
    /// Stop after this many optimizer steps (0 = run all epochs).
    std::int64_t max_steps = 0;
    std::function<void(const EpochLog&)> on_epoch;
};

/// Mini-batch AdamW on the relative L2 loss with step learning-rate decay.
/// Deterministic for a fixed seed: shuffles come from per-epoch sub-streams
/// and gradients accumulate in sample order. Throws Diverged on a loss
/// above 1e6 or a non-finite loss.
TrainResult train(std::span<const GridSample> train_set, std::span<const GridSample> val_set,
                  const FnoConfig& config, const TrainOptions& options = {});

/// Prediction on the sample's grid; values attach to its physics points.
std::vector<double> predict(const Checkpoint& ckpt, const GridSample& sample);

struct PhysicsPrediction {
    std::vector<Vec2> points;   // x^pS
    std::vector<double> u;      // predicted solution at those points
};

PhysicsPrediction predict_physics(const Checkpoint& ckpt, const GridSample& sample);

std::string format_log_csv(const std::vector<EpochLog>& log);

}  // namespace diffeo::fno

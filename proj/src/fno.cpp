#include "diffeo/fno.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "diffeo/errors.hpp"
#include "diffeo/io.hpp"
#include "diffeo/rng.hpp"

namespace diffeo::fno {

using nlohmann::json;

const char* to_string(Activation a) {
    switch (a) {
        case Activation::Linear: return "linear";
        case Activation::Relu: return "relu";
        case Activation::Gelu: return "gelu";
        case Activation::Tanh: return "tanh";
    }
    return "?";
}

Activation parse_activation(const std::string& name) {
    if (name == "linear") return Activation::Linear;
    if (name == "relu") return Activation::Relu;
    if (name == "gelu") return Activation::Gelu;
    if (name == "tanh") return Activation::Tanh;
    fail(ErrorCode::InvalidInput, "unknown activation '" + name + "'");
}

void FnoConfig::validate() const {
    if (fourier_layers < 1 || width < 1 || modes_x < 1 || modes_y < 1 || lift_layers < 1 || proj_layers < 1 ||
        proj_hidden < 1)
        fail(ErrorCode::InvalidInput, "FNO layer counts, width and modes must be positive");
    if (!(learning_rate > 0) || batch_size < 1 || epochs < 0 || lr_decay_every < 1 || !(lr_decay > 0))
        fail(ErrorCode::InvalidInput, "invalid optimizer settings");
}

void FnoConfig::check_resolution(int rx, int ry) const {
    if (rx < 2 * modes_x || ry < 2 * modes_y)
        fail(ErrorCode::ShapeMismatch, "resolution " + std::to_string(rx) + "x" + std::to_string(ry) +
                                           " is below twice the retained modes (" + std::to_string(modes_x) + ", " +
                                           std::to_string(modes_y) + ")");
}

void to_json(json& j, const FnoConfig& c) {
    j = json{{"fourier_layers", c.fourier_layers},
             {"width", c.width},
             {"modes", {c.modes_x, c.modes_y}},
             {"lift_layers", c.lift_layers},
             {"proj_layers", c.proj_layers},
             {"proj_hidden", c.proj_hidden},
             {"activation", to_string(c.activation)},
             {"learning_rate", c.learning_rate},
             {"batch_size", c.batch_size},
             {"epochs", c.epochs},
             {"lr_decay_every", c.lr_decay_every},
             {"lr_decay", c.lr_decay},
             {"beta1", c.beta1},
             {"beta2", c.beta2},
             {"adam_eps", c.adam_eps},
             {"weight_decay", c.weight_decay},
             {"seed", c.seed},
             {"double_precision", c.double_precision}};
}

void from_json(const json& j, FnoConfig& c) {
    const auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("fourier_layers", c.fourier_layers);
    get("width", c.width);
    if (j.contains("modes")) {
        c.modes_x = j.at("modes")[0].get<int>();
        c.modes_y = j.at("modes")[1].get<int>();
    }
    get("lift_layers", c.lift_layers);
    get("proj_layers", c.proj_layers);
    get("proj_hidden", c.proj_hidden);
    if (j.contains("activation")) c.activation = parse_activation(j.at("activation").get<std::string>());
    get("learning_rate", c.learning_rate);
    get("batch_size", c.batch_size);
    get("epochs", c.epochs);
    get("lr_decay_every", c.lr_decay_every);
    get("lr_decay", c.lr_decay);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("adam_eps", c.adam_eps);
    get("weight_decay", c.weight_decay);
    get("seed", c.seed);
    get("double_precision", c.double_precision);
}

Normalization fit_normalization(std::span<const GridSample> samples) {
    if (samples.empty()) fail(ErrorCode::EmptyTrainingSet, "cannot fit normalization without samples");
    std::array<double, 3> sum{}, sq{};
    double count = 0;
    for (const auto& s : samples) {
        for (std::size_t p = 0; p < s.size(); ++p) {
            const double ch[3] = {s.param_field[p], s.physics_points[p].x(), s.physics_points[p].y()};
            for (int c = 0; c < 3; ++c) {
                sum[static_cast<std::size_t>(c)] += ch[c];
                sq[static_cast<std::size_t>(c)] += ch[c] * ch[c];
            }
        }
        count += static_cast<double>(s.size());
    }
    Normalization n;
    for (std::size_t c = 0; c < 3; ++c) {
        n.mean[c] = sum[c] / count;
        const double var = std::max(0.0, sq[c] / count - n.mean[c] * n.mean[c]);
        n.stddev[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    return n;
}

std::vector<ParamSpec> parameter_layout(const FnoConfig& c) {
    c.validate();
    std::vector<ParamSpec> out;
    std::size_t offset = 0;
    const auto add = [&](std::string name, std::vector<int> shape) {
        std::size_t size = 1;
        for (int d : shape) size *= static_cast<std::size_t>(d);
        out.push_back({std::move(name), std::move(shape), offset, size});
        offset += size;
    };
    const int w = c.width;
    for (int l = 0; l < c.lift_layers; ++l) {
        add("lift." + std::to_string(l) + ".weight", {w, l == 0 ? FnoConfig::kInputChannels : w});
        add("lift." + std::to_string(l) + ".bias", {w});
    }
    for (int l = 0; l < c.fourier_layers; ++l) {
        const std::string p = "fourier." + std::to_string(l);
        add(p + ".weight", {w, w});
        add(p + ".bias", {w});
        add(p + ".spectral_re", {2 * c.modes_y, c.modes_x, w, w});
        add(p + ".spectral_im", {2 * c.modes_y, c.modes_x, w, w});
    }
    for (int l = 0; l < c.proj_layers; ++l) {
        const int in = l == 0 ? w : c.proj_hidden;
        const int o = l == c.proj_layers - 1 ? 1 : c.proj_hidden;
        add("proj." + std::to_string(l) + ".weight", {o, in});
        add("proj." + std::to_string(l) + ".bias", {o});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Truncated real 2D DFT

// Fourier modes of period 1 over the vertex-centred lattice x_i = i / (rx - 1),
// so a mode index names the same continuous function at every resolution.
// Coefficients come from the periodic trapezoid rule (end points at half
// weight), which is exact for the retained band.
template <typename T>
struct SpectralBasis {
    int rx = 0, ry = 0, mx = 0, my = 0;
    int ky_count = 0;  // 2 * my
    int modes = 0;     // mx * ky_count; mode index m = kx + mx * q
    Matrix<T> cx, sx;      // mx x rx
    Matrix<T> cx_t, sx_t;  // rx x mx
    Matrix<T> cy, sy;      // ry x ky_count
    Matrix<T> cy_t, sy_t;  // ky_count x ry
    Matrix<T> cxw, sxw;    // cx, sx with trapezoid weights on the columns
    Matrix<T> cyw, syw;    // cy, sy with trapezoid weights on the rows
    Vector<T> qx, qy;      // trapezoid weights
    Vector<T> synth_scale; // c_0 = 1, c_kx = 2 otherwise (half spectrum in x)
    // (kx, ky) = (0, -my) has no retained conjugate partner; it is left out so
    // the retained set is conjugate-closed and the band projector exact.
    int unpaired_mode = 0;

    static Vector<T> trapezoid(int n) {
        Vector<T> q = Vector<T>::Constant(n, static_cast<T>(1.0 / (n - 1)));
        q[0] = q[n - 1] = static_cast<T>(0.5 / (n - 1));
        return q;
    }

    SpectralBasis(int rx_, int ry_, int mx_, int my_) : rx(rx_), ry(ry_), mx(mx_), my(my_) {
        ky_count = 2 * my;
        modes = mx * ky_count;
        unpaired_mode = mx * my;
        constexpr double two_pi = 6.283185307179586476925;
        const long px = rx - 1, py = ry - 1;
        cx.resize(mx, rx);
        sx.resize(mx, rx);
        for (int k = 0; k < mx; ++k)
            for (int i = 0; i < rx; ++i) {
                const double angle = two_pi * static_cast<double>((static_cast<long>(k) * i) % px) / px;
                cx(k, i) = static_cast<T>(std::cos(angle));
                sx(k, i) = static_cast<T>(std::sin(angle));
            }
        cy.resize(ry, ky_count);
        sy.resize(ry, ky_count);
        for (int q = 0; q < ky_count; ++q) {
            const long ky = q < my ? q : q - ky_count;
            for (int j = 0; j < ry; ++j) {
                long r = (ky * j) % py;
                if (r < 0) r += py;
                const double angle = two_pi * static_cast<double>(r) / py;
                cy(j, q) = static_cast<T>(std::cos(angle));
                sy(j, q) = static_cast<T>(std::sin(angle));
            }
        }
        cx_t = cx.transpose();
        sx_t = sx.transpose();
        cy_t = cy.transpose();
        sy_t = sy.transpose();
        qx = trapezoid(rx);
        qy = trapezoid(ry);
        cxw = cx * qx.asDiagonal();
        sxw = sx * qx.asDiagonal();
        cyw = qy.asDiagonal() * cy;
        syw = qy.asDiagonal() * sy;
        synth_scale.resize(mx);
        for (int k = 0; k < mx; ++k) synth_scale[k] = static_cast<T>(k == 0 ? 1.0 : 2.0);
    }

    // Retained modes of sum_{i,j} q_i q_j f(i,j) exp(-i theta) for every channel
    // column; without `weighted` the trapezoid weights are left out.
    void analyze(const Matrix<T>& field, Matrix<T>& re, Matrix<T>& im, bool weighted) const {
        const Matrix<T>& ax = weighted ? cxw : cx;
        const Matrix<T>& bx = weighted ? sxw : sx;
        const Matrix<T>& ay = weighted ? cyw : cy;
        const Matrix<T>& by = weighted ? syw : sy;
        const auto channels = field.cols();
        Eigen::Map<const Matrix<T>> grid(field.data(), rx, ry * channels);
        const Matrix<T> ar = ax * grid;
        const Matrix<T> ai = -(bx * grid);
        re.resize(modes, channels);
        im.resize(modes, channels);
        for (Eigen::Index c = 0; c < channels; ++c) {
            Eigen::Map<const Matrix<T>> arc(ar.data() + c * mx * ry, mx, ry);
            Eigen::Map<const Matrix<T>> aic(ai.data() + c * mx * ry, mx, ry);
            Eigen::Map<Matrix<T>> xr(re.col(c).data(), mx, ky_count);
            Eigen::Map<Matrix<T>> xi(im.col(c).data(), mx, ky_count);
            xr.noalias() = arc * ay;
            xr.noalias() += aic * by;
            xi.noalias() = aic * ay;
            xi.noalias() -= arc * by;
        }
    }

    // Re sum_{kx,ky} scale[kx] Y exp(+i theta) for every channel column; with
    // `weighted` each point is then multiplied by q_i q_j (adjoint of analysis).
    Matrix<T> synthesize(const Matrix<T>& re, const Matrix<T>& im, const Vector<T>& scale, bool weighted) const {
        const auto channels = re.cols();
        Matrix<T> br(mx, ry * channels), bi(mx, ry * channels);
        for (Eigen::Index c = 0; c < channels; ++c) {
            Eigen::Map<const Matrix<T>> yr(re.col(c).data(), mx, ky_count);
            Eigen::Map<const Matrix<T>> yi(im.col(c).data(), mx, ky_count);
            auto brc = br.middleCols(c * ry, ry);
            auto bic = bi.middleCols(c * ry, ry);
            brc.noalias() = yr * cy_t;
            brc.noalias() -= yi * sy_t;
            bic.noalias() = yr * sy_t;
            bic.noalias() += yi * cy_t;
        }
        br = scale.asDiagonal() * br;
        bi = scale.asDiagonal() * bi;
        Matrix<T> out(static_cast<Eigen::Index>(rx) * ry, channels);
        Eigen::Map<Matrix<T>> grid(out.data(), rx, ry * channels);
        grid.noalias() = cx_t * br;
        grid.noalias() -= sx_t * bi;
        if (weighted) {
            for (Eigen::Index c = 0; c < channels; ++c) {
                Eigen::Map<Matrix<T>> g(out.col(c).data(), rx, ry);
                g = qx.asDiagonal() * g * qy.asDiagonal();
            }
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Activations

namespace {

template <typename T>
void activate(Activation act, const Matrix<T>& z, Matrix<T>& out) {
    switch (act) {
        case Activation::Linear: out = z; return;
        case Activation::Relu: out = z.cwiseMax(T(0)); return;
        case Activation::Tanh: out = z.array().tanh().matrix(); return;
        case Activation::Gelu: {
            const T k0 = T(0.7978845608028654), k1 = T(0.044715);
            const auto za = z.array();
            out = (T(0.5) * za * (T(1) + (k0 * (za + k1 * za.cube())).tanh())).matrix();
            return;
        }
    }
}

// g <- g * act'(z)
template <typename T>
void activation_backward(Activation act, const Matrix<T>& z, Matrix<T>& g) {
    switch (act) {
        case Activation::Linear: return;
        case Activation::Relu: g = (z.array() > T(0)).select(g.array(), T(0)).matrix(); return;
        case Activation::Tanh: {
            const auto t = z.array().tanh();
            g.array() *= (T(1) - t * t);
            return;
        }
        case Activation::Gelu: {
            const T k0 = T(0.7978845608028654), k1 = T(0.044715);
            const auto za = z.array();
            const auto t = (k0 * (za + k1 * za.cube())).tanh().eval();
            g.array() *= T(0.5) * (T(1) + t) + T(0.5) * za * (T(1) - t * t) * k0 * (T(1) + T(3) * k1 * za.square());
            return;
        }
    }
}

template <typename T>
using RowMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using RowMapMut = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
void check_finite(const Matrix<T>& m, const std::string& where) {
    if (!m.allFinite()) fail(ErrorCode::NonFinite, "non-finite activations in " + where);
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

template <typename T>
struct FnoModel<T>::Tape {
    std::vector<Matrix<T>> lift_in, lift_pre;
    std::vector<Matrix<T>> four_in, four_re, four_im, four_pre;
    std::vector<Matrix<T>> proj_in, proj_pre;
};

template <typename T>
struct FnoModel<T>::BasisCache {
    std::mutex mutex;
    std::map<std::array<int, 4>, std::shared_ptr<const SpectralBasis<T>>> bases;
};

template <typename T>
FnoModel<T>::FnoModel(const FnoConfig& config)
    : config_(config), layout_(parameter_layout(config)), bases_(std::make_shared<BasisCache>()) {
    params_ = Vector<T>::Zero(static_cast<Eigen::Index>(layout_.back().offset + layout_.back().size));
    initialize(config.seed);
}

template <typename T>
void FnoModel<T>::initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "init"));
    const T spectral_scale = T(1) / static_cast<T>(config_.width * config_.width);
    for (const auto& spec : layout_) {
        T* p = params_.data() + spec.offset;
        const bool spectral = spec.name.find("spectral") != std::string::npos;
        const bool bias = spec.name.ends_with(".bias");
        int fan_in = 1;
        if (spectral) {
            for (std::size_t i = 0; i < spec.size; ++i) p[i] = spectral_scale * static_cast<T>(rng.uniform());
            continue;
        }
        if (bias) {
            // Fan-in of the matching weight, which precedes the bias in the layout.
            const auto& w = *(&spec - 1);
            fan_in = w.shape[1];
        } else {
            fan_in = spec.shape[1];
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < spec.size; ++i) p[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
}

template <typename T>
Matrix<T> FnoModel<T>::make_input(const GridSample& s) const {
    const auto n = static_cast<Eigen::Index>(s.size());
    if (s.param_field.size() != s.size() || s.physics_points.size() != s.size())
        fail(ErrorCode::ShapeMismatch, "sample " + s.id + " tensors do not match its resolution");
    Matrix<T> x(n, 3);
    const auto& nm = normalization;
    for (Eigen::Index p = 0; p < n; ++p) {
        const auto k = static_cast<std::size_t>(p);
        x(p, 0) = static_cast<T>((s.param_field[k] - nm.mean[0]) / nm.stddev[0]);
        x(p, 1) = static_cast<T>((s.physics_points[k].x() - nm.mean[1]) / nm.stddev[1]);
        x(p, 2) = static_cast<T>((s.physics_points[k].y() - nm.mean[2]) / nm.stddev[2]);
    }
    return x;
}

template <typename T>
std::shared_ptr<const SpectralBasis<T>> FnoModel<T>::basis(int rx, int ry) const {
    std::lock_guard lock(bases_->mutex);
    auto& slot = bases_->bases[{rx, ry, config_.modes_x, config_.modes_y}];
    if (!slot) slot = std::make_shared<SpectralBasis<T>>(rx, ry, config_.modes_x, config_.modes_y);
    return slot;
}

template <typename T>
Vector<T> FnoModel<T>::run_forward(const Matrix<T>& input, int rx, int ry, Tape* tape) const {
    config_.check_resolution(rx, ry);
    if (input.rows() != static_cast<Eigen::Index>(rx) * ry || input.cols() != FnoConfig::kInputChannels)
        fail(ErrorCode::ShapeMismatch, "input must be (rx*ry) x 3");
    if (!input.allFinite()) fail(ErrorCode::NonFinite, "non-finite network input");

    const auto spec = [&](std::size_t& k) -> const ParamSpec& { return layout_[k++]; };
    std::size_t k = 0;
    const T* theta = params_.data();
    const Activation act = config_.activation;
    const int w = config_.width;

    Matrix<T> h = input;
    Matrix<T> z;
    for (int l = 0; l < config_.lift_layers; ++l) {
        const auto& ws = spec(k);
        const auto& bs = spec(k);
        RowMap<T> weight(theta + ws.offset, ws.shape[0], ws.shape[1]);
        Eigen::Map<const Vector<T>> bias(theta + bs.offset, bs.shape[0]);
        if (tape) tape->lift_in.push_back(h);
        z.noalias() = h * weight.transpose();
        z.rowwise() += bias.transpose();
        if (l + 1 < config_.lift_layers) {
            if (tape) tape->lift_pre.push_back(z);
            activate(act, z, h);
        } else {
            h.swap(z);
        }
    }
    check_finite(h, "lifting");

    const auto b = basis(rx, ry);
    Matrix<T> re, im, yr, yi;
    for (int l = 0; l < config_.fourier_layers; ++l) {
        const auto& ws = spec(k);
        const auto& bs = spec(k);
        const auto& rs = spec(k);
        const auto& is = spec(k);
        RowMap<T> weight(theta + ws.offset, w, w);
        Eigen::Map<const Vector<T>> bias(theta + bs.offset, w);

        b->analyze(h, re, im, true);
        yr.resize(b->modes, w);
        yi.resize(b->modes, w);
        Vector<T> xr(w), xi(w);
        for (int m = 0; m < b->modes; ++m) {
            if (m == b->unpaired_mode) {
                yr.row(m).setZero();
                yi.row(m).setZero();
                continue;
            }
            RowMap<T> wr(theta + rs.offset + static_cast<std::size_t>(m) * w * w, w, w);
            RowMap<T> wi(theta + is.offset + static_cast<std::size_t>(m) * w * w, w, w);
            xr = re.row(m).transpose();
            xi = im.row(m).transpose();
            yr.row(m).noalias() = (wr * xr - wi * xi).transpose();
            yi.row(m).noalias() = (wr * xi + wi * xr).transpose();
        }
        z = b->synthesize(yr, yi, b->synth_scale, false);
        z.noalias() += h * weight.transpose();
        z.rowwise() += bias.transpose();

        if (tape) {
            tape->four_in.push_back(h);
            tape->four_re.push_back(re);
            tape->four_im.push_back(im);
        }
        if (l + 1 < config_.fourier_layers) {
            if (tape) tape->four_pre.push_back(z);
            activate(act, z, h);
        } else {
            h.swap(z);
        }
        check_finite(h, "Fourier layer " + std::to_string(l));
    }

    for (int l = 0; l < config_.proj_layers; ++l) {
        const auto& ws = spec(k);
        const auto& bs = spec(k);
        RowMap<T> weight(theta + ws.offset, ws.shape[0], ws.shape[1]);
        Eigen::Map<const Vector<T>> bias(theta + bs.offset, bs.shape[0]);
        if (tape) tape->proj_in.push_back(h);
        z.noalias() = h * weight.transpose();
        z.rowwise() += bias.transpose();
        if (l + 1 < config_.proj_layers) {
            if (tape) tape->proj_pre.push_back(z);
            activate(act, z, h);
        } else {
            h.swap(z);
        }
    }
    check_finite(h, "projection");
    return h.col(0);
}

template <typename T>
void FnoModel<T>::run_backward(const Tape& tape, Vector<T> output_grad, int rx, int ry, Vector<T>& grad) const {
    const T* theta = params_.data();
    T* g = grad.data();
    const Activation act = config_.activation;
    const int w = config_.width;

    // Walk the layout backwards: proj, fourier, lift.
    std::size_t k = layout_.size();
    const auto prev = [&]() -> const ParamSpec& { return layout_[--k]; };

    Matrix<T> gh = output_grad;  // (P x 1)
    for (int l = config_.proj_layers - 1; l >= 0; --l) {
        const auto& bs = prev();
        const auto& ws = prev();
        RowMap<T> weight(theta + ws.offset, ws.shape[0], ws.shape[1]);
        RowMapMut<T> gw(g + ws.offset, ws.shape[0], ws.shape[1]);
        Eigen::Map<Vector<T>> gb(g + bs.offset, bs.shape[0]);
        if (l + 1 < config_.proj_layers) activation_backward(act, tape.proj_pre[static_cast<std::size_t>(l)], gh);
        gw.noalias() += gh.transpose() * tape.proj_in[static_cast<std::size_t>(l)];
        gb.noalias() += gh.colwise().sum().transpose();
        gh = gh * weight;
    }

    const auto b = basis(rx, ry);
    const Vector<T> ones = Vector<T>::Ones(b->mx);
    Matrix<T> gyr, gyi, gxr(b->modes, w), gxi(b->modes, w);
    Vector<T> yr(w), yi(w), xr(w), xi(w);
    for (int l = config_.fourier_layers - 1; l >= 0; --l) {
        const auto& is = prev();
        const auto& rs = prev();
        const auto& bs = prev();
        const auto& ws = prev();
        const auto li = static_cast<std::size_t>(l);
        if (l + 1 < config_.fourier_layers) activation_backward(act, tape.four_pre[li], gh);

        RowMap<T> weight(theta + ws.offset, w, w);
        RowMapMut<T> gw(g + ws.offset, w, w);
        Eigen::Map<Vector<T>> gb(g + bs.offset, w);
        gw.noalias() += gh.transpose() * tape.four_in[li];
        gb.noalias() += gh.colwise().sum().transpose();

        // Adjoint of synthesis: unweighted analysis scaled by c_kx.
        b->analyze(gh, gyr, gyi, false);
        for (int m = 0; m < b->modes; ++m) {
            const T s = b->synth_scale[m % b->mx];
            gyr.row(m) *= s;
            gyi.row(m) *= s;
        }
        const Matrix<T>& re = tape.four_re[li];
        const Matrix<T>& im = tape.four_im[li];
        for (int m = 0; m < b->modes; ++m) {
            if (m == b->unpaired_mode) {
                gxr.row(m).setZero();
                gxi.row(m).setZero();
                continue;
            }
            const std::size_t off = static_cast<std::size_t>(m) * w * w;
            RowMap<T> wr(theta + rs.offset + off, w, w);
            RowMap<T> wi(theta + is.offset + off, w, w);
            RowMapMut<T> gwr(g + rs.offset + off, w, w);
            RowMapMut<T> gwi(g + is.offset + off, w, w);
            yr = gyr.row(m).transpose();
            yi = gyi.row(m).transpose();
            xr = re.row(m).transpose();
            xi = im.row(m).transpose();
            gwr.noalias() += yr * xr.transpose() + yi * xi.transpose();
            gwi.noalias() += yi * xr.transpose() - yr * xi.transpose();
            gxr.row(m).noalias() = (wr.transpose() * yr + wi.transpose() * yi).transpose();
            gxi.row(m).noalias() = (wr.transpose() * yi - wi.transpose() * yr).transpose();
        }
        Matrix<T> gin = b->synthesize(gxr, gxi, ones, true);
        gin.noalias() += gh * weight;
        gh.swap(gin);
    }

    for (int l = config_.lift_layers - 1; l >= 0; --l) {
        const auto& bs = prev();
        const auto& ws = prev();
        RowMap<T> weight(theta + ws.offset, ws.shape[0], ws.shape[1]);
        RowMapMut<T> gw(g + ws.offset, ws.shape[0], ws.shape[1]);
        Eigen::Map<Vector<T>> gb(g + bs.offset, bs.shape[0]);
        if (l + 1 < config_.lift_layers) activation_backward(act, tape.lift_pre[static_cast<std::size_t>(l)], gh);
        gw.noalias() += gh.transpose() * tape.lift_in[static_cast<std::size_t>(l)];
        gb.noalias() += gh.colwise().sum().transpose();
        if (l > 0) gh = gh * weight;
    }
}

template <typename T>
Vector<T> FnoModel<T>::forward(const Matrix<T>& input, int rx, int ry) const {
    return run_forward(input, rx, ry, nullptr);
}

template <typename T>
void FnoModel<T>::backward_from(const Matrix<T>& input, const Vector<T>& output_grad, int rx, int ry,
                                Vector<T>& grad) const {
    Tape tape;
    run_forward(input, rx, ry, &tape);
    if (grad.size() != params_.size()) grad = Vector<T>::Zero(params_.size());
    run_backward(tape, output_grad, rx, ry, grad);
}

template <typename T>
double FnoModel<T>::forward_backward(const Matrix<T>& input, const Vector<T>& target, int rx, int ry, T weight,
                                     Vector<T>& grad) const {
    Tape tape;
    const Vector<T> pred = run_forward(input, rx, ry, &tape);
    if (target.size() != pred.size()) fail(ErrorCode::ShapeMismatch, "target size does not match the grid");
    const Vector<T> err = pred - target;
    const double en = static_cast<double>(err.norm());
    const double tn = static_cast<double>(target.norm());
    if (tn < 1e-14) fail(ErrorCode::ZeroTruthNorm, "target norm below 1e-14");
    const double loss = en / tn;
    if (grad.size() != params_.size()) grad = Vector<T>::Zero(params_.size());
    if (en > 0) run_backward(tape, (err * static_cast<T>(static_cast<double>(weight) / (en * tn))).eval(), rx, ry, grad);
    return loss;
}

template class FnoModel<float>;
template class FnoModel<double>;

// ---------------------------------------------------------------------------
// Loss

double relative_l2(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) fail(ErrorCode::ShapeMismatch, "prediction and truth sizes differ");
    double e = 0, t = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        e += (pred[i] - truth[i]) * (pred[i] - truth[i]);
        t += truth[i] * truth[i];
    }
    if (std::sqrt(t) < 1e-14) fail(ErrorCode::ZeroTruthNorm, "truth norm below 1e-14");
    return std::sqrt(e) / std::sqrt(t);
}

double relative_l2(std::span<const std::vector<double>> pred, std::span<const std::vector<double>> truth) {
    if (pred.size() != truth.size() || pred.empty()) fail(ErrorCode::ShapeMismatch, "batch sizes differ or are empty");
    double sum = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += relative_l2(std::span(pred[i]), std::span(truth[i]));
    return sum / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json normalization_json(const Normalization& n) { return {{"mean", n.mean}, {"std", n.stddev}}; }

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto layout = parameter_layout(ckpt.config);
    const std::size_t total = layout.back().offset + layout.back().size;
    if (ckpt.params.size() != total) fail(ErrorCode::ShapeMismatch, "parameter count does not match config");
    const bool has_opt = ckpt.optimizer.m.size() == total && ckpt.optimizer.v.size() == total;

    json manifest = json::array();
    std::size_t offset = 0;
    const auto add_blocks = [&](const std::string& prefix) {
        for (const auto& s : layout) {
            manifest.push_back({{"name", prefix + s.name}, {"shape", s.shape}, {"offset", offset}, {"bytes", 8 * s.size}});
            offset += 8 * s.size;
        }
    };
    add_blocks("");
    if (has_opt) {
        add_blocks("adam.m.");
        add_blocks("adam.v.");
    }
    json header = {{"format", "diffeo-fno-checkpoint v1"},
                   {"config", ckpt.config},
                   {"normalization", normalization_json(ckpt.normalization)},
                   {"optimizer", {{"step", ckpt.optimizer.step}, {"epochs_completed", ckpt.optimizer.epochs_completed}}},
                   {"dtype", "float64 little-endian"},
                   {"manifest", manifest}};
    std::string out = header.dump() + "\n";
    io::append_f64_le(out, ckpt.params);
    if (has_opt) {
        io::append_f64_le(out, ckpt.optimizer.m);
        io::append_f64_le(out, ckpt.optimizer.v);
    }
    io::write_text(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string text = io::read_text(path);
    const auto nl = text.find('\n');
    if (nl == std::string::npos) fail(ErrorCode::Io, "checkpoint has no header line");
    const json header = json::parse(text.substr(0, nl));
    Checkpoint ckpt;
    ckpt.config = header.at("config").get<FnoConfig>();
    ckpt.normalization.mean = header.at("normalization").at("mean").get<std::array<double, 3>>();
    ckpt.normalization.stddev = header.at("normalization").at("std").get<std::array<double, 3>>();
    ckpt.optimizer.step = header.at("optimizer").at("step").get<std::int64_t>();
    ckpt.optimizer.epochs_completed = header.at("optimizer").at("epochs_completed").get<int>();

    const std::span<const char> body(text.data() + nl + 1, text.size() - nl - 1);
    const auto layout = parameter_layout(ckpt.config);
    const std::size_t total = layout.back().offset + layout.back().size;
    const auto& manifest = header.at("manifest");
    if (manifest.size() != layout.size() && manifest.size() != 3 * layout.size())
        fail(ErrorCode::Io, "checkpoint manifest does not match its config");
    std::vector<double> all(manifest.size() == layout.size() ? total : 3 * total);
    std::size_t filled = 0;
    for (const auto& entry : manifest) {
        const auto off = entry.at("offset").get<std::size_t>();
        const auto bytes = entry.at("bytes").get<std::size_t>();
        if (off + bytes > body.size()) fail(ErrorCode::Io, "checkpoint is truncated");
        io::read_f64_le(body.subspan(off, bytes), std::span(all).subspan(filled, bytes / 8));
        filled += bytes / 8;
    }
    ckpt.params.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(total));
    if (all.size() == 3 * total) {
        ckpt.optimizer.m.assign(all.begin() + static_cast<std::ptrdiff_t>(total), all.begin() + static_cast<std::ptrdiff_t>(2 * total));
        ckpt.optimizer.v.assign(all.begin() + static_cast<std::ptrdiff_t>(2 * total), all.end());
    }
    return ckpt;
}

template <typename T>
FnoModel<T> model_from_checkpoint(const Checkpoint& ckpt) {
    FnoModel<T> model(ckpt.config);
    if (ckpt.params.size() != static_cast<std::size_t>(model.params().size()))
        fail(ErrorCode::ShapeMismatch, "checkpoint parameter count does not match its config");
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) model.params()[static_cast<Eigen::Index>(i)] = static_cast<T>(ckpt.params[i]);
    model.normalization = ckpt.normalization;
    return model;
}

template <typename T>
Checkpoint checkpoint_from_model(const FnoModel<T>& model, const OptimizerState& optimizer) {
    Checkpoint c;
    c.config = model.config();
    c.normalization = model.normalization;
    c.params.assign(model.params().data(), model.params().data() + model.params().size());
    c.optimizer = optimizer;
    return c;
}

template FnoModel<float> model_from_checkpoint<float>(const Checkpoint&);
template FnoModel<double> model_from_checkpoint<double>(const Checkpoint&);
template Checkpoint checkpoint_from_model<float>(const FnoModel<float>&, const OptimizerState&);
template Checkpoint checkpoint_from_model<double>(const FnoModel<double>&, const OptimizerState&);

// ---------------------------------------------------------------------------
// Training

namespace {

template <typename T>
struct Example {
    Matrix<T> input;
    Vector<T> target;
    int rx, ry;
};

template <typename T>
std::vector<Example<T>> prepare(const FnoModel<T>& model, std::span<const GridSample> samples, bool labelled) {
    std::vector<Example<T>> out;
    for (const auto& s : samples) {
        model.config().check_resolution(s.rx, s.ry);
        if (!s.solution_field) {
            if (labelled) fail(ErrorCode::InvalidInput, "sample " + s.id + " has no solution field");
            continue;
        }
        Vector<T> target(static_cast<Eigen::Index>(s.size()));
        for (std::size_t p = 0; p < s.size(); ++p) target[static_cast<Eigen::Index>(p)] = static_cast<T>((*s.solution_field)[p]);
        if (static_cast<double>(target.norm()) < 1e-14) continue;  // ZeroTruthNorm: skipped
        out.push_back({model.make_input(s), std::move(target), s.rx, s.ry});
    }
    return out;
}

template <typename T>
double mean_loss(const FnoModel<T>& model, const std::vector<Example<T>>& set) {
    if (set.empty()) return std::numeric_limits<double>::quiet_NaN();
    double sum = 0;
    for (const auto& ex : set) {
        const Vector<T> pred = model.forward(ex.input, ex.rx, ex.ry);
        sum += static_cast<double>((pred - ex.target).norm()) / static_cast<double>(ex.target.norm());
    }
    return sum / static_cast<double>(set.size());
}

template <typename T>
TrainResult train_impl(std::span<const GridSample> train_set, std::span<const GridSample> val_set,
                       const FnoConfig& config, const TrainOptions& options) {
    if (train_set.empty()) fail(ErrorCode::EmptyTrainingSet, "training set is empty");
    FnoModel<T> model(config);
    OptimizerState opt;
    const auto n_params = model.params().size();
    Vector<T> m = Vector<T>::Zero(n_params), v = Vector<T>::Zero(n_params);
    if (options.resume) {
        const Checkpoint& r = *options.resume;
        json a = r.config, b = config;
        a.erase("epochs");
        b.erase("epochs");
        if (a != b) fail(ErrorCode::InvalidInput, "resume checkpoint config differs from the requested config");
        model = model_from_checkpoint<T>(r);
        opt = r.optimizer;
        if (opt.m.size() == static_cast<std::size_t>(n_params)) {
            for (Eigen::Index i = 0; i < n_params; ++i) {
                m[i] = static_cast<T>(opt.m[static_cast<std::size_t>(i)]);
                v[i] = static_cast<T>(opt.v[static_cast<std::size_t>(i)]);
            }
        }
    } else {
        model.normalization = fit_normalization(train_set);
    }
    const auto train = prepare(model, train_set, true);
    const auto val = prepare(model, val_set, false);
    if (train.empty()) fail(ErrorCode::EmptyTrainingSet, "no training sample has a non-zero solution");

    TrainResult result;
    Vector<T> grad = Vector<T>::Zero(n_params);
    std::vector<std::size_t> order(train.size());
    const auto t0 = std::chrono::steady_clock::now();
    bool stop = false;
    for (int epoch = opt.epochs_completed; epoch < config.epochs && !stop; ++epoch) {
        const double lr = config.learning_rate * std::pow(config.lr_decay, epoch / config.lr_decay_every);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        double loss_sum = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const T weight = static_cast<T>(1.0 / static_cast<double>(end - start));
            grad.setZero();
            double batch_loss = 0;
            for (std::size_t i = start; i < end; ++i) {
                const auto& ex = train[order[i]];
                batch_loss += model.forward_backward(ex.input, ex.target, ex.rx, ex.ry, weight, grad);
            }
            loss_sum += batch_loss;
            batch_loss /= static_cast<double>(end - start);
            if (!std::isfinite(batch_loss) || batch_loss > 1e6)
                fail(ErrorCode::Diverged, "batch loss " + std::to_string(batch_loss) + " at epoch " + std::to_string(epoch));
            if (!grad.allFinite()) fail(ErrorCode::NonFinite, "non-finite gradient at epoch " + std::to_string(epoch));

            ++opt.step;
            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(opt.step));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(opt.step));
            const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
            m = b1 * m + (T(1) - b1) * grad;
            v = b2 * v + (T(1) - b2) * grad.cwiseAbs2();
            const T step = static_cast<T>(lr / bc1);
            const T root_bc2 = static_cast<T>(std::sqrt(bc2));
            auto& theta = model.params();
            if (config.weight_decay > 0) theta *= static_cast<T>(1.0 - lr * config.weight_decay);
            theta.array() -= step * m.array() / (v.array().sqrt() / root_bc2 + static_cast<T>(config.adam_eps));
            if (options.max_steps > 0 && opt.step >= options.max_steps) {
                stop = true;
                loss_sum = loss_sum / static_cast<double>(end) * static_cast<double>(order.size());
                break;
            }
        }
        opt.epochs_completed = epoch + 1;
        EpochLog row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(order.size());
        row.val_loss = mean_loss(model, val);
        row.lr = lr;
        row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(row);
        if (options.on_epoch) options.on_epoch(row);
    }

    opt.m.assign(m.data(), m.data() + m.size());
    opt.v.assign(v.data(), v.data() + v.size());
    result.checkpoint = checkpoint_from_model(model, opt);
    return result;
}

}  // namespace

TrainResult train(std::span<const GridSample> train_set, std::span<const GridSample> val_set, const FnoConfig& config,
                  const TrainOptions& options) {
    config.validate();
    return config.double_precision ? train_impl<double>(train_set, val_set, config, options)
                                   : train_impl<float>(train_set, val_set, config, options);
}

namespace {

template <typename T>
std::vector<double> predict_impl(const Checkpoint& ckpt, const GridSample& sample) {
    const auto model = model_from_checkpoint<T>(ckpt);
    const Vector<T> out = model.forward(model.make_input(sample), sample.rx, sample.ry);
    std::vector<double> u(static_cast<std::size_t>(out.size()));
    for (Eigen::Index i = 0; i < out.size(); ++i) u[static_cast<std::size_t>(i)] = static_cast<double>(out[i]);
    return u;
}

}  // namespace

std::vector<double> predict(const Checkpoint& ckpt, const GridSample& sample) {
    return ckpt.config.double_precision ? predict_impl<double>(ckpt, sample) : predict_impl<float>(ckpt, sample);
}

PhysicsPrediction predict_physics(const Checkpoint& ckpt, const GridSample& sample) {
    return {sample.physics_points, predict(ckpt, sample)};
}

std::string format_log_csv(const std::vector<EpochLog>& log) {
    std::ostringstream ss;
    ss << "epoch,train_loss,val_loss,lr,wall_ms\n" << std::setprecision(9);
    for (const auto& r : log) ss << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.lr << ',' << r.wall_ms << '\n';
    return ss.str();
}

}  // namespace diffeo::fno

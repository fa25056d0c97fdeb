#ifndef ABBNN_NFGRAPH_HPP
#define ABBNN_NFGRAPH_HPP

#include <memory>
#include <string>
#include <vector>

#include "abbnn/graphspec.hpp"
#include "abbnn/tensor.hpp"

namespace abbnn {

// Training-time layer graph with manual forward/backward passes.
//
// Batch convention: activations are (N,C,H,W) for feature maps and (N,D)
// after flatten. Channel parameters index dim 1. Reductions run in row-major
// order so results are bit-reproducible.

// Two-step training: step1 binarizes activations only, step2 weights too.
// FullPrecision is the teacher mode (no binarization anywhere).
enum class Phase : std::uint8_t { Step1 = 1, Step2 = 2, FullPrecision = 3 };

// Hard = real sign/round forward (training/eval). Surrogate = the smooth
// companion whose exact derivative the backward pass implements; used by the
// finite-difference checks.
enum class Style : std::uint8_t { Hard, Surrogate };

struct ExecMode {
    Phase phase = Phase::Step1;
    Style style = Style::Hard;
};

// Network-wide activation selection mirroring the ablation arms: quantized
// RPReLU (per-channel learned exponents) or RLeakyReLU with a fixed slope.
struct ActivationMode {
    bool rleaky = false;
    int slope_exp = -3;
    static ActivationMode quantized() { return {false, 0}; }
    static ActivationMode rleaky_slope(int e) { return {true, e}; }
    bool operator==(const ActivationMode&) const = default;
};

struct Param {
    std::string name;
    FloatTensor value;
    FloatTensor grad;
    FloatTensor m, v; // Adam moments (exactly one pair per parameter)
    bool decay = false;
    bool agc = false;      // row-wise AGC applies (conv/dense weight matrices)
    bool last_layer = false;

    explicit Param(std::string n, Shape shape)
        : name(std::move(n)), value(shape), grad(shape), m(shape), v(std::move(shape)) {}
    void zero_grad() { grad.fill(0.0); }
};

// Per-forward execution context threaded through the layers.
struct ExecContext {
    ExecMode mode;
    // When set, every hard sign layer appends one byte per element (1 for +1).
    std::vector<std::vector<std::uint8_t>>* sign_sink = nullptr;
    // When set, counts the multiplication sites a BN-Free float executor
    // exercises (beta, alpha, PReLU, avg-pool), one per element visit.
    std::uint64_t* bnfree_mults = nullptr;
};

// ---------------------------------------------------------------------------
// Spec-level operations, exposed for direct testing and reused by the layers.
// ---------------------------------------------------------------------------

// Scaled weight standardization over rows (dim 0): What = gamma*(W-mu)/(sqrt(N)*sigma),
// sigma population-style. Throws on a zero-variance row, naming it.
FloatTensor sws_standardize(const FloatTensor& W, double gamma, std::vector<double>* mu_out = nullptr,
                            std::vector<double>* sigma_out = nullptr);
// Chain rule through the standardization: given dL/dWhat, returns dL/dW.
FloatTensor sws_backward(const FloatTensor& W, const FloatTensor& g_what, double gamma);

// sign((x/beta) + xi_c); xi indexed by dim 1 of x. beta > 0.
FloatTensor masked_sign_forward(const FloatTensor& x, const FloatTensor& xi, double beta);
// Surrogate derivative f'_A(u) = delta*sigma(delta*u)*(1-sigma(delta*u)).
void masked_sign_backward(const FloatTensor& grad_out, const FloatTensor& x, const FloatTensor& xi, double beta,
                          double delta, FloatTensor& grad_x, FloatTensor& grad_xi);

enum class SlopeRule { Quantized, Fixed, Continuous };

// f(y) = y for y>=0, else 2^e*(y+xi1_c)+xi2_c with e per SlopeRule:
// Quantized: round(a_c); Fixed: slope_exp; Continuous: a_c (round removed).
FloatTensor qrprelu_forward(const FloatTensor& y, const FloatTensor& a, const FloatTensor& xi1,
                            const FloatTensor& xi2, SlopeRule rule, int slope_exp = 0);
void qrprelu_backward(const FloatTensor& grad_out, const FloatTensor& y, const FloatTensor& a,
                      const FloatTensor& xi1, const FloatTensor& xi2, SlopeRule rule, int slope_exp,
                      FloatTensor& grad_y, FloatTensor& grad_a, FloatTensor& grad_xi1, FloatTensor& grad_xi2);

// Non-overlapping 2x2 mean over (N,C,H,W); spatial dims must be even.
FloatTensor avgpool_forward(const FloatTensor& x);
FloatTensor avgpool_backward(const FloatTensor& grad_out, const Shape& in_shape);

// Shortcut channel duplication: repeats the channel axis 'factor' times.
FloatTensor dup_channels(const FloatTensor& x, int factor);
FloatTensor dup_channels_backward(const FloatTensor& grad_out, int factor);

// Direct-loop convolution helpers. Weights are (c_out, c_in*k_h*k_w) with
// column index (ci*k_h + ky)*k_w + kx; zero padding.
struct ConvGeom {
    int c_in = 0, c_out = 0, k_h = 0, k_w = 0, stride = 1, pad = 0;
    int h_in = 0, w_in = 0, h_out = 0, w_out = 0;
    int fanin() const { return c_in * k_h * k_w; }
};
ConvGeom make_conv_geom(const LayerDesc& d, const TensorDims& in);
FloatTensor conv2d_forward(const FloatTensor& x, const FloatTensor& W, const ConvGeom& g);
FloatTensor conv2d_input_grad(const FloatTensor& gy, const FloatTensor& W, const ConvGeom& g, const Shape& x_shape);
FloatTensor conv2d_weight_grad(const FloatTensor& gy, const FloatTensor& x, const ConvGeom& g);

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

class Layer {
public:
    virtual ~Layer() = default;
    virtual FloatTensor forward(const FloatTensor& x, ExecContext& ctx) = 0;
    virtual FloatTensor backward(const FloatTensor& grad_out) = 0;
    virtual void collect_params(std::vector<Param*>& out) {}
    virtual std::string name() const = 0;
};

// Shared handling of binarizable weight matrices (BinConv / BinDense).
// Step2 uses kappa_c * sign(What_c) with kappa quantized to the nearest power
// of two; gradients pass through sign only where |What| <= 1 (hard-tanh STE)
// and treat kappa as constant. The surrogate style swaps sign for clamp and
// requires frozen kappa so finite differences see a locally constant scale.
struct BinWeight {
    Param W;
    FloatTensor what;     // standardized weights (cached per forward)
    FloatTensor w_eff;    // weights actually convolved
    std::vector<double> kappa;       // per-row scale used (1.0 outside step2)
    std::vector<double> frozen_kappa; // surrogate-mode scales
    bool frozen_valid = false;

    explicit BinWeight(std::string name, Shape shape) : W(std::move(name), std::move(shape)) {}
    void compute_eff(const ExecMode& mode);
    // gW from dL/dWeff, applying the STE mask and the SWS chain rule.
    FloatTensor grad_latent(const FloatTensor& g_eff, const ExecMode& mode) const;
    void freeze_scales();
    void clear_frozen();
};

class Network {
public:
    Network(GraphSpec spec, std::uint64_t seed, ActivationMode act);

    FloatTensor forward(const FloatTensor& x, ExecContext& ctx);
    FloatTensor forward(const FloatTensor& x, ExecMode mode) {
        ExecContext ctx{mode};
        return forward(x, ctx);
    }
    // Backward through the whole net; call right after forward on the same
    // batch. Returns dL/dinput.
    FloatTensor backward(const FloatTensor& grad_logits);

    std::vector<Param*> params();
    const GraphSpec& spec() const { return spec_; }
    const ActivationMode& activation() const { return act_; }
    const std::vector<double>& betas() const { return betas_; }

    // Surrogate-mode support: pin the power-of-two weight scales so finite
    // differences around the current point see them as constants.
    void freeze_scales();
    void clear_frozen_scales();

    std::size_t num_layers() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }

    // Names the first layer whose output contains a non-finite value, or ""
    // if everything is finite; used for numerical-abort diagnostics.
    std::string find_nonfinite_layer(const FloatTensor& x, ExecMode mode);

private:
    GraphSpec spec_;
    ActivationMode act_;
    std::vector<double> betas_;
    std::vector<std::unique_ptr<Layer>> layers_; // top level (blocks own their branch)
};

// Multiplications a BN-Free float executor performs at the beta/alpha/PReLU/
// avg-pool sites for a single forward pass of the given batch.
std::uint64_t count_bnfree_mults(Network& net, const FloatTensor& x, Phase phase);

} // namespace abbnn

#endif

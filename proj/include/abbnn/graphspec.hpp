#ifndef ABBNN_GRAPHSPEC_HPP
#define ABBNN_GRAPHSPEC_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "abbnn/common.hpp"

namespace abbnn {

// Declarative network description shared by trainer, exporter, engine and
// auditor. Text form is line oriented: one layer per line, "kind key=value"
// fields, '#' comments. See README for the grammar.

enum class LayerKind {
    FirstConv,  // full-precision boundary conv (+bias)
    BinConv,    // binarizable conv, no bias
    MaskedSign, // sign with per-channel bias xi; carries beta when it opens a block
    QRPReLU,    // negative slope 2^round(a), learnable a/xi1/xi2 per channel
    RLeaky,     // fixed negative slope 2^slope_exp, learnable xi1/xi2
    AvgPool,    // non-overlapping 2x2 mean
    BlockBegin, // NF residual block begin
    BlockEnd,
    Flatten,
    BinDense,  // binarizable dense, no bias
    LastDense, // full-precision boundary dense (+bias)
};

const char* layer_kind_name(LayerKind k);

struct LayerDesc {
    LayerKind kind{};
    // conv/dense geometry
    int out_channels = 0;
    int k_h = 0, k_w = 0;
    int stride = 1, pad = 0;
    // RLeaky
    int slope_exp = -3;
    // BlockBegin override; INT32_MIN means "use the graph default"
    int alpha_exp_override = INT32_MIN;
};

// Shape of the activation between layers: (c) for flattened vectors,
// (c,h,w) for feature maps.
struct TensorDims {
    int c = 0, h = 0, w = 0;
    bool flat = false; // true once Flatten has run; h=w=1
    std::size_t numel() const { return static_cast<std::size_t>(c) * h * w; }
    bool operator==(const TensorDims&) const = default;
    std::string str() const;
};

struct BlockInfo {
    std::size_t begin = 0;        // index of BlockBegin in layers
    std::size_t end = 0;          // index of BlockEnd
    int alpha_exp = -2;           // resolved for this block
    bool downsample = false;      // branch changes shape (stage transition)
    bool shortcut_pool = false;   // shortcut needs a 2x2 avg pool
    int dup_factor = 1;           // shortcut channel duplication factor
    TensorDims in_dims, out_dims; // resolved at validation time
};

struct GraphSpec {
    int in_c = 0, in_h = 0, in_w = 0;
    int alpha_exp = -2;   // alpha = 2^alpha_exp, integer exponent by construction
    double delta = 3.0;   // mask steepness

    std::vector<LayerDesc> layers;

    // Filled by validate():
    std::vector<TensorDims> pre_dims;  // input dims of each layer
    std::vector<TensorDims> post_dims; // output dims of each layer
    std::vector<BlockInfo> blocks;
    std::vector<int> block_of_layer;   // block index per layer, -1 outside

    // Parses and validates; throws FormatError / ConfigError with the
    // offending line or layer named.
    static GraphSpec parse_text(const std::string& text);
    static GraphSpec load_file(const std::string& path);

    std::string serialize() const; // canonical text form (round-trips)
    void validate();               // shape chaining + structural rules

    bool validated() const { return !pre_dims.empty() || layers.empty(); }
    int alpha_for_block(const BlockInfo& b) const {
        return b.alpha_exp;
    }
};

// Analytic signal-propagation trace: Var starts at 1, grows by alpha^2 per
// residual block, resets to 1 after a downsampling (stage-transition) block.
// beta_l = sqrt(Var at block entry); frozen constants thereafter.
std::vector<double> init_betas(const GraphSpec& spec);

} // namespace abbnn

#endif

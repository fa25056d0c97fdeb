#include "abbnn/graphspec.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace abbnn {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::FirstConv: return "firstconv";
        case LayerKind::BinConv: return "binconv";
        case LayerKind::MaskedSign: return "masked_sign";
        case LayerKind::QRPReLU: return "qrprelu";
        case LayerKind::RLeaky: return "rleaky";
        case LayerKind::AvgPool: return "avgpool";
        case LayerKind::BlockBegin: return "block";
        case LayerKind::BlockEnd: return "endblock";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::BinDense: return "dense";
        case LayerKind::LastDense: return "lastdense";
    }
    return "?";
}

std::string TensorDims::str() const {
    std::ostringstream os;
    if (flat)
        os << "(" << c << ")";
    else
        os << "(" << c << "," << h << "," << w << ")";
    return os.str();
}

namespace {

using KV = std::map<std::string, std::string>;

int parse_int(const KV& kv, const std::string& key, int line_no, std::optional<int> fallback = {}) {
    auto it = kv.find(key);
    if (it == kv.end()) {
        if (fallback) return *fallback;
        throw FormatError("graph line " + std::to_string(line_no) + ": missing field '" + key + "'");
    }
    try {
        std::size_t pos = 0;
        int v = std::stoi(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw FormatError("graph line " + std::to_string(line_no) + ": field '" + key + "' is not an integer: '" +
                          it->second + "'");
    }
}

double parse_double(const KV& kv, const std::string& key, int line_no, std::optional<double> fallback = {}) {
    auto it = kv.find(key);
    if (it == kv.end()) {
        if (fallback) return *fallback;
        throw FormatError("graph line " + std::to_string(line_no) + ": missing field '" + key + "'");
    }
    try {
        std::size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw FormatError("graph line " + std::to_string(line_no) + ": field '" + key + "' is not a number");
    }
}

struct ParsedLine {
    std::string kind;
    KV kv;
};

std::optional<ParsedLine> tokenize(const std::string& raw, int line_no) {
    std::string line = raw;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream is(line);
    std::string tok;
    if (!(is >> tok)) return std::nullopt; // blank / comment-only
    ParsedLine out;
    out.kind = tok;
    while (is >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos || eq == 0)
            throw FormatError("graph line " + std::to_string(line_no) + ": expected key=value, got '" + tok + "'");
        out.kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return out;
}

void check_known_keys(const ParsedLine& pl, std::initializer_list<const char*> known, int line_no) {
    for (const auto& [k, v] : pl.kv) {
        bool ok = false;
        for (const char* kk : known)
            if (k == kk) ok = true;
        if (!ok)
            throw FormatError("graph line " + std::to_string(line_no) + ": unknown field '" + k + "' for '" +
                              pl.kind + "'");
    }
}

void read_kernel(LayerDesc& d, const ParsedLine& pl, int line_no) {
    if (pl.kv.count("k")) {
        d.k_h = d.k_w = parse_int(pl.kv, "k", line_no);
    } else {
        d.k_h = parse_int(pl.kv, "kh", line_no);
        d.k_w = parse_int(pl.kv, "kw", line_no);
    }
    d.stride = parse_int(pl.kv, "stride", line_no, 1);
    d.pad = parse_int(pl.kv, "pad", line_no, 0);
    d.out_channels = parse_int(pl.kv, "out", line_no);
}

} // namespace

GraphSpec GraphSpec::parse_text(const std::string& text) {
    GraphSpec spec;
    std::istringstream is(text);
    std::string raw;
    int line_no = 0;
    bool saw_input = false;
    while (std::getline(is, raw)) {
        ++line_no;
        auto pl_opt = tokenize(raw, line_no);
        if (!pl_opt) continue;
        const ParsedLine& pl = *pl_opt;

        if (pl.kind == "input") {
            check_known_keys(pl, {"c", "h", "w"}, line_no);
            spec.in_c = parse_int(pl.kv, "c", line_no);
            spec.in_h = parse_int(pl.kv, "h", line_no);
            spec.in_w = parse_int(pl.kv, "w", line_no);
            saw_input = true;
            continue;
        }
        if (pl.kind == "options") {
            check_known_keys(pl, {"alpha_exp", "delta"}, line_no);
            spec.alpha_exp = parse_int(pl.kv, "alpha_exp", line_no, spec.alpha_exp);
            spec.delta = parse_double(pl.kv, "delta", line_no, spec.delta);
            continue;
        }

        LayerDesc d;
        if (pl.kind == "firstconv") {
            check_known_keys(pl, {"out", "k", "kh", "kw", "stride", "pad"}, line_no);
            d.kind = LayerKind::FirstConv;
            read_kernel(d, pl, line_no);
        } else if (pl.kind == "binconv") {
            check_known_keys(pl, {"out", "k", "kh", "kw", "stride", "pad"}, line_no);
            d.kind = LayerKind::BinConv;
            read_kernel(d, pl, line_no);
        } else if (pl.kind == "masked_sign") {
            check_known_keys(pl, {}, line_no);
            d.kind = LayerKind::MaskedSign;
        } else if (pl.kind == "qrprelu") {
            check_known_keys(pl, {}, line_no);
            d.kind = LayerKind::QRPReLU;
        } else if (pl.kind == "rleaky") {
            check_known_keys(pl, {"slope_exp"}, line_no);
            d.kind = LayerKind::RLeaky;
            d.slope_exp = parse_int(pl.kv, "slope_exp", line_no);
        } else if (pl.kind == "avgpool") {
            check_known_keys(pl, {}, line_no);
            d.kind = LayerKind::AvgPool;
        } else if (pl.kind == "block") {
            check_known_keys(pl, {"alpha_exp"}, line_no);
            d.kind = LayerKind::BlockBegin;
            d.alpha_exp_override = parse_int(pl.kv, "alpha_exp", line_no, INT32_MIN);
        } else if (pl.kind == "endblock") {
            check_known_keys(pl, {}, line_no);
            d.kind = LayerKind::BlockEnd;
        } else if (pl.kind == "flatten") {
            check_known_keys(pl, {}, line_no);
            d.kind = LayerKind::Flatten;
        } else if (pl.kind == "dense") {
            check_known_keys(pl, {"out"}, line_no);
            d.kind = LayerKind::BinDense;
            d.out_channels = parse_int(pl.kv, "out", line_no);
        } else if (pl.kind == "lastdense") {
            check_known_keys(pl, {"out"}, line_no);
            d.kind = LayerKind::LastDense;
            d.out_channels = parse_int(pl.kv, "out", line_no);
        } else {
            throw FormatError("graph line " + std::to_string(line_no) + ": unknown layer kind '" + pl.kind + "'");
        }
        spec.layers.push_back(d);
    }
    if (!saw_input) throw FormatError("graph description has no 'input' line");
    spec.validate();
    return spec;
}

GraphSpec GraphSpec::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open graph description: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_text(ss.str());
}

std::string GraphSpec::serialize() const {
    std::ostringstream os;
    os << "input c=" << in_c << " h=" << in_h << " w=" << in_w << "\n";
    os << "options alpha_exp=" << alpha_exp << " delta=" << delta << "\n";
    for (const LayerDesc& d : layers) {
        os << layer_kind_name(d.kind);
        switch (d.kind) {
            case LayerKind::FirstConv:
            case LayerKind::BinConv:
                os << " out=" << d.out_channels << " kh=" << d.k_h << " kw=" << d.k_w << " stride=" << d.stride
                   << " pad=" << d.pad;
                break;
            case LayerKind::RLeaky: os << " slope_exp=" << d.slope_exp; break;
            case LayerKind::BlockBegin:
                if (d.alpha_exp_override != INT32_MIN) os << " alpha_exp=" << d.alpha_exp_override;
                break;
            case LayerKind::BinDense:
            case LayerKind::LastDense: os << " out=" << d.out_channels; break;
            default: break;
        }
        os << "\n";
    }
    return os.str();
}

void GraphSpec::validate() {
    if (in_c <= 0 || in_h <= 0 || in_w <= 0)
        throw ConfigError("graph input dims must be positive, got c=" + std::to_string(in_c) +
                          " h=" + std::to_string(in_h) + " w=" + std::to_string(in_w));
    if (layers.empty()) throw ConfigError("graph has no layers");
    if (layers.front().kind != LayerKind::FirstConv)
        throw ConfigError("first layer must be the full-precision 'firstconv'");
    if (layers.back().kind != LayerKind::LastDense)
        throw ConfigError("last layer must be the full-precision 'lastdense'");

    pre_dims.assign(layers.size(), {});
    post_dims.assign(layers.size(), {});
    block_of_layer.assign(layers.size(), -1);
    blocks.clear();

    TensorDims cur{in_c, in_h, in_w, false};
    int open_block = -1;
    TensorDims block_entry{};

    auto conv_out = [](const TensorDims& in, const LayerDesc& d, std::size_t li) {
        if (in.flat)
            throw ConfigError("layer " + std::to_string(li) + " (" + layer_kind_name(d.kind) +
                              "): convolution after flatten");
        const int h = (in.h + 2 * d.pad - d.k_h) / d.stride + 1;
        const int w = (in.w + 2 * d.pad - d.k_w) / d.stride + 1;
        if (d.k_h <= 0 || d.k_w <= 0 || d.stride <= 0 || d.pad < 0 || d.out_channels <= 0 || h <= 0 || w <= 0)
            throw ConfigError("layer " + std::to_string(li) + ": bad convolution geometry");
        return TensorDims{d.out_channels, h, w, false};
    };

    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerDesc& d = layers[i];
        pre_dims[i] = cur;
        block_of_layer[i] = open_block;
        switch (d.kind) {
            case LayerKind::FirstConv:
                if (i != 0) throw ConfigError("firstconv allowed only as the first layer");
                cur = conv_out(cur, d, i);
                break;
            case LayerKind::BinConv: {
                if (i == 0 || layers[i - 1].kind != LayerKind::MaskedSign)
                    throw ConfigError("layer " + std::to_string(i) +
                                      ": binconv must be immediately preceded by masked_sign");
                cur = conv_out(cur, d, i);
                break;
            }
            case LayerKind::MaskedSign: break; // shape preserved
            case LayerKind::QRPReLU:
            case LayerKind::RLeaky: break; // shape preserved
            case LayerKind::AvgPool:
                if (cur.flat) throw ConfigError("layer " + std::to_string(i) + ": avgpool after flatten");
                if (cur.h % 2 != 0 || cur.w % 2 != 0)
                    throw ConfigError("layer " + std::to_string(i) + ": avgpool needs even spatial dims, got " +
                                      cur.str());
                cur.h /= 2;
                cur.w /= 2;
                break;
            case LayerKind::BlockBegin: {
                if (open_block >= 0) throw ConfigError("layer " + std::to_string(i) + ": nested residual block");
                BlockInfo b;
                b.begin = i;
                b.alpha_exp = d.alpha_exp_override != INT32_MIN ? d.alpha_exp_override : alpha_exp;
                b.in_dims = cur;
                blocks.push_back(b);
                open_block = static_cast<int>(blocks.size()) - 1;
                block_entry = cur;
                block_of_layer[i] = open_block;
                break;
            }
            case LayerKind::BlockEnd: {
                if (open_block < 0) throw ConfigError("layer " + std::to_string(i) + ": endblock without block");
                BlockInfo& b = blocks[open_block];
                if (i == b.begin + 1) throw ConfigError("layer " + std::to_string(i) + ": empty residual block");
                if (layers[b.begin + 1].kind != LayerKind::MaskedSign)
                    throw ConfigError("block at layer " + std::to_string(b.begin) +
                                      ": branch must start with masked_sign (carries the beta division)");
                b.end = i;
                b.out_dims = cur;
                // Shortcut legality: identity, or 2x2 pool and/or integer
                // channel duplication.
                if (cur.flat || block_entry.flat)
                    throw ConfigError("block at layer " + std::to_string(b.begin) + ": flatten inside block");
                const bool spatial_same = cur.h == block_entry.h && cur.w == block_entry.w;
                const bool spatial_half = cur.h * 2 == block_entry.h && cur.w * 2 == block_entry.w;
                if (!spatial_same && !spatial_half)
                    throw ConfigError("block at layer " + std::to_string(b.begin) + ": branch maps " +
                                      block_entry.str() + " to " + cur.str() +
                                      "; shortcut supports identity or one 2x2 downsample");
                if (cur.c % block_entry.c != 0)
                    throw ConfigError("block at layer " + std::to_string(b.begin) +
                                      ": branch channels must be a multiple of input channels for the duplicated "
                                      "shortcut, got " +
                                      block_entry.str() + " -> " + cur.str());
                b.shortcut_pool = spatial_half;
                b.dup_factor = cur.c / block_entry.c;
                b.downsample = !(spatial_same && b.dup_factor == 1);
                block_of_layer[i] = open_block;
                open_block = -1;
                break;
            }
            case LayerKind::Flatten:
                if (open_block >= 0) throw ConfigError("layer " + std::to_string(i) + ": flatten inside block");
                cur = TensorDims{static_cast<int>(cur.numel()), 1, 1, true};
                break;
            case LayerKind::BinDense: {
                if (!cur.flat) throw ConfigError("layer " + std::to_string(i) + ": dense requires flatten first");
                if (i == 0 || layers[i - 1].kind != LayerKind::MaskedSign)
                    throw ConfigError("layer " + std::to_string(i) +
                                      ": dense must be immediately preceded by masked_sign");
                if (d.out_channels <= 0) throw ConfigError("layer " + std::to_string(i) + ": bad dense width");
                cur = TensorDims{d.out_channels, 1, 1, true};
                break;
            }
            case LayerKind::LastDense: {
                if (i + 1 != layers.size()) throw ConfigError("lastdense allowed only as the final layer");
                if (!cur.flat)
                    throw ConfigError("layer " + std::to_string(i) + ": lastdense requires flatten first");
                if (d.out_channels <= 0) throw ConfigError("layer " + std::to_string(i) + ": bad dense width");
                cur = TensorDims{d.out_channels, 1, 1, true};
                break;
            }
        }
        post_dims[i] = cur;
    }
    if (open_block >= 0)
        throw ConfigError("block at layer " + std::to_string(blocks[open_block].begin) + " never closed");
}

std::vector<double> init_betas(const GraphSpec& spec) {
    std::vector<double> betas;
    betas.reserve(spec.blocks.size());
    double var = 1.0;
    for (const BlockInfo& b : spec.blocks) {
        betas.push_back(std::sqrt(var));
        if (b.downsample) {
            var = 1.0; // stage transition: trace restarts
        } else {
            const double alpha = pow2d(b.alpha_exp);
            var += alpha * alpha;
        }
    }
    return betas;
}

} // namespace abbnn

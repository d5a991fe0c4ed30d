#include "mcflow/dit.hpp"

#include <cmath>

#include "mcflow/error.hpp"
#include "mcflow/mcrope.hpp"

namespace mcflow {
namespace {

// Timestep features use sin/cos(kTimeScale * t * w_k); a small scale keeps
// the embedding smooth in t.
constexpr double kTimeScale = 10.0;

void sincos_into(double pos, std::size_t dim, double* out) {
    const std::size_t half = dim / 2;
    for (std::size_t k = 0; k < half; ++k) {
        const double w = std::exp(-std::log(kRopeBase) * static_cast<double>(k) / static_cast<double>(half));
        out[k] = std::sin(pos * w);
        out[half + k] = std::cos(pos * w);
    }
}

std::string block(std::size_t l, const char* name) { return "blocks." + std::to_string(l) + "." + name; }

const ad::Var& get(const VarMap& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw Error("missing model parameter " + name);
    return it->second;
}

ad::Var lin(const ad::Var& x, const VarMap& p, const std::string& prefix) {
    return ad::linear(x, get(p, prefix + ".w"), get(p, prefix + ".b"));
}

// layer_norm(x) * (1 + scale) + shift, broadcast over tokens.
ad::Var modulate(const ad::Var& x, const ad::Var& shift, const ad::Var& scale) {
    return ad::add_rowwise(ad::mul_rowwise(ad::layer_norm(x), ad::add_scalar(scale, 1.0)), shift);
}

}  // namespace

void ModelConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error("invalid model config: " + m); };
    if (n_heads == 0 || head_dim == 0 || model_dim != n_heads * head_dim) {
        fail("model_dim " + std::to_string(model_dim) + " must equal n_heads * head_dim (" + std::to_string(n_heads) +
             " * " + std::to_string(head_dim) + ")");
    }
    if (head_dim % 8 != 0) fail("head_dim " + std::to_string(head_dim) + " must be a multiple of 8");
    if (model_dim % 4 != 0) fail("model_dim must be a multiple of 4");
    if (n_layers == 0) fail("n_layers must be positive");
    if (patch_t != 1) fail("temporal patch size must be 1");
    if (patch_s == 0) fail("spatial patch size must be positive");
    if (n_scenarios == 0) fail("n_scenarios must be positive");
    if (channels == 0) fail("channels must be positive");
    if (mlp_ratio == 0) fail("mlp_ratio must be positive");
    if (max_tokens == 0) fail("max_tokens must be positive");
}

std::size_t TokenLayout::frames() const {
    std::size_t f = 0;
    for (auto l : latent_lengths) f += l;
    return f;
}

TokenLayout make_layout(const std::vector<std::size_t>& latent_lengths, std::size_t channels, std::size_t height,
                        std::size_t width, std::size_t patch) {
    if (patch == 0 || height % patch || width % patch) {
        throw ShapeError("latent " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not divisible by patch size " + std::to_string(patch));
    }
    TokenLayout layout;
    layout.latent_lengths = latent_lengths;
    layout.channels = channels;
    layout.height = height;
    layout.width = width;
    layout.patch = patch;
    const auto u = mc_temporal_indices(latent_lengths);
    for (std::size_t f = 0; f < u.size(); ++f)
        for (std::size_t y = 0; y < height / patch; ++y)
            for (std::size_t x = 0; x < width / patch; ++x) {
                layout.coords.push_back({f, y, x});
                layout.u_values.push_back(u[f]);
            }
    return layout;
}

TokenLayout make_layout(const MultiChunkLatent& latent, std::size_t patch) {
    return make_layout(latent.latent_lengths(), latent.concat.dim(1), latent.concat.dim(2), latent.concat.dim(3),
                       patch);
}

Tensor patch_rows(const Tensor& latent, const TokenLayout& layout) {
    const Shape want{layout.frames(), layout.channels, layout.height, layout.width};
    if (latent.shape() != want) {
        throw ShapeError("patch_rows: latent " + shape_str(latent.shape()) + " does not match layout " + shape_str(want));
    }
    const std::size_t s = layout.patch, c = layout.channels, h = layout.height, w = layout.width;
    const std::size_t pd = c * s * s;
    Tensor rows({layout.tokens(), pd});
    for (std::size_t n = 0; n < layout.tokens(); ++n) {
        const auto [f, py, px] = layout.coords[n];
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t dy = 0; dy < s; ++dy)
                for (std::size_t dx = 0; dx < s; ++dx)
                    rows[n * pd + (ch * s + dy) * s + dx] = latent[((f * c + ch) * h + py * s + dy) * w + px * s + dx];
    }
    return rows;
}

Tensor unpatch_rows(const Tensor& rows, const TokenLayout& layout) {
    const std::size_t s = layout.patch, c = layout.channels, h = layout.height, w = layout.width;
    const std::size_t pd = c * s * s;
    if (rows.shape() != Shape{layout.tokens(), pd}) {
        throw ShapeError("unpatch_rows: rows " + shape_str(rows.shape()) + " do not match layout " +
                         shape_str({layout.tokens(), pd}));
    }
    Tensor latent({layout.frames(), c, h, w});
    for (std::size_t n = 0; n < layout.tokens(); ++n) {
        const auto [f, py, px] = layout.coords[n];
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t dy = 0; dy < s; ++dy)
                for (std::size_t dx = 0; dx < s; ++dx)
                    latent[((f * c + ch) * h + py * s + dy) * w + px * s + dx] = rows[n * pd + (ch * s + dy) * s + dx];
    }
    return latent;
}

TokenGrid patchify(const MultiChunkLatent& latent, const Tensor& weight, const Tensor& bias, std::size_t patch) {
    TokenGrid grid{Tensor(), make_layout(latent, patch)};
    const Tensor rows = patch_rows(latent.concat, grid.layout);
    grid.tokens = ad::linear(ad::constant(rows), ad::constant(weight), ad::constant(bias)).value();
    return grid;
}

Tensor unpatchify(const Tensor& rows, const TokenLayout& layout) { return unpatch_rows(rows, layout); }

Tensor coordinate_embedding(const TokenLayout& layout, std::size_t model_dim) {
    const std::size_t dt = model_dim / 2, ds = model_dim / 4;
    Tensor e({layout.tokens(), model_dim});
    for (std::size_t n = 0; n < layout.tokens(); ++n) {
        double* row = e.data().data() + n * model_dim;
        sincos_into(layout.u_values[n], dt, row);
        sincos_into(static_cast<double>(layout.coords[n][1]), ds, row + dt);
        sincos_into(static_cast<double>(layout.coords[n][2]), ds, row + dt + ds);
    }
    return e;
}

Tensor token_angles(const TokenLayout& layout, std::size_t head_dim) {
    std::vector<double> ys, xs;
    for (const auto& c : layout.coords) {
        ys.push_back(static_cast<double>(c[1]));
        xs.push_back(static_cast<double>(c[2]));
    }
    return rope_angle_table(layout.u_values, ys, xs, head_dim);
}

Tensor timestep_features(double t, std::size_t model_dim) {
    if (!(t >= 0.0 && t <= 1.0)) throw Error("timestep " + std::to_string(t) + " outside [0, 1]");
    Tensor f({model_dim});
    sincos_into(kTimeScale * t, model_dim, f.data().data());
    return f;
}

ParamStore init_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t d = cfg.model_dim, pd = cfg.patch_dim(), hidden = cfg.mlp_ratio * d;
    ParamStore store;
    auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        store.entries[name + ".w"] = rand_uniform({in, out}, rng, -bound, bound);
        store.entries[name + ".b"] = rand_uniform({out}, rng, -bound, bound);
    };
    auto zero = [&](const std::string& name, std::size_t in, std::size_t out) {
        store.entries[name + ".w"] = Tensor({in, out});
        store.entries[name + ".b"] = Tensor({out});
    };
    linear("embed", pd, d);
    linear("time.1", d, d);
    linear("time.2", d, d);
    store.entries["scenario.table"] = randn({cfg.n_scenarios, d}, rng);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        zero(block(l, "mod"), d, 6 * d);
        linear(block(l, "q"), d, d);
        linear(block(l, "k"), d, d);
        linear(block(l, "v"), d, d);
        linear(block(l, "out"), d, d);
        linear(block(l, "mlp1"), d, hidden);
        linear(block(l, "mlp2"), hidden, d);
    }
    zero("final.mod", d, 2 * d);
    zero("final.out", d, pd);
    return store;
}

ad::Var condition(const VarMap& p, const ModelConfig& cfg, double t, std::size_t scenario) {
    if (scenario >= cfg.n_scenarios) {
        throw Error("scenario id " + std::to_string(scenario) + " outside [0, " + std::to_string(cfg.n_scenarios) + ")");
    }
    const ad::Var f = ad::constant(timestep_features(t, cfg.model_dim).reshaped({1, cfg.model_dim}));
    const ad::Var e = lin(ad::silu(lin(f, p, "time.1")), p, "time.2");
    return ad::add(ad::reshape(e, {cfg.model_dim}), ad::row(get(p, "scenario.table"), scenario));
}

Tensor timestep_embed(const ParamStore& store, const ModelConfig& cfg, double t) {
    const auto p = store.leaves();
    const ad::Var f = ad::constant(timestep_features(t, cfg.model_dim).reshaped({1, cfg.model_dim}));
    return ad::reshape(lin(ad::silu(lin(f, p, "time.1")), p, "time.2"), {cfg.model_dim}).value();
}

DitContext make_context(const TokenLayout& layout, const ModelConfig& cfg) {
    cfg.validate();
    if (layout.tokens() > cfg.max_tokens) {
        throw Error("token count " + std::to_string(layout.tokens()) + " exceeds the configured maximum of " +
                    std::to_string(cfg.max_tokens));
    }
    if (layout.patch != cfg.patch_s || layout.channels != cfg.channels) {
        throw ShapeError("layout (channels " + std::to_string(layout.channels) + ", patch " +
                         std::to_string(layout.patch) + ") does not match the model config (channels " +
                         std::to_string(cfg.channels) + ", patch " + std::to_string(cfg.patch_s) + ")");
    }
    DitContext ctx{layout, token_angles(layout, cfg.head_dim), Tensor()};
    if (cfg.abs_pos) ctx.coord_embed = coordinate_embedding(layout, cfg.model_dim);
    return ctx;
}

ad::Var dit_rows(const Tensor& z, const DitContext& ctx, double t, std::size_t scenario, const VarMap& p,
                 const ModelConfig& cfg) {
    const std::size_t d = cfg.model_dim;
    const ad::Var c = ad::silu(ad::reshape(condition(p, cfg, t, scenario), {1, d}));

    ad::Var x = lin(ad::constant(patch_rows(z, ctx.layout)), p, "embed");
    if (cfg.abs_pos) x = ad::add(x, ad::constant(ctx.coord_embed));

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const ad::Var mod = ad::reshape(lin(c, p, block(l, "mod")), {6, d});
        const ad::Var h = modulate(x, ad::row(mod, 0), ad::row(mod, 1));
        const ad::Var q = ad::rope(lin(h, p, block(l, "q")), ctx.angles);
        const ad::Var k = ad::rope(lin(h, p, block(l, "k")), ctx.angles);
        const ad::Var v = lin(h, p, block(l, "v"));
        const ad::Var a = lin(ad::attention(q, k, v, cfg.n_heads), p, block(l, "out"));
        x = ad::add(x, ad::mul_rowwise(a, ad::row(mod, 2)));
        const ad::Var h2 = modulate(x, ad::row(mod, 3), ad::row(mod, 4));
        const ad::Var m = lin(ad::gelu(lin(h2, p, block(l, "mlp1"))), p, block(l, "mlp2"));
        x = ad::add(x, ad::mul_rowwise(m, ad::row(mod, 5)));
    }
    const ad::Var fmod = ad::reshape(lin(c, p, "final.mod"), {2, d});
    return lin(modulate(x, ad::row(fmod, 0), ad::row(fmod, 1)), p, "final.out");
}

Tensor dit_forward(const Tensor& z, const DitContext& ctx, double t, std::size_t scenario, const ParamStore& store,
                   const ModelConfig& cfg) {
    VarMap p;
    for (const auto& [name, value] : store.entries) p.emplace(name, ad::constant(value));
    return unpatch_rows(dit_rows(z, ctx, t, scenario, p, cfg).value(), ctx.layout);
}

Tensor config_tensor(const ModelConfig& cfg) {
    return Tensor::from({static_cast<double>(cfg.model_dim), static_cast<double>(cfg.n_layers),
                         static_cast<double>(cfg.n_heads), static_cast<double>(cfg.head_dim),
                         static_cast<double>(cfg.patch_t), static_cast<double>(cfg.patch_s),
                         static_cast<double>(cfg.n_scenarios), static_cast<double>(cfg.channels),
                         static_cast<double>(cfg.mlp_ratio), static_cast<double>(cfg.max_tokens),
                         cfg.abs_pos ? 1.0 : 0.0});
}

ModelConfig config_from_tensor(const Tensor& t) {
    if (t.rank() != 1 || t.size() != 11) throw Error("model config tensor has shape " + shape_str(t.shape()));
    auto n = [&](std::size_t i) {
        const double v = t[i];
        if (!(v >= 0.0) || v != std::floor(v)) throw Error("model config field " + std::to_string(i) + " is not a count");
        return static_cast<std::size_t>(v);
    };
    ModelConfig cfg;
    cfg.model_dim = n(0);
    cfg.n_layers = n(1);
    cfg.n_heads = n(2);
    cfg.head_dim = n(3);
    cfg.patch_t = n(4);
    cfg.patch_s = n(5);
    cfg.n_scenarios = n(6);
    cfg.channels = n(7);
    cfg.mlp_ratio = n(8);
    cfg.max_tokens = n(9);
    cfg.abs_pos = n(10) != 0;
    cfg.validate();
    return cfg;
}

ParamStore with_config(ParamStore store, const ModelConfig& cfg) {
    store.entries[kConfigTensor] = config_tensor(cfg);
    return store;
}

ModelConfig take_config(ParamStore& store) {
    auto it = store.entries.find(kConfigTensor);
    if (it == store.entries.end()) throw Error("checkpoint has no model config");
    ModelConfig cfg = config_from_tensor(it->second);
    store.entries.erase(it);
    return cfg;
}

}  // namespace mcflow

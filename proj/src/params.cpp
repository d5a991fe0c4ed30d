#include "mcflow/params.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "mcflow/binary_io.hpp"
#include "mcflow/error.hpp"

namespace mcflow {

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw Error("unknown parameter \"" + name + "\"");
    return it->second;
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries) n += t.size();
    return n;
}

std::map<std::string, ad::Var> ParamStore::leaves() const {
    std::map<std::string, ad::Var> out;
    for (const auto& [name, t] : entries) out.emplace(name, ad::parameter(name, t));
    return out;
}

void adam_step(ParamStore& store, const ad::Gradients& grads, const AdamConfig& cfg, AdamState& state) {
    for (const auto& [name, p] : store.entries) {
        auto g = grads.find(name);
        if (g == grads.end()) throw Error("adam_step: missing gradient for \"" + name + "\"");
        require_same_shape(p, g->second, ("adam_step gradient for " + name).c_str());
    }
    const auto t = static_cast<double>(store.step + 1);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, p] : store.entries) {
        const Tensor& g = grads.at(name);
        auto& m = state.m.try_emplace(name, p.shape()).first->second;
        auto& v = state.v.try_emplace(name, p.shape()).first->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
    ++store.step;
}

void fill_missing_gradients(const ParamStore& store, ad::Gradients& grads) {
    for (const auto& [name, p] : store.entries) grads.try_emplace(name, p.shape());
}

GradCheckResult grad_check(const LossFn& fn, const ParamStore& params, double eps, std::size_t stride) {
    if (!(eps > 0.0)) throw Error("grad_check: eps must be positive");
    if (stride == 0) stride = 1;
    auto leaves = params.leaves();
    auto analytic = ad::backward(fn(leaves));
    fill_missing_gradients(params, analytic);

    auto evaluate = [&](const std::string& name, std::size_t i, double value) {
        auto perturbed = leaves;
        Tensor t = params.at(name);
        t[i] = value;
        perturbed[name] = ad::constant(std::move(t));
        const double loss = fn(perturbed).value().item();
        if (!std::isfinite(loss)) {
            throw NonFiniteError("grad_check: non-finite loss while perturbing \"" + name + "\"[" +
                                 std::to_string(i) + "]");
        }
        return loss;
    };

    GradCheckResult result;
    for (const auto& [name, p] : params.entries) {
        const Tensor& g = analytic.at(name);
        if (!g.all_finite()) throw NonFiniteError("grad_check: non-finite analytic gradient for \"" + name + "\"");
        for (std::size_t i = 0; i < p.size(); i += stride) {
            const double numeric = (evaluate(name, i, p[i] + eps) - evaluate(name, i, p[i] - eps)) / (2.0 * eps);
            const double err = std::abs(g[i] - numeric) / std::max(1.0, std::abs(numeric));
            ++result.checked;
            if (result.worst_parameter.empty() || err > result.max_relative_error) {
                result.max_relative_error = err;
                result.worst_parameter = name;
                result.worst_index = i;
            }
        }
    }
    return result;
}

namespace io {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatError::Kind::io, 0, "cannot open \"" + path + "\"");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<unsigned char>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::io, 0, "cannot open \"" + path + "\" for writing");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw FormatError(FormatError::Kind::io, 0, "write failed for \"" + path + "\"");
}

}  // namespace io

void save_checkpoint(const std::filesystem::path& path, const std::map<std::string, Tensor>& tensors) {
    io::Writer w;
    w.magic("MCKP");
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (double v : t.data()) w.f64(v);
    }
    io::write_file(path.string(), w.buffer());
}

std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& path) {
    io::Reader r(io::read_file(path.string()));
    r.expect_magic("MCKP");
    const std::uint32_t count = r.u32();
    std::map<std::string, Tensor> out;
    for (std::uint32_t n = 0; n < count; ++n) {
        const std::uint32_t len = r.u32();
        std::string name = r.str(len);
        const std::uint32_t rank = r.u32();
        Shape shape;
        std::uint64_t numel = 1;
        const std::size_t dims_at = r.offset();
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape.push_back(r.u32());
            numel *= shape.back();
            if (numel > (std::uint64_t{1} << 40)) {
                throw io::FormatError(io::FormatError::Kind::dim_overflow, dims_at, "dimension overflow");
            }
        }
        r.need(numel * 8, "truncated payload");
        std::vector<double> data(numel);
        for (auto& v : data) v = r.f64();
        out.insert_or_assign(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return out;
}

}  // namespace mcflow

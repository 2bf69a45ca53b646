#include "e3d/gradcheck.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "e3d/network.hpp"
#include "e3d/nn_ops.hpp"
#include "e3d/tca.hpp"

namespace e3d {

std::string GradCheckReport::line() const {
    std::ostringstream os;
    os << (pass ? "PASS" : "FAIL") << "  " << op << "  shapes=" << shapes
       << "  max_rel_error=" << max_rel_error << "  tol=" << tolerance;
    if (!detail.empty()) os << "  (" << detail << ")";
    return os.str();
}

namespace {

double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double acc = 0.0;
    for (index_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
    return acc;
}

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

Tensor<double> random_tensor(Shape5 s, Rng& rng) {
    Tensor<double> t(s);
    for (index_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

// Random values in [-1,1] kept away from zero, for ops with a kink at 0.
Tensor<double> random_tensor_no_kink(Shape5 s, Rng& rng) {
    Tensor<double> t(s);
    for (index_t i = 0; i < t.numel(); ++i) {
        double v = rng.uniform(-1.0, 1.0);
        if (std::abs(v) < 1e-3) v = v < 0 ? v - 1e-3 : v + 1e-3;
        t[i] = v;
    }
    return t;
}

ConvParams<double> random_conv(index_t co, index_t ci, Triple k, Triple stride, Triple pad,
                               Rng& rng) {
    ConvParams<double> p;
    p.weights = random_tensor(Shape5{co, ci, k[0], k[1], k[2]}, rng);
    p.bias.resize(static_cast<size_t>(co));
    for (auto& b : p.bias) b = rng.uniform(-1.0, 1.0);
    p.stride = stride;
    p.pad = pad;
    return p;
}

}  // namespace

GradCheckReport grad_check(
    const std::string& op_name,
    const std::function<Tensor<double>()>& forward,
    const std::vector<std::span<double>>& inputs,
    const std::function<std::vector<std::vector<double>>(const Tensor<double>&)>& backward,
    double tolerance, std::uint64_t seed, double epsilon) {
    GradCheckReport rep;
    rep.op = op_name;
    rep.tolerance = tolerance;

    Tensor<double> y0 = forward();
    rep.shapes = "out=" + y0.shape().str();
    if (!all_finite(y0.data())) {
        rep.detail = "non-finite forward output";
        return rep;
    }

    Rng rng(seed);
    Tensor<double> g = random_tensor(y0.shape(), rng);

    const auto analytic = backward(g);
    if (analytic.size() != inputs.size()) {
        rep.detail = "backward returned wrong number of gradients";
        return rep;
    }
    for (size_t s = 0; s < inputs.size(); ++s) {
        if (analytic[s].size() != inputs[s].size()) {
            rep.detail = "gradient size mismatch for input " + std::to_string(s);
            return rep;
        }
        if (!all_finite(analytic[s])) {
            rep.detail = "non-finite analytic gradient in input " + std::to_string(s);
            return rep;
        }
    }

    double max_rel = 0.0;
    std::string worst;
    for (size_t s = 0; s < inputs.size(); ++s) {
        auto span = inputs[s];
        for (size_t i = 0; i < span.size(); ++i) {
            const double saved = span[i];
            span[i] = saved + epsilon;
            const double lp = dot(g, forward());
            span[i] = saved - epsilon;
            const double lm = dot(g, forward());
            span[i] = saved;
            const double numeric = (lp - lm) / (2.0 * epsilon);
            if (!std::isfinite(numeric)) {
                rep.detail = "non-finite finite-difference at input " + std::to_string(s) +
                             "[" + std::to_string(i) + "]";
                return rep;
            }
            const double a = analytic[s][i];
            const double rel = std::abs(a - numeric) /
                               std::max({std::abs(a), std::abs(numeric), 1e-8});
            if (rel > max_rel) {
                max_rel = rel;
                worst = "input " + std::to_string(s) + "[" + std::to_string(i) + "]";
            }
        }
    }
    rep.max_rel_error = max_rel;
    rep.pass = max_rel < tolerance;
    if (!rep.pass) rep.detail = "worst at " + worst;
    return rep;
}

namespace {

GradCheckReport check_elem_add() {
    Rng rng(1);
    auto a = random_tensor(Shape5{1, 2, 2, 3, 3}, rng);
    auto b = random_tensor(a.shape(), rng);
    // exact linearity: a large epsilon keeps the difference quotient exact
    // while shrinking the floating-point cancellation noise
    return grad_check(
        "elem_add", [&] { return elem_add(a, b); }, {a.data(), b.data()},
        [&](const Tensor<double>& g) {
            std::vector<double> ga(g.data().begin(), g.data().end());
            return std::vector<std::vector<double>>{ga, ga};
        },
        1e-10, 42, 1e-2);
}

GradCheckReport check_channel_broadcast_mul() {
    Rng rng(2);
    auto o = random_tensor(Shape5{1, 3, 2, 3, 3}, rng);
    std::vector<double> u(3);
    for (auto& v : u) v = rng.uniform(-1.0, 1.0);
    return grad_check(
        "channel_broadcast_mul",
        [&] { return channel_broadcast_mul(o, std::span<const double>(u)); },
        {o.data(), std::span<double>(u)},
        [&](const Tensor<double>& g) {
            const Shape5& s = o.shape();
            std::vector<double> d_o(static_cast<size_t>(o.numel()));
            std::vector<double> d_u(u.size(), 0.0);
            const index_t vol = s.spatial();
            for (index_t n = 0; n < s.n; ++n)
                for (index_t c = 0; c < s.c; ++c) {
                    const index_t base = (n * s.c + c) * vol;
                    for (index_t i = 0; i < vol; ++i) {
                        d_o[static_cast<size_t>(base + i)] = g[base + i] * u[static_cast<size_t>(c)];
                        d_u[static_cast<size_t>(c)] += g[base + i] * o[base + i];
                    }
                }
            return std::vector<std::vector<double>>{d_o, d_u};
        },
        1e-8, 42, 1e-2);  // bilinear in (o, u): central differences are exact per coordinate
}

GradCheckReport check_conv3d() {
    Rng rng(3);
    auto x = random_tensor(Shape5{1, 2, 2, 4, 4}, rng);
    auto p = random_conv(2, 2, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, rng);
    return grad_check(
        "conv3d", [&] { return conv_forward(x, p); },
        {x.data(), p.weights.data(), std::span<double>(p.bias)},
        [&](const Tensor<double>& g) {
            auto cg = conv_backward(x, p, g);
            return std::vector<std::vector<double>>{
                {cg.d_input.data().begin(), cg.d_input.data().end()},
                {cg.d_weights.data().begin(), cg.d_weights.data().end()},
                cg.d_bias};
        },
        1e-4);
}

GradCheckReport check_conv3d_strided() {
    Rng rng(4);
    auto x = random_tensor(Shape5{1, 2, 2, 6, 6}, rng);
    auto p = random_conv(3, 2, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}, rng);
    return grad_check(
        "conv3d_strided", [&] { return conv_forward(x, p); },
        {x.data(), p.weights.data(), std::span<double>(p.bias)},
        [&](const Tensor<double>& g) {
            auto cg = conv_backward(x, p, g);
            return std::vector<std::vector<double>>{
                {cg.d_input.data().begin(), cg.d_input.data().end()},
                {cg.d_weights.data().begin(), cg.d_weights.data().end()},
                cg.d_bias};
        },
        1e-4);
}

GradCheckReport check_maxpool3d() {
    Rng rng(5);
    auto x = random_tensor(Shape5{1, 2, 3, 5, 5}, rng);
    return grad_check(
        "maxpool3d",
        [&] { return maxpool3d_forward(x, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}).first; },
        {x.data()},
        [&](const Tensor<double>& g) {
            auto [y, ctx] = maxpool3d_forward(x, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
            auto dx = maxpool3d_backward(ctx, g);
            return std::vector<std::vector<double>>{{dx.data().begin(), dx.data().end()}};
        },
        1e-4);
}

GradCheckReport check_global_avg_pool() {
    Rng rng(6);
    auto x = random_tensor(Shape5{2, 3, 2, 3, 3}, rng);
    return grad_check(
        "global_avg_pool", [&] { return global_avg_pool(x); }, {x.data()},
        [&](const Tensor<double>& g) {
            auto dx = global_avg_pool_backward(x.shape(), g);
            return std::vector<std::vector<double>>{{dx.data().begin(), dx.data().end()}};
        },
        1e-8);
}

GradCheckReport check_relu() {
    Rng rng(7);
    auto x = random_tensor_no_kink(Shape5{1, 2, 2, 4, 4}, rng);
    return grad_check(
        "relu", [&] { return relu(x); }, {x.data()},
        [&](const Tensor<double>& g) {
            auto dx = relu_backward(x, g);
            return std::vector<std::vector<double>>{{dx.data().begin(), dx.data().end()}};
        },
        1e-8);
}

GradCheckReport check_sigmoid() {
    Rng rng(8);
    auto x = random_tensor(Shape5{1, 2, 2, 4, 4}, rng);
    return grad_check(
        "sigmoid", [&] { return sigmoid(x); }, {x.data()},
        [&](const Tensor<double>& g) {
            auto dx = sigmoid_backward(sigmoid(x), g);
            return std::vector<std::vector<double>>{{dx.data().begin(), dx.data().end()}};
        },
        1e-6);
}

double min_abs(const Tensor<double>& t) {
    double m = std::numeric_limits<double>::infinity();
    for (index_t i = 0; i < t.numel(); ++i) m = std::min(m, std::abs(t[i]));
    return m;
}

// Smallest max-vs-runner-up gap over all pooling windows; a tiny gap means a
// weight perturbation could flip the argmax and break finite differences.
double min_pool_gap(const Tensor<double>& x, Triple size, Triple stride, Triple pad) {
    const Shape5& s = x.shape();
    double min_gap = std::numeric_limits<double>::infinity();
    index_t dims_out[3] = {(s.d + 2 * pad[0] - size[0]) / stride[0] + 1,
                           (s.h + 2 * pad[1] - size[1]) / stride[1] + 1,
                           (s.w + 2 * pad[2] - size[2]) / stride[2] + 1};
    for (index_t n = 0; n < s.n; ++n)
        for (index_t c = 0; c < s.c; ++c)
            for (index_t z = 0; z < dims_out[0]; ++z)
                for (index_t y = 0; y < dims_out[1]; ++y)
                    for (index_t xo = 0; xo < dims_out[2]; ++xo) {
                        double best = -std::numeric_limits<double>::infinity();
                        double second = best;
                        for (index_t a = 0; a < size[0]; ++a) {
                            const index_t d = z * stride[0] + a - pad[0];
                            if (d < 0 || d >= s.d) continue;
                            for (index_t b = 0; b < size[1]; ++b) {
                                const index_t h = y * stride[1] + b - pad[1];
                                if (h < 0 || h >= s.h) continue;
                                for (index_t cc = 0; cc < size[2]; ++cc) {
                                    const index_t w = xo * stride[2] + cc - pad[2];
                                    if (w < 0 || w >= s.w) continue;
                                    const double v = x.at(n, c, d, h, w);
                                    if (v > best) {
                                        second = best;
                                        best = v;
                                    } else if (v > second) {
                                        second = v;
                                    }
                                }
                            }
                        }
                        if (std::isfinite(second)) min_gap = std::min(min_gap, best - second);
                    }
    return min_gap;
}

TcaBlockParams<double> random_block(index_t c, bool downsample, bool gc, Rng& rng) {
    TcaBlockParams<double> p;
    const Triple s1 = downsample ? Triple{1, 2, 2} : Triple{1, 1, 1};
    p.conv1 = random_conv(c, c, {3, 3, 3}, s1, {1, 1, 1}, rng);
    p.conv2 = random_conv(c, c, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, rng);
    const index_t hidden = std::max<index_t>(1, c / 4);
    p.gate_reduce = random_conv(hidden, c, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, rng);
    p.gate_expand = random_conv(c, hidden, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, rng);
    if (downsample) p.shortcut_proj = random_conv(c, c, {1, 1, 1}, s1, {0, 0, 0}, rng);
    p.global_context = gc;
    return p;
}

std::vector<std::span<double>> block_spans(TcaBlockParams<double>& p) {
    std::vector<std::span<double>> spans{
        p.conv1.weights.data(), std::span<double>(p.conv1.bias),
        p.conv2.weights.data(), std::span<double>(p.conv2.bias),
        p.gate_reduce.weights.data(), std::span<double>(p.gate_reduce.bias),
        p.gate_expand.weights.data(), std::span<double>(p.gate_expand.bias)};
    if (p.shortcut_proj) {
        spans.push_back(p.shortcut_proj->weights.data());
        spans.push_back(std::span<double>(p.shortcut_proj->bias));
    }
    return spans;
}

std::vector<std::vector<double>> block_grad_vectors(const TcaBlockGrads<double>& g,
                                                    const Tensor<double>& dx) {
    auto vec = [](const Tensor<double>& t) {
        return std::vector<double>(t.data().begin(), t.data().end());
    };
    std::vector<std::vector<double>> out{
        vec(dx),
        vec(g.conv1.d_weights), g.conv1.d_bias,
        vec(g.conv2.d_weights), g.conv2.d_bias,
        vec(g.gate_reduce.d_weights), g.gate_reduce.d_bias,
        vec(g.gate_expand.d_weights), g.gate_expand.d_bias};
    if (g.shortcut_proj) {
        out.push_back(vec(g.shortcut_proj->d_weights));
        out.push_back(g.shortcut_proj->d_bias);
    }
    return out;
}

GradCheckReport check_channel_gate() {
    Rng rng(9);
    const index_t c = 4;
    auto o = random_tensor(Shape5{1, c, 2, 3, 3}, rng);
    auto p = random_block(c, false, true, rng);
    return grad_check(
        "channel_gate", [&] { return channel_gate(o, p); },
        {o.data(), p.gate_reduce.weights.data(), std::span<double>(p.gate_reduce.bias),
         p.gate_expand.weights.data(), std::span<double>(p.gate_expand.bias)},
        [&](const Tensor<double>& g) {
            const auto v = global_avg_pool(o);
            const auto h_pre = conv_forward(v, p.gate_reduce);
            const auto h = relu(h_pre);
            const auto u = sigmoid(conv_forward(h, p.gate_expand));
            const auto d_logits = sigmoid_backward(u, g);
            auto ge = conv_backward(h, p.gate_expand, d_logits);
            const auto d_h_pre = relu_backward(h_pre, ge.d_input);
            auto gr = conv_backward(v, p.gate_reduce, d_h_pre);
            auto d_o = global_avg_pool_backward(o.shape(), gr.d_input);
            auto vec = [](const Tensor<double>& t) {
                return std::vector<double>(t.data().begin(), t.data().end());
            };
            return std::vector<std::vector<double>>{vec(d_o), vec(gr.d_weights), gr.d_bias,
                                                    vec(ge.d_weights), ge.d_bias};
        },
        1e-4);
}

// Finite differences break at ReLU kinks, so pick the first seed whose
// pre-activations stay clear of zero.
constexpr double kKinkMargin = 5e-4;

GradCheckReport check_tca_block(const std::string& name, bool downsample, bool gc,
                                std::uint64_t seed) {
    const index_t c = 4;
    Tensor<double> x;
    TcaBlockParams<double> p;
    for (int attempt = 0; attempt < 50; ++attempt) {
        Rng rng(seed + 1000 * static_cast<std::uint64_t>(attempt));
        x = random_tensor(Shape5{1, c, 2, 6, 6}, rng);
        p = random_block(c, downsample, gc, rng);
        const auto trace = tca_forward(x, p);
        double margin = min_abs(trace.pre_act);
        if (gc) margin = std::min(margin, min_abs(trace.hidden_pre));
        if (margin > kKinkMargin) break;
    }
    auto spans = block_spans(p);
    spans.insert(spans.begin(), x.data());
    return grad_check(
        name, [&] { return tca_forward(x, p).output; }, spans,
        [&](const Tensor<double>& g) {
            auto trace = tca_forward(x, p);
            auto [dx, bg] = tca_backward(trace, p, g);
            return block_grad_vectors(bg, dx);
        },
        1e-4);
}

GradCheckReport check_network_2block() {
    NetConfig cfg;
    cfg.in_channels = 1;
    cfg.stem_channels = 4;
    cfg.block_count = 2;
    cfg.downsample_blocks = {1};
    cfg.reduction_ratio = 4;
    cfg.global_context = true;
    cfg.clip_length = 2;
    Network<double> net;
    Tensor<double> x;
    for (int attempt = 0; attempt < 50; ++attempt) {
        const std::uint64_t base = 11 + 1000 * static_cast<std::uint64_t>(attempt);
        net = build_network<double>(cfg, base, /*strict_factor=*/false);
        Rng rng(base + 1);
        x = random_tensor(Shape5{1, 1, 2, 16, 16}, rng);
        const auto trace = network_forward(x, net);
        double margin = std::min(min_abs(trace.stem_pre),
                                 min_pool_gap(trace.stem_act, net.pool_size, net.pool_stride,
                                              net.pool_pad));
        for (const auto& bt : trace.block_traces) {
            margin = std::min(margin, min_abs(bt.pre_act));
            if (bt.hidden_pre.numel() > 0) margin = std::min(margin, min_abs(bt.hidden_pre));
        }
        if (margin > kKinkMargin) break;
    }

    std::vector<std::span<double>> spans{x.data()};
    for (auto& r : param_refs<double>(net)) spans.push_back(r.values);

    return grad_check(
        "network_2block", [&] { return network_forward(x, net).output; }, spans,
        [&](const Tensor<double>& g) {
            auto trace = network_forward(x, net);
            auto grads = network_backward(trace, net, g);
            std::vector<std::vector<double>> out;
            out.emplace_back(grads.d_input.data().begin(), grads.d_input.data().end());
            for (auto& r : grad_refs(grads, net)) {
                out.emplace_back(r.values.begin(), r.values.end());
            }
            return out;
        },
        1e-4);
}

using CheckFn = GradCheckReport (*)();

const std::vector<std::pair<std::string, CheckFn>>& registry() {
    static const std::vector<std::pair<std::string, CheckFn>> checks = {
        {"elem_add", check_elem_add},
        {"channel_broadcast_mul", check_channel_broadcast_mul},
        {"conv3d", check_conv3d},
        {"conv3d_strided", check_conv3d_strided},
        {"maxpool3d", check_maxpool3d},
        {"global_avg_pool", check_global_avg_pool},
        {"relu", check_relu},
        {"sigmoid", check_sigmoid},
        {"channel_gate", check_channel_gate},
        {"tca_block", [] { return check_tca_block("tca_block", false, true, 21); }},
        {"tca_block_nogc", [] { return check_tca_block("tca_block_nogc", false, false, 22); }},
        {"tca_block_downsample",
         [] { return check_tca_block("tca_block_downsample", true, true, 23); }},
        {"network_2block", check_network_2block},
    };
    return checks;
}

}  // namespace

std::vector<GradCheckReport> run_all_grad_checks() {
    std::vector<GradCheckReport> out;
    for (const auto& [name, fn] : registry()) out.push_back(fn());
    return out;
}

GradCheckReport run_grad_check(const std::string& op_name) {
    for (const auto& [name, fn] : registry()) {
        if (name == op_name) return fn();
    }
    throw std::invalid_argument("unknown gradcheck op: " + op_name);
}

std::vector<std::string> grad_check_names() {
    std::vector<std::string> out;
    for (const auto& [name, fn] : registry()) out.push_back(name);
    return out;
}

}  // namespace e3d

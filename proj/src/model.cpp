#include "priorisk/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "priorisk/errors.hpp"

namespace priorisk::model {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::baseline: return "baseline";
        case Variant::rp_plus: return "rp_plus";
        case Variant::prime: return "prime";
    }
    return "?";
}

Variant variant_from_name(std::string_view name) {
    if (name == "baseline") return Variant::baseline;
    if (name == "rp_plus") return Variant::rp_plus;
    if (name == "prime") return Variant::prime;
    throw ConfigError("unknown model variant '" + std::string(name) + "'");
}

void ModelDims::validate() const {
    if (feature_dim < 1 || d_model < 1 || n_heads < 1 || n_tokens < 1 || horizon < 1 ||
        encoder_layers < 1)
        throw ConfigError("model dimensions must all be positive");
    if (d_model % n_heads != 0)
        throw ConfigError("d_model must be divisible by n_heads");
    if (d_model % n_tokens != 0)
        throw ConfigError("d_model must be divisible by n_tokens");
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// ---------------------------------------------------------------------------
// parameters

ModelParams::ModelParams(ModelDims dims, Variant variant) : dims_(dims), variant_(variant) {
    dims_.validate();
    const int dm = dims_.d_model;
    const int dh = dims_.d_head();
    const int df = dims_.d_fused();

    std::size_t offset = 0;
    auto add = [&](const std::string& name, int rows, int cols) {
        layout_.push_back({name, rows, cols, offset});
        offset += static_cast<std::size_t>(rows) * cols;
    };

    for (int l = 0; l < dims_.encoder_layers; ++l) {
        int in = (l == 0) ? dims_.feature_dim : dm;
        add("enc.W" + std::to_string(l), dm, in);
        add("enc.b" + std::to_string(l), dm, 1);
    }
    for (int k = 0; k < dims_.n_heads; ++k) {
        const std::string h = "attn" + std::to_string(k);
        add(h + ".Wq", dh, dm);
        add(h + ".Wk", dh, dm);
        add(h + ".Wv", dh, dm);
    }
    add("attn.Wo", dm, dm);
    add("attn.Wp", dm, dm);
    add("attn.bp", dm, 1);
    add("head.base.W", 1, df);
    add("head.base.b", 1, 1);
    add("head.time.W", dims_.horizon, df);
    add("head.time.b", dims_.horizon, 1);

    data_.assign(offset, 0.0);
}

ModelParams ModelParams::seeded(ModelDims dims, Variant variant, std::uint64_t seed) {
    ModelParams p(dims, variant);
    Rng rng(mix_seed(seed, 0x7061726d));  // dedicated init stream
    for (const auto& spec : p.layout_) {
        if (spec.cols == 1) continue;  // biases start at zero
        double bound = std::sqrt(6.0 / (spec.rows + spec.cols));
        // the first encoder layer sees raw features, which are wider than
        // the unit scale the bound assumes; damp it to keep the tanh units
        // in their responsive range
        if (spec.name == "enc.W0") bound *= 0.5;
        // similarity logits are a product of two freshly initialized maps,
        // so at the plain bound they start near zero and the attention
        // weights stay close to uniform for most of a short training run;
        // a larger bound lets the weights differentiate prior tokens from
        // the first steps
        if (spec.name.size() > 3 && spec.name.compare(0, 4, "attn") == 0 &&
            (spec.name.ends_with(".Wq") || spec.name.ends_with(".Wk")))
            bound *= 6.0;
        auto t = p.tensor(spec.name);
        for (double& v : t) v = rng.uniform(-bound, bound);
    }
    return p;
}

const TensorSpec& ModelParams::spec(std::string_view name) const {
    for (const auto& s : layout_)
        if (s.name == name) return s;
    throw ConfigError("unknown tensor '" + std::string(name) + "'");
}

std::span<double> ModelParams::tensor(std::string_view name) {
    const auto& s = spec(name);
    return std::span<double>(data_).subspan(s.offset, s.size());
}

std::span<const double> ModelParams::tensor(std::string_view name) const {
    const auto& s = spec(name);
    return std::span<const double>(data_).subspan(s.offset, s.size());
}

// ---------------------------------------------------------------------------
// small dense helpers (row-major W: rows x cols)

namespace {

void matvec(std::span<const double> w, int rows, int cols, std::span<const double> x,
            std::span<double> y) {
    for (int r = 0; r < rows; ++r) {
        double acc = 0.0;
        const double* wr = w.data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

// out += W^T g
void matvec_t_acc(std::span<const double> w, int rows, int cols, std::span<const double> g,
                  std::span<double> out) {
    for (int r = 0; r < rows; ++r) {
        const double* wr = w.data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) out[c] += wr[c] * g[r];
    }
}

// dW += g x^T
void outer_acc(std::span<double> dw, int rows, int cols, std::span<const double> g,
               std::span<const double> x) {
    for (int r = 0; r < rows; ++r) {
        double* dr = dw.data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) dr[c] += g[r] * x[c];
    }
}

void add_acc(std::span<double> out, std::span<const double> g) {
    for (std::size_t i = 0; i < g.size(); ++i) out[i] += g[i];
}

struct EncoderCache {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[L] = output
};

std::vector<double> encode_impl(std::span<const double> features, const ModelParams& params,
                                EncoderCache* cache) {
    const auto& d = params.dims();
    if (static_cast<int>(features.size()) != d.feature_dim)
        throw DataError("encode: expected " + std::to_string(d.feature_dim) +
                        " features, got " + std::to_string(features.size()));

    std::vector<double> a(features.begin(), features.end());
    if (cache) cache->acts.push_back(a);
    for (int l = 0; l < d.encoder_layers; ++l) {
        auto w = params.tensor("enc.W" + std::to_string(l));
        auto b = params.tensor("enc.b" + std::to_string(l));
        int in = (l == 0) ? d.feature_dim : d.d_model;
        std::vector<double> z(d.d_model);
        matvec(w, d.d_model, in, a, z);
        for (int i = 0; i < d.d_model; ++i) z[i] += b[i];
        if (l < d.encoder_layers - 1)
            for (double& v : z) v = std::tanh(v);
        a = std::move(z);
        if (cache) cache->acts.push_back(a);
    }
    return a;
}

// g = dL/d(output); accumulates parameter grads, returns dL/d(input) implicitly
// unused (inputs are data), so it only walks the layers.
void encode_backward(const ModelParams& params, const EncoderCache& cache,
                     std::vector<double> g, std::span<double> grad) {
    const auto& d = params.dims();
    for (int l = d.encoder_layers - 1; l >= 0; --l) {
        const auto& a_out = cache.acts[l + 1];
        const auto& a_in = cache.acts[l];
        // undo the nonlinearity (the last layer is purely affine)
        if (l < d.encoder_layers - 1)
            for (int i = 0; i < d.d_model; ++i) g[i] *= 1.0 - a_out[i] * a_out[i];

        const auto& wspec = params.spec("enc.W" + std::to_string(l));
        const auto& bspec = params.spec("enc.b" + std::to_string(l));
        auto dw = grad.subspan(wspec.offset, wspec.size());
        auto db = grad.subspan(bspec.offset, bspec.size());
        outer_acc(dw, wspec.rows, wspec.cols, g, a_in);
        add_acc(db, g);

        if (l > 0) {
            std::vector<double> gprev(wspec.cols, 0.0);
            matvec_t_acc(params.tensor(wspec.name), wspec.rows, wspec.cols, g, gprev);
            g = std::move(gprev);
        }
    }
}

struct AttnCache {
    std::vector<std::vector<double>> q;                   // head x d_head
    std::vector<std::vector<std::vector<double>>> keys;   // head x M x d_head
    std::vector<std::vector<std::vector<double>>> vals;   // head x M x d_head
    std::vector<std::vector<double>> weights;             // head x M
    std::vector<double> concat;                           // d_model
    std::vector<double> u;                                // Wo * concat
};

AttentionResult attention_impl(std::span<const double> x_curr,
                               const std::vector<std::vector<double>>& tokens,
                               const ModelParams& params, AttnCache* cache) {
    const auto& d = params.dims();
    const int M = static_cast<int>(tokens.size());
    if (M == 0) throw DataError("cross_attention: no prior tokens");
    if (static_cast<int>(x_curr.size()) != d.d_model)
        throw DataError("cross_attention: query has wrong dimension");
    for (const auto& t : tokens)
        if (static_cast<int>(t.size()) != d.d_model)
            throw DataError("cross_attention: prior token has wrong dimension");

    const int dh = d.d_head();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    AttentionResult res;
    res.weights.resize(d.n_heads);
    std::vector<double> concat(d.d_model, 0.0);
    if (cache) {
        cache->q.resize(d.n_heads);
        cache->keys.resize(d.n_heads);
        cache->vals.resize(d.n_heads);
    }

    for (int k = 0; k < d.n_heads; ++k) {
        const std::string h = "attn" + std::to_string(k);
        auto wq = params.tensor(h + ".Wq");
        auto wk = params.tensor(h + ".Wk");
        auto wv = params.tensor(h + ".Wv");

        std::vector<double> q(dh);
        matvec(wq, dh, d.d_model, x_curr, q);

        std::vector<std::vector<double>> keys(M, std::vector<double>(dh));
        std::vector<std::vector<double>> vals(M, std::vector<double>(dh));
        std::vector<double> scores(M);
        for (int j = 0; j < M; ++j) {
            matvec(wk, dh, d.d_model, tokens[j], keys[j]);
            matvec(wv, dh, d.d_model, tokens[j], vals[j]);
            double s = 0.0;
            for (int i = 0; i < dh; ++i) s += q[i] * keys[j][i];
            scores[j] = s * scale;
        }

        // softmax, shifted by the max score
        double smax = *std::max_element(scores.begin(), scores.end());
        double denom = 0.0;
        std::vector<double> w(M);
        for (int j = 0; j < M; ++j) {
            w[j] = std::exp(scores[j] - smax);
            denom += w[j];
        }
        for (int j = 0; j < M; ++j) w[j] /= denom;

        double* out = concat.data() + static_cast<std::size_t>(k) * dh;
        for (int j = 0; j < M; ++j)
            for (int i = 0; i < dh; ++i) out[i] += w[j] * vals[j][i];

        res.weights[k] = w;
        if (cache) {
            cache->q[k] = std::move(q);
            cache->keys[k] = std::move(keys);
            cache->vals[k] = std::move(vals);
        }
    }

    std::vector<double> u(d.d_model);
    matvec(params.tensor("attn.Wo"), d.d_model, d.d_model, concat, u);
    std::vector<double> cpc(d.d_model);
    matvec(params.tensor("attn.Wp"), d.d_model, d.d_model, u, cpc);
    auto bp = params.tensor("attn.bp");
    for (int i = 0; i < d.d_model; ++i) cpc[i] += bp[i];

    if (cache) {
        cache->weights = res.weights;
        cache->concat = concat;
        cache->u = u;
    }
    res.x_cpc = std::move(cpc);
    return res;
}

// dL/d x_cpc -> parameter grads, dL/d x_curr (accumulated), dL/d tokens.
void attention_backward(const ModelParams& params, const AttnCache& cache,
                        const std::vector<std::vector<double>>& tokens,
                        std::span<const double> x_curr, std::span<const double> d_cpc,
                        std::span<double> grad, std::span<double> d_x_curr,
                        std::vector<std::vector<double>>& d_tokens) {
    const auto& d = params.dims();
    const int M = static_cast<int>(tokens.size());
    const int dh = d.d_head();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // post-concat linear
    const auto& wp_spec = params.spec("attn.Wp");
    outer_acc(grad.subspan(wp_spec.offset, wp_spec.size()), d.d_model, d.d_model, d_cpc,
              cache.u);
    add_acc(grad.subspan(params.spec("attn.bp").offset, d.d_model), d_cpc);
    std::vector<double> du(d.d_model, 0.0);
    matvec_t_acc(params.tensor("attn.Wp"), d.d_model, d.d_model, d_cpc, du);

    // output projection
    const auto& wo_spec = params.spec("attn.Wo");
    outer_acc(grad.subspan(wo_spec.offset, wo_spec.size()), d.d_model, d.d_model, du,
              cache.concat);
    std::vector<double> dconcat(d.d_model, 0.0);
    matvec_t_acc(params.tensor("attn.Wo"), d.d_model, d.d_model, du, dconcat);

    for (int k = 0; k < d.n_heads; ++k) {
        const std::string h = "attn" + std::to_string(k);
        std::span<const double> d_out(dconcat.data() + static_cast<std::size_t>(k) * dh, dh);
        const auto& w = cache.weights[k];
        const auto& q = cache.q[k];
        const auto& keys = cache.keys[k];
        const auto& vals = cache.vals[k];

        // through the weighted sum of values
        std::vector<double> dw(M, 0.0);
        std::vector<std::vector<double>> dvals(M, std::vector<double>(dh, 0.0));
        for (int j = 0; j < M; ++j) {
            double acc = 0.0;
            for (int i = 0; i < dh; ++i) {
                acc += d_out[i] * vals[j][i];
                dvals[j][i] = w[j] * d_out[i];
            }
            dw[j] = acc;
        }

        // softmax jacobian: ds_j = w_j (dw_j - sum_l w_l dw_l)
        double dot = 0.0;
        for (int j = 0; j < M; ++j) dot += w[j] * dw[j];
        std::vector<double> ds(M);
        for (int j = 0; j < M; ++j) ds[j] = w[j] * (dw[j] - dot);

        std::vector<double> dq(dh, 0.0);
        std::vector<std::vector<double>> dkeys(M, std::vector<double>(dh, 0.0));
        for (int j = 0; j < M; ++j) {
            double dsj = ds[j] * scale;
            for (int i = 0; i < dh; ++i) {
                dq[i] += dsj * keys[j][i];
                dkeys[j][i] = dsj * q[i];
            }
        }

        const auto& wq_spec = params.spec(h + ".Wq");
        const auto& wk_spec = params.spec(h + ".Wk");
        const auto& wv_spec = params.spec(h + ".Wv");
        outer_acc(grad.subspan(wq_spec.offset, wq_spec.size()), dh, d.d_model, dq, x_curr);
        matvec_t_acc(params.tensor(h + ".Wq"), dh, d.d_model, dq, d_x_curr);
        for (int j = 0; j < M; ++j) {
            outer_acc(grad.subspan(wk_spec.offset, wk_spec.size()), dh, d.d_model, dkeys[j],
                      tokens[j]);
            outer_acc(grad.subspan(wv_spec.offset, wv_spec.size()), dh, d.d_model, dvals[j],
                      tokens[j]);
            matvec_t_acc(params.tensor(h + ".Wk"), dh, d.d_model, dkeys[j], d_tokens[j]);
            matvec_t_acc(params.tensor(h + ".Wv"), dh, d.d_model, dvals[j], d_tokens[j]);
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// public forward ops

std::vector<double> encode(std::span<const double> features, const ModelParams& params) {
    return encode_impl(features, params, nullptr);
}

AttentionResult cross_attention(std::span<const double> x_curr,
                                const std::vector<std::vector<double>>& prior_tokens,
                                const ModelParams& params) {
    return attention_impl(x_curr, prior_tokens, params, nullptr);
}

std::vector<double> fuse(std::span<const double> x_cpc, std::span<const double> x_curr) {
    if (x_cpc.size() != x_curr.size())
        throw DataError("fuse: vector lengths differ");
    std::vector<double> out;
    out.reserve(2 * x_cpc.size());
    out.insert(out.end(), x_cpc.begin(), x_cpc.end());
    out.insert(out.end(), x_curr.begin(), x_curr.end());
    return out;
}

std::vector<std::vector<double>> tokenize_prior(std::span<const double> x_prior,
                                                const ModelDims& dims) {
    if (static_cast<int>(x_prior.size()) != dims.d_model)
        throw DataError("tokenize_prior: encoding has wrong dimension");
    const int M = dims.n_tokens;
    const int slice = dims.d_token();
    std::vector<std::vector<double>> tokens(M, std::vector<double>(dims.d_model, 0.0));
    for (int j = 0; j < M; ++j)
        for (int i = 0; i < slice; ++i)
            tokens[j][j * slice + i] = x_prior[j * slice + i];
    return tokens;
}

HazardPrediction hazard_forward(std::span<const double> x_star, const ModelParams& params) {
    const auto& d = params.dims();
    if (static_cast<int>(x_star.size()) != d.d_fused())
        throw DataError("hazard_forward: fused feature has wrong dimension");

    HazardPrediction pred;
    std::vector<double> base(1);
    matvec(params.tensor("head.base.W"), 1, d.d_fused(), x_star, base);
    pred.base = base[0] + params.tensor("head.base.b")[0];

    std::vector<double> raw(d.horizon);
    matvec(params.tensor("head.time.W"), d.horizon, d.d_fused(), x_star, raw);
    auto bt = params.tensor("head.time.b");
    pred.increments.resize(d.horizon);
    pred.cumulative.resize(d.horizon);
    double logit = pred.base;
    for (int t = 0; t < d.horizon; ++t) {
        pred.increments[t] = softplus(raw[t] + bt[t]);
        logit += pred.increments[t];
        pred.cumulative[t] = sigmoid(logit);
        if (!std::isfinite(pred.cumulative[t]))
            throw NumericError("hazard_forward: non-finite cumulative risk at horizon " +
                               std::to_string(t + 1) + " (base=" + std::to_string(pred.base) +
                               ")");
    }
    return pred;
}

double masked_bce_loss(const HazardPrediction& pred, const core::LabelPair& label) {
    if (pred.cumulative.size() != label.h.size() || label.h.size() != label.mask.size())
        throw DataError("masked_bce_loss: horizon mismatch between prediction and label");
    double loss = 0.0;
    for (std::size_t t = 0; t < label.h.size(); ++t) {
        if (label.mask[t] == 0.0) continue;
        double p = pred.cumulative[t];
        if (!(p > 0.0 && p < 1.0))
            throw NumericError("masked_bce_loss: cumulative risk outside (0,1) at horizon " +
                               std::to_string(t + 1));
        loss += label.mask[t] * (-label.h[t] * std::log(p) -
                                 (1.0 - label.h[t]) * std::log1p(-p));
    }
    return loss;
}

// ---------------------------------------------------------------------------
// full sample pass

namespace {

struct SampleCache {
    EncoderCache enc_curr, enc_prior;
    std::vector<double> x_curr, x_prior;
    std::vector<std::vector<double>> tokens;
    AttnCache attn;
    std::vector<double> x_cpc, x_star;
    HazardPrediction pred;
};

void forward_sample(std::span<const double> curr_features,
                    std::span<const double> prior_features, const ModelParams& params,
                    SampleCache& c, bool want_cache) {
    const Variant v = params.variant();
    c.x_curr = encode_impl(curr_features, params, want_cache ? &c.enc_curr : nullptr);

    switch (v) {
        case Variant::baseline:
            c.x_star = fuse(c.x_curr, c.x_curr);
            c.x_cpc.assign(c.x_curr.begin(), c.x_curr.end());
            break;
        case Variant::rp_plus: {
            c.x_prior = encode_impl(prior_features, params, want_cache ? &c.enc_prior : nullptr);
            std::vector<double> sum(c.x_curr.size());
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = c.x_curr[i] + c.x_prior[i];
            c.x_cpc = sum;
            c.x_star = fuse(sum, c.x_curr);
            break;
        }
        case Variant::prime: {
            c.x_prior = encode_impl(prior_features, params, want_cache ? &c.enc_prior : nullptr);
            c.tokens = tokenize_prior(c.x_prior, params.dims());
            auto attn = attention_impl(c.x_curr, c.tokens, params, want_cache ? &c.attn : nullptr);
            if (!want_cache) c.attn.weights = attn.weights;
            c.x_cpc = attn.x_cpc;
            c.x_star = fuse(c.x_cpc, c.x_curr);
            break;
        }
    }
    c.pred = hazard_forward(c.x_star, params);
}

double sample_loss_grad(const Sample& sample, const ModelParams& params,
                        std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const auto& d = params.dims();
    const core::ExamRecord& prior = sample.prior ? *sample.prior : *sample.current;

    SampleCache c;
    forward_sample(sample.current->features, prior.features, params, c, true);
    double loss = masked_bce_loss(c.pred, sample.label);

    // dL/dlogit(t) = mask(t) * (H(t) - h(t)); the running-sum structure makes
    // d base = sum_t dlogit(t) and d increment(tau) = sum_{t>=tau} dlogit(t).
    const int T = d.horizon;
    std::vector<double> dlogit(T);
    for (int t = 0; t < T; ++t)
        dlogit[t] = sample.label.mask[t] * (c.pred.cumulative[t] - sample.label.h[t]);
    std::vector<double> dinc(T);
    double tail = 0.0;
    for (int t = T - 1; t >= 0; --t) {
        tail += dlogit[t];
        dinc[t] = tail;
    }
    const double dbase = tail;

    // heads
    std::vector<double> draw(T);
    for (int t = 0; t < T; ++t) {
        // recover the pre-softplus activation from the increment:
        // softplus'(x) = sigmoid(x), and increments[t] = softplus(x)
        // we re-derive sigmoid(x) via the cached increment to avoid storing raws;
        // softplus is invertible: sigmoid(x) = 1 - exp(-softplus(x))
        draw[t] = dinc[t] * (1.0 - std::exp(-c.pred.increments[t]));
    }

    std::vector<double> d_xstar(d.d_fused(), 0.0);
    {
        const auto& bw = params.spec("head.base.W");
        auto dwb = grad.subspan(bw.offset, bw.size());
        for (int i = 0; i < d.d_fused(); ++i) dwb[i] += dbase * c.x_star[i];
        grad[params.spec("head.base.b").offset] += dbase;
        matvec_t_acc(params.tensor("head.base.W"), 1, d.d_fused(),
                     std::span<const double>(&dbase, 1), d_xstar);

        const auto& tw = params.spec("head.time.W");
        outer_acc(grad.subspan(tw.offset, tw.size()), T, d.d_fused(), draw, c.x_star);
        add_acc(grad.subspan(params.spec("head.time.b").offset, T), draw);
        matvec_t_acc(params.tensor("head.time.W"), T, d.d_fused(), draw, d_xstar);
    }

    // un-fuse
    std::span<const double> d_first(d_xstar.data(), d.d_model);
    std::span<const double> d_second(d_xstar.data() + d.d_model, d.d_model);
    std::vector<double> d_x_curr(d_second.begin(), d_second.end());

    switch (params.variant()) {
        case Variant::baseline:
            for (int i = 0; i < d.d_model; ++i) d_x_curr[i] += d_first[i];
            encode_backward(params, c.enc_curr, d_x_curr, grad);
            break;
        case Variant::rp_plus: {
            std::vector<double> d_x_prior(d_first.begin(), d_first.end());
            for (int i = 0; i < d.d_model; ++i) d_x_curr[i] += d_first[i];
            encode_backward(params, c.enc_curr, d_x_curr, grad);
            encode_backward(params, c.enc_prior, d_x_prior, grad);
            break;
        }
        case Variant::prime: {
            std::vector<std::vector<double>> d_tokens(
                c.tokens.size(), std::vector<double>(d.d_model, 0.0));
            attention_backward(params, c.attn, c.tokens, c.x_curr, d_first, grad,
                               d_x_curr, d_tokens);
            // token slices gather back into the prior encoding
            std::vector<double> d_x_prior(d.d_model, 0.0);
            const int slice = d.d_token();
            for (int j = 0; j < d.n_tokens; ++j)
                for (int i = 0; i < slice; ++i)
                    d_x_prior[j * slice + i] += d_tokens[j][j * slice + i];
            encode_backward(params, c.enc_curr, d_x_curr, grad);
            encode_backward(params, c.enc_prior, d_x_prior, grad);
            break;
        }
    }

    for (double g : grad)
        if (!std::isfinite(g)) throw NumericError("gradient: non-finite component");
    return loss;
}

}  // namespace

std::pair<HazardPrediction, FusionTrace> forward(const core::ExamRecord& current,
                                                 const core::ExamRecord& prior,
                                                 const ModelParams& params) {
    SampleCache c;
    forward_sample(current.features, prior.features, params, c, false);
    FusionTrace trace;
    trace.x_curr = c.x_curr;
    trace.x_prior_tokens = c.tokens;
    trace.attn_weights = c.attn.weights;
    trace.x_cpc = c.x_cpc;
    trace.x_star = c.x_star;
    return {c.pred, std::move(trace)};
}

double batch_loss_grad_serial(std::span<const Sample> batch, const ModelParams& params,
                              std::span<double> grad) {
    if (batch.empty()) throw DataError("gradient: empty batch");
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> local(params.size());
    double loss = 0.0;
    for (const auto& s : batch) {
        loss += sample_loss_grad(s, params, local);
        add_acc(grad, local);
    }
    return loss;
}

double batch_loss_grad(std::span<const Sample> batch, const ModelParams& params,
                       std::span<double> grad) {
    if (batch.empty()) throw DataError("gradient: empty batch");
    const int n = static_cast<int>(batch.size());
    std::vector<std::vector<double>> slots(n);
    std::vector<double> losses(n, 0.0);
    bool failed = false;
    std::string failure;

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        try {
            slots[i].assign(params.size(), 0.0);
            losses[i] = sample_loss_grad(batch[i], params, slots[i]);
        } catch (const std::exception& e) {
            // exceptions cannot cross the parallel region; surface after
#pragma omp critical
            {
                failed = true;
                failure = e.what();
            }
        }
    }
    if (failed) throw NumericError(failure);

    // reduce in sample order: bitwise identical to the serial reference
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        add_acc(grad, slots[i]);
        loss += losses[i];
    }
    return loss;
}

// ---------------------------------------------------------------------------
// checkpoint I/O (versioned text, hexfloat values for lossless round trips)

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    const auto& d = params.dims();
    out << "priorisk checkpoint v1\n";
    out << "variant " << variant_name(params.variant()) << "\n";
    out << "feature_dim " << d.feature_dim << "\nd_model " << d.d_model << "\nn_heads "
        << d.n_heads << "\nn_tokens " << d.n_tokens << "\nhorizon " << d.horizon
        << "\nencoder_layers " << d.encoder_layers << "\n";
    out << "tensors " << params.layout().size() << "\n";
    char buf[40];
    for (const auto& spec : params.layout()) {
        out << "tensor " << spec.name << " " << spec.rows << " " << spec.cols << "\n";
        auto t = params.tensor(spec.name);
        for (int r = 0; r < spec.rows; ++r) {
            for (int c = 0; c < spec.cols; ++c) {
                std::snprintf(buf, sizeof(buf), "%a", t[static_cast<std::size_t>(r) * spec.cols + c]);
                out << buf << (c + 1 < spec.cols ? " " : "");
            }
            out << "\n";
        }
    }
    out << "end\n";
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "priorisk checkpoint v1")
        throw DataError("checkpoint " + path + ": bad or unsupported header");

    auto expect_kv = [&](const std::string& key) -> std::string {
        if (!std::getline(in, line)) throw DataError("checkpoint truncated before " + key);
        std::istringstream ss(line);
        std::string k, v;
        ss >> k >> v;
        if (k != key) throw DataError("checkpoint: expected '" + key + "', got '" + k + "'");
        return v;
    };

    Variant variant = variant_from_name(expect_kv("variant"));
    ModelDims dims;
    dims.feature_dim = std::stoi(expect_kv("feature_dim"));
    dims.d_model = std::stoi(expect_kv("d_model"));
    dims.n_heads = std::stoi(expect_kv("n_heads"));
    dims.n_tokens = std::stoi(expect_kv("n_tokens"));
    dims.horizon = std::stoi(expect_kv("horizon"));
    dims.encoder_layers = std::stoi(expect_kv("encoder_layers"));
    std::size_t n_tensors = std::stoul(expect_kv("tensors"));

    ModelParams params(dims, variant);
    if (n_tensors != params.layout().size())
        throw DataError("checkpoint: tensor count mismatch");

    for (std::size_t i = 0; i < n_tensors; ++i) {
        if (!std::getline(in, line)) throw DataError("checkpoint truncated in tensor list");
        std::istringstream head(line);
        std::string tag, name;
        int rows = 0, cols = 0;
        head >> tag >> name >> rows >> cols;
        if (tag != "tensor") throw DataError("checkpoint: malformed tensor header");
        const auto& spec = params.spec(name);
        if (spec.rows != rows || spec.cols != cols)
            throw DataError("checkpoint: shape mismatch for tensor " + name);
        auto t = params.tensor(name);
        for (int r = 0; r < rows; ++r) {
            if (!std::getline(in, line))
                throw DataError("checkpoint truncated inside tensor " + name);
            const char* p = line.c_str();
            char* endp = nullptr;
            for (int c = 0; c < cols; ++c) {
                double v = std::strtod(p, &endp);
                if (endp == p) throw DataError("checkpoint: bad value in tensor " + name);
                t[static_cast<std::size_t>(r) * cols + c] = v;
                p = endp;
            }
        }
    }
    if (!std::getline(in, line) || line != "end")
        throw DataError("checkpoint: missing end marker");
    return params;
}

}  // namespace priorisk::model

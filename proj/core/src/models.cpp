#include "ivsurf/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ivsurf/errors.hpp"
#include "ivsurf/rng.hpp"

namespace ivsurf {

namespace {

void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) {
        throw std::domain_error(std::string("non-finite ") + what);
    }
}

void require_tau(double tau) {
    if (!std::isfinite(tau) || !(tau > 0.0)) {
        throw std::domain_error("tau must be positive and finite");
    }
}

void require_size(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(want) +
                                    " entries, got " + std::to_string(got));
    }
}

} // namespace

// --- activations -----------------------------------------------------------

double smile_phi(double z, double eps) {
    require_finite(z, "activation input");
    if (!(eps > 0.0)) {
        throw std::domain_error("smile_phi: eps must be positive");
    }
    const double r = z * std::tanh(z + 0.5) + std::tanh(-0.5 * z + eps);
    return std::sqrt(std::max(r, kSmileFloor));
}

ActJet smile_phi_jet(double z, double eps) {
    require_finite(z, "activation input");
    if (!(eps > 0.0)) {
        throw std::domain_error("smile_phi: eps must be positive");
    }
    const double t1 = std::tanh(z + 0.5);
    const double s1 = 1.0 - t1 * t1;
    const double t2 = std::tanh(-0.5 * z + eps);
    const double s2 = 1.0 - t2 * t2;

    const double r = z * t1 + t2;
    if (r <= kSmileFloor) {
        // Clamped branch: the activation is flat at sqrt(kSmileFloor), so all
        // derivatives vanish.  With the default eps the radicand stays above
        // ~9.5e-3 for every real z and this branch is never taken; it guards
        // small user-supplied eps values.
        return {std::sqrt(kSmileFloor), 0.0, 0.0, 0.0};
    }
    const double r1 = t1 + z * s1 - 0.5 * s2;
    const double r2 = 2.0 * s1 - 2.0 * z * t1 * s1 - 0.5 * t2 * s2;
    const double r3 = -6.0 * t1 * s1 - 2.0 * z * s1 * s1 + 4.0 * z * t1 * t1 * s1 +
                      0.25 * s2 * s2 - 0.5 * t2 * t2 * s2;

    ActJet out;
    out.f = std::sqrt(r);
    const double inv = 1.0 / out.f;       // r^(-1/2)
    const double inv_r = inv / r;         // r^(-3/2)
    const double inv_r2 = inv_r / r;      // r^(-5/2)
    out.d1 = 0.5 * r1 * inv;
    out.d2 = 0.5 * r2 * inv - 0.25 * r1 * r1 * inv_r;
    out.d3 = 0.5 * r3 * inv - 0.75 * r1 * r2 * inv_r + 0.375 * r1 * r1 * r1 * inv_r2;
    return out;
}

double sigmoid(double z) {
    require_finite(z, "activation input");
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

ActJet sigmoid_jet(double z) {
    ActJet out;
    out.f = sigmoid(z);
    out.d1 = out.f * (1.0 - out.f);
    const double k = 1.0 - 2.0 * out.f;
    out.d2 = out.d1 * k;
    out.d3 = out.d2 * k - 2.0 * out.d1 * out.d1;
    return out;
}

// --- shared helpers --------------------------------------------------------

std::string_view arch_name(Arch arch) {
    switch (arch) {
    case Arch::single:
        return "single";
    case Arch::multi:
        return "multi";
    case Arch::vanilla:
        return "vanilla";
    }
    throw std::logic_error("unknown architecture enum value");
}

Arch arch_from_name(std::string_view name) {
    if (name == "single") {
        return Arch::single;
    }
    if (name == "multi") {
        return Arch::multi;
    }
    if (name == "vanilla") {
        return Arch::vanilla;
    }
    throw ParseError("unknown architecture '" + std::string(name) + "'");
}

SurfaceJet Model::jet(double m, double tau) const {
    thread_local Scratch scratch;
    return forward(m, tau, scratch);
}

namespace {

// Unit-level scratch layout shared by SingleModel and the experts of
// MultiModel: 8 doubles per unit,
//   [phi, phi', phi'', phi''', sig, sig', sig'', sig'''].
constexpr int kUnitStride = 8;

// Forward pass over one bank of smile units.  `p` points at the bank's flat
// parameters (w_m | b_m | w_tau | b_tau | w_out | b_out), `a_out` at the
// cached exp(w_out), and `cache` at units*kUnitStride doubles of scratch.
SurfaceJet smile_bank_forward(const double* p, const double* a_out, double a_bias, int units,
                              double eps, double m, double tau, double* cache) {
    const double* w_m = p;
    const double* b_m = p + units;
    const double* w_tau = p + 2 * units;
    const double* b_tau = p + 3 * units;

    SurfaceJet jet;
    jet.v = a_bias;
    for (int j = 0; j < units; ++j) {
        const ActJet ph = smile_phi_jet(m * w_m[j] + b_m[j], eps);
        const ActJet sg = sigmoid_jet(tau * w_tau[j] + b_tau[j]);
        double* c = cache + j * kUnitStride;
        c[0] = ph.f;
        c[1] = ph.d1;
        c[2] = ph.d2;
        c[3] = ph.d3;
        c[4] = sg.f;
        c[5] = sg.d1;
        c[6] = sg.d2;
        c[7] = sg.d3;

        const double a = a_out[j];
        jet.v += ph.f * sg.f * a;
        jet.dm += ph.d1 * w_m[j] * sg.f * a;
        jet.dmm += ph.d2 * w_m[j] * w_m[j] * sg.f * a;
        jet.dtau += ph.f * sg.d1 * w_tau[j] * a;
    }
    return jet;
}

// Reverse pass matching smile_bank_forward.  Accumulates the derivative of
// lv*v + lm*v_m + lmm*v_mm + lt*v_tau into grad (bank-local layout).
void smile_bank_backward(const double* p, const double* a_out, double a_bias, int units, double m,
                         double tau, const double* cache, const SurfaceJet& seed, double* grad) {
    const double* w_m = p;
    const double* w_tau = p + 2 * units;
    const double lv = seed.v;
    const double lm = seed.dm;
    const double lmm = seed.dmm;
    const double lt = seed.dtau;

    for (int j = 0; j < units; ++j) {
        const double* c = cache + j * kUnitStride;
        const double ph0 = c[0], ph1 = c[1], ph2 = c[2], ph3 = c[3];
        const double sg0 = c[4], sg1 = c[5], sg2 = c[6];
        const double a = a_out[j];
        const double wm = w_m[j];
        const double wt = w_tau[j];

        // Chains through the moneyness-branch preactivation.
        const double g_bm =
            a * (sg0 * (lv * ph1 + lm * ph2 * wm + lmm * ph3 * wm * wm) + lt * ph1 * sg1 * wt);
        // Chains through the maturity-branch preactivation.
        const double g_bt =
            a * (sg1 * (lv * ph0 + lm * ph1 * wm + lmm * ph2 * wm * wm) + lt * ph0 * sg2 * wt);

        grad[j] += m * g_bm + a * sg0 * (lm * ph1 + 2.0 * lmm * ph2 * wm);
        grad[units + j] += g_bm;
        grad[2 * units + j] += tau * g_bt + a * lt * ph0 * sg1;
        grad[3 * units + j] += g_bt;
        grad[4 * units + j] += a * (sg0 * (lv * ph0 + lm * ph1 * wm + lmm * ph2 * wm * wm) +
                                    lt * ph0 * sg1 * wt);
    }
    grad[5 * units] += lv * a_bias;
}

double smile_bank_value(const double* p, const double* a_out, double a_bias, int units, double eps,
                        double m, double tau) {
    const double* w_m = p;
    const double* b_m = p + units;
    const double* w_tau = p + 2 * units;
    const double* b_tau = p + 3 * units;
    double v = a_bias;
    for (int j = 0; j < units; ++j) {
        v += smile_phi(m * w_m[j] + b_m[j], eps) * sigmoid(tau * w_tau[j] + b_tau[j]) * a_out[j];
    }
    return v;
}

} // namespace

// --- SingleModel -----------------------------------------------------------

SingleModel::SingleModel(SingleParams params, double eps) : Model(eps) {
    units_ = static_cast<int>(params.w_m.size());
    if (units_ < 1) {
        throw std::invalid_argument("single model needs at least one unit");
    }
    require_size(params.b_m.size(), params.w_m.size(), "b_m");
    require_size(params.w_tau.size(), params.w_m.size(), "w_tau");
    require_size(params.b_tau.size(), params.w_m.size(), "b_tau");
    require_size(params.w_out.size(), params.w_m.size(), "w_out");

    p_.reserve(param_count());
    p_.insert(p_.end(), params.w_m.begin(), params.w_m.end());
    p_.insert(p_.end(), params.b_m.begin(), params.b_m.end());
    p_.insert(p_.end(), params.w_tau.begin(), params.w_tau.end());
    p_.insert(p_.end(), params.b_tau.begin(), params.b_tau.end());
    p_.insert(p_.end(), params.w_out.begin(), params.w_out.end());
    p_.push_back(params.b_out);
    refresh_exp_cache();
}

void SingleModel::refresh_exp_cache() {
    a_out_.resize(units_);
    for (int j = 0; j < units_; ++j) {
        a_out_[j] = std::exp(p_[4 * units_ + j]);
    }
    a_bias_ = std::exp(p_[5 * units_]);
}

ModelDims SingleModel::dims() const { return {1, units_, 0}; }

std::size_t SingleModel::param_count() const { return 5 * static_cast<std::size_t>(units_) + 1; }

std::vector<double> SingleModel::flat_params() const { return p_; }

void SingleModel::set_flat_params(std::span<const double> p) {
    require_size(p.size(), param_count(), "flat params");
    std::copy(p.begin(), p.end(), p_.begin());
    refresh_exp_cache();
}

double SingleModel::value(double m, double tau) const {
    require_finite(m, "moneyness");
    require_tau(tau);
    return smile_bank_value(p_.data(), a_out_.data(), a_bias_, units_, eps_, m, tau);
}

SurfaceJet SingleModel::forward(double m, double tau, Scratch& scratch) const {
    require_finite(m, "moneyness");
    require_tau(tau);
    scratch.buf.resize(static_cast<std::size_t>(units_) * kUnitStride);
    scratch.m = m;
    scratch.tau = tau;
    return smile_bank_forward(p_.data(), a_out_.data(), a_bias_, units_, eps_, m, tau,
                              scratch.buf.data());
}

void SingleModel::backward(const Scratch& scratch, const SurfaceJet& seed,
                           std::span<double> grad) const {
    require_size(grad.size(), param_count(), "gradient");
    smile_bank_backward(p_.data(), a_out_.data(), a_bias_, units_, scratch.m, scratch.tau,
                        scratch.buf.data(), seed, grad.data());
}

double SingleModel::weight_half_sq() const {
    double sum = 0.0;
    for (int j = 0; j < units_; ++j) {
        sum += p_[j] * p_[j];                             // w_m
        sum += p_[2 * units_ + j] * p_[2 * units_ + j];   // w_tau
        sum += p_[4 * units_ + j] * p_[4 * units_ + j];   // w_out
    }
    return 0.5 * sum;
}

void SingleModel::add_weight_grad(double scale, std::span<double> grad) const {
    require_size(grad.size(), param_count(), "gradient");
    for (int j = 0; j < units_; ++j) {
        grad[j] += scale * p_[j];
        grad[2 * units_ + j] += scale * p_[2 * units_ + j];
        grad[4 * units_ + j] += scale * p_[4 * units_ + j];
    }
}

std::unique_ptr<Model> SingleModel::clone() const { return std::make_unique<SingleModel>(*this); }

SingleParams SingleModel::params() const {
    SingleParams out;
    out.w_m.assign(p_.begin(), p_.begin() + units_);
    out.b_m.assign(p_.begin() + units_, p_.begin() + 2 * units_);
    out.w_tau.assign(p_.begin() + 2 * units_, p_.begin() + 3 * units_);
    out.b_tau.assign(p_.begin() + 3 * units_, p_.begin() + 4 * units_);
    out.w_out.assign(p_.begin() + 4 * units_, p_.begin() + 5 * units_);
    out.b_out = p_[5 * units_];
    return out;
}

// --- MultiModel --------------------------------------------------------------

MultiModel::MultiModel(MultiParams params, double eps) : Model(eps) {
    experts_ = static_cast<int>(params.experts.size());
    if (experts_ < 1) {
        throw std::invalid_argument("multi model needs at least one expert");
    }
    units_ = static_cast<int>(params.experts.front().w_m.size());
    gate_units_ = static_cast<int>(params.gate.w_m.size());
    if (units_ < 1 || gate_units_ < 1) {
        throw std::invalid_argument("multi model needs at least one unit per expert and gate");
    }
    const std::size_t ns = static_cast<std::size_t>(units_);
    const std::size_t nk = static_cast<std::size_t>(gate_units_);
    const std::size_t ni = static_cast<std::size_t>(experts_);
    require_size(params.gate.w_tau.size(), nk, "gate w_tau");
    require_size(params.gate.b.size(), nk, "gate b");
    require_size(params.gate.w_mix.size(), nk * ni, "gate w_mix");
    require_size(params.gate.b_mix.size(), ni, "gate b_mix");

    p_.reserve(param_count());
    for (const SingleParams& e : params.experts) {
        require_size(e.w_m.size(), ns, "expert w_m");
        require_size(e.b_m.size(), ns, "expert b_m");
        require_size(e.w_tau.size(), ns, "expert w_tau");
        require_size(e.b_tau.size(), ns, "expert b_tau");
        require_size(e.w_out.size(), ns, "expert w_out");
        p_.insert(p_.end(), e.w_m.begin(), e.w_m.end());
        p_.insert(p_.end(), e.b_m.begin(), e.b_m.end());
        p_.insert(p_.end(), e.w_tau.begin(), e.w_tau.end());
        p_.insert(p_.end(), e.b_tau.begin(), e.b_tau.end());
        p_.insert(p_.end(), e.w_out.begin(), e.w_out.end());
        p_.push_back(e.b_out);
    }
    p_.insert(p_.end(), params.gate.w_m.begin(), params.gate.w_m.end());
    p_.insert(p_.end(), params.gate.w_tau.begin(), params.gate.w_tau.end());
    p_.insert(p_.end(), params.gate.b.begin(), params.gate.b.end());
    p_.insert(p_.end(), params.gate.w_mix.begin(), params.gate.w_mix.end());
    p_.insert(p_.end(), params.gate.b_mix.begin(), params.gate.b_mix.end());
    refresh_exp_cache();
}

void MultiModel::refresh_exp_cache() {
    a_out_.resize(static_cast<std::size_t>(experts_) * units_);
    a_bias_.resize(experts_);
    for (int i = 0; i < experts_; ++i) {
        const std::size_t base = expert_base(i);
        for (int j = 0; j < units_; ++j) {
            a_out_[static_cast<std::size_t>(i) * units_ + j] = std::exp(p_[base + 4 * units_ + j]);
        }
        a_bias_[i] = std::exp(p_[base + 5 * units_]);
    }
}

ModelDims MultiModel::dims() const { return {experts_, units_, gate_units_}; }

std::size_t MultiModel::param_count() const {
    const std::size_t ni = experts_, ns = units_, nk = gate_units_;
    return ni * (5 * ns + 1) + 3 * nk + nk * ni + ni;
}

std::vector<double> MultiModel::flat_params() const { return p_; }

void MultiModel::set_flat_params(std::span<const double> p) {
    require_size(p.size(), param_count(), "flat params");
    std::copy(p.begin(), p.end(), p_.begin());
    refresh_exp_cache();
}

// Scratch layout for MultiModel, in order:
//   expert unit caches   I*J*kUnitStride
//   expert jets          4I   (v, dm, dmm, dtau per expert)
//   gate unit jets       4K   (sig, sig', sig'', sig''' per gate unit)
//   logit channels       4I   (s, s_m, s_mm, s_tau per expert)
//   softmax weights      I
//   d, e, c              3I   (centered logit derivative channels)
//   scalars              2    (mu_m kept for backward; slot 2 spare)
namespace {
struct MultiLayout {
    std::size_t expert_cache, expert_jets, gate_jets, logits, weights, dec, scalars, total;
    MultiLayout(int experts, int units, int gate_units) {
        const std::size_t ni = experts, ns = units, nk = gate_units;
        expert_cache = 0;
        expert_jets = expert_cache + ni * ns * kUnitStride;
        gate_jets = expert_jets + 4 * ni;
        logits = gate_jets + 4 * nk;
        weights = logits + 4 * ni;
        dec = weights + ni;
        scalars = dec + 3 * ni;
        total = scalars + 2;
    }
};
} // namespace

double MultiModel::value(double m, double tau) const {
    require_finite(m, "moneyness");
    require_tau(tau);
    const std::size_t gb = gate_base();
    const double* w_gm = p_.data() + gb;
    const double* w_gt = w_gm + gate_units_;
    const double* b_g = w_gt + gate_units_;
    const double* w_mix = b_g + gate_units_;
    const double* b_mix = w_mix + static_cast<std::size_t>(gate_units_) * experts_;

    // Logits.
    double s[64];
    double h[64];
    std::vector<double> s_heap, h_heap;
    double* sp = s;
    double* hp = h;
    if (experts_ > 64) {
        s_heap.resize(experts_);
        sp = s_heap.data();
    }
    if (gate_units_ > 64) {
        h_heap.resize(gate_units_);
        hp = h_heap.data();
    }
    for (int k = 0; k < gate_units_; ++k) {
        hp[k] = sigmoid(m * w_gm[k] + tau * w_gt[k] + b_g[k]);
    }
    for (int i = 0; i < experts_; ++i) {
        double acc = b_mix[i];
        for (int k = 0; k < gate_units_; ++k) {
            acc += hp[k] * w_mix[static_cast<std::size_t>(k) * experts_ + i];
        }
        sp[i] = acc;
    }
    double smax = sp[0];
    for (int i = 1; i < experts_; ++i) {
        smax = std::max(smax, sp[i]);
    }
    double z = 0.0;
    for (int i = 0; i < experts_; ++i) {
        sp[i] = std::exp(sp[i] - smax);
        z += sp[i];
    }

    double v = 0.0;
    for (int i = 0; i < experts_; ++i) {
        const double y = smile_bank_value(p_.data() + expert_base(i),
                                          a_out_.data() + static_cast<std::size_t>(i) * units_,
                                          a_bias_[i], units_, eps_, m, tau);
        v += y * (sp[i] / z);
    }
    return v;
}

SurfaceJet MultiModel::forward(double m, double tau, Scratch& scratch) const {
    require_finite(m, "moneyness");
    require_tau(tau);
    const MultiLayout lay(experts_, units_, gate_units_);
    scratch.buf.resize(lay.total);
    scratch.m = m;
    scratch.tau = tau;
    double* buf = scratch.buf.data();

    // Experts.
    for (int i = 0; i < experts_; ++i) {
        const SurfaceJet y = smile_bank_forward(
            p_.data() + expert_base(i), a_out_.data() + static_cast<std::size_t>(i) * units_,
            a_bias_[i], units_, eps_, m, tau,
            buf + lay.expert_cache + static_cast<std::size_t>(i) * units_ * kUnitStride);
        double* yj = buf + lay.expert_jets + 4 * static_cast<std::size_t>(i);
        yj[0] = y.v;
        yj[1] = y.dm;
        yj[2] = y.dmm;
        yj[3] = y.dtau;
    }

    // Gate hidden layer.
    const std::size_t gb = gate_base();
    const double* w_gm = p_.data() + gb;
    const double* w_gt = w_gm + gate_units_;
    const double* b_g = w_gt + gate_units_;
    const double* w_mix = b_g + gate_units_;
    const double* b_mix = w_mix + static_cast<std::size_t>(gate_units_) * experts_;
    for (int k = 0; k < gate_units_; ++k) {
        const ActJet h = sigmoid_jet(m * w_gm[k] + tau * w_gt[k] + b_g[k]);
        double* hk = buf + lay.gate_jets + 4 * static_cast<std::size_t>(k);
        hk[0] = h.f;
        hk[1] = h.d1;
        hk[2] = h.d2;
        hk[3] = h.d3;
    }

    // Logits and their input-derivative channels:
    //   s_m[i] = sum_k sig'(z_k) w_gm[k] w_mix[k,i]   etc.
    for (int i = 0; i < experts_; ++i) {
        double* li = buf + lay.logits + 4 * static_cast<std::size_t>(i);
        li[0] = b_mix[i];
        li[1] = li[2] = li[3] = 0.0;
        for (int k = 0; k < gate_units_; ++k) {
            const double* hk = buf + lay.gate_jets + 4 * static_cast<std::size_t>(k);
            const double wk = w_mix[static_cast<std::size_t>(k) * experts_ + i];
            li[0] += hk[0] * wk;
            li[1] += hk[1] * w_gm[k] * wk;
            li[2] += hk[2] * w_gm[k] * w_gm[k] * wk;
            li[3] += hk[1] * w_gt[k] * wk;
        }
    }

    // Softmax weights (max-subtracted for stability).
    double* w = buf + lay.weights;
    double smax = buf[lay.logits];
    for (int i = 1; i < experts_; ++i) {
        smax = std::max(smax, buf[lay.logits + 4 * static_cast<std::size_t>(i)]);
    }
    double z = 0.0;
    for (int i = 0; i < experts_; ++i) {
        w[i] = std::exp(buf[lay.logits + 4 * static_cast<std::size_t>(i)] - smax);
        z += w[i];
    }
    for (int i = 0; i < experts_; ++i) {
        w[i] /= z;
    }

    // Derivatives of the softmax weights along m and tau.  With
    // d_i = s_m[i] - sum_l w_l s_m[l] (and e_i the tau analogue):
    //   dw_i/dm    = w_i d_i
    //   dw_i/dtau  = w_i e_i
    //   d2w_i/dm2  = w_i (d_i^2 + s_mm[i] - (q - mu_m^2 + mu2))
    // where q = sum w s_m^2 and mu2 = sum w s_mm.
    double mu_m = 0.0, mu_t = 0.0, q = 0.0, mu2 = 0.0;
    for (int i = 0; i < experts_; ++i) {
        const double* li = buf + lay.logits + 4 * static_cast<std::size_t>(i);
        mu_m += w[i] * li[1];
        mu_t += w[i] * li[3];
        q += w[i] * li[1] * li[1];
        mu2 += w[i] * li[2];
    }
    const double spread = q - mu_m * mu_m + mu2;
    double* dec = buf + lay.dec;
    for (int i = 0; i < experts_; ++i) {
        const double* li = buf + lay.logits + 4 * static_cast<std::size_t>(i);
        dec[3 * i] = li[1] - mu_m;                            // d_i
        dec[3 * i + 1] = li[3] - mu_t;                        // e_i
        dec[3 * i + 2] = dec[3 * i] * dec[3 * i] + li[2] - spread; // c_i
    }
    buf[lay.scalars] = mu_m;
    buf[lay.scalars + 1] = 0.0;

    // Blend expert jets with gate weight jets (product rule).
    SurfaceJet jet;
    for (int i = 0; i < experts_; ++i) {
        const double* yj = buf + lay.expert_jets + 4 * static_cast<std::size_t>(i);
        const double wi = w[i];
        const double wm = wi * dec[3 * i];
        const double wt = wi * dec[3 * i + 1];
        const double wmm = wi * dec[3 * i + 2];
        jet.v += yj[0] * wi;
        jet.dm += yj[1] * wi + yj[0] * wm;
        jet.dmm += yj[2] * wi + 2.0 * yj[1] * wm + yj[0] * wmm;
        jet.dtau += yj[3] * wi + yj[0] * wt;
    }
    return jet;
}

void MultiModel::backward(const Scratch& scratch, const SurfaceJet& seed,
                          std::span<double> grad) const {
    require_size(grad.size(), param_count(), "gradient");
    const MultiLayout lay(experts_, units_, gate_units_);
    const double* buf = scratch.buf.data();
    const double* w = buf + lay.weights;
    const double* dec = buf + lay.dec;
    const double mu_m = buf[lay.scalars];
    const double m = scratch.m;
    const double tau = scratch.tau;
    const double lv = seed.v, lm = seed.dm, lmm = seed.dmm, lt = seed.dtau;

    // Experts: the seed for expert i's own jet follows from the product rule
    // used in forward().
    for (int i = 0; i < experts_; ++i) {
        const double wi = w[i];
        const double di = dec[3 * i];
        const double ei = dec[3 * i + 1];
        const double ci = dec[3 * i + 2];
        SurfaceJet es;
        es.v = wi * (lv + lm * di + lmm * ci + lt * ei);
        es.dm = wi * (lm + 2.0 * lmm * di);
        es.dmm = wi * lmm;
        es.dtau = wi * lt;
        smile_bank_backward(p_.data() + expert_base(i),
                            a_out_.data() + static_cast<std::size_t>(i) * units_, a_bias_[i],
                            units_, m, tau,
                            buf + lay.expert_cache + static_cast<std::size_t>(i) * units_ * kUnitStride,
                            es, grad.data() + expert_base(i));
    }

    // Gate.  Adjoints of the blended gate-weight channels W0=w, Wm=w.d,
    // Wmm=w.c, Wt=w.e ...
    const int ni = experts_;
    std::vector<double> lam_s(ni), lam_sm(ni), lam_smm(ni), lam_st(ni), big_g(ni);
    double b2 = 0.0, bt = 0.0, sum_d = 0.0;
    std::vector<double> cap_d(ni);
    for (int i = 0; i < ni; ++i) {
        const double* yj = buf + lay.expert_jets + 4 * static_cast<std::size_t>(i);
        const double a_w0 = lv * yj[0] + lm * yj[1] + lmm * yj[2] + lt * yj[3];
        const double a_wm = lm * yj[0] + 2.0 * lmm * yj[1];
        const double a_wmm = lmm * yj[0];
        const double a_wt = lt * yj[0];
        b2 += a_wmm * w[i];
        bt += a_wt * w[i];
        cap_d[i] = a_wm * w[i] + 2.0 * a_wmm * w[i] * dec[3 * i];
        sum_d += cap_d[i];
        // Stash the direct adjoints for the second sweep.
        lam_s[i] = a_w0;   // reused as Λ(W0) until overwritten below
        lam_sm[i] = a_wm;
        lam_smm[i] = a_wmm;
        lam_st[i] = a_wt;
    }
    // ... then adjoints of the logit channels (s, s_m, s_mm, s_tau).
    double g_dot_w = 0.0;
    for (int i = 0; i < ni; ++i) {
        const double* li = buf + lay.logits + 4 * static_cast<std::size_t>(i);
        const double di = dec[3 * i];
        const double ei = dec[3 * i + 1];
        const double ci = dec[3 * i + 2];
        big_g[i] = lam_s[i] + lam_sm[i] * di + lam_st[i] * ei + lam_smm[i] * ci - li[1] * sum_d -
                   li[3] * bt - b2 * (li[1] * li[1] - 2.0 * mu_m * li[1] + li[2]);
        g_dot_w += big_g[i] * w[i];
        lam_sm[i] = cap_d[i] - w[i] * sum_d - 2.0 * b2 * w[i] * di;
        lam_smm[i] = w[i] * (lam_smm[i] - b2);
        lam_st[i] = w[i] * (lam_st[i] - bt);
    }
    for (int i = 0; i < ni; ++i) {
        lam_s[i] = w[i] * (big_g[i] - g_dot_w);
    }

    // Distribute over mixing weights and the gate hidden layer.
    const std::size_t gb = gate_base();
    const double* w_gm = p_.data() + gb;
    const double* w_gt = w_gm + gate_units_;
    double* g_gm = grad.data() + gb;
    double* g_gt = g_gm + gate_units_;
    double* g_bg = g_gt + gate_units_;
    double* g_mix = g_bg + gate_units_;
    double* g_bmix = g_mix + static_cast<std::size_t>(gate_units_) * experts_;

    for (int k = 0; k < gate_units_; ++k) {
        const double* hk = buf + lay.gate_jets + 4 * static_cast<std::size_t>(k);
        const double h0 = hk[0], h1 = hk[1], h2 = hk[2], h3 = hk[3];
        const double wgm = w_gm[k];
        const double wgt = w_gt[k];
        // Channel adjoints for this gate unit's outputs h0, h1*wgm,
        // h2*wgm^2, h1*wgt.
        double a_h0 = 0.0, a_hm = 0.0, a_hmm = 0.0, a_ht = 0.0;
        for (int i = 0; i < ni; ++i) {
            const double wk = p_[gb + 3 * static_cast<std::size_t>(gate_units_) +
                                 static_cast<std::size_t>(k) * experts_ + i];
            a_h0 += lam_s[i] * wk;
            a_hm += lam_sm[i] * wk;
            a_hmm += lam_smm[i] * wk;
            a_ht += lam_st[i] * wk;
        }
        const double a_z = a_h0 * h1 + a_hm * h2 * wgm + a_hmm * h3 * wgm * wgm + a_ht * h2 * wgt;
        g_gm[k] += a_z * m + a_hm * h1 + 2.0 * a_hmm * h2 * wgm;
        g_gt[k] += a_z * tau + a_ht * h1;
        g_bg[k] += a_z;
        for (int i = 0; i < ni; ++i) {
            g_mix[static_cast<std::size_t>(k) * experts_ + i] +=
                lam_s[i] * h0 + lam_sm[i] * h1 * wgm + lam_smm[i] * h2 * wgm * wgm +
                lam_st[i] * h1 * wgt;
        }
    }
    for (int i = 0; i < ni; ++i) {
        g_bmix[i] += lam_s[i];
    }
}

double MultiModel::weight_half_sq() const {
    double sum = 0.0;
    for (int i = 0; i < experts_; ++i) {
        const std::size_t base = expert_base(i);
        for (int j = 0; j < units_; ++j) {
            sum += p_[base + j] * p_[base + j];
            sum += p_[base + 2 * units_ + j] * p_[base + 2 * units_ + j];
            sum += p_[base + 4 * units_ + j] * p_[base + 4 * units_ + j];
        }
    }
    const std::size_t gb = gate_base();
    const std::size_t n_gate_w = 2 * static_cast<std::size_t>(gate_units_);
    for (std::size_t t = 0; t < n_gate_w; ++t) {
        sum += p_[gb + t] * p_[gb + t]; // w_gate_m and w_gate_tau
    }
    const std::size_t mix0 = gb + 3 * static_cast<std::size_t>(gate_units_);
    const std::size_t n_mix = static_cast<std::size_t>(gate_units_) * experts_;
    for (std::size_t t = 0; t < n_mix; ++t) {
        sum += p_[mix0 + t] * p_[mix0 + t];
    }
    return 0.5 * sum;
}

void MultiModel::add_weight_grad(double scale, std::span<double> grad) const {
    require_size(grad.size(), param_count(), "gradient");
    for (int i = 0; i < experts_; ++i) {
        const std::size_t base = expert_base(i);
        for (int j = 0; j < units_; ++j) {
            grad[base + j] += scale * p_[base + j];
            grad[base + 2 * units_ + j] += scale * p_[base + 2 * units_ + j];
            grad[base + 4 * units_ + j] += scale * p_[base + 4 * units_ + j];
        }
    }
    const std::size_t gb = gate_base();
    for (std::size_t t = 0; t < 2 * static_cast<std::size_t>(gate_units_); ++t) {
        grad[gb + t] += scale * p_[gb + t];
    }
    const std::size_t mix0 = gb + 3 * static_cast<std::size_t>(gate_units_);
    for (std::size_t t = 0; t < static_cast<std::size_t>(gate_units_) * experts_; ++t) {
        grad[mix0 + t] += scale * p_[mix0 + t];
    }
}

std::unique_ptr<Model> MultiModel::clone() const { return std::make_unique<MultiModel>(*this); }

MultiParams MultiModel::params() const {
    MultiParams out;
    out.experts.resize(experts_);
    for (int i = 0; i < experts_; ++i) {
        const auto b = p_.begin() + static_cast<std::ptrdiff_t>(expert_base(i));
        SingleParams& e = out.experts[i];
        e.w_m.assign(b, b + units_);
        e.b_m.assign(b + units_, b + 2 * units_);
        e.w_tau.assign(b + 2 * units_, b + 3 * units_);
        e.b_tau.assign(b + 3 * units_, b + 4 * units_);
        e.w_out.assign(b + 4 * units_, b + 5 * units_);
        e.b_out = *(b + 5 * units_);
    }
    const auto g = p_.begin() + static_cast<std::ptrdiff_t>(gate_base());
    out.gate.w_m.assign(g, g + gate_units_);
    out.gate.w_tau.assign(g + gate_units_, g + 2 * gate_units_);
    out.gate.b.assign(g + 2 * gate_units_, g + 3 * gate_units_);
    out.gate.w_mix.assign(g + 3 * gate_units_,
                          g + 3 * gate_units_ + static_cast<std::ptrdiff_t>(gate_units_) * experts_);
    out.gate.b_mix.assign(g + 3 * gate_units_ + static_cast<std::ptrdiff_t>(gate_units_) * experts_,
                          p_.end());
    return out;
}

std::vector<double> MultiModel::gate_weights(double m, double tau) const {
    require_finite(m, "moneyness");
    require_tau(tau);
    const std::size_t gb = gate_base();
    const double* w_gm = p_.data() + gb;
    const double* w_gt = w_gm + gate_units_;
    const double* b_g = w_gt + gate_units_;
    const double* w_mix = b_g + gate_units_;
    const double* b_mix = w_mix + static_cast<std::size_t>(gate_units_) * experts_;

    std::vector<double> h(gate_units_);
    for (int k = 0; k < gate_units_; ++k) {
        h[k] = sigmoid(m * w_gm[k] + tau * w_gt[k] + b_g[k]);
    }
    std::vector<double> s(experts_);
    for (int i = 0; i < experts_; ++i) {
        s[i] = b_mix[i];
        for (int k = 0; k < gate_units_; ++k) {
            s[i] += h[k] * w_mix[static_cast<std::size_t>(k) * experts_ + i];
        }
    }
    const double smax = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double& si : s) {
        si = std::exp(si - smax);
        z += si;
    }
    for (double& si : s) {
        si /= z;
    }
    return s;
}

// --- VanillaModel ------------------------------------------------------------

VanillaModel::VanillaModel(VanillaParams params, double eps) : Model(eps) {
    units_ = static_cast<int>(params.w_m.size());
    if (units_ < 1) {
        throw std::invalid_argument("vanilla model needs at least one unit");
    }
    require_size(params.w_tau.size(), params.w_m.size(), "w_tau");
    require_size(params.b.size(), params.w_m.size(), "b");
    require_size(params.w_out.size(), params.w_m.size(), "w_out");

    p_.reserve(param_count());
    p_.insert(p_.end(), params.w_m.begin(), params.w_m.end());
    p_.insert(p_.end(), params.w_tau.begin(), params.w_tau.end());
    p_.insert(p_.end(), params.b.begin(), params.b.end());
    p_.insert(p_.end(), params.w_out.begin(), params.w_out.end());
    p_.push_back(params.b_out);
    refresh_exp_cache();
}

void VanillaModel::refresh_exp_cache() {
    a_out_.resize(units_);
    for (int j = 0; j < units_; ++j) {
        a_out_[j] = std::exp(p_[3 * units_ + j]);
    }
    a_bias_ = std::exp(p_[4 * units_]);
}

ModelDims VanillaModel::dims() const { return {1, units_, 0}; }

std::size_t VanillaModel::param_count() const { return 4 * static_cast<std::size_t>(units_) + 1; }

std::vector<double> VanillaModel::flat_params() const { return p_; }

void VanillaModel::set_flat_params(std::span<const double> p) {
    require_size(p.size(), param_count(), "flat params");
    std::copy(p.begin(), p.end(), p_.begin());
    refresh_exp_cache();
}

double VanillaModel::value(double m, double tau) const {
    require_finite(m, "moneyness");
    require_tau(tau);
    double v = a_bias_;
    for (int j = 0; j < units_; ++j) {
        v += sigmoid(m * p_[j] + tau * p_[units_ + j] + p_[2 * units_ + j]) * a_out_[j];
    }
    return v;
}

SurfaceJet VanillaModel::forward(double m, double tau, Scratch& scratch) const {
    require_finite(m, "moneyness");
    require_tau(tau);
    scratch.buf.resize(static_cast<std::size_t>(units_) * 4);
    scratch.m = m;
    scratch.tau = tau;
    double* buf = scratch.buf.data();

    SurfaceJet jet;
    jet.v = a_bias_;
    for (int j = 0; j < units_; ++j) {
        const double w1 = p_[j];
        const double w2 = p_[units_ + j];
        const ActJet s = sigmoid_jet(m * w1 + tau * w2 + p_[2 * units_ + j]);
        buf[4 * j] = s.f;
        buf[4 * j + 1] = s.d1;
        buf[4 * j + 2] = s.d2;
        buf[4 * j + 3] = s.d3;
        const double a = a_out_[j];
        jet.v += s.f * a;
        jet.dm += s.d1 * w1 * a;
        jet.dmm += s.d2 * w1 * w1 * a;
        jet.dtau += s.d1 * w2 * a;
    }
    return jet;
}

void VanillaModel::backward(const Scratch& scratch, const SurfaceJet& seed,
                            std::span<double> grad) const {
    require_size(grad.size(), param_count(), "gradient");
    const double* buf = scratch.buf.data();
    const double m = scratch.m;
    const double tau = scratch.tau;
    const double lv = seed.v, lm = seed.dm, lmm = seed.dmm, lt = seed.dtau;

    for (int j = 0; j < units_; ++j) {
        const double s0 = buf[4 * j], s1 = buf[4 * j + 1], s2 = buf[4 * j + 2], s3 = buf[4 * j + 3];
        const double w1 = p_[j];
        const double w2 = p_[units_ + j];
        const double a = a_out_[j];
        const double g_b = a * (lv * s1 + lm * s2 * w1 + lmm * s3 * w1 * w1 + lt * s2 * w2);
        grad[j] += m * g_b + a * (lm * s1 + 2.0 * lmm * s2 * w1);
        grad[units_ + j] += tau * g_b + a * lt * s1;
        grad[2 * units_ + j] += g_b;
        grad[3 * units_ + j] += a * (lv * s0 + lm * s1 * w1 + lmm * s2 * w1 * w1 + lt * s1 * w2);
    }
    grad[4 * units_] += lv * a_bias_;
}

double VanillaModel::weight_half_sq() const {
    double sum = 0.0;
    for (int j = 0; j < units_; ++j) {
        sum += p_[j] * p_[j];
        sum += p_[units_ + j] * p_[units_ + j];
        sum += p_[3 * units_ + j] * p_[3 * units_ + j];
    }
    return 0.5 * sum;
}

void VanillaModel::add_weight_grad(double scale, std::span<double> grad) const {
    require_size(grad.size(), param_count(), "gradient");
    for (int j = 0; j < units_; ++j) {
        grad[j] += scale * p_[j];
        grad[units_ + j] += scale * p_[units_ + j];
        grad[3 * units_ + j] += scale * p_[3 * units_ + j];
    }
}

std::unique_ptr<Model> VanillaModel::clone() const { return std::make_unique<VanillaModel>(*this); }

VanillaParams VanillaModel::params() const {
    VanillaParams out;
    out.w_m.assign(p_.begin(), p_.begin() + units_);
    out.w_tau.assign(p_.begin() + units_, p_.begin() + 2 * units_);
    out.b.assign(p_.begin() + 2 * units_, p_.begin() + 3 * units_);
    out.w_out.assign(p_.begin() + 3 * units_, p_.begin() + 4 * units_);
    out.b_out = p_[4 * units_];
    return out;
}

// --- initialization ----------------------------------------------------------

namespace {

double glorot_bound(int fan_in, int fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

SingleParams init_single_params(int units, Rng& rng) {
    SingleParams p;
    const double bound = glorot_bound(1, units); // each input branch is a 1 x J layer
    p.w_m.resize(units);
    for (double& w : p.w_m) {
        w = rng.uniform(-bound, bound);
    }
    p.b_m.assign(units, 0.0);
    p.w_tau.resize(units);
    for (double& w : p.w_tau) {
        w = rng.uniform(-bound, bound);
    }
    p.b_tau.assign(units, 0.0);
    p.w_out.resize(units);
    for (double& w : p.w_out) {
        w = rng.uniform(-3.0, -1.0);
    }
    p.b_out = -2.0;
    return p;
}

} // namespace

std::unique_ptr<Model> init_model(Arch arch, const ModelDims& dims, std::uint64_t seed, double eps) {
    if (dims.units < 1) {
        throw std::invalid_argument("init_model: units must be >= 1");
    }
    Rng rng(seed);
    switch (arch) {
    case Arch::single:
        return std::make_unique<SingleModel>(init_single_params(dims.units, rng), eps);
    case Arch::multi: {
        if (dims.experts < 1 || dims.gate_units < 1) {
            throw std::invalid_argument("init_model: multi needs experts >= 1 and gate_units >= 1");
        }
        MultiParams p;
        p.experts.reserve(dims.experts);
        for (int i = 0; i < dims.experts; ++i) {
            p.experts.push_back(init_single_params(dims.units, rng));
        }
        const double g_in = glorot_bound(2, dims.gate_units);  // (m, tau) -> K units
        const double g_mix = glorot_bound(dims.gate_units, dims.experts);
        p.gate.w_m.resize(dims.gate_units);
        for (double& w : p.gate.w_m) {
            w = rng.uniform(-g_in, g_in);
        }
        p.gate.w_tau.resize(dims.gate_units);
        for (double& w : p.gate.w_tau) {
            w = rng.uniform(-g_in, g_in);
        }
        p.gate.b.assign(dims.gate_units, 0.0);
        p.gate.w_mix.resize(static_cast<std::size_t>(dims.gate_units) * dims.experts);
        for (double& w : p.gate.w_mix) {
            w = rng.uniform(-g_mix, g_mix);
        }
        p.gate.b_mix.assign(dims.experts, 0.0);
        return std::make_unique<MultiModel>(std::move(p), eps);
    }
    case Arch::vanilla: {
        VanillaParams p;
        const double bound = glorot_bound(2, dims.units); // (m, tau) -> J units
        p.w_m.resize(dims.units);
        for (double& w : p.w_m) {
            w = rng.uniform(-bound, bound);
        }
        p.w_tau.resize(dims.units);
        for (double& w : p.w_tau) {
            w = rng.uniform(-bound, bound);
        }
        p.b.assign(dims.units, 0.0);
        p.w_out.resize(dims.units);
        for (double& w : p.w_out) {
            w = rng.uniform(-3.0, -1.0);
        }
        p.b_out = -2.0;
        return std::make_unique<VanillaModel>(std::move(p), eps);
    }
    }
    throw std::logic_error("unknown architecture enum value");
}

} // namespace ivsurf

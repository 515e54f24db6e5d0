#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "ivsurf/surface.hpp"

// Parametric volatility-surface models.
//
// Three architectures share one interface:
//
//   single   J smile units:  v = sum_j phi(m w_m[j] + b_m[j]) *
//                                      sigmoid(tau w_tau[j] + b_tau[j]) *
//                                      exp(w_out[j])  +  exp(b_out)
//   multi    I single-style experts blended by a softmax gate whose logits
//            come from a K-unit sigmoid layer reading (m, tau)
//   vanilla  J sigmoid units on (m, tau) jointly, same positive output head;
//            reference architecture without the smile-shaped activation
//
// Positivity is structural: every output weight enters through exp().
// All models expose analytic input derivatives (d/dm, d^2/dm^2, d/dtau) and
// hand-coded reverse-mode parameter gradients for those derivatives, which is
// what lets shape penalties on the derivatives be trained at full precision
// without any autodiff dependency.

namespace ivsurf {

// --- activations -----------------------------------------------------------

// Floor applied to the radicand of the smile activation before the square
// root; keeps the value and its derivatives finite near the sign change.
inline constexpr double kSmileFloor = 1e-12;

// Default offset eps in the smile activation's second tanh term.
inline constexpr double kSmileEps = 0.01;

// Value and first three derivatives of a scalar activation.
struct ActJet {
    double f = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
};

// Smile-shaped activation sqrt(z tanh(z + 1/2) + tanh(-z/2 + eps)).
// Asymptotically ~ sqrt(|z|) in both wings with a dip near zero, which is the
// qualitative shape of an equity smile slice.  Requires finite z and eps > 0.
double smile_phi(double z, double eps = kSmileEps);
ActJet smile_phi_jet(double z, double eps = kSmileEps);

// Numerically stable logistic function.
double sigmoid(double z);
ActJet sigmoid_jet(double z);

// --- model parameters ------------------------------------------------------

enum class Arch { single, multi, vanilla };

std::string_view arch_name(Arch arch);
Arch arch_from_name(std::string_view name); // throws ParseError on unknown names

struct ModelDims {
    int experts = 1;    // I; multi only, must be 1 for single/vanilla
    int units = 8;      // J, hidden units per expert (or of the vanilla net)
    int gate_units = 0; // K; multi only
};

// Parameters of a single-architecture model (and of each multi expert).
// All vectors have length J.
struct SingleParams {
    std::vector<double> w_m;   // moneyness-branch weights
    std::vector<double> b_m;   // moneyness-branch biases
    std::vector<double> w_tau; // maturity-branch weights
    std::vector<double> b_tau; // maturity-branch biases
    std::vector<double> w_out; // log output weights (applied as exp(w_out))
    double b_out = 0.0;        // log output bias  (applied as exp(b_out))
};

// Gate of the multi-architecture model: one K-unit sigmoid layer over
// (m, tau) feeding I softmax logits.
struct GateParams {
    std::vector<double> w_m;           // K
    std::vector<double> w_tau;         // K
    std::vector<double> b;             // K
    std::vector<double> w_mix;         // K*I, laid out k-major: w_mix[k*I + i]
    std::vector<double> b_mix;         // I
};

struct MultiParams {
    std::vector<SingleParams> experts; // I entries, equal unit counts
    GateParams gate;
};

// Parameters of the vanilla reference network.  All vectors have length J.
struct VanillaParams {
    std::vector<double> w_m;   // moneyness weights of the joint hidden layer
    std::vector<double> w_tau; // maturity weights of the joint hidden layer
    std::vector<double> b;     // hidden biases
    std::vector<double> w_out; // log output weights
    double b_out = 0.0;        // log output bias
};

// --- model interface -------------------------------------------------------

class Model : public Surface {
public:
    // Reusable buffer for the fused forward/backward pair below.  Contents
    // are an implementation detail of the concrete model.
    struct Scratch {
        std::vector<double> buf;
        double m = 0.0;
        double tau = 0.0;
    };

    virtual Arch arch() const = 0;
    virtual ModelDims dims() const = 0;

    // Number of scalar parameters (single: 5J+1, multi: (5J+K+2)I+3K,
    // vanilla: 4J+1).
    virtual std::size_t param_count() const = 0;

    // Flat parameter access.  The layout is fixed per architecture and is the
    // order used by gradients, the optimizer and serialization.
    virtual std::vector<double> flat_params() const = 0;
    virtual void set_flat_params(std::span<const double> p) = 0;

    // Computes the jet at (m, tau), stashing unit-level intermediates in
    // `scratch` so that an immediately following backward() on the same
    // scratch skips re-evaluating every transcendental.
    virtual SurfaceJet forward(double m, double tau, Scratch& scratch) const = 0;

    // Accumulates  d(seed.v * v + seed.dm * v_m + seed.dmm * v_mm +
    // seed.dtau * v_tau) / d theta  into grad (length param_count()), where
    // the derivatives are taken at the point stored in `scratch` by the last
    // forward() on this model.
    virtual void backward(const Scratch& scratch, const SurfaceJet& seed,
                          std::span<double> grad) const = 0;

    // One half of the sum of squared weights; biases excluded.  This is the
    // quantity the ridge term of the training loss applies to.
    virtual double weight_half_sq() const = 0;

    // grad += scale * d(weight_half_sq) / d theta.
    virtual void add_weight_grad(double scale, std::span<double> grad) const = 0;

    virtual std::unique_ptr<Model> clone() const = 0;

    double smile_eps() const { return eps_; }

    // Surface interface.  value() skips the derivative arithmetic; jet()
    // delegates to forward() with an internal scratch.
    double value(double m, double tau) const override = 0;
    SurfaceJet jet(double m, double tau) const override;

protected:
    explicit Model(double eps) : eps_(eps) {}
    double eps_ = kSmileEps;
};

class SingleModel final : public Model {
public:
    explicit SingleModel(SingleParams params, double eps = kSmileEps);

    Arch arch() const override { return Arch::single; }
    ModelDims dims() const override;
    std::size_t param_count() const override;
    std::vector<double> flat_params() const override;
    void set_flat_params(std::span<const double> p) override;
    double value(double m, double tau) const override;
    SurfaceJet forward(double m, double tau, Scratch& scratch) const override;
    void backward(const Scratch& scratch, const SurfaceJet& seed,
                  std::span<double> grad) const override;
    double weight_half_sq() const override;
    void add_weight_grad(double scale, std::span<double> grad) const override;
    std::unique_ptr<Model> clone() const override;

    SingleParams params() const;

private:
    friend class MultiModel;
    int units_ = 0;
    std::vector<double> p_;      // flat: w_m | b_m | w_tau | b_tau | w_out | b_out
    std::vector<double> a_out_;  // exp(w_out), refreshed on parameter changes
    double a_bias_ = 0.0;        // exp(b_out)
    void refresh_exp_cache();
};

class MultiModel final : public Model {
public:
    explicit MultiModel(MultiParams params, double eps = kSmileEps);

    Arch arch() const override { return Arch::multi; }
    ModelDims dims() const override;
    std::size_t param_count() const override;
    std::vector<double> flat_params() const override;
    void set_flat_params(std::span<const double> p) override;
    double value(double m, double tau) const override;
    SurfaceJet forward(double m, double tau, Scratch& scratch) const override;
    void backward(const Scratch& scratch, const SurfaceJet& seed,
                  std::span<double> grad) const override;
    double weight_half_sq() const override;
    void add_weight_grad(double scale, std::span<double> grad) const override;
    std::unique_ptr<Model> clone() const override;

    MultiParams params() const;

    // Gate mixture weights at (m, tau); positive, summing to one.
    std::vector<double> gate_weights(double m, double tau) const;

private:
    int experts_ = 0;
    int units_ = 0;
    int gate_units_ = 0;
    // flat: expert 0 | expert 1 | ... | w_gate_m | w_gate_tau | b_gate |
    //       w_mix (k-major) | b_mix
    std::vector<double> p_;
    std::vector<double> a_out_;  // exp(expert w_out), expert-major
    std::vector<double> a_bias_; // exp(expert b_out)
    void refresh_exp_cache();
    std::size_t expert_base(int i) const { return static_cast<std::size_t>(i) * (5 * units_ + 1); }
    std::size_t gate_base() const { return static_cast<std::size_t>(experts_) * (5 * units_ + 1); }
};

class VanillaModel final : public Model {
public:
    explicit VanillaModel(VanillaParams params, double eps = kSmileEps);

    Arch arch() const override { return Arch::vanilla; }
    ModelDims dims() const override;
    std::size_t param_count() const override;
    std::vector<double> flat_params() const override;
    void set_flat_params(std::span<const double> p) override;
    double value(double m, double tau) const override;
    SurfaceJet forward(double m, double tau, Scratch& scratch) const override;
    void backward(const Scratch& scratch, const SurfaceJet& seed,
                  std::span<double> grad) const override;
    double weight_half_sq() const override;
    void add_weight_grad(double scale, std::span<double> grad) const override;
    std::unique_ptr<Model> clone() const override;

    VanillaParams params() const;

private:
    int units_ = 0;
    std::vector<double> p_;     // flat: w_m | w_tau | b | w_out | b_out
    std::vector<double> a_out_; // exp(w_out)
    double a_bias_ = 0.0;       // exp(b_out)
    void refresh_exp_cache();
};

// Seeded initialization: Glorot-uniform weights (bound sqrt(6 / (fan_in +
// fan_out))), zero biases, output log-weights from U(-3, -1) and output
// log-bias -2, so every fresh model starts as a small positive surface.
// Draws happen in flat-parameter order, making the result a pure function of
// (arch, dims, seed).
std::unique_ptr<Model> init_model(Arch arch, const ModelDims& dims, std::uint64_t seed,
                                  double eps = kSmileEps);

} // namespace ivsurf

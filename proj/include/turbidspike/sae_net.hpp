#pragma once

#include <cmath>

#include "turbidspike/rng.hpp"
#include "turbidspike/snn.hpp"
#include "turbidspike/surrogate.hpp"

namespace turbidspike::snn {

// im2col over all T steps at once. X is (C*H*W) x T with row c*H*W + y*W + x;
// col comes out (C*k*k) x (T*OH*OW) with column t*OH*OW + oy*OW + ox.
template <typename S>
void im2col(const MatX<S>& x, int c_in, int h, int w, int k, int stride, int pad,
            int oh, int ow, MatX<S>& col) {
    const int T = static_cast<int>(x.cols());
    col.resize(c_in * k * k, static_cast<Eigen::Index>(T) * oh * ow);
    for (int t = 0; t < T; ++t) {
        const S* xt = x.data() + static_cast<size_t>(t) * x.rows();
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                S* out = col.data() + (static_cast<size_t>(t) * oh * ow +
                                       static_cast<size_t>(oy) * ow + ox) *
                                          col.rows();
                int r = 0;
                for (int c = 0; c < c_in; ++c) {
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) {
                            for (int kx = 0; kx < k; ++kx) out[r++] = S(0);
                            continue;
                        }
                        const S* row = xt + (static_cast<size_t>(c) * h + iy) * w;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride + kx - pad;
                            out[r++] = (ix < 0 || ix >= w) ? S(0) : row[ix];
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds the column matrix back onto (C*H*W) x T.
template <typename S>
void col2im(const MatX<S>& col, int c_in, int h, int w, int k, int stride, int pad,
            int oh, int ow, MatX<S>& x) {
    const int T = static_cast<int>(col.cols() / (static_cast<Eigen::Index>(oh) * ow));
    x.setZero(static_cast<Eigen::Index>(c_in) * h * w, T);
    for (int t = 0; t < T; ++t) {
        S* xt = x.data() + static_cast<size_t>(t) * x.rows();
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const S* in = col.data() + (static_cast<size_t>(t) * oh * ow +
                                            static_cast<size_t>(oy) * ow + ox) *
                                               col.rows();
                int r = 0;
                for (int c = 0; c < c_in; ++c) {
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) {
                            r += k;
                            continue;
                        }
                        S* row = xt + (static_cast<size_t>(c) * h + iy) * w;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride + kx - pad;
                            if (ix >= 0 && ix < w) row[ix] += in[r];
                            ++r;
                        }
                    }
                }
            }
        }
    }
}

template <typename S>
class SaeNet {
public:
    using Mat = MatX<S>;
    using Vec = VecX<S>;

    SaeNet() = default;
    explicit SaeNet(const SaeConfig& cfg) : cfg_(cfg), desc_(build_layers(cfg)) {
        weights_.resize(desc_.size());
        biases_.resize(desc_.size());
        for (size_t l = 0; l < desc_.size(); ++l) {
            weights_[l].setZero(desc_[l].w_rows(), desc_[l].w_cols());
            biases_[l].setZero(desc_[l].kind == LayerDesc::Kind::dense
                                   ? desc_[l].out_features()
                                   : desc_[l].out_c);
        }
    }

    // Fan-in scaled uniform init, zero biases; draw order is fixed so the
    // result only depends on the seed.
    void init_params(uint64_t seed) {
        const uint64_t key = seed_hash(seed, "init");
        for (size_t l = 0; l < desc_.size(); ++l) {
            CounterRng rng(key, l);
            int fan_in = desc_[l].kind == LayerDesc::Kind::dense
                             ? desc_[l].in_features()
                             : desc_[l].in_c * desc_[l].kernel * desc_[l].kernel;
            const S bound = static_cast<S>(std::sqrt(6.0 / fan_in));
            Mat& w = weights_[l];
            for (Eigen::Index i = 0; i < w.size(); ++i)
                w.data()[i] = static_cast<S>(2.0 * rng.uniform() - 1.0) * bound;
            biases_[l].setZero();
        }
    }

    struct State {
        std::vector<Vec> current;   // synaptic current per layer
        std::vector<Vec> membrane;  // post-reset membrane per layer
    };

    State make_state() const {
        State st;
        st.current.resize(desc_.size());
        st.membrane.resize(desc_.size());
        for (size_t l = 0; l < desc_.size(); ++l) {
            st.current[l] = Vec::Zero(desc_[l].out_features());
            st.membrane[l] = Vec::Zero(desc_[l].out_features());
        }
        return st;
    }

    struct Trace {
        Mat input;                // in_features x T
        std::vector<Mat> u_pre;   // per layer, out_features x T
        std::vector<Mat> spikes;  // per layer, out_features x T
    };

    struct Output {
        Mat out_membrane;   // pre-reset membrane trace of the last layer
        Mat out_spikes;
        Mat latent_spikes;  // latent_dim x T
    };

    // Runs T = input.cols() steps, carrying `state` across calls (block
    // boundaries see no hidden reset). Pass `trace` to record what backward
    // needs.
    Output forward(const Mat& input, State& state, Trace* trace = nullptr) const {
        if (input.rows() != desc_.front().in_features())
            throw DataError("SAE input feature count mismatch");
        const Eigen::Index T = input.cols();
        if (trace) {
            trace->input = input;
            trace->u_pre.assign(desc_.size(), Mat());
            trace->spikes.assign(desc_.size(), Mat());
        }
        Output out;
        Mat x = input;
        for (size_t l = 0; l < desc_.size(); ++l) {
            Mat currents = linear_forward(l, x);
            Mat u_pre(currents.rows(), T), spikes(currents.rows(), T);
            lif_forward(l, currents, state, u_pre, spikes);
            if (trace) {
                trace->u_pre[l] = u_pre;
                trace->spikes[l] = spikes;
            }
            if (static_cast<int>(l) == latent_layer_index()) out.latent_spikes = spikes;
            if (l + 1 == desc_.size()) {
                out.out_membrane = std::move(u_pre);
                out.out_spikes = std::move(spikes);
            } else {
                x = std::move(spikes);
            }
        }
        return out;
    }

    struct Grads {
        std::vector<Mat> w;
        std::vector<Vec> b;

        void add(const Grads& o) {
            for (size_t i = 0; i < w.size(); ++i) {
                w[i] += o.w[i];
                b[i] += o.b[i];
            }
        }
        void scale(S f) {
            for (size_t i = 0; i < w.size(); ++i) {
                w[i] *= f;
                b[i] *= f;
            }
        }
    };

    Grads make_grads() const {
        Grads g;
        g.w.resize(desc_.size());
        g.b.resize(desc_.size());
        for (size_t l = 0; l < desc_.size(); ++l) {
            g.w[l] = Mat::Zero(weights_[l].rows(), weights_[l].cols());
            g.b[l] = Vec::Zero(biases_[l].size());
        }
        return g;
    }

    // BPTT over the traced block. g_out_spikes / g_out_membrane are the loss
    // gradients on the last layer's spike and pre-reset membrane traces
    // (either may be empty). Gradients accumulate into `grads`.
    void backward(const Trace& trace, const Mat& g_out_spikes,
                  const Mat& g_out_membrane, Grads& grads) const {
        const Eigen::Index T = trace.input.cols();
        const int L = static_cast<int>(desc_.size());
        Mat g_spikes;  // gradient flowing onto layer l's output spikes
        for (int l = L - 1; l >= 0; --l) {
            const Mat* gs = nullptr;
            const Mat* gu = nullptr;
            if (l == L - 1) {
                gs = g_out_spikes.size() ? &g_out_spikes : nullptr;
                gu = g_out_membrane.size() ? &g_out_membrane : nullptr;
            } else {
                gs = &g_spikes;
            }
            Mat g_currents(desc_[l].out_features(), T);
            lif_backward(l, trace, gs, gu, g_currents);
            const Mat& x = l == 0 ? trace.input : trace.spikes[l - 1];
            Mat g_x;
            linear_backward(l, x, g_currents, grads.w[l], grads.b[l],
                            l > 0 ? &g_x : nullptr);
            if (l > 0) g_spikes = std::move(g_x);
        }
    }

    const SaeConfig& config() const { return cfg_; }
    const std::vector<LayerDesc>& layers() const { return desc_; }
    int latent_layer_index() const { return static_cast<int>(cfg_.encoder.size()); }
    size_t layer_count() const { return desc_.size(); }
    Mat& weight(size_t l) { return weights_[l]; }
    const Mat& weight(size_t l) const { return weights_[l]; }
    Vec& bias(size_t l) { return biases_[l]; }
    const Vec& bias(size_t l) const { return biases_[l]; }

    size_t param_count() const {
        size_t n = 0;
        for (size_t l = 0; l < desc_.size(); ++l)
            n += static_cast<size_t>(weights_[l].size()) + biases_[l].size();
        return n;
    }

    // Smooth test mode: the hard spike is replaced by the arctangent
    // surrogate everywhere, making the whole model differentiable so finite
    // differences can certify the backward pass.
    void set_smooth_mode(bool on) { smooth_ = on; }
    bool smooth_mode() const { return smooth_; }

private:
    Mat linear_forward(size_t l, const Mat& x) const {
        const LayerDesc& d = desc_[l];
        const Eigen::Index T = x.cols();
        if (d.kind == LayerDesc::Kind::dense) {
            Mat c = weights_[l] * x;
            c.colwise() += biases_[l];
            return c;
        }
        if (d.kind == LayerDesc::Kind::conv) {
            Mat col;
            im2col<S>(x, d.in_c, d.in_h, d.in_w, d.kernel, d.stride, d.pad, d.out_h,
                      d.out_w, col);
            Mat y = weights_[l] * col;  // out_c x (T*P)
            const int P = d.out_h * d.out_w;
            Mat c(static_cast<Eigen::Index>(d.out_features()), T);
            for (Eigen::Index t = 0; t < T; ++t)
                for (int oc = 0; oc < d.out_c; ++oc)
                    for (int pos = 0; pos < P; ++pos)
                        c(static_cast<Eigen::Index>(oc) * P + pos, t) =
                            y(oc, t * P + pos) + biases_[l](oc);
            return c;
        }
        // deconv: x (in_c*Pin) x T -> xm (in_c) x (T*Pin)
        const int Pin = d.in_h * d.in_w;
        Mat xm(d.in_c, T * Pin);
        for (Eigen::Index t = 0; t < T; ++t)
            for (int ic = 0; ic < d.in_c; ++ic)
                for (int pos = 0; pos < Pin; ++pos)
                    xm(ic, t * Pin + pos) = x(static_cast<Eigen::Index>(ic) * Pin + pos, t);
        Mat coly = weights_[l].transpose() * xm;  // (out_c*k*k) x (T*Pin)
        Mat c;
        col2im<S>(coly, d.out_c, d.out_h, d.out_w, d.kernel, d.stride, d.pad, d.in_h,
                  d.in_w, c);
        const int Pout = d.out_h * d.out_w;
        for (Eigen::Index t = 0; t < T; ++t)
            for (int oc = 0; oc < d.out_c; ++oc)
                c.col(t).segment(static_cast<Eigen::Index>(oc) * Pout, Pout).array() +=
                    biases_[l](oc);
        return c;
    }

    void linear_backward(size_t l, const Mat& x, const Mat& g_currents, Mat& dw,
                         Vec& db, Mat* g_x) const {
        const LayerDesc& d = desc_[l];
        const Eigen::Index T = x.cols();
        if (d.kind == LayerDesc::Kind::dense) {
            dw.noalias() += g_currents * x.transpose();
            db += g_currents.rowwise().sum();
            if (g_x) g_x->noalias() = weights_[l].transpose() * g_currents;
            return;
        }
        if (d.kind == LayerDesc::Kind::conv) {
            const int P = d.out_h * d.out_w;
            Mat gy(d.out_c, T * P);
            for (Eigen::Index t = 0; t < T; ++t)
                for (int oc = 0; oc < d.out_c; ++oc)
                    for (int pos = 0; pos < P; ++pos)
                        gy(oc, t * P + pos) =
                            g_currents(static_cast<Eigen::Index>(oc) * P + pos, t);
            Mat col;
            im2col<S>(x, d.in_c, d.in_h, d.in_w, d.kernel, d.stride, d.pad, d.out_h,
                      d.out_w, col);
            dw.noalias() += gy * col.transpose();
            db += gy.rowwise().sum();
            if (g_x) {
                Mat gcol = weights_[l].transpose() * gy;
                col2im<S>(gcol, d.in_c, d.in_h, d.in_w, d.kernel, d.stride, d.pad,
                          d.out_h, d.out_w, *g_x);
            }
            return;
        }
        // deconv
        const int Pin = d.in_h * d.in_w;
        const int Pout = d.out_h * d.out_w;
        Mat gcol;
        im2col<S>(g_currents, d.out_c, d.out_h, d.out_w, d.kernel, d.stride, d.pad,
                  d.in_h, d.in_w, gcol);  // (out_c*k*k) x (T*Pin)
        Mat xm(d.in_c, T * Pin);
        for (Eigen::Index t = 0; t < T; ++t)
            for (int ic = 0; ic < d.in_c; ++ic)
                for (int pos = 0; pos < Pin; ++pos)
                    xm(ic, t * Pin + pos) = x(static_cast<Eigen::Index>(ic) * Pin + pos, t);
        dw.noalias() += xm * gcol.transpose();
        for (Eigen::Index t = 0; t < T; ++t)
            for (int oc = 0; oc < d.out_c; ++oc)
                db(oc) += g_currents.col(t)
                              .segment(static_cast<Eigen::Index>(oc) * Pout, Pout)
                              .sum();
        if (g_x) {
            Mat gxm = weights_[l] * gcol;  // in_c x (T*Pin)
            g_x->resize(static_cast<Eigen::Index>(d.in_features()), T);
            for (Eigen::Index t = 0; t < T; ++t)
                for (int ic = 0; ic < d.in_c; ++ic)
                    for (int pos = 0; pos < Pin; ++pos)
                        (*g_x)(static_cast<Eigen::Index>(ic) * Pin + pos, t) =
                            gxm(ic, t * Pin + pos);
        }
    }

    void lif_forward(size_t l, const Mat& currents, State& state, Mat& u_pre,
                     Mat& spikes) const {
        const LifConfig& lif = cfg_.lif;
        const S alpha = static_cast<S>(lif.alpha);
        const S beta = static_cast<S>(lif.beta);
        const S theta = static_cast<S>(desc_[l].theta);
        const S k = static_cast<S>(cfg_.surrogate_slope);
        Vec& i = state.current[l];
        Vec& u = state.membrane[l];
        for (Eigen::Index t = 0; t < currents.cols(); ++t) {
            i = alpha * i + currents.col(t);
            u_pre.col(t) = beta * u + i;
            if (smooth_) {
                spikes.col(t) = u_pre.col(t).unaryExpr(
                    [theta, k](S v) { return surrogate_sigma(v, theta, k); });
            } else {
                spikes.col(t) = (u_pre.col(t).array() >= theta)
                                    .template cast<S>()
                                    .matrix();
            }
            if (lif.reset == LifConfig::Reset::subtract)
                u = u_pre.col(t) - theta * spikes.col(t);
            else
                u = u_pre.col(t).cwiseProduct(Vec::Ones(u.size()) - spikes.col(t));
        }
        if (!u_pre.allFinite())
            throw NumericError("non-finite membrane potential in layer " +
                               desc_[l].name);
    }

    // Reverse-time pass through one layer's LIF dynamics. g_spikes and
    // g_u_pre_inject are the external gradients on this layer's spike and
    // pre-reset membrane traces.
    void lif_backward(int l, const Trace& trace, const Mat* g_spikes,
                      const Mat* g_u_pre_inject, Mat& g_currents) const {
        const LifConfig& lif = cfg_.lif;
        const S alpha = static_cast<S>(lif.alpha);
        const S beta = static_cast<S>(lif.beta);
        const S theta = static_cast<S>(desc_[l].theta);
        const S k = static_cast<S>(cfg_.surrogate_slope);
        const Mat& u_pre = trace.u_pre[l];
        const Mat& spikes = trace.spikes[l];
        const Eigen::Index T = u_pre.cols();
        Vec g_u = Vec::Zero(u_pre.rows());   // dL/du_t (post reset)
        Vec g_i = Vec::Zero(u_pre.rows());   // dL/di_{t+1}
        Vec d_upre(u_pre.rows());
        Vec sg(u_pre.rows());
        for (Eigen::Index t = T - 1; t >= 0; --t) {
            sg = u_pre.col(t).unaryExpr(
                [theta, k](S v) { return surrogate_grad(v, theta, k); });
            if (lif.reset == LifConfig::Reset::subtract) {
                // u_t = u_pre - theta*s : direct path 1, reset path -theta
                d_upre = g_u;
                if (g_spikes)
                    d_upre.array() +=
                        (g_spikes->col(t) - theta * g_u).array() * sg.array();
                else
                    d_upre.array() += (-theta * g_u).array() * sg.array();
            } else {
                // u_t = u_pre*(1-s)
                d_upre = g_u.cwiseProduct(
                    (Vec::Ones(u_pre.rows()) - spikes.col(t)).eval());
                Vec reset_term = -u_pre.col(t).cwiseProduct(g_u);
                if (g_spikes) reset_term += g_spikes->col(t);
                d_upre.array() += reset_term.array() * sg.array();
            }
            if (g_u_pre_inject) d_upre += g_u_pre_inject->col(t);
            g_i = d_upre + alpha * g_i;
            g_currents.col(t) = g_i;
            g_u = beta * d_upre;
        }
    }

    SaeConfig cfg_;
    std::vector<LayerDesc> desc_;
    std::vector<Mat> weights_;
    std::vector<Vec> biases_;
    bool smooth_ = false;
};

using SaeNetF = SaeNet<float>;
using SaeNetD = SaeNet<double>;

}  // namespace turbidspike::snn

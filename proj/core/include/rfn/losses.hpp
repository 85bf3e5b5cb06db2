#pragma once

#include <array>

#include "rfn/networks.hpp"
#include "rfn/ssim.hpp"

namespace rfn::loss {

/// Autoencoder objective: pixel + lambda * (1 - SSIM).
struct Stage1LossConfig {
    double lambda = 100.0;
    /// Divide squared Frobenius norms by element count (true) or only by batch size.
    bool normalize = true;

    void validate() const;
};

/// RFN objective: alpha * detail + feature.
struct Stage2LossConfig {
    double alpha = 700.0;
    std::array<double, kScales> w1{1.0, 10.0, 100.0, 1000.0};
    double w_vi = 3.0;
    double w_ir = 6.0;
    bool normalize = true;

    void validate() const;
};

/// Mean SSIM over all windows of all planes (N*C), differentiable in both arguments.
template <typename T>
Var<T> ssim(const Var<T>& x, const Var<T>& y, const SsimOptions& options = {});

/// Squared Frobenius distance; divided by element count when `normalize`, otherwise by
/// batch size.
template <typename T>
Var<T> l_pixel(const Var<T>& out, const Var<T>& inp, bool normalize = true);

template <typename T>
struct Stage1Terms {
    Var<T> total;
    Var<T> pixel;
    Var<T> ssim;  // 1 - SSIM
};

template <typename T>
Stage1Terms<T> l_auto(const Var<T>& out, const Var<T>& inp, const Stage1LossConfig& cfg = {});

/// 1 - SSIM(O, I_vi).
template <typename T>
Var<T> l_detail(const Var<T>& fused, const Var<T>& visible);

/// Sum over scales of w1[m] * ||phi_f - (w_vi phi_vi + w_ir phi_ir)||^2, each scale
/// normalised like l_pixel.
template <typename T>
Var<T> l_feature(const MultiScaleFeatures<T>& fused, const MultiScaleFeatures<T>& visible,
                 const MultiScaleFeatures<T>& infrared, const Stage2LossConfig& cfg = {});

template <typename T>
struct Stage2Terms {
    Var<T> total;
    Var<T> detail;
    Var<T> feature;
};

template <typename T>
Stage2Terms<T> l_rfn(const Var<T>& fused, const Var<T>& visible, const MultiScaleFeatures<T>& phi_f,
                     const MultiScaleFeatures<T>& phi_vi, const MultiScaleFeatures<T>& phi_ir,
                     const Stage2LossConfig& cfg = {});

}  // namespace rfn::loss

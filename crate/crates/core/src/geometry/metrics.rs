//! SINR, sum rate, and the analytic gradient of the training objective
//! (negative sum rate) with respect to the transmit powers.

use nalgebra::DVector;

use crate::scenario::ChannelRealization;

/// Per-user SINR under power vector `p`.
pub fn sinr(ch: &ChannelRealization, p: &DVector<f64>) -> DVector<f64> {
    let k = ch.k();
    DVector::from_fn(k, |i, _| {
        let mut interference = ch.noise_power;
        for j in 0..k {
            if j != i {
                interference += ch.gains[(i, j)] * p[j];
            }
        }
        ch.gains[(i, i)] * p[i] / interference
    })
}

/// Sum of `log2(1 + SINR_i)` in bit/s/Hz.
pub fn sum_rate(ch: &ChannelRealization, p: &DVector<f64>) -> f64 {
    sinr(ch, p).iter().map(|g| (1.0 + g).log2()).sum()
}

/// Smallest per-user surplus `log2(1 + SINR_i) - log2(1 + gamma_min_i)`.
/// Non-negative exactly when every rate target is met.
pub fn min_rate_margin(ch: &ChannelRealization, p: &DVector<f64>) -> f64 {
    let g = sinr(ch, p);
    (0..ch.k())
        .map(|i| (1.0 + g[i]).log2() - (1.0 + ch.gamma_min[i]).log2())
        .fold(f64::INFINITY, f64::min)
}

/// Gradient of `J(p) = -sum_i log2(1 + SINR_i(p))`.
///
/// With totals `T_i = sum_j g_ij p_j + noise` and interference
/// `I_i = T_i - g_ii p_i`:
/// `dJ/dp_k = -(1/ln 2) (g_kk / T_k - sum_{i != k} g_ik g_ii p_i / (T_i I_i))`.
pub fn grad_neg_sum_rate(ch: &ChannelRealization, p: &DVector<f64>) -> DVector<f64> {
    let k = ch.k();
    let ln2 = std::f64::consts::LN_2;
    let mut total = vec![0.0; k];
    let mut interf = vec![0.0; k];
    for i in 0..k {
        let mut t = ch.noise_power;
        for j in 0..k {
            t += ch.gains[(i, j)] * p[j];
        }
        total[i] = t;
        interf[i] = t - ch.gains[(i, i)] * p[i];
    }
    DVector::from_fn(k, |kk, _| {
        let mut acc = ch.gains[(kk, kk)] / total[kk];
        for i in 0..k {
            if i != kk {
                acc -= ch.gains[(i, kk)] * ch.gains[(i, i)] * p[i] / (total[i] * interf[i]);
            }
        }
        -acc / ln2
    })
}

//! Recurrent penalty-weight predictor with a hand-written reverse pass.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approx::admissible_heads;
use crate::error::{Error, Result};
use crate::plant::{Mode, Plant, Trajectory};
use crate::qp::PenaltyWeights;

/// Features per hour: price, power, flow, head.
pub const N_FEATURES: usize = 4;
/// Outputs per hour: `w_p`, `w_q`, `w_h`.
pub const N_OUTPUTS: usize = 3;
pub const DEFAULT_HIDDEN: usize = 32;
pub const DEFAULT_W_LO: f64 = 1e-3;
pub const DEFAULT_W_HI: f64 = 1e3;
pub const CHECKPOINT_VERSION: u32 = 1;

/// Per-column normalization constants stored with a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub price_scale: f64,
    pub power_scale: f64,
    pub flow_scale: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl FeatureNorm {
    /// Prices over 100, powers and flows over the largest envelope magnitude, heads onto `[0, 1]`.
    pub fn from_plant(plant: &Plant) -> Result<Self> {
        let (lo, hi) = admissible_heads(plant);
        let (mut p_max, mut q_max) = (0.0f64, 0.0f64);
        for i in 0..=20 {
            let h = lo + (hi - lo) * i as f64 / 20.0;
            for mode in [Mode::Turbine, Mode::Pump] {
                let (a, b) = plant.upc.envelope(mode, h)?;
                for p in [a, b] {
                    p_max = p_max.max(p.abs());
                    q_max = q_max.max(plant.upc.flow(mode, p, h)?.abs());
                }
            }
        }
        let c = &plant.config;
        Ok(FeatureNorm { price_scale: 100.0, power_scale: p_max, flow_scale: q_max, h_min: c.h_min, h_max: c.h_max })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.price_scale, self.power_scale, self.flow_scale].iter().all(|s| s.is_finite() && *s > 0.0)
            && self.h_min.is_finite()
            && self.h_max > self.h_min;
        if !ok {
            return Err(Error::Validation(format!("invalid feature normalization {self:?}")));
        }
        Ok(())
    }
}

/// Normalized `T × 4` inputs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<[f64; N_FEATURES]>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<[f64; N_FEATURES]>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("feature matrix has no rows".into()));
        }
        if let Some(t) = rows.iter().position(|r| r.iter().any(|x| !x.is_finite())) {
            return Err(Error::Validation(format!("non-finite feature at hour {t}")));
        }
        Ok(FeatureMatrix { rows })
    }

    pub fn assemble(norm: &FeatureNorm, prices: &[f64], warm: &Trajectory) -> Result<Self> {
        if prices.len() != warm.horizon() {
            return Err(Error::InvalidArgument(format!("{} prices for a {}-hour warm start", prices.len(), warm.horizon())));
        }
        let span = norm.h_max - norm.h_min;
        let rows = (0..prices.len())
            .map(|t| {
                [
                    prices[t] / norm.price_scale,
                    warm.power[t] / norm.power_scale,
                    warm.flow[t] / norm.flow_scale,
                    (warm.head[t] - norm.h_min) / span,
                ]
            })
            .collect();
        FeatureMatrix::new(rows)
    }

    pub fn horizon(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, t: usize) -> &[f64; N_FEATURES] {
        &self.rows[t]
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        self.rows.swap(a, b);
    }
}

/// LSTM cell and output projection, stored flat.
///
/// Layout: `W_x (4H × 4)`, `W_h (4H × H)`, `b (4H)`, `W_o (3 × H)`, `b_o (3)`;
/// gate blocks in the order input, forget, cell, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub hidden: usize,
    pub data: Vec<f64>,
}

impl NetParams {
    pub fn len_for(hidden: usize) -> usize {
        4 * hidden * N_FEATURES + 4 * hidden * hidden + 4 * hidden + N_OUTPUTS * hidden + N_OUTPUTS
    }

    pub fn zeros(hidden: usize) -> Self {
        NetParams { hidden, data: vec![0.0; Self::len_for(hidden)] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn off_wh(&self) -> usize {
        4 * self.hidden * N_FEATURES
    }

    fn off_b(&self) -> usize {
        self.off_wh() + 4 * self.hidden * self.hidden
    }

    fn off_wo(&self) -> usize {
        self.off_b() + 4 * self.hidden
    }

    fn off_bo(&self) -> usize {
        self.off_wo() + N_OUTPUTS * self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Validation("hidden size must be at least 1".into()));
        }
        if self.data.len() != Self::len_for(self.hidden) {
            return Err(Error::Validation(format!(
                "{} parameters for hidden size {}, expected {}",
                self.data.len(),
                self.hidden,
                Self::len_for(self.hidden)
            )));
        }
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Log-domain smooth clamp onto `[w_lo, w_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightBounds {
    pub w_lo: f64,
    pub w_hi: f64,
}

impl Default for WeightBounds {
    fn default() -> Self {
        WeightBounds { w_lo: DEFAULT_W_LO, w_hi: DEFAULT_W_HI }
    }
}

impl WeightBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_lo > 0.0 && self.w_hi > self.w_lo && self.w_hi.is_finite()) {
            return Err(Error::Validation(format!("weight interval [{}, {}]", self.w_lo, self.w_hi)));
        }
        Ok(())
    }

    fn mid_half(&self) -> (f64, f64) {
        let (a, b) = (self.w_lo.ln(), self.w_hi.ln());
        (0.5 * (a + b), 0.5 * (b - a))
    }

    /// Geometric midpoint of the interval.
    pub fn midpoint(&self) -> f64 {
        self.mid_half().0.exp()
    }

    /// `w = exp(mid + half·tanh((o − mid)/half))` and `dw/do`.
    pub fn apply(&self, o: f64) -> (f64, f64) {
        let (mid, half) = self.mid_half();
        let th = ((o - mid) / half).tanh();
        let w = (mid + half * th).exp().clamp(self.w_lo, self.w_hi);
        (w, w * (1.0 - th * th))
    }
}

pub fn init_params(hidden: usize, bounds: &WeightBounds, seed: u64) -> Result<NetParams> {
    if hidden == 0 {
        return Err(Error::InvalidArgument("hidden size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = NetParams::zeros(hidden);
    let a = 1.0 / (hidden as f64).sqrt();
    let (off_b, off_wo, off_bo) = (p.off_b(), p.off_wo(), p.off_bo());
    for x in p.data[..off_b].iter_mut() {
        *x = rng.random_range(-a..a);
    }
    for x in p.data[off_b + hidden..off_b + 2 * hidden].iter_mut() {
        *x = 1.0;
    }
    for x in p.data[off_wo..off_bo].iter_mut() {
        *x = rng.random_range(-a..a);
    }
    let mid = bounds.mid_half().0;
    for x in p.data[off_bo..].iter_mut() {
        *x = mid;
    }
    Ok(p)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NetTape {
    hidden: usize,
    inputs: Vec<[f64; N_FEATURES]>,
    /// Post-activation gates `[i, f, g, o]` per step.
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
    /// `dw/do` per step and output.
    dweight: Vec<[f64; N_OUTPUTS]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetOutput {
    pub weights: PenaltyWeights,
    /// Unbounded projections `o_t`.
    pub raw: Vec<[f64; N_OUTPUTS]>,
    pub tape: NetTape,
}

pub fn forward(params: &NetParams, bounds: &WeightBounds, x: &FeatureMatrix) -> Result<NetOutput> {
    params.validate()?;
    bounds.validate()?;
    let hd = params.hidden;
    let d = &params.data;
    let (off_wh, off_b, off_wo, off_bo) = (params.off_wh(), params.off_b(), params.off_wo(), params.off_bo());
    let t_len = x.horizon();
    let mut weights = PenaltyWeights::uniform(t_len, 0.0);
    let mut raw = Vec::with_capacity(t_len);
    let mut tape = NetTape {
        hidden: hd,
        inputs: x.rows.clone(),
        gates: Vec::with_capacity(t_len),
        cells: Vec::with_capacity(t_len),
        hiddens: Vec::with_capacity(t_len),
        dweight: Vec::with_capacity(t_len),
    };
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    for t in 0..t_len {
        let xt = x.row(t);
        let mut z = d[off_b..off_b + 4 * hd].to_vec();
        for (r, zr) in z.iter_mut().enumerate() {
            for (k, xk) in xt.iter().enumerate() {
                *zr += d[r * N_FEATURES + k] * xk;
            }
            let row = &d[off_wh + r * hd..off_wh + (r + 1) * hd];
            *zr += row.iter().zip(&h).map(|(w, hv)| w * hv).sum::<f64>();
        }
        for r in 0..hd {
            z[r] = sigmoid(z[r]);
            z[hd + r] = sigmoid(z[hd + r]);
            z[2 * hd + r] = z[2 * hd + r].tanh();
            z[3 * hd + r] = sigmoid(z[3 * hd + r]);
        }
        for r in 0..hd {
            c[r] = z[hd + r] * c[r] + z[r] * z[2 * hd + r];
            h[r] = z[3 * hd + r] * c[r].tanh();
        }
        let mut o = [0.0; N_OUTPUTS];
        let mut dw = [0.0; N_OUTPUTS];
        for (k, ok) in o.iter_mut().enumerate() {
            let row = &d[off_wo + k * hd..off_wo + (k + 1) * hd];
            *ok = d[off_bo + k] + row.iter().zip(&h).map(|(w, hv)| w * hv).sum::<f64>();
            let (w, dwk) = bounds.apply(*ok);
            dw[k] = dwk;
            match k {
                0 => weights.w_p[t] = w,
                1 => weights.w_q[t] = w,
                _ => weights.w_h[t] = w,
            }
        }
        raw.push(o);
        tape.gates.push(z);
        tape.cells.push(c.clone());
        tape.hiddens.push(h.clone());
        tape.dweight.push(dw);
    }
    Ok(NetOutput { weights, raw, tape })
}

pub fn predict_weights(params: &NetParams, bounds: &WeightBounds, x: &FeatureMatrix) -> Result<PenaltyWeights> {
    Ok(forward(params, bounds, x)?.weights)
}

/// Backpropagation through time of `dL/dw` to `dL/dθ`.
pub fn backward(params: &NetParams, tape: &NetTape, upstream: &PenaltyWeights) -> Result<NetParams> {
    params.validate()?;
    let hd = params.hidden;
    let t_len = tape.inputs.len();
    if tape.hidden != hd || tape.gates.len() != t_len {
        return Err(Error::InvalidArgument("forward tape does not match the parameters".into()));
    }
    if upstream.horizon() != t_len || upstream.w_q.len() != t_len || upstream.w_h.len() != t_len {
        return Err(Error::InvalidArgument(format!("upstream gradient has horizon {}, expected {t_len}", upstream.horizon())));
    }
    let d = &params.data;
    let (off_wh, off_b, off_wo, off_bo) = (params.off_wh(), params.off_b(), params.off_wo(), params.off_bo());
    let mut g = NetParams::zeros(hd);
    let gd = &mut g.data;
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let zero = vec![0.0; hd];
    for t in (0..t_len).rev() {
        let h = &tape.hiddens[t];
        let c = &tape.cells[t];
        let gates = &tape.gates[t];
        let c_prev = if t > 0 { &tape.cells[t - 1] } else { &zero };
        let h_prev = if t > 0 { &tape.hiddens[t - 1] } else { &zero };
        let up = [upstream.w_p[t], upstream.w_q[t], upstream.w_h[t]];
        let mut dh = dh_next.clone();
        for k in 0..N_OUTPUTS {
            let dout = up[k] * tape.dweight[t][k];
            gd[off_bo + k] += dout;
            for r in 0..hd {
                gd[off_wo + k * hd + r] += dout * h[r];
                dh[r] += dout * d[off_wo + k * hd + r];
            }
        }
        let mut dz = vec![0.0; 4 * hd];
        for r in 0..hd {
            let (ig, fg, gg, og) = (gates[r], gates[hd + r], gates[2 * hd + r], gates[3 * hd + r]);
            let tc = c[r].tanh();
            let dc = dc_next[r] + dh[r] * og * (1.0 - tc * tc);
            dz[r] = dc * gg * ig * (1.0 - ig);
            dz[hd + r] = dc * c_prev[r] * fg * (1.0 - fg);
            dz[2 * hd + r] = dc * ig * (1.0 - gg * gg);
            dz[3 * hd + r] = dh[r] * tc * og * (1.0 - og);
            dc_next[r] = dc * fg;
        }
        let xt = &tape.inputs[t];
        let mut dh_prev = vec![0.0; hd];
        for (r, &dzr) in dz.iter().enumerate() {
            if dzr == 0.0 {
                continue;
            }
            gd[off_b + r] += dzr;
            for (k, xk) in xt.iter().enumerate() {
                gd[r * N_FEATURES + k] += dzr * xk;
            }
            for j in 0..hd {
                gd[off_wh + r * hd + j] += dzr * h_prev[j];
                dh_prev[j] += dzr * d[off_wh + r * hd + j];
            }
        }
        dh_next = dh_prev;
    }
    Ok(g)
}

/// Rescale `g` in place so its norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        g.iter_mut().for_each(|x| *x *= s);
    }
    norm
}

/// Trained model as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub norm: FeatureNorm,
    pub bounds: WeightBounds,
    pub params: NetParams,
}

impl Checkpoint {
    pub fn new(norm: FeatureNorm, bounds: WeightBounds, params: NetParams) -> Self {
        Checkpoint { version: CHECKPOINT_VERSION, norm, bounds, params }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!("checkpoint version {} is not supported", self.version)));
        }
        self.norm.validate()?;
        self.bounds.validate()?;
        self.params.validate()
    }

    pub fn predict(&self, prices: &[f64], warm: &Trajectory) -> Result<PenaltyWeights> {
        let x = FeatureMatrix::assemble(&self.norm, prices, warm)?;
        predict_weights(&self.params, &self.bounds, &x)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string(self)?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&s)?;
        ck.validate()?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn random_features(t_len: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMatrix::new((0..t_len).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect()).unwrap()
    }

    #[test]
    fn zero_parameters_give_constant_output() {
        let b = WeightBounds::default();
        let w = predict_weights(&NetParams::zeros(5), &b, &random_features(24, 1)).unwrap();
        for v in w.to_flat() {
            assert_eq!(v, w.w_p[0]);
        }
        assert!((w.w_p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn outputs_are_causal() {
        let b = WeightBounds::default();
        let p = init_params(6, &b, 3).unwrap();
        let x = random_features(24, 2);
        let mut y = x.clone();
        y.swap_rows(10, 15);
        let a = predict_weights(&p, &b, &x).unwrap();
        let c = predict_weights(&p, &b, &y).unwrap();
        for t in 0..10 {
            assert_eq!(a.w_p[t], c.w_p[t]);
            assert_eq!(a.w_h[t], c.w_h[t]);
        }
        assert!((10..24).any(|t| a.w_q[t] != c.w_q[t]));
    }

    #[test]
    fn gradient_of_weight_sum_matches_finite_differences() {
        let b = WeightBounds::default();
        let mut p = init_params(8, &b, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for x in p.data.iter_mut() {
            *x += rng.random_range(-0.5..0.5);
        }
        let x = random_features(24, 9);
        let out = forward(&p, &b, &x).unwrap();
        let g = backward(&p, &out.tape, &PenaltyWeights::uniform(24, 1.0)).unwrap();
        let loss = |q: &NetParams| predict_weights(q, &b, &x).unwrap().to_flat().iter().sum::<f64>();
        let eps = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..p.len() {
            let mut a = p.clone();
            a.data[i] += eps;
            let mut c = p.clone();
            c.data[i] -= eps;
            let fd = (loss(&a) - loss(&c)) / (2.0 * eps);
            let rel = (g.data[i] - fd).abs() / fd.abs().max(1e-3);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let b = WeightBounds::default();
        let p = init_params(4, &b, 0).unwrap();
        let out = forward(&p, &b, &random_features(6, 0)).unwrap();
        let g = backward(&p, &out.tape, &PenaltyWeights::uniform(6, 0.0)).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_tape_is_rejected() {
        let b = WeightBounds::default();
        let p = init_params(4, &b, 0).unwrap();
        let out = forward(&p, &b, &random_features(6, 0)).unwrap();
        let q = init_params(5, &b, 0).unwrap();
        assert!(backward(&q, &out.tape, &PenaltyWeights::uniform(6, 1.0)).is_err());
        assert!(backward(&p, &out.tape, &PenaltyWeights::uniform(5, 1.0)).is_err());
    }

    #[test]
    fn init_is_reproducible_and_minimal_size_runs() {
        let b = WeightBounds::default();
        assert_eq!(init_params(7, &b, 42).unwrap(), init_params(7, &b, 42).unwrap());
        assert_ne!(init_params(7, &b, 42).unwrap(), init_params(7, &b, 43).unwrap());
        let w = predict_weights(&init_params(1, &b, 0).unwrap(), &b, &random_features(3, 0)).unwrap();
        w.validate(b.w_lo, b.w_hi).unwrap();
        assert!(init_params(0, &b, 0).is_err());
    }

    #[test]
    fn non_finite_features_are_rejected() {
        assert!(FeatureMatrix::new(vec![[0.0, f64::NAN, 0.0, 0.0]]).is_err());
        assert!(FeatureMatrix::new(vec![]).is_err());
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut h = vec![0.3, 0.4];
        clip_grad_norm(&mut h, 1.0);
        assert_eq!(h, vec![0.3, 0.4]);
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let b = WeightBounds::default();
        let norm = FeatureNorm { price_scale: 100.0, power_scale: 3.7, flow_scale: 15.1, h_min: 50.0, h_max: 99.0 };
        let ck = Checkpoint::new(norm, b, init_params(5, &b, 8).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        let mut bad = ck.clone();
        bad.version = 99;
        bad.save(&path).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn weights_stay_inside_bounds(seed in 0u64..1000, scale in 0.0f64..50.0, t_len in 1usize..30) {
            let b = WeightBounds::default();
            let mut p = init_params(4, &b, seed).unwrap();
            p.data.iter_mut().for_each(|x| *x *= scale);
            let w = predict_weights(&p, &b, &random_features(t_len, seed + 1)).unwrap();
            for v in w.to_flat() {
                prop_assert!(v >= b.w_lo && v <= b.w_hi && v > 0.0);
            }
        }
    }
}

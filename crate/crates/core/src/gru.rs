//! Single-layer GRU cell without bias terms, and the plain sigmoid RNN cell.
//!
//! Forward:
//!
//! ```text
//! z  = σ(Wz·u + Uz·h_prev)
//! r  = σ(Wr·u + Ur·h_prev)
//! h~ = tanh(r ∘ (U·h_prev) + W·u)
//! h  = z ∘ h_prev + (1 - z) ∘ h~
//! ```
//!
//! The backward pass returns exact gradients for one step; callers chain the
//! returned `dh_prev` through an unrolled sequence to get BPTT.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::numkit::{sigmoid, Mat, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct GruParams {
    pub Wz: Mat,
    pub Wr: Mat,
    pub W: Mat,
    pub Uz: Mat,
    pub Ur: Mat,
    pub U: Mat,
}

impl GruParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let wi = Mat::zeros(hidden, input);
        let wh = Mat::zeros(hidden, hidden);
        Self {
            Wz: wi.clone(),
            Wr: wi.clone(),
            W: wi,
            Uz: wh.clone(),
            Ur: wh.clone(),
            U: wh,
        }
    }

    pub fn xavier(hidden: usize, input: usize, rng: &mut Rng) -> Self {
        Self {
            Wz: Mat::xavier(hidden, input, rng),
            Wr: Mat::xavier(hidden, input, rng),
            W: Mat::xavier(hidden, input, rng),
            Uz: Mat::xavier(hidden, hidden, rng),
            Ur: Mat::xavier(hidden, hidden, rng),
            U: Mat::xavier(hidden, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.Uz.rows
    }

    pub fn input(&self) -> usize {
        self.Wz.cols
    }

    pub fn num_params(&self) -> usize {
        self.mats().iter().map(|m| m.len()).sum()
    }

    pub fn mats(&self) -> [&Mat; 6] {
        [&self.Wz, &self.Wr, &self.W, &self.Uz, &self.Ur, &self.U]
    }

    pub fn mats_mut(&mut self) -> [&mut Mat; 6] {
        [&mut self.Wz, &mut self.Wr, &mut self.W, &mut self.Uz, &mut self.Ur, &mut self.U]
    }

    /// Checks the six matrices agree on hidden and input widths.
    pub fn validate(&self) -> Result<()> {
        let (h, i) = (self.hidden(), self.input());
        for (name, m) in [("Wz", &self.Wz), ("Wr", &self.Wr), ("W", &self.W)] {
            if m.rows != h || m.cols != i {
                return Err(shape_err(
                    "GRU input weights",
                    format!("{h}x{i}"),
                    format!("{name} {}x{}", m.rows, m.cols),
                ));
            }
        }
        for (name, m) in [("Uz", &self.Uz), ("Ur", &self.Ur), ("U", &self.U)] {
            if m.rows != h || m.cols != h {
                return Err(shape_err(
                    "GRU recurrent weights",
                    format!("{h}x{h}"),
                    format!("{name} {}x{}", m.rows, m.cols),
                ));
            }
        }
        Ok(())
    }

    fn check_io(&self, h_prev: &[f64], u: &[f64]) -> Result<()> {
        if h_prev.len() != self.hidden() {
            return Err(shape_err("GRU state", self.hidden(), h_prev.len()));
        }
        if u.len() != self.input() {
            return Err(shape_err("GRU input", self.input(), u.len()));
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &GruParams) {
        for (a, b) in self.mats_mut().into_iter().zip(other.mats()) {
            a.add_assign(b);
        }
    }
}

/// Forward intermediates for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCache {
    pub u: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    /// `U · h_prev`, reused by the reset-gate gradient.
    pub uh: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn gru_forward(p: &GruParams, h_prev: &[f64], u: &[f64]) -> Result<(Vec<f64>, GruCache)> {
    p.check_io(h_prev, u)?;
    Ok(gru_forward_unchecked(p, h_prev, u))
}

pub(crate) fn gru_forward_unchecked(p: &GruParams, h_prev: &[f64], u: &[f64]) -> (Vec<f64>, GruCache) {
    let mut z = p.Wz.matvec(u);
    p.Uz.matvec_acc(h_prev, &mut z);
    z.iter_mut().for_each(|v| *v = sigmoid(*v));

    let mut r = p.Wr.matvec(u);
    p.Ur.matvec_acc(h_prev, &mut r);
    r.iter_mut().for_each(|v| *v = sigmoid(*v));

    let uh = p.U.matvec(h_prev);
    let mut h_tilde = p.W.matvec(u);
    for k in 0..h_tilde.len() {
        h_tilde[k] = (h_tilde[k] + r[k] * uh[k]).tanh();
    }

    let h: Vec<f64> = (0..z.len()).map(|k| z[k] * h_prev[k] + (1.0 - z[k]) * h_tilde[k]).collect();

    let cache = GruCache {
        u: u.to_vec(),
        h_prev: h_prev.to_vec(),
        z,
        r,
        uh,
        h_tilde,
        h: h.clone(),
    };
    (h, cache)
}

/// Gradients from one backward step.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStepGrads {
    pub dparams: GruParams,
    pub dh_prev: Vec<f64>,
    pub du: Vec<f64>,
}

pub fn gru_backward(p: &GruParams, cache: &GruCache, dh: &[f64]) -> Result<GruStepGrads> {
    p.check_io(&cache.h_prev, &cache.u)?;
    if dh.len() != p.hidden() {
        return Err(shape_err("GRU state gradient", p.hidden(), dh.len()));
    }
    let mut dparams = GruParams::zeros(p.hidden(), p.input());
    let mut dh_prev = vec![0.0; p.hidden()];
    let mut du = vec![0.0; p.input()];
    gru_backward_acc(p, cache, dh, &mut dparams, &mut dh_prev, &mut du);
    Ok(GruStepGrads { dparams, dh_prev, du })
}

/// Accumulating backward step: adds into `dparams`, `dh_prev` and `du`.
pub(crate) fn gru_backward_acc(p: &GruParams, c: &GruCache, dh: &[f64], dparams: &mut GruParams, dh_prev: &mut [f64], du: &mut [f64]) {
    let n = dh.len();
    let mut da_z = vec![0.0; n];
    let mut da_r = vec![0.0; n];
    let mut da_h = vec![0.0; n];
    let mut da_h_r = vec![0.0; n];
    for k in 0..n {
        let z = c.z[k];
        let ht = c.h_tilde[k];
        dh_prev[k] += dh[k] * z;
        let dz = dh[k] * (c.h_prev[k] - ht);
        let dht = dh[k] * (1.0 - z);
        let dah = dht * (1.0 - ht * ht);
        da_h[k] = dah;
        da_h_r[k] = dah * c.r[k];
        let dr = dah * c.uh[k];
        da_z[k] = dz * z * (1.0 - z);
        da_r[k] = dr * c.r[k] * (1.0 - c.r[k]);
    }

    dparams.Wz.outer_acc(&da_z, &c.u);
    dparams.Uz.outer_acc(&da_z, &c.h_prev);
    dparams.Wr.outer_acc(&da_r, &c.u);
    dparams.Ur.outer_acc(&da_r, &c.h_prev);
    dparams.W.outer_acc(&da_h, &c.u);
    dparams.U.outer_acc(&da_h_r, &c.h_prev);

    p.Wz.t_matvec_acc(&da_z, du);
    p.Wr.t_matvec_acc(&da_r, du);
    p.W.t_matvec_acc(&da_h, du);
    p.Uz.t_matvec_acc(&da_z, dh_prev);
    p.Ur.t_matvec_acc(&da_r, dh_prev);
    p.U.t_matvec_acc(&da_h_r, dh_prev);
}

/// Plain RNN cell: `h = σ(Wh·h_prev + Wu·u)`. Reference only.
pub fn rnn_plain_forward(wh: &Mat, wu: &Mat, h_prev: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_plain(wh, wu, h_prev, u)?;
    let mut a = wh.matvec(h_prev);
    wu.matvec_acc(u, &mut a);
    Ok(a.into_iter().map(sigmoid).collect())
}

/// Gradients of the plain cell: `(dWh, dWu, dh_prev, du)`.
pub fn rnn_plain_backward(wh: &Mat, wu: &Mat, h_prev: &[f64], u: &[f64], dh: &[f64]) -> Result<(Mat, Mat, Vec<f64>, Vec<f64>)> {
    let h = rnn_plain_forward(wh, wu, h_prev, u)?;
    if dh.len() != h.len() {
        return Err(shape_err("plain RNN state gradient", h.len(), dh.len()));
    }
    let da: Vec<f64> = h.iter().zip(dh).map(|(&s, &g)| g * s * (1.0 - s)).collect();
    let mut dwh = wh.zeros_like();
    let mut dwu = wu.zeros_like();
    dwh.outer_acc(&da, h_prev);
    dwu.outer_acc(&da, u);
    let mut dh_prev = vec![0.0; h_prev.len()];
    let mut du = vec![0.0; u.len()];
    wh.t_matvec_acc(&da, &mut dh_prev);
    wu.t_matvec_acc(&da, &mut du);
    Ok((dwh, dwu, dh_prev, du))
}

fn check_plain(wh: &Mat, wu: &Mat, h_prev: &[f64], u: &[f64]) -> Result<()> {
    if wh.rows != wh.cols || wh.rows != h_prev.len() {
        return Err(shape_err(
            "plain RNN Wh",
            format!("{0}x{0}", h_prev.len()),
            format!("{}x{}", wh.rows, wh.cols),
        ));
    }
    if wu.rows != wh.rows || wu.cols != u.len() {
        return Err(shape_err(
            "plain RNN Wu",
            format!("{}x{}", wh.rows, u.len()),
            format!("{}x{}", wu.rows, wu.cols),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{finite_diff_grad, relative_error, DEFAULT_FD_STEP};

    fn random_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.uniform(-scale, scale)).collect()
    }

    /// Straight-line transcription of the cell equations, written
    /// independently of the optimized kernels above.
    fn reference_forward(p: &GruParams, hp: &[f64], u: &[f64]) -> Vec<f64> {
        let n = p.hidden();
        let mv = |m: &Mat, x: &[f64], row: usize| -> f64 {
            let mut s = 0.0;
            for c in 0..m.cols {
                s += m.get(row, c) * x[c];
            }
            s
        };
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut h = vec![0.0; n];
        for k in 0..n {
            let z = sig(mv(&p.Wz, u, k) + mv(&p.Uz, hp, k));
            let r = sig(mv(&p.Wr, u, k) + mv(&p.Ur, hp, k));
            let ht = (r * mv(&p.U, hp, k) + mv(&p.W, u, k)).tanh();
            h[k] = z * hp[k] + (1.0 - z) * ht;
        }
        h
    }

    #[test]
    fn zero_weights_halve_state() {
        let p = GruParams::zeros(3, 2);
        let hp = vec![1.0, -2.0, 0.5];
        let (h, c) = gru_forward(&p, &hp, &[0.3, 0.7]).unwrap();
        assert_eq!(h, vec![0.5, -1.0, 0.25]);
        assert_eq!(c.z, vec![0.5; 3]);
        assert_eq!(c.r, vec![0.5; 3]);
        assert_eq!(c.h_tilde, vec![0.0; 3]);
        let (h0, _) = gru_forward(&p, &[0.0; 3], &[1.0, 1.0]).unwrap();
        assert_eq!(h0, vec![0.0; 3]);
    }

    #[test]
    fn matches_reference_transcription() {
        let mut rng = Rng::new(11);
        let p = GruParams::xavier(4, 3, &mut rng);
        let hp = random_vec(&mut rng, 4, 1.0);
        let u = random_vec(&mut rng, 3, 1.0);
        let (h, _) = gru_forward(&p, &hp, &u).unwrap();
        let want = reference_forward(&p, &hp, &u);
        for (a, b) in h.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn dim_mismatch_is_error() {
        let p = GruParams::zeros(3, 2);
        assert!(gru_forward(&p, &[0.0; 2], &[0.0; 2]).is_err());
        assert!(gru_forward(&p, &[0.0; 3], &[0.0; 3]).is_err());
        let (_, c) = gru_forward(&p, &[0.0; 3], &[0.0; 2]).unwrap();
        assert!(gru_backward(&p, &c, &[0.0; 2]).is_err());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero() {
        let mut rng = Rng::new(2);
        let p = GruParams::xavier(4, 2, &mut rng);
        let (_, c) = gru_forward(&p, &random_vec(&mut rng, 4, 1.0), &[0.2, -0.4]).unwrap();
        let g = gru_backward(&p, &c, &[0.0; 4]).unwrap();
        assert!(g.dparams.mats().iter().all(|m| m.data.iter().all(|&v| v == 0.0)));
        assert!(g.dh_prev.iter().chain(&g.du).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weights_backward_halves() {
        let p = GruParams::zeros(2, 2);
        let (_, c) = gru_forward(&p, &[0.4, -0.1], &[1.0, 2.0]).unwrap();
        let g = gru_backward(&p, &c, &[1.0, -3.0]).unwrap();
        assert_eq!(g.dh_prev, vec![0.5, -1.5]);
    }

    /// Flattens every differentiable quantity of a cell step into one vector.
    fn pack(p: &GruParams, hp: &[f64], u: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = p.mats().iter().flat_map(|m| m.data.clone()).collect();
        x.extend_from_slice(hp);
        x.extend_from_slice(u);
        x
    }

    fn unpack(x: &[f64], hidden: usize, input: usize) -> (GruParams, Vec<f64>, Vec<f64>) {
        let mut p = GruParams::zeros(hidden, input);
        let mut off = 0;
        for m in p.mats_mut() {
            let n = m.len();
            m.data.copy_from_slice(&x[off..off + n]);
            off += n;
        }
        let hp = x[off..off + hidden].to_vec();
        let u = x[off + hidden..].to_vec();
        (p, hp, u)
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(77);
        let mut cases = 0;
        for &hidden in &[1usize, 4, 8] {
            for &input in &[1usize, 5] {
                for _ in 0..4 {
                    let mut p = GruParams::xavier(hidden, input, &mut rng);
                    for m in p.mats_mut() {
                        m.scale(1.5);
                    }
                    let hp = random_vec(&mut rng, hidden, 1.0);
                    let u = random_vec(&mut rng, input, 1.5);
                    let (h, c) = gru_forward(&p, &hp, &u).unwrap();
                    // loss = |h|^2 / 2  =>  dL/dh = h
                    let g = gru_backward(&p, &c, &h).unwrap();
                    let mut analytic: Vec<f64> = g.dparams.mats().iter().flat_map(|m| m.data.clone()).collect();
                    analytic.extend_from_slice(&g.dh_prev);
                    analytic.extend_from_slice(&g.du);

                    let x0 = pack(&p, &hp, &u);
                    let numeric = finite_diff_grad(
                        |x| {
                            let (pp, hh, uu) = unpack(x, hidden, input);
                            let (h, _) = gru_forward(&pp, &hh, &uu).unwrap();
                            0.5 * h.iter().map(|v| v * v).sum::<f64>()
                        },
                        &x0,
                        DEFAULT_FD_STEP,
                    )
                    .unwrap();
                    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
                        assert!(relative_error(*a, *n) < 1e-4, "h={hidden} i={input} coord {i}: {a} vs {n}");
                    }
                    cases += 1;
                }
            }
        }
        assert!(cases >= 20);
    }

    #[test]
    fn plain_rnn_examples_and_gradient() {
        let wh = Mat::zeros(1, 1);
        let wu = Mat::from_vec(1, 1, vec![1.0]).unwrap();
        assert_eq!(rnn_plain_forward(&wh, &wu, &[0.3], &[0.0]).unwrap(), vec![0.5]);
        assert_eq!(
            rnn_plain_forward(&Mat::zeros(3, 3), &Mat::zeros(3, 2), &[1.0, 2.0, 3.0], &[4.0, 5.0]).unwrap(),
            vec![0.5; 3]
        );

        let mut rng = Rng::new(8);
        let wh = Mat::xavier(3, 3, &mut rng);
        let wu = Mat::xavier(3, 2, &mut rng);
        let hp = random_vec(&mut rng, 3, 1.0);
        let u = random_vec(&mut rng, 2, 1.0);
        let h = rnn_plain_forward(&wh, &wu, &hp, &u).unwrap();
        let (dwh, dwu, dhp, du) = rnn_plain_backward(&wh, &wu, &hp, &u, &h).unwrap();
        let mut analytic = dwh.data.clone();
        analytic.extend(dwu.data);
        analytic.extend(dhp);
        analytic.extend(du);
        let mut x0 = wh.data.clone();
        x0.extend(&wu.data);
        x0.extend(&hp);
        x0.extend(&u);
        let numeric = finite_diff_grad(
            |x| {
                let wh = Mat::from_vec(3, 3, x[0..9].to_vec()).unwrap();
                let wu = Mat::from_vec(3, 2, x[9..15].to_vec()).unwrap();
                let h = rnn_plain_forward(&wh, &wu, &x[15..18], &x[18..20]).unwrap();
                0.5 * h.iter().map(|v| v * v).sum::<f64>()
            },
            &x0,
            DEFAULT_FD_STEP,
        )
        .unwrap();
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!(relative_error(*a, *n) < 1e-4, "{a} vs {n}");
        }
        assert!(rnn_plain_forward(&Mat::zeros(2, 2), &Mat::zeros(3, 2), &[0.0; 2], &[0.0; 2]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(256))]
            #[test]
            fn gates_in_range_and_state_is_convex(seed in any::<u64>(), scale in 0.1f64..5.0) {
                let mut rng = crate::numkit::Rng::new(seed);
                let mut p = GruParams::xavier(5, 3, &mut rng);
                for m in p.mats_mut() { m.scale(scale); }
                let hp = random_vec(&mut rng, 5, 1.0);
                let u = random_vec(&mut rng, 3, 3.0);
                let (h, c) = gru_forward(&p, &hp, &u).unwrap();
                for k in 0..5 {
                    // f64 saturates tanh to exactly 1 beyond about 19, so bounds are closed
                    prop_assert!((0.0..=1.0).contains(&c.z[k]));
                    prop_assert!((0.0..=1.0).contains(&c.r[k]));
                    prop_assert!((-1.0..=1.0).contains(&c.h_tilde[k]));
                    let lo = hp[k].min(c.h_tilde[k]);
                    let hi = hp[k].max(c.h_tilde[k]);
                    prop_assert!(h[k] >= lo - 1e-15 && h[k] <= hi + 1e-15);
                }
            }
        }
    }
}

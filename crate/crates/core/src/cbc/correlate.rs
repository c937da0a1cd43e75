//! Cyclic correlations over multiplicative groups, used to evaluate the
//! CBC criterion for every candidate at once.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Computes `out[b] = sum_a w[(a + b) mod L] v[a]` through the FFT.
pub(crate) struct CyclicCorrelator {
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl CyclicCorrelator {
    pub fn new(len: usize, planner: &mut FftPlanner<f64>) -> Self {
        Self { len, fwd: planner.plan_fft_forward(len), inv: planner.plan_fft_inverse(len) }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(x.len(), self.len);
        let mut buf: Vec<Complex64> = x.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// Real part of the normalized inverse transform.
    pub fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inv.process(&mut spec);
        let scale = 1.0 / self.len as f64;
        spec.iter().map(|c| c.re * scale).collect()
    }

    /// Correlation against a kernel whose transform is already known.
    pub fn correlate(&self, w_hat: &[Complex64], v: &[f64]) -> Vec<f64> {
        let v_hat = self.transform(v);
        let spec = w_hat.iter().zip(&v_hat).map(|(w, v)| w * v.conj()).collect();
        self.inverse_real(spec)
    }
}

/// A cyclic group of units listed as `elems[a] = g^a`, with the kernel
/// evaluated along that ordering and transformed once.
pub(crate) struct CyclicGroupKernel {
    pub elems: Vec<usize>,
    corr: CyclicCorrelator,
    w_hat: Vec<Complex64>,
}

impl CyclicGroupKernel {
    /// `kernel_at(r)` gives the kernel value at group element `r`.
    pub fn new(elems: Vec<usize>, kernel_at: impl Fn(usize) -> f64, planner: &mut FftPlanner<f64>) -> Self {
        let corr = CyclicCorrelator::new(elems.len(), planner);
        let w: Vec<f64> = elems.iter().map(|&e| kernel_at(e)).collect();
        let w_hat = corr.transform(&w);
        Self { elems, corr, w_hat }
    }

    /// `out[b] = sum_a kernel(g^{a+b}) v(g^a)`, i.e. the correlation for
    /// candidate `g^b`, returned in group order.
    pub fn correlate(&self, v_at: impl Fn(usize) -> f64) -> Vec<f64> {
        let v: Vec<f64> = self.elems.iter().map(|&e| v_at(e)).collect();
        self.corr.correlate(&self.w_hat, &v)
    }
}

/// The unit group of `Z_{2^k}` for `k >= 3` is `{+1,-1} x <5>`; the
/// correlation over it splits into four cyclic correlations of length
/// `2^{k-2}`.
pub(crate) struct PowerOfTwoUnits {
    k: u32,
    /// `pow5[e] = 5^e mod 2^k`
    pow5: Vec<usize>,
    corr: CyclicCorrelator,
    /// kernel transforms for sign `+1` and `-1`
    w_hat: [Vec<Complex64>; 2],
}

impl PowerOfTwoUnits {
    pub fn new(k: u32, kernel_at: impl Fn(usize) -> f64, planner: &mut FftPlanner<f64>) -> Self {
        debug_assert!(k >= 3);
        let modulus = 1usize << k;
        let len = modulus / 4;
        let mut pow5 = Vec::with_capacity(len);
        let mut x = 1usize;
        for _ in 0..len {
            pow5.push(x);
            x = x * 5 % modulus;
        }
        let corr = CyclicCorrelator::new(len, planner);
        let w_plus: Vec<f64> = pow5.iter().map(|&e| kernel_at(e)).collect();
        let w_minus: Vec<f64> = pow5.iter().map(|&e| kernel_at(modulus - e)).collect();
        let w_hat = [corr.transform(&w_plus), corr.transform(&w_minus)];
        Self { k, pow5, corr, w_hat }
    }

    fn elem(&self, sign: usize, e: usize) -> usize {
        let p = self.pow5[e];
        if sign == 0 {
            p
        } else {
            (1usize << self.k) - p
        }
    }

    /// Calls `emit(z, value)` with `value = sum_{u unit} kernel(u z) v(u)`
    /// for every unit `z` of `Z_{2^k}`.
    pub fn correlate(&self, v_at: impl Fn(usize) -> f64, mut emit: impl FnMut(usize, f64)) {
        let v_hat: Vec<Vec<Complex64>> = (0..2)
            .map(|sign| {
                let v: Vec<f64> = (0..self.pow5.len()).map(|e| v_at(self.elem(sign, e))).collect();
                self.corr.transform(&v)
            })
            .collect();
        for tau in 0..2 {
            // the product sign of sigma and tau selects the kernel branch
            let spec = (0..self.pow5.len())
                .map(|f| {
                    let a = self.w_hat[tau][f] * v_hat[0][f].conj();
                    let b = self.w_hat[1 - tau][f] * v_hat[1][f].conj();
                    a + b
                })
                .collect();
            let out = self.corr.inverse_real(spec);
            for (f, val) in out.into_iter().enumerate() {
                emit(self.elem(tau, f), val);
            }
        }
    }
}

//! Runge-Kutta propagation of matrices under a [`Generator`].

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::generator::{Frame, Generator, Workspace};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with step `dt_init`.
    Rk4,
    /// Dormand-Prince 5(4) with embedded error control.
    #[default]
    Rk45,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub method: Method,
    pub dt_init: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_dt: f64,
    pub frame: Frame,
}

impl EvolveConfig {
    /// Lab-frame defaults: the step ceiling resolves the mechanical period
    /// with 50 samples.
    pub fn for_mechanics(f_m: f64) -> Self {
        let max_dt = 1.0 / (50.0 * f_m);
        Self {
            method: Method::Rk45,
            dt_init: max_dt / 10.0,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_dt,
            frame: Frame::Lab,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_init > 0.0 && self.max_dt > 0.0 && self.dt_init <= self.max_dt) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < dt_init <= max_dt (got {}, {})",
                self.dt_init, self.max_dt
            )));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// What the propagator reports at each visited time.
pub struct Visit<'a> {
    pub t: f64,
    /// Lab-picture state.
    pub state: &'a [Complex64],
    /// Index into the requested sample times, when this visit is one.
    pub sample: Option<usize>,
    /// Running integrals `∫₀ᵗ Tr(O_k X) dt` for the requested integrands.
    pub integrals: &'a [Complex64],
}

pub struct Propagator<'g> {
    generator: &'g Generator,
    config: EvolveConfig,
    hermitian: bool,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const RK4_B: [f64; 4] = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

impl<'g> Propagator<'g> {
    /// `hermitian` selects the symmetric kernel and re-symmetrizes after each
    /// step; it must only be set for Hermitian initial data.
    pub fn new(generator: &'g Generator, config: EvolveConfig, hermitian: bool) -> Result<Self> {
        config.validate()?;
        if config.frame == Frame::DetunedRotating && !generator.is_rotating()
            || config.frame == Frame::Lab && generator.is_rotating()
        {
            return Err(Error::InvalidParameter("generator frame differs from config frame".into()));
        }
        Ok(Self {
            generator,
            config,
            hermitian,
        })
    }

    /// Propagates `x0` (lab picture) over `[0, duration]`, visiting every
    /// accepted step and every sample time. Returns the final lab state.
    pub fn run<F>(
        &self,
        x0: &Array2<Complex64>,
        duration: f64,
        samples: &[f64],
        integrands: &[&SparseMatrix],
        mut visit: F,
    ) -> Result<Array2<Complex64>>
    where
        F: FnMut(Visit<'_>),
    {
        let n = self.generator.dim();
        if x0.dim() != (n, n) {
            return Err(Error::Layout(format!("initial matrix is {:?}, generator is {n}", x0.dim())));
        }
        if duration < 0.0 || !duration.is_finite() {
            return Err(Error::InvalidParameter(format!("duration {duration} must be >= 0")));
        }
        if samples.windows(2).any(|w| w[1] < w[0]) || samples.iter().any(|&s| s < 0.0 || s > duration * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter("sample times must be sorted and inside the run".into()));
        }

        let mut y: Vec<Complex64> = x0.as_standard_layout().iter().copied().collect();
        let mut lab = y.clone();
        let mut integrals = vec![ZERO; integrands.len()];
        let tol_t = 1e-12 * duration.max(f64::MIN_POSITIVE);
        let mut next_sample = 0;

        let mut initial = true;
        while next_sample < samples.len() && samples[next_sample] <= tol_t {
            visit(Visit { t: 0.0, state: &lab, sample: Some(next_sample), integrals: &integrals });
            next_sample += 1;
            initial = false;
        }
        if initial {
            visit(Visit { t: 0.0, state: &lab, sample: None, integrals: &integrals });
        }
        if duration == 0.0 {
            return Ok(x0.as_standard_layout().into_owned());
        }

        let mut ws = Workspace::default();
        let mut stages: Vec<Vec<Complex64>> = vec![vec![ZERO; n * n]; 7];
        let mut candidate = vec![ZERO; n * n];
        let mut stage_obs = vec![vec![ZERO; integrands.len()]; 7];
        let mut fsal_valid = false;
        let fixed = self.config.method == Method::Rk4;
        let weights: &[f64] = if fixed { &RK4_B } else { &B };

        let mut t = 0.0;
        let mut dt = self.config.dt_init.min(self.config.max_dt);
        let mut steps = 0usize;
        while t < duration - tol_t {
            let target = samples.get(next_sample).map_or(duration, |&s| s.min(duration));
            let mut h = dt.min(self.config.max_dt);
            let clipped = t + h >= target - tol_t;
            if clipped {
                h = target - t;
            }
            if !(h > 1e-14 * duration) {
                return Err(Error::StepUnderflow { time: t, dt: h });
            }

            if fixed {
                self.rk4_step(t, h, &mut y, &mut stages, &mut candidate, &mut stage_obs, integrands, &mut ws);
            } else {
                let err = self.dp_step(t, h, &y, fsal_valid, &mut stages, &mut candidate, &mut stage_obs, integrands, &mut ws);
                let err = if err.is_finite() { err } else { f64::INFINITY };
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if err > 1.0 {
                    dt = h * factor;
                    if !(dt > 1e-14 * duration) {
                        return Err(Error::StepUnderflow { time: t, dt });
                    }
                    continue;
                }
                std::mem::swap(&mut y, &mut candidate);
                stages.swap(0, 6);
                fsal_valid = true;
                // a step shortened to land on a sample must not shrink dt
                dt = if clipped { dt.max(h * factor.min(1.0)) } else { h * factor };
            }

            for (k, acc) in integrals.iter_mut().enumerate() {
                let quad: Complex64 = weights.iter().zip(&stage_obs).map(|(w, o)| o[k] * *w).sum();
                *acc += quad * h;
            }
            if self.hermitian {
                symmetrize(&mut y, n);
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::StepUnderflow { time: t, dt: h });
            }
            t = if clipped { target } else { t + h };
            steps += 1;

            lab.copy_from_slice(&y);
            self.generator.frame_to_lab(t, &mut lab);
            let mut sample = None;
            while clipped && next_sample < samples.len() && samples[next_sample] <= t + tol_t {
                if sample.is_some() {
                    visit(Visit { t, state: &lab, sample, integrals: &integrals });
                }
                sample = Some(next_sample);
                next_sample += 1;
            }
            visit(Visit { t, state: &lab, sample, integrals: &integrals });
        }
        log::debug!("propagated {duration:.3e} s in {steps} steps");
        let mut out = Array2::from_shape_vec((n, n), y).expect("square buffer");
        self.generator.frame_to_lab(t, out.as_slice_mut().expect("standard layout"));
        Ok(out)
    }

    fn eval(&self, s: f64, x: &[Complex64], out: &mut [Complex64], ws: &mut Workspace) {
        self.generator.apply(s, x, out, self.hermitian, ws);
    }

    fn observe(&self, s: f64, x: &[Complex64], integrands: &[&SparseMatrix], out: &mut [Complex64]) {
        let n = self.generator.dim();
        for (slot, op) in out.iter_mut().zip(integrands) {
            let op = self.generator.observable_in_frame(s, op);
            *slot = op.triplets().map(|(r, c, v)| v * x[c * n + r]).sum();
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn rk4_step(
        &self,
        t: f64,
        h: f64,
        y: &mut [Complex64],
        stages: &mut [Vec<Complex64>],
        tmp: &mut [Complex64],
        obs: &mut [Vec<Complex64>],
        integrands: &[&SparseMatrix],
        ws: &mut Workspace,
    ) {
        let cs = [0.0, 0.5, 0.5, 1.0];
        for k in 0..4 {
            if k == 0 {
                tmp.copy_from_slice(y);
            } else {
                let (prev, _) = stages.split_at(k);
                let c = cs[k] * h;
                for ((d, &yv), &kv) in tmp.iter_mut().zip(y.iter()).zip(prev[k - 1].iter()) {
                    *d = yv + kv * c;
                }
            }
            self.observe(t + cs[k] * h, tmp, integrands, &mut obs[k]);
            let (_, rest) = stages.split_at_mut(k);
            self.eval(t + cs[k] * h, tmp, &mut rest[0], ws);
        }
        let w = [h / 6.0, h / 3.0, h / 3.0, h / 6.0];
        for (i, v) in y.iter_mut().enumerate() {
            *v += stages[0][i] * w[0] + stages[1][i] * w[1] + stages[2][i] * w[2] + stages[3][i] * w[3];
        }
    }

    /// One Dormand-Prince attempt. On return `tmp` holds the candidate
    /// solution and `stages[6]` its derivative; the result is the scaled
    /// error norm.
    #[allow(clippy::too_many_arguments)]
    fn dp_step(
        &self,
        t: f64,
        h: f64,
        y: &[Complex64],
        fsal_valid: bool,
        stages: &mut [Vec<Complex64>],
        tmp: &mut [Complex64],
        obs: &mut [Vec<Complex64>],
        integrands: &[&SparseMatrix],
        ws: &mut Workspace,
    ) -> f64 {
        if !fsal_valid {
            self.eval(t, y, &mut stages[0], ws);
        }
        self.observe(t, y, integrands, &mut obs[0]);
        for s in 1..7 {
            let (prev, rest) = stages.split_at_mut(s);
            tmp.copy_from_slice(y);
            for (j, kj) in prev.iter().enumerate() {
                let a = A[s][j] * h;
                if a != 0.0 {
                    for (d, &kv) in tmp.iter_mut().zip(kj.iter()) {
                        *d += kv * a;
                    }
                }
            }
            if s < 6 {
                self.observe(t + C[s] * h, tmp, integrands, &mut obs[s]);
            }
            self.eval(t + C[s] * h, tmp, &mut rest[0], ws);
        }
        // tmp = y + h Σ B_i k_i (row 7 of A equals B)
        let mut sum = 0.0;
        for i in 0..y.len() {
            let mut err = ZERO;
            for (s, e) in E.iter().enumerate() {
                if *e != 0.0 {
                    err += stages[s][i] * *e;
                }
            }
            let sc = self.config.abs_tol + self.config.rel_tol * y[i].norm().max(tmp[i].norm());
            sum += ((err * h).norm() / sc).powi(2);
        }
        (sum / y.len() as f64).sqrt()
    }
}

fn symmetrize(y: &mut [Complex64], n: usize) {
    for i in 0..n {
        y[i * n + i].im = 0.0;
        for j in i + 1..n {
            let v = (y[i * n + j] + y[j * n + i].conj()) * 0.5;
            y[i * n + j] = v;
            y[j * n + i] = v.conj();
        }
    }
}

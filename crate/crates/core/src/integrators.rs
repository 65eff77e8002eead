//! Geometric integrators for separable Hamiltonians `H(q, p) = T(p) + V(q)`.
//!
//! Hamilton's equations are `dq/dt = ∂H/∂p = ∇T(p)` and
//! `dp/dt = −∂H/∂q = −∇V(q)`. The steppers:
//!
//! * explicit Euler: both updates from the old state (not symplectic, energy grows)
//! * symplectic Euler: kick `p' = p − dt·∇V(q)`, then drift `q' = q + dt·∇T(p')`
//! * leapfrog (Störmer–Verlet): half kick, full drift, half kick
//! * Forest–Ruth: three leapfrog sub-steps of `x·dt, (1−2x)·dt, x·dt` with
//!   `x = 1/(2 − 2^{1/3})`, giving a fourth-order, time-reversible scheme
//!
//! [`StepMethod::SymplecticEulerLiteral`] drifts with `q' = q − dt·∇T(p')`.
//! That sign does not integrate Hamilton's equations; it is kept for
//! side-by-side study only.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{map_indexed, Execution};
use crate::tensor::Tensor;

type VecField = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type EnergyFn = Box<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Forest–Ruth weight `1/(2 − 2^{1/3})`.
pub fn forest_ruth_theta() -> f64 {
    1.0 / (2.0 - 2f64.cbrt())
}

pub struct SeparableHamiltonian {
    name: String,
    dim: usize,
    kinetic_grad: VecField,
    potential_grad: VecField,
    energy: EnergyFn,
}

impl fmt::Debug for SeparableHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeparableHamiltonian")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl SeparableHamiltonian {
    /// Builds a system and spot-checks the supplied gradients against central
    /// differences of `energy` at `(probe_q, probe_p)` (tolerance 1e-6).
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        kinetic_grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        potential_grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        energy: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        probe_q: &[f64],
        probe_p: &[f64],
    ) -> Result<Self> {
        let sys = Self {
            name: name.into(),
            dim,
            kinetic_grad: Box::new(kinetic_grad),
            potential_grad: Box::new(potential_grad),
            energy: Box::new(energy),
        };
        if probe_q.len() != dim || probe_p.len() != dim {
            return Err(Error::shape(format!("probe point must have dimension {dim}")));
        }
        let h = 1e-5;
        let dq = (sys.potential_grad)(probe_q);
        let dp = (sys.kinetic_grad)(probe_p);
        if dq.len() != dim || dp.len() != dim {
            return Err(Error::shape(format!("gradients must have dimension {dim}")));
        }
        for i in 0..dim {
            let mut qp = probe_q.to_vec();
            let mut qm = probe_q.to_vec();
            qp[i] += h;
            qm[i] -= h;
            let fd_q = ((sys.energy)(&qp, probe_p) - (sys.energy)(&qm, probe_p)) / (2.0 * h);
            let mut pp = probe_p.to_vec();
            let mut pm = probe_p.to_vec();
            pp[i] += h;
            pm[i] -= h;
            let fd_p = ((sys.energy)(probe_q, &pp) - (sys.energy)(probe_q, &pm)) / (2.0 * h);
            for (what, fd, an) in [("dV/dq", fd_q, dq[i]), ("dT/dp", fd_p, dp[i])] {
                if (fd - an).abs() > 1e-6 * fd.abs().max(1.0) {
                    return Err(Error::argument(format!(
                        "{}: supplied {what}[{i}] = {an} disagrees with energy finite difference {fd}",
                        sys.name
                    )));
                }
            }
        }
        Ok(sys)
    }

    /// `H = p²/(2m) + k·q²/2` in one dimension.
    pub fn harmonic_oscillator(mass: f64, stiffness: f64) -> Self {
        Self::new(
            "harmonic_oscillator",
            1,
            move |p| vec![p[0] / mass],
            move |q| vec![stiffness * q[0]],
            move |q, p| 0.5 * p[0] * p[0] / mass + 0.5 * stiffness * q[0] * q[0],
            &[0.3],
            &[-0.7],
        )
        .expect("oscillator gradients are exact")
    }

    /// Unit oscillator `H = (p² + q²)/2`, period 2π.
    pub fn unit_oscillator() -> Self {
        Self::harmonic_oscillator(1.0, 1.0)
    }

    /// Planar pendulum `H = p²/2 + ω²(1 − cos q)`.
    pub fn pendulum(omega_sq: f64) -> Self {
        Self::new(
            "pendulum",
            1,
            |p| vec![p[0]],
            move |q| vec![omega_sq * q[0].sin()],
            move |q, p| 0.5 * p[0] * p[0] + omega_sq * (1.0 - q[0].cos()),
            &[0.4],
            &[0.2],
        )
        .expect("pendulum gradients are exact")
    }

    /// `H = ‖p‖²/(2m)` in `dim` dimensions.
    pub fn free_particle(dim: usize, mass: f64) -> Self {
        Self::new(
            "free_particle",
            dim,
            move |p| p.iter().map(|v| v / mass).collect(),
            move |q| vec![0.0; q.len()],
            move |_, p| 0.5 * p.iter().map(|v| v * v).sum::<f64>() / mass,
            &vec![0.1; dim],
            &vec![0.2; dim],
        )
        .expect("free particle gradients are exact")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt_dp(&self, p: &[f64]) -> Vec<f64> {
        (self.kinetic_grad)(p)
    }

    pub fn dv_dq(&self, q: &[f64]) -> Vec<f64> {
        (self.potential_grad)(q)
    }

    pub fn energy(&self, s: &PhaseState) -> f64 {
        (self.energy)(s.q.data(), s.p.data())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub q: Tensor,
    pub p: Tensor,
    pub t: f64,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::shape(format!(
                "phase state: q has {} components, p has {}",
                q.len(),
                p.len()
            )));
        }
        Ok(Self {
            q: Tensor::vector(q),
            p: Tensor::vector(p),
            t: 0.0,
        })
    }

    fn from_parts(q: Vec<f64>, p: Vec<f64>, t: f64) -> Self {
        Self {
            q: Tensor::vector(q),
            p: Tensor::vector(p),
            t,
        }
    }

    /// Same point with momentum negated (for reversibility checks).
    pub fn reversed(&self) -> Self {
        Self {
            q: self.q.clone(),
            p: self.p.scale(-1.0),
            t: self.t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMethod {
    ExplicitEuler,
    SymplecticEuler,
    SymplecticEulerLiteral,
    Leapfrog,
    ForestRuth,
}

impl StepMethod {
    pub const ALL: [StepMethod; 5] = [
        StepMethod::ExplicitEuler,
        StepMethod::SymplecticEuler,
        StepMethod::SymplecticEulerLiteral,
        StepMethod::Leapfrog,
        StepMethod::ForestRuth,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepMethod::ExplicitEuler => "explicit_euler",
            StepMethod::SymplecticEuler => "symplectic_euler",
            StepMethod::SymplecticEulerLiteral => "symplectic_euler_literal",
            StepMethod::Leapfrog => "leapfrog",
            StepMethod::ForestRuth => "forest_ruth",
        }
    }
}

impl fmt::Display for StepMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StepMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StepMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::argument(format!("unknown integrator `{s}`")))
    }
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(x, y)| x + a * y).collect()
}

pub fn explicit_euler_step(sys: &SeparableHamiltonian, s: &PhaseState, dt: f64) -> PhaseState {
    let (q, p) = (s.q.data(), s.p.data());
    let p_new = axpy(p, -dt, &sys.dv_dq(q));
    let q_new = axpy(q, dt, &sys.dt_dp(p));
    PhaseState::from_parts(q_new, p_new, s.t + dt)
}

pub fn symplectic_euler_step(sys: &SeparableHamiltonian, s: &PhaseState, dt: f64) -> PhaseState {
    let (q, p) = (s.q.data(), s.p.data());
    let p_new = axpy(p, -dt, &sys.dv_dq(q));
    let q_new = axpy(q, dt, &sys.dt_dp(&p_new));
    PhaseState::from_parts(q_new, p_new, s.t + dt)
}

/// Symplectic Euler with the drift sign flipped (`q' = q − dt·∇T(p')`).
pub fn symplectic_euler_literal_step(sys: &SeparableHamiltonian, s: &PhaseState, dt: f64) -> PhaseState {
    let (q, p) = (s.q.data(), s.p.data());
    let p_new = axpy(p, -dt, &sys.dv_dq(q));
    let q_new = axpy(q, -dt, &sys.dt_dp(&p_new));
    PhaseState::from_parts(q_new, p_new, s.t + dt)
}

pub fn leapfrog_step(sys: &SeparableHamiltonian, s: &PhaseState, dt: f64) -> PhaseState {
    let (q, p) = (s.q.data(), s.p.data());
    let p_half = axpy(p, -0.5 * dt, &sys.dv_dq(q));
    let q_new = axpy(q, dt, &sys.dt_dp(&p_half));
    let p_new = axpy(&p_half, -0.5 * dt, &sys.dv_dq(&q_new));
    PhaseState::from_parts(q_new, p_new, s.t + dt)
}

pub fn forest_ruth_step(sys: &SeparableHamiltonian, s: &PhaseState, dt: f64) -> PhaseState {
    let x = forest_ruth_theta();
    let a = leapfrog_step(sys, s, x * dt);
    let b = leapfrog_step(sys, &a, (1.0 - 2.0 * x) * dt);
    let mut c = leapfrog_step(sys, &b, x * dt);
    // keep the clock exact rather than the sum of three rounded sub-steps
    c.t = s.t + dt;
    c
}

pub fn step(sys: &SeparableHamiltonian, s: &PhaseState, dt: f64, method: StepMethod) -> PhaseState {
    match method {
        StepMethod::ExplicitEuler => explicit_euler_step(sys, s, dt),
        StepMethod::SymplecticEuler => symplectic_euler_step(sys, s, dt),
        StepMethod::SymplecticEulerLiteral => symplectic_euler_literal_step(sys, s, dt),
        StepMethod::Leapfrog => leapfrog_step(sys, s, dt),
        StepMethod::ForestRuth => forest_ruth_step(sys, s, dt),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<PhaseState>,
    pub energies: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &PhaseState {
        self.states.last().expect("trajectory always holds the initial state")
    }

    /// CSV with header `t,q0..,p0..,H`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.states.first().map_or(0, |s| s.q.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|i| format!("q{i}")));
        header.extend((0..d).map(|i| format!("p{i}")));
        header.push("H".into());
        writeln!(w, "{}", header.join(","))?;
        for (s, h) in self.states.iter().zip(&self.energies) {
            let mut row = vec![format!("{:?}", s.t)];
            row.extend(s.q.data().iter().map(|v| format!("{v:?}")));
            row.extend(s.p.data().iter().map(|v| format!("{v:?}")));
            row.push(format!("{h:?}"));
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Applies `n_steps` steps of `method` from `s0`, recording energy at every state.
pub fn integrate(
    sys: &SeparableHamiltonian,
    s0: &PhaseState,
    dt: f64,
    n_steps: usize,
    method: StepMethod,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::argument(format!("integrate: dt must be positive, got {dt}")));
    }
    if s0.q.len() != sys.dim() || s0.p.len() != sys.dim() {
        return Err(Error::shape(format!(
            "integrate: state dimension {} for a {}-dimensional system",
            s0.q.len(),
            sys.dim()
        )));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut energies = Vec::with_capacity(n_steps + 1);
    energies.push(sys.energy(s0));
    states.push(s0.clone());
    for _ in 0..n_steps {
        let next = step(sys, states.last().unwrap(), dt, method);
        energies.push(sys.energy(&next));
        states.push(next);
    }
    Ok(Trajectory { dt, states, energies })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyDrift {
    /// `max |H(t) − H(0)|`.
    pub max_abs_deviation: f64,
    /// Least-squares slope of `H` against `t`.
    pub drift_rate: f64,
}

pub fn energy_drift(traj: &Trajectory) -> Result<EnergyDrift> {
    let Some(&h0) = traj.energies.first() else {
        return Err(Error::argument("energy_drift: empty trajectory"));
    };
    let max_abs_deviation = traj
        .energies
        .iter()
        .map(|h| (h - h0).abs())
        .fold(0.0, f64::max);
    let n = traj.energies.len() as f64;
    let t_mean = traj.states.iter().map(|s| s.t).sum::<f64>() / n;
    let h_mean = traj.energies.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (s, h) in traj.states.iter().zip(&traj.energies) {
        let dx = s.t - t_mean;
        sxy += dx * (h - h_mean);
        sxx += dx * dx;
    }
    let drift_rate = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(EnergyDrift {
        max_abs_deviation,
        drift_rate,
    })
}

/// Determinant of the one-step map's Jacobian `∂(q', p')/∂(q, p)` by central
/// differences with spacing `h`. Equal to 1 for symplectic maps.
pub fn step_jacobian_det(
    sys: &SeparableHamiltonian,
    s: &PhaseState,
    dt: f64,
    method: StepMethod,
    h: f64,
) -> f64 {
    let d = sys.dim();
    let n = 2 * d;
    let flat = |s: &PhaseState| -> Vec<f64> { s.q.data().iter().chain(s.p.data()).copied().collect() };
    let unflat = |x: &[f64]| PhaseState::from_parts(x[..d].to_vec(), x[d..].to_vec(), s.t);
    let x0 = flat(s);
    let mut jac = vec![0.0; n * n];
    for j in 0..n {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[j] += h;
        xm[j] -= h;
        let fp = flat(&step(sys, &unflat(&xp), dt, method));
        let fm = flat(&step(sys, &unflat(&xm), dt, method));
        for i in 0..n {
            jac[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    determinant(jac, n)
}

fn determinant(mut a: Vec<f64>, n: usize) -> f64 {
    let mut det = 1.0;
    for c in 0..n {
        let pivot = (c..n)
            .max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs()))
            .unwrap();
        if a[pivot * n + c] == 0.0 {
            return 0.0;
        }
        if pivot != c {
            for k in 0..n {
                a.swap(c * n + k, pivot * n + k);
            }
            det = -det;
        }
        let d = a[c * n + c];
        det *= d;
        for r in c + 1..n {
            let f = a[r * n + c] / d;
            for k in c..n {
                a[r * n + k] -= f * a[c * n + k];
            }
        }
    }
    det
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub method: StepMethod,
    pub step_sizes: Vec<f64>,
    /// Max over the run of the phase-space distance to the exact solution.
    pub errors: Vec<f64>,
    /// Least-squares slope of log(error) against log(dt).
    pub fitted_order: f64,
}

/// Step-halving study over `[0, t_end]`: `levels` runs with
/// `base_steps · 2^k` steps each. Error at each level is the largest
/// Euclidean phase-space distance between the numerical and `exact`
/// trajectories at the grid times. Levels run as independent jobs.
pub fn convergence_study<F>(
    sys: &SeparableHamiltonian,
    s0: &PhaseState,
    exact: F,
    method: StepMethod,
    t_end: f64,
    base_steps: usize,
    levels: usize,
    exec: Execution,
) -> Result<ConvergenceStudy>
where
    F: Fn(f64) -> (Vec<f64>, Vec<f64>) + Sync + Send,
{
    if levels < 2 || base_steps == 0 || !(t_end > 0.0) {
        return Err(Error::argument(
            "convergence_study needs t_end > 0, base_steps ≥ 1 and at least two levels",
        ));
    }
    let runs = map_indexed(exec, levels, |k| {
        let n = base_steps << k;
        let dt = t_end / n as f64;
        let mut s = s0.clone();
        let mut worst: f64 = 0.0;
        for i in 1..=n {
            s = step(sys, &s, dt, method);
            let (qe, pe) = exact(i as f64 * dt);
            let dist = s
                .q
                .data()
                .iter()
                .zip(&qe)
                .chain(s.p.data().iter().zip(&pe))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(dist);
        }
        (dt, worst)
    });
    let (step_sizes, errors): (Vec<f64>, Vec<f64>) = runs.into_iter().unzip();
    let xs: Vec<f64> = step_sizes.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let fitted_order = least_squares_slope(&xs, &ys);
    Ok(ConvergenceStudy {
        method,
        step_sizes,
        errors,
        fitted_order,
    })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Exact flow of the unit oscillator from `(q0, p0)`.
pub fn unit_oscillator_exact(q0: f64, p0: f64) -> impl Fn(f64) -> (Vec<f64>, Vec<f64>) + Sync + Send {
    move |t| {
        let (s, c) = t.sin_cos();
        (vec![q0 * c + p0 * s], vec![p0 * c - q0 * s])
    }
}

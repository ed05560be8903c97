//! Statistical-CSI design of the IRS phases by constrained stochastic
//! successive convex approximation.
//!
//! Each iteration draws a channel sample, solves the fast timescale at the
//! current phases, folds the sample's gradients into quadratic surrogates of
//! the ergodic objective (`g0 = −log2(1 + γr)`) and the smoothed outage
//! constraint (`g1 = û_β(Q/s) − ε`), and moves toward the surrogate
//! minimizer with a diminishing step.

use crate::channel::{compose_effective, ChannelRealization, PhaseShifts};
use crate::config::SystemConfig;
use crate::linalg::{dot, Cx};
use crate::metrics::{smooth_step, smooth_step_derivative};
use crate::real::Real;
use crate::small_timescale::{SmallTimescaleSolution, SmallTimescaleSolver};
use std::collections::VecDeque;

/// `ρᵗ = t^(−a)`, `γᵗ = t^(−b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule<T> {
    pub rho_exponent: T,
    pub gamma_exponent: T,
}

impl<T: Real> Schedule<T> {
    pub fn rho(&self, t: usize) -> T {
        T::lit(t as f64).powf(-self.rho_exponent)
    }

    pub fn gamma(&self, t: usize) -> T {
        T::lit(t as f64).powf(-self.gamma_exponent)
    }
}

/// Smoothed CU outage indicator `û_β(Q / scale) − ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutageSmoothing<T> {
    pub sinr_target: T,
    pub noise_cu: T,
    pub beta: T,
    /// Power (mW) that `Q` is divided by before smoothing.
    pub scale: T,
    pub tolerance: T,
}

impl<T: Real> OutageSmoothing<T> {
    pub fn from_config(c: &SystemConfig<T>) -> Self {
        Self {
            sinr_target: c.sinr_target,
            noise_cu: c.noise_cu,
            beta: c.smoothing,
            scale: c.solver.outage_scale * c.noise_cu,
            tolerance: c.outage_tolerance,
        }
    }
}

/// Per-sample quantities that stay fixed while the phases move: every
/// effective scalar is `Σₙ θₙ aₙ + direct` for one of these `a` vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTerms<T> {
    /// `h_iu ∘ (G_bi w)`
    pub iu_gw: Vec<Cx<T>>,
    /// `h_bu w`
    pub bu_w: Cx<T>,
    /// `h_ir ∘ (G_bi w)`
    pub ir_gw: Vec<Cx<T>>,
    /// `h_br w`
    pub br_w: Cx<T>,
    /// `h_iu ∘ h_ti`
    pub iu_ti: Vec<Cx<T>>,
    pub h_tu: Cx<T>,
    /// `h_ir ∘ h_ti`
    pub ir_ti: Vec<Cx<T>>,
    pub h_tr: Cx<T>,
    pub p: T,
}

/// `(h1 w, h2, h3, h4 w)` at one phase configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleScalars<T> {
    pub h1w: Cx<T>,
    pub h2: Cx<T>,
    pub h3: Cx<T>,
    pub h4w: Cx<T>,
}

impl<T: Real> SampleTerms<T> {
    pub fn new(real: &ChannelRealization<T>, w: &[Cx<T>], p: T) -> Self {
        let gw = real.g_bi.mul_vec(w);
        let had = |a: &[Cx<T>], b: &[Cx<T>]| -> Vec<Cx<T>> { a.iter().zip(b).map(|(x, y)| x * y).collect() };
        Self {
            iu_gw: had(&real.h_iu, &gw),
            bu_w: dot(&real.h_bu, w),
            ir_gw: had(&real.h_ir, &gw),
            br_w: dot(&real.h_br, w),
            iu_ti: had(&real.h_iu, &real.h_ti),
            h_tu: real.h_tu,
            ir_ti: had(&real.h_ir, &real.h_ti),
            h_tr: real.h_tr,
            p,
        }
    }

    pub fn scalars(&self, theta: &[Cx<T>]) -> SampleScalars<T> {
        SampleScalars {
            h1w: dot(theta, &self.iu_gw) + self.bu_w,
            h2: dot(theta, &self.iu_ti) + self.h_tu,
            h3: dot(theta, &self.ir_ti) + self.h_tr,
            h4w: dot(theta, &self.ir_gw) + self.br_w,
        }
    }

    /// `−log2(1 + γr)`
    pub fn g0(&self, theta: &[Cx<T>], noise_dr: T) -> T {
        let s = self.scalars(theta);
        let gamma0 = s.h4w.norm_sqr() + noise_dr;
        -(self.p * s.h3.norm_sqr() / gamma0).ln_1p() / T::LN_2()
    }

    /// `∂g0/∂φₙ = (2/ln2) Re{j θₙ (A0ₙ/Γ0 − A1ₙ/Γ1)}` with
    /// `A0 = h_ir∘(Gw)·(h4w)*`, `A1 = A0 + p (h_ir∘h_ti)·h3*`,
    /// `Γ0 = |h4w|² + σr²`, `Γ1 = Γ0 + p|h3|²`.
    pub fn grad_g0(&self, theta: &[Cx<T>], noise_dr: T) -> Vec<T> {
        let s = self.scalars(theta);
        let gamma0 = s.h4w.norm_sqr() + noise_dr;
        let gamma1 = gamma0 + self.p * s.h3.norm_sqr();
        let k = T::lit(2.0) / T::LN_2();
        let c4 = s.h4w.conj();
        let c3 = s.h3.conj() * self.p;
        theta
            .iter()
            .zip(self.ir_gw.iter().zip(&self.ir_ti))
            .map(|(t, (gw, ti))| {
                let a0 = gw * c4;
                let a1 = a0 + ti * c3;
                let d = a0 / gamma0 - a1 / gamma1;
                // Re{j t d} = −Im{t d}
                -(t * d).im * k
            })
            .collect()
    }

    /// `Q = Γu(p|h2|² + σu²) − |h1 w|²`
    pub fn q(&self, theta: &[Cx<T>], sinr_target: T, noise_cu: T) -> T {
        let s = self.scalars(theta);
        sinr_target * (self.p * s.h2.norm_sqr() + noise_cu) - s.h1w.norm_sqr()
    }

    /// `∂Q/∂φₙ = 2 Re{j θₙ (Γu p (h_iu∘h_ti)ₙ h2* − (h_iu∘Gw)ₙ (h1w)*)}`
    pub fn grad_q(&self, theta: &[Cx<T>], sinr_target: T) -> Vec<T> {
        let s = self.scalars(theta);
        let c2 = s.h2.conj() * (sinr_target * self.p);
        let c1 = s.h1w.conj();
        theta
            .iter()
            .zip(self.iu_ti.iter().zip(&self.iu_gw))
            .map(|(t, (ti, gw))| -(t * (ti * c2 - gw * c1)).im * T::lit(2.0))
            .collect()
    }

    pub fn g1(&self, theta: &[Cx<T>], sm: &OutageSmoothing<T>) -> T {
        smooth_step(self.q(theta, sm.sinr_target, sm.noise_cu) / sm.scale, sm.beta) - sm.tolerance
    }

    pub fn grad_g1(&self, theta: &[Cx<T>], sm: &OutageSmoothing<T>) -> Vec<T> {
        let q = self.q(theta, sm.sinr_target, sm.noise_cu) / sm.scale;
        let d = smooth_step_derivative(q, sm.beta) / sm.scale;
        self.grad_q(theta, sm.sinr_target).into_iter().map(|g| g * d).collect()
    }
}

pub fn g0_value<T: Real>(phases: &PhaseShifts<T>, w: &[Cx<T>], p: T, real: &ChannelRealization<T>, noise_dr: T) -> T {
    SampleTerms::new(real, w, p).g0(&phases.coefficients(), noise_dr)
}

pub fn grad_g0<T: Real>(
    phases: &PhaseShifts<T>,
    w: &[Cx<T>],
    p: T,
    real: &ChannelRealization<T>,
    noise_dr: T,
) -> Vec<T> {
    SampleTerms::new(real, w, p).grad_g0(&phases.coefficients(), noise_dr)
}

pub fn g1_value<T: Real>(
    phases: &PhaseShifts<T>,
    w: &[Cx<T>],
    p: T,
    real: &ChannelRealization<T>,
    sm: &OutageSmoothing<T>,
) -> T {
    SampleTerms::new(real, w, p).g1(&phases.coefficients(), sm)
}

pub fn grad_g1<T: Real>(
    phases: &PhaseShifts<T>,
    w: &[Cx<T>],
    p: T,
    real: &ChannelRealization<T>,
    sm: &OutageSmoothing<T>,
) -> Vec<T> {
    SampleTerms::new(real, w, p).grad_g1(&phases.coefficients(), sm)
}

/// Quadratic surrogates `f̄ₘ(φ) = cₘ + fₘᵀ(φ − φ') + τₘ‖φ − φ'‖²` around the
/// previous phases `φ'`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateState<T> {
    pub t: usize,
    pub center: Vec<T>,
    pub c: [T; 2],
    pub f: [Vec<T>; 2],
}

impl<T: Real> SurrogateState<T> {
    pub fn new(n: usize) -> Self {
        Self {
            t: 0,
            center: vec![T::zero(); n],
            c: [T::zero(); 2],
            f: [vec![T::zero(); n], vec![T::zero(); n]],
        }
    }

    /// Advances to iteration `t + 1`: recentres at `center`, installs the
    /// sample-average constants and blends the fresh sample gradients into
    /// the tracked ones with weight `rho`.
    pub fn update(&mut self, center: &[T], c0: T, c1: T, grad0: &[T], grad1: &[T], rho: T) {
        self.t += 1;
        self.center.clear();
        self.center.extend_from_slice(center);
        self.c = [c0, c1];
        for (f, g) in self.f.iter_mut().zip([grad0, grad1]) {
            for (fi, gi) in f.iter_mut().zip(g) {
                *fi = (T::one() - rho) * *fi + rho * *gi;
            }
        }
    }

    pub fn value(&self, m: usize, tau: T, phi: &[T]) -> T {
        let mut lin = T::zero();
        let mut quad = T::zero();
        for ((x, c), f) in phi.iter().zip(&self.center).zip(&self.f[m]) {
            let d = *x - *c;
            lin += *f * d;
            quad += d * d;
        }
        self.c[m] + lin + tau * quad
    }

    /// Minimizer of `f̄0 + λ f̄1`: `φ̄ₙ = −bₙ(λ) / (2a(λ))` with
    /// `a = τ0 + λτ1`, `bₙ = (f0ₙ − 2τ0φ'ₙ) + λ(f1ₙ − 2τ1φ'ₙ)`.
    pub fn lagrangian_minimizer(&self, tau0: T, tau1: T, lambda: T) -> Vec<T> {
        let two = T::lit(2.0);
        let a = tau0 + lambda * tau1;
        self.center
            .iter()
            .zip(self.f[0].iter().zip(&self.f[1]))
            .map(|(c, (f0, f1))| {
                let b = (*f0 - two * tau0 * *c) + lambda * (*f1 - two * tau1 * *c);
                -b / (two * a)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SurrogateStep<T> {
    /// Solution of the constrained surrogate problem with its multiplier.
    Feasible { phases: Vec<T>, lambda: T },
    /// `f̄1 > 0` everywhere.
    Infeasible,
}

/// Minimizes `f̄0` subject to `f̄1 ≤ 0` by bisection on the scalar dual.
pub fn solve_surrogate<T: Real>(state: &SurrogateState<T>, tau0: T, tau1: T, tol: T) -> SurrogateStep<T> {
    let at = |lambda: T| {
        let phi = state.lagrangian_minimizer(tau0, tau1, lambda);
        let v = state.value(1, tau1, &phi);
        (phi, v)
    };
    let (phi0, v0) = at(T::zero());
    if v0 <= T::zero() {
        return SurrogateStep::Feasible {
            phases: phi0,
            lambda: T::zero(),
        };
    }
    let floor = state.value(1, tau1, &solve_fallback(state, tau1));
    if floor > T::zero() {
        return SurrogateStep::Infeasible;
    }
    let mut lo = T::zero();
    let mut hi = T::one();
    let mut best = at(hi);
    let mut doublings = 0;
    while best.1 > T::zero() {
        lo = hi;
        hi = hi * T::lit(2.0);
        best = at(hi);
        doublings += 1;
        if doublings > 200 {
            // Only reachable when the minimum of f̄1 is zero to rounding.
            return SurrogateStep::Feasible {
                phases: solve_fallback(state, tau1),
                lambda: T::infinity(),
            };
        }
    }
    for _ in 0..200 {
        if best.1.abs() <= tol || hi - lo <= tol * hi.max(T::one()) {
            break;
        }
        let mid = (lo + hi) / T::lit(2.0);
        let cand = at(mid);
        if cand.1 > T::zero() {
            lo = mid;
        } else {
            hi = mid;
            best = cand;
        }
    }
    SurrogateStep::Feasible {
        phases: best.0,
        lambda: hi,
    }
}

/// Unconstrained minimizer of `f̄1`, used when the surrogate problem is
/// infeasible.
pub fn solve_fallback<T: Real>(state: &SurrogateState<T>, tau1: T) -> Vec<T> {
    let two = T::lit(2.0);
    state
        .center
        .iter()
        .zip(&state.f[1])
        .map(|(c, f)| *c - *f / (two * tau1))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CsscaParams<T> {
    pub tau0: T,
    pub tau1: T,
    pub max_iters: usize,
    pub tol: T,
    pub dual_tol: T,
    pub schedule: Schedule<T>,
    /// `None`: sample averages over every stored sample.
    pub window: Option<usize>,
    pub noise_dr: T,
}

impl<T: Real> CsscaParams<T> {
    pub fn from_config(c: &SystemConfig<T>) -> Self {
        let s = &c.solver;
        Self {
            tau0: c.tau0,
            tau1: c.tau1,
            max_iters: s.cssca_max_iters,
            tol: s.cssca_tol,
            dual_tol: s.dual_tol,
            schedule: Schedule {
                rho_exponent: s.rho_exponent,
                gamma_exponent: s.gamma_exponent,
            },
            window: s.sample_window,
            noise_dr: c.noise_dr,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsscaOutcome<T> {
    pub phases: PhaseShifts<T>,
    pub iterations: usize,
    /// `g0` of each fresh sample at the phases it was drawn under.
    pub sample_objective: Vec<T>,
    /// `g1` of each fresh sample, likewise.
    pub sample_constraint: Vec<T>,
    /// Iterations whose surrogate problem was infeasible.
    pub fallback_steps: usize,
    /// Rate `−g0` of each fresh sample.
    pub sample_rate: Vec<T>,
}

/// What one recursion step saw and did.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport<T> {
    /// Fast-timescale solution for the fresh sample at the phases in force
    /// before the step.
    pub solution: SmallTimescaleSolution<T>,
    pub g0: T,
    pub g1: T,
    pub fallback: bool,
    /// `‖φᵗ − φᵗ⁻¹‖`
    pub moved: T,
}

/// The phase recursion, one sample at a time.
#[derive(Clone, Debug)]
pub struct Cssca<T> {
    phi: Vec<T>,
    state: SurrogateState<T>,
    stored: VecDeque<SampleTerms<T>>,
    params: CsscaParams<T>,
    smoothing: OutageSmoothing<T>,
}

impl<T: Real> Cssca<T> {
    pub fn new(phases0: PhaseShifts<T>, smoothing: OutageSmoothing<T>, params: CsscaParams<T>) -> Self {
        let n = phases0.len();
        Self {
            phi: phases0.into_vec(),
            state: SurrogateState::new(n),
            stored: VecDeque::new(),
            params,
            smoothing,
        }
    }

    pub fn iteration(&self) -> usize {
        self.state.t
    }

    pub fn phases(&self) -> PhaseShifts<T> {
        PhaseShifts::new(self.phi.clone())
    }

    pub fn surrogate(&self) -> &SurrogateState<T> {
        &self.state
    }

    pub fn step(&mut self, real: &ChannelRealization<T>, solver: &SmallTimescaleSolver<T>) -> StepReport<T> {
        let p = &self.params;
        let current = self.phases();
        let theta = current.coefficients();
        let eff = compose_effective(real, &current).expect("realization matches phase count");
        let solution = solver.solve(&eff);
        let terms = SampleTerms::new(real, &solution.w, solution.p);
        let g0 = terms.g0(&theta, p.noise_dr);
        let g1 = terms.g1(&theta, &self.smoothing);
        let grad0 = terms.grad_g0(&theta, p.noise_dr);
        let grad1 = terms.grad_g1(&theta, &self.smoothing);
        self.stored.push_back(terms);
        if let Some(w) = p.window {
            while self.stored.len() > w.max(1) {
                self.stored.pop_front();
            }
        }
        let k = T::lit(self.stored.len() as f64);
        let (mut c0, mut c1) = (T::zero(), T::zero());
        for s in &self.stored {
            c0 += s.g0(&theta, p.noise_dr);
            c1 += s.g1(&theta, &self.smoothing);
        }
        let t = self.state.t + 1;
        self.state.update(&self.phi, c0 / k, c1 / k, &grad0, &grad1, p.schedule.rho(t));
        let (target, fallback) = match solve_surrogate(&self.state, p.tau0, p.tau1, p.dual_tol) {
            SurrogateStep::Feasible { phases, .. } => (phases, false),
            SurrogateStep::Infeasible => (solve_fallback(&self.state, p.tau1), true),
        };
        let gamma = p.schedule.gamma(t);
        let mut moved = T::zero();
        for (x, b) in self.phi.iter_mut().zip(&target) {
            let next = (T::one() - gamma) * *x + gamma * *b;
            moved += (next - *x) * (next - *x);
            *x = next;
        }
        StepReport {
            solution,
            g0,
            g1,
            fallback,
            moved: moved.sqrt(),
        }
    }
}

/// Runs the phase recursion from `phases0`, drawing one realization per
/// iteration from `sample` and solving the fast timescale with `solver`.
pub fn cssca_run<T: Real, S>(
    mut sample: S,
    phases0: PhaseShifts<T>,
    solver: &SmallTimescaleSolver<T>,
    smoothing: &OutageSmoothing<T>,
    params: &CsscaParams<T>,
) -> CsscaOutcome<T>
where
    S: FnMut() -> ChannelRealization<T>,
{
    let mut out = CsscaOutcome {
        phases: phases0.clone(),
        iterations: 0,
        sample_objective: Vec::new(),
        sample_constraint: Vec::new(),
        fallback_steps: 0,
        sample_rate: Vec::new(),
    };
    if phases0.is_empty() {
        return out;
    }
    let mut run = Cssca::new(phases0, *smoothing, *params);
    for _ in 0..params.max_iters {
        let real = sample();
        let r = run.step(&real, solver);
        out.iterations += 1;
        out.sample_objective.push(r.g0);
        out.sample_rate.push(-r.g0);
        out.sample_constraint.push(r.g1);
        out.fallback_steps += r.fallback as usize;
        if r.moved < params.tol {
            break;
        }
    }
    out.phases = run.phases();
    out
}

/// Result of optimizing the phases for one known realization.
#[derive(Clone, Debug, PartialEq)]
pub struct DeterministicOutcome<T> {
    pub phases: PhaseShifts<T>,
    pub solution: SmallTimescaleSolution<T>,
    pub iterations: usize,
    /// Rate of every iterate visited, in order.
    pub rates: Vec<T>,
}

/// Runs the recursion on the single-point distribution at `real`,
/// alternating phase steps with fast-timescale solves, and returns the best
/// iterate (CU-feasible first, then highest rate). Stops after `max_iters`,
/// once two consecutive feasible iterates differ in rate by less than
/// `rate_tol`, or when the phases stop moving.
pub fn deterministic_sca<T: Real>(
    real: &ChannelRealization<T>,
    phases0: PhaseShifts<T>,
    solver: &SmallTimescaleSolver<T>,
    smoothing: &OutageSmoothing<T>,
    params: &CsscaParams<T>,
    max_iters: usize,
    rate_tol: T,
) -> DeterministicOutcome<T> {
    let better = |a: &SmallTimescaleSolution<T>, b: &SmallTimescaleSolution<T>| {
        (a.is_feasible(), a.rate) > (b.is_feasible(), b.rate)
    };
    let solve_at = |ph: &PhaseShifts<T>| {
        solver.solve(&compose_effective(real, ph).expect("realization matches phase count"))
    };
    if phases0.is_empty() {
        let solution = solve_at(&phases0);
        return DeterministicOutcome {
            rates: vec![solution.rate],
            phases: phases0,
            solution,
            iterations: 0,
        };
    }
    let mut run = Cssca::new(phases0.clone(), *smoothing, *params);
    let mut best: Option<(PhaseShifts<T>, SmallTimescaleSolution<T>)> = None;
    let mut rates = Vec::new();
    let mut iterations = 0;
    let mut prev_feasible = false;
    for _ in 0..max_iters.max(1) {
        let before = run.phases();
        let r = run.step(real, solver);
        iterations += 1;
        let prev = rates.last().copied();
        rates.push(r.solution.rate);
        let settled = prev_feasible
            && r.solution.is_feasible()
            && prev.is_some_and(|q: T| (r.solution.rate - q).abs() < rate_tol);
        prev_feasible = r.solution.is_feasible();
        if best.as_ref().is_none_or(|(_, b)| better(&r.solution, b)) {
            best = Some((before, r.solution.clone()));
        }
        if settled || r.moved < params.tol {
            break;
        }
    }
    let last = run.phases();
    let sol = solve_at(&last);
    rates.push(sol.rate);
    if best.as_ref().is_none_or(|(_, b)| better(&sol, b)) {
        best = Some((last, sol));
    }
    let (phases, solution) = best.expect("at least one iterate");
    DeterministicOutcome {
        phases,
        solution,
        iterations,
        rates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelStatistics;
    use crate::linalg::cx;
    use crate::rng::substream;
    use rand::Rng;

    fn state_with(rng: &mut impl Rng, n: usize, c1: f64) -> SurrogateState<f64> {
        let mut s = SurrogateState::new(n);
        let center: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 6.0).collect();
        let g0: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let g1: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        s.update(&center, -1.0, c1, &g0, &g1, 1.0);
        s
    }

    #[test]
    fn schedule_values() {
        let s = Schedule {
            rho_exponent: 0.8,
            gamma_exponent: 1.0,
        };
        assert_eq!(s.rho(1), 1.0);
        assert_eq!(s.gamma(1), 1.0);
        assert!((s.gamma(4) - 0.25f64).abs() < 1e-15);
        assert!(s.gamma(1000) / s.rho(1000) < s.gamma(10) / s.rho(10));
    }

    #[test]
    fn first_update_copies_sample() {
        let mut s = SurrogateState::new(2);
        s.update(&[0.1, 0.2], 0.3, -0.04, &[1.0, 2.0], &[3.0, 4.0], 1.0);
        assert_eq!(s.f, [vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(s.value(1, 0.005, &[0.1, 0.2]), -0.04);
        s.update(&[0.1, 0.2], 0.3, -0.04, &[3.0, 0.0], &[3.0, 4.0], 0.5);
        assert_eq!(s.f[0], vec![2.0, 1.0]);
    }

    #[test]
    fn surrogate_is_strongly_convex() {
        let mut rng = substream(20, &[]);
        let s = state_with(&mut rng, 6, 0.1);
        let tau = 0.005;
        for _ in 0..10 {
            let x: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let d: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 0.5).collect();
            let h = 0.3;
            let at = |k: f64| s.value(0, tau, &x.iter().zip(&d).map(|(a, b)| a + k * b).collect::<Vec<_>>());
            let curv = (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h);
            let dd: f64 = d.iter().map(|v| v * v).sum();
            assert!((curv - 2.0 * tau * dd).abs() < 1e-9 * (1.0 + curv.abs()));
        }
    }

    #[test]
    fn unconstrained_branch() {
        let mut rng = substream(21, &[]);
        let s = state_with(&mut rng, 5, -10.0);
        match solve_surrogate(&s, 0.005, 0.005, 1e-8) {
            SurrogateStep::Feasible { phases, lambda } => {
                assert_eq!(lambda, 0.0);
                for i in 0..5 {
                    assert!((phases[i] - (s.center[i] - s.f[0][i] / 0.01)).abs() < 1e-12);
                }
                assert!(s.value(0, 0.005, &phases) <= s.value(0, 0.005, &s.center));
            }
            SurrogateStep::Infeasible => panic!("should be feasible"),
        }
    }

    #[test]
    fn active_branch_satisfies_slackness_and_stationarity() {
        let mut rng = substream(22, &[]);
        let mut hits = 0;
        for _ in 0..100 {
            let c1 = rng.random::<f64>() * 0.3 - 0.1;
            let s = state_with(&mut rng, 4, c1);
            let (tau0, tau1) = (0.005, 0.007);
            if let SurrogateStep::Feasible { phases, lambda } = solve_surrogate(&s, tau0, tau1, 1e-8) {
                if lambda == 0.0 {
                    continue;
                }
                hits += 1;
                assert!(s.value(1, tau1, &phases).abs() <= 1e-6);
                let a = tau0 + lambda * tau1;
                for i in 0..4 {
                    let b = (s.f[0][i] - 2.0 * tau0 * s.center[i]) + lambda * (s.f[1][i] - 2.0 * tau1 * s.center[i]);
                    assert!((2.0 * a * phases[i] + b).abs() < 1e-10 * (1.0 + b.abs()));
                }
                // The dual solution beats every feasible point on a λ-grid.
                let f0 = s.value(0, tau0, &phases);
                for k in 0..2000 {
                    let l = k as f64 * 0.05;
                    let cand = s.lagrangian_minimizer(tau0, tau1, l);
                    if s.value(1, tau1, &cand) <= 0.0 {
                        assert!(s.value(0, tau0, &cand) >= f0 - 1e-6);
                    }
                }
            }
        }
        assert!(hits > 10);
    }

    #[test]
    fn fallback_is_global_minimizer_and_limit() {
        let mut rng = substream(23, &[]);
        let s = state_with(&mut rng, 5, 1e3);
        assert_eq!(solve_surrogate(&s, 0.005, 0.005, 1e-8), SurrogateStep::Infeasible);
        let fb = solve_fallback(&s, 0.005);
        let v = s.value(1, 0.005, &fb);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 7.0 - 0.5).collect();
            assert!(v <= s.value(1, 0.005, &x));
        }
        let limit = s.lagrangian_minimizer(0.005, 0.005, 1e6);
        for (a, b) in fb.iter().zip(&limit) {
            assert!((a - b).abs() < 1e-4 * (1.0 + a.abs()));
        }
        let mut zero = s.clone();
        zero.f[1] = vec![0.0; 5];
        assert_eq!(solve_fallback(&zero, 0.005), zero.center);
    }

    fn small_world() -> (SystemConfig<f64>, ChannelRealization<f64>) {
        let mut c = SystemConfig::reference();
        c.antennas = 4;
        c.elements = 8;
        let st = ChannelStatistics::from_config(&c).unwrap();
        let real = st.sample(&mut substream(24, &[]));
        (c, real)
    }

    #[test]
    fn appendix_form_matches_composition() {
        let (_, real) = small_world();
        let mut rng = substream(25, &[]);
        let ph = PhaseShifts::random(8, &mut rng);
        let w: Vec<Cx<f64>> = (0..4).map(|_| cx(rng.random::<f64>(), rng.random::<f64>())).collect();
        let eff = compose_effective(&real, &ph).unwrap();
        let s = SampleTerms::new(&real, &w, 0.5).scalars(&ph.coefficients());
        let rel = |a: Cx<f64>, b: Cx<f64>| (a - b).norm() / b.norm();
        assert!(rel(s.h1w, dot(&eff.h1, &w)) < 1e-12);
        assert!(rel(s.h4w, dot(&eff.h4, &w)) < 1e-12);
        assert!(rel(s.h2, eff.h2) < 1e-12);
        assert!(rel(s.h3, eff.h3) < 1e-12);
    }

    #[test]
    fn zero_power_and_disconnected_irs_give_zero_g0_gradient() {
        let (c, mut real) = small_world();
        let ph = PhaseShifts::random(8, &mut substream(26, &[]));
        let w = vec![cx(1.0, 0.0); 4];
        assert!(grad_g0(&ph, &w, 0.0, &real, c.noise_dr).iter().all(|g| *g == 0.0));
        real.h_ir = vec![cx(0.0, 0.0); 8];
        assert!(grad_g0(&ph, &w, 0.3, &real, c.noise_dr).iter().all(|g| *g == 0.0));
        let sm = OutageSmoothing::from_config(&c);
        real.h_iu = vec![cx(0.0, 0.0); 8];
        assert!(grad_g1(&ph, &w, 0.3, &real, &sm).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn saturated_sigmoid_kills_g1_gradient() {
        let (c, real) = small_world();
        let ph = PhaseShifts::random(8, &mut substream(27, &[]));
        let w = vec![cx(0.3, 0.1); 4];
        let terms = SampleTerms::new(&real, &w, 0.2);
        let theta = ph.coefficients();
        let mut sm = OutageSmoothing::from_config(&c);
        let q = terms.q(&theta, sm.sinr_target, sm.noise_cu);
        // Place βQ/scale at exactly +100.
        sm.scale = sm.beta * q / 100.0;
        let g = terms.grad_g1(&theta, &sm);
        let gq = terms.grad_q(&theta, sm.sinr_target);
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(n(&g) <= 1e-40 * n(&gq) / sm.scale);
    }
}

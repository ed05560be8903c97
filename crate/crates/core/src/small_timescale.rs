//! Per-realization beamforming and D2D power control.
//!
//! For fixed effective channels the DR rate is maximized subject to the
//! CU protection `γu ≥ Γu − δ` and the BS budget `‖w‖² ≤ p0`. The power
//! update is closed form; the beamformer update linearizes the concave CU
//! constraint (CCP) and solves each convex piece by ADMM with closed-form
//! block updates.
//!
//! The ADMM operates on a normalized copy of the problem: `x = w/√p0` and
//! unit-norm `h1`, `h4`. The minimizer is the same, but the penalty `ρ` then
//! has a scale-free meaning; raw path gains around 1e-5 would otherwise make
//! the interference term invisible next to `ρI`.

use crate::channel::EffectiveChannels;
use crate::config::{SolverSettings, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{conj, cx, czero, dot, norm, norm_sqr, CMatrix, Cx};
use crate::metrics::{rate, sinr_cu, sinr_dr, Decision, Policy, Scoring};
use crate::real::Real;

/// `|h2|²` below this is treated as a vanished DT→CU link.
const TINY_GAIN: f64 = 1e-15;

/// Link-level constants the fast timescale needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Radio<T> {
    pub bs_power: T,
    pub dt_max_power: T,
    pub noise_cu: T,
    pub noise_dr: T,
    pub sinr_target: T,
}

impl<T: Real> Radio<T> {
    pub fn from_config(c: &SystemConfig<T>) -> Self {
        Self {
            bs_power: c.bs_power,
            dt_max_power: c.dt_max_power,
            noise_cu: c.noise_cu,
            noise_dr: c.noise_dr,
            sinr_target: c.sinr_target,
        }
    }

    pub fn scoring(&self) -> Scoring<T> {
        Scoring {
            sinr_target: self.sinr_target,
            noise_cu: self.noise_cu,
            noise_dr: self.noise_dr,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmallTimescaleParams<T> {
    /// SINR slack `δ`, `0 ≤ δ < Γu`.
    pub delta: T,
    pub penalty: T,
    pub admm_max_iters: usize,
    pub admm_tol: T,
    pub ccp_max_iters: usize,
    pub ccp_tol: T,
    pub outer_max_iters: usize,
    pub rate_tol: T,
    pub power_search_iters: usize,
}

impl<T: Real> SmallTimescaleParams<T> {
    pub fn from_settings(s: &SolverSettings<T>, delta: T) -> Self {
        Self {
            delta,
            penalty: s.admm_penalty,
            admm_max_iters: s.admm_max_iters,
            admm_tol: s.admm_tol,
            ccp_max_iters: s.ccp_max_iters,
            ccp_tol: s.ccp_tol,
            outer_max_iters: s.outer_max_iters,
            rate_tol: s.rate_tol,
            power_search_iters: s.power_search_iters,
        }
    }

    pub fn with_delta(mut self, delta: T) -> Self {
        self.delta = delta;
        self
    }

    pub fn validate(&self, sinr_target: T) -> Result<()> {
        if !(self.delta >= T::zero() && self.delta < sinr_target) {
            return Err(Error::InvalidArgument(format!(
                "slack δ = {} must lie in [0, Γu = {})",
                self.delta, sinr_target
            )));
        }
        for (name, v) in [
            ("penalty", self.penalty),
            ("admm_tol", self.admm_tol),
            ("ccp_tol", self.ccp_tol),
            ("rate_tol", self.rate_tol),
        ] {
            if !(v > T::zero()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Feasible,
    /// Even MRT at full BS power with the DT silent misses `Γu − δ`; the
    /// solution is exactly that pair.
    FallbackInfeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmallTimescaleSolution<T> {
    pub w: Vec<Cx<T>>,
    pub p: T,
    pub status: Status,
    pub sinr_cu: T,
    pub sinr_dr: T,
    pub rate: T,
    pub outer_iters: usize,
    pub ccp_iters: usize,
    pub admm_iters: usize,
}

impl<T: Real> SmallTimescaleSolution<T> {
    pub fn is_feasible(&self) -> bool {
        self.status == Status::Feasible
    }
}

/// Iterate histories recorded by [`SmallTimescaleSolver::solve_traced`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveTrace<T> {
    /// DR rate after every power or beamformer update of the alternation.
    pub ao_rates: Vec<T>,
    /// Normalized interference `|h4 w|² / (p0‖h4‖²)` at each accepted CCP
    /// iterate, one list per CCP run; every run starts at its anchor.
    pub ccp_objectives: Vec<Vec<T>>,
    /// Final primal residual of every ADMM run.
    pub admm_residuals: Vec<T>,
    /// Whether each ADMM run met its tolerance before the cap.
    pub admm_converged: Vec<bool>,
}

/// Largest DT power keeping `γu ≥ Γu − δ` for the given beamformer,
/// clamped to `[0, p1]`.
pub fn optimal_power<T: Real>(
    w: &[Cx<T>],
    eff: &EffectiveChannels<T>,
    sinr_target: T,
    delta: T,
    noise_cu: T,
    p1: T,
) -> T {
    let signal = dot(&eff.h1, w).norm_sqr() / (sinr_target - delta);
    let g2 = eff.h2.norm_sqr();
    if g2 < T::lit(TINY_GAIN) {
        return if signal >= noise_cu { p1 } else { T::zero() };
    }
    ((signal - noise_cu) / g2).max(T::zero()).min(p1)
}

/// First-order minorant of `|h1 w|²` at `w_prev`:
/// `Re{coeff · w} − offset ≥ zeta`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedConstraint<T> {
    /// `2 (h1 w_prev)* h1`
    pub coeff: Vec<Cx<T>>,
    pub zeta: T,
    /// `|h1 w_prev|²`
    pub offset: T,
}

impl<T: Real> LinearizedConstraint<T> {
    pub fn lhs(&self, w: &[Cx<T>]) -> T {
        dot(&self.coeff, w).re - self.offset
    }
}

pub fn ccp_constraint<T: Real>(
    w_prev: &[Cx<T>],
    eff: &EffectiveChannels<T>,
    p: T,
    sinr_target: T,
    delta: T,
    noise_cu: T,
) -> LinearizedConstraint<T> {
    let c = dot(&eff.h1, w_prev);
    let two = T::lit(2.0);
    LinearizedConstraint {
        coeff: eff.h1.iter().map(|&h| c.conj() * h * two).collect(),
        zeta: (sinr_target - delta) * (p * eff.h2.norm_sqr() + noise_cu),
        offset: c.norm_sqr(),
    }
}

/// Projection of `target` onto the half-plane
/// `2Re{anchor* u} − |anchor|² ≥ zeta`.
///
/// `anchor` is `h1` applied to the linearization point, `target` the
/// unconstrained minimizer `h1 w − y`. The result has the form
/// `target + π·anchor` with `π ≥ 0`, which is `(π + 1) h1 w − y` when the
/// linearization point is the current iterate. Returns `None` when the
/// anchor has vanished and the constraint cannot be met.
pub fn admm_u_update<T: Real>(anchor: Cx<T>, target: Cx<T>, zeta: T) -> Option<Cx<T>> {
    let a2 = anchor.norm_sqr();
    let slack = T::lit(2.0) * (anchor.conj() * target).re - a2 - zeta;
    if slack >= T::zero() {
        return Some(target);
    }
    if a2 < T::lit(1e-30) {
        return None;
    }
    let pi = -slack / (T::lit(2.0) * a2);
    Some(target + anchor * pi)
}

/// Projection of `w − z` onto the ball `‖v‖² ≤ budget`.
pub fn admm_v_update<T: Real>(w: &[Cx<T>], z: &[Cx<T>], budget: T) -> Vec<Cx<T>> {
    let d: Vec<Cx<T>> = w.iter().zip(z).map(|(a, b)| a - b).collect();
    let n = norm(&d);
    let r = budget.sqrt();
    if n <= r {
        d
    } else {
        let s = r / n;
        d.into_iter().map(|x| x * s).collect()
    }
}

/// `(2h4ᴴh4 + ρh1ᴴh1 + ρI)`, the normal matrix of the `w` block.
pub fn admm_normal_matrix<T: Real>(h1: &[Cx<T>], h4: &[Cx<T>], penalty: T) -> CMatrix<T> {
    let m = h1.len();
    let mut a = CMatrix::identity(m);
    for i in 0..m {
        a[(i, i)] = cx(penalty, T::zero());
    }
    let c4 = conj(h4);
    let c1 = conj(h1);
    a.add_outer(T::lit(2.0), &c4, &c4);
    a.add_outer(penalty, &c1, &c1);
    a
}

/// `w = A⁻¹(ρ(u + y)h1ᴴ + ρ(v + z))` with the cached `A⁻¹`.
pub fn admm_w_update<T: Real>(
    inverse: &CMatrix<T>,
    h1: &[Cx<T>],
    u: Cx<T>,
    y: Cx<T>,
    v: &[Cx<T>],
    z: &[Cx<T>],
    penalty: T,
) -> Vec<Cx<T>> {
    let s = (u + y) * penalty;
    let rhs: Vec<Cx<T>> = h1
        .iter()
        .zip(v.iter().zip(z))
        .map(|(h, (a, b))| h.conj() * s + (a + b) * penalty)
        .collect();
    inverse.mul_vec(&rhs)
}

/// `y ← y + (u − h1 w)`, `z ← z + (v − w)`.
pub fn admm_dual_update<T: Real>(
    y: &mut Cx<T>,
    z: &mut [Cx<T>],
    h1: &[Cx<T>],
    u: Cx<T>,
    v: &[Cx<T>],
    w: &[Cx<T>],
) {
    *y += u - dot(h1, w);
    for ((zi, vi), wi) in z.iter_mut().zip(v).zip(w) {
        *zi += vi - wi;
    }
}

/// Scaled (unit `h1`, unit `h4`, unit ball) ADMM state plus its cached
/// inverse. The cache is tied to the channels and penalty it was built with.
#[derive(Clone, Debug)]
pub struct AdmmState<T> {
    pub u: Cx<T>,
    pub v: Vec<Cx<T>>,
    pub y: Cx<T>,
    pub z: Vec<Cx<T>>,
    pub w: Vec<Cx<T>>,
    h1: Vec<Cx<T>>,
    h4: Vec<Cx<T>>,
    penalty: T,
    inverse: CMatrix<T>,
}

impl<T: Real> AdmmState<T> {
    pub fn new(h1: &[Cx<T>], h4: &[Cx<T>], penalty: T, w0: &[Cx<T>]) -> Result<Self> {
        let inverse = admm_normal_matrix(h1, h4, penalty)
            .hpd_inverse()
            .ok_or_else(|| Error::Numerical("ADMM normal matrix is not positive definite".into()))?;
        Ok(Self {
            u: dot(h1, w0),
            v: w0.to_vec(),
            y: czero(),
            z: vec![czero(); w0.len()],
            w: w0.to_vec(),
            h1: h1.to_vec(),
            h4: h4.to_vec(),
            penalty,
            inverse,
        })
    }

    pub fn inverse(&self) -> &CMatrix<T> {
        &self.inverse
    }

    pub fn matches(&self, h1: &[Cx<T>], h4: &[Cx<T>], penalty: T) -> bool {
        self.penalty == penalty && self.h1 == h1 && self.h4 == h4
    }

    /// Restarts the iterate at `w0` with zero duals; the inverse is kept.
    pub fn reset(&mut self, w0: &[Cx<T>]) {
        self.w.copy_from_slice(w0);
        self.v.copy_from_slice(w0);
        self.u = dot(&self.h1, w0);
        self.y = czero();
        self.z.iter_mut().for_each(|z| *z = czero());
    }

    /// One sweep `u → v → w → duals`; returns the primal residual
    /// `max(|u − h1 w|, ‖v − w‖)` and the iterate change `‖wʲ − wʲ⁻¹‖`.
    pub fn step(&mut self, anchor: Cx<T>, zeta: T, budget: T) -> Result<(T, T)> {
        let target = dot(&self.h1, &self.w) - self.y;
        self.u = admm_u_update(anchor, target, zeta)
            .ok_or_else(|| Error::Numerical("linearization anchor vanished".into()))?;
        self.v = admm_v_update(&self.w, &self.z, budget);
        let w = admm_w_update(&self.inverse, &self.h1, self.u, self.y, &self.v, &self.z, self.penalty);
        let change = self.w.iter().zip(&w).map(|(a, b)| (a - b).norm_sqr()).sum::<T>().sqrt();
        self.w = w;
        admm_dual_update(&mut self.y, &mut self.z, &self.h1, self.u, &self.v, &self.w);
        let ru = (self.u - dot(&self.h1, &self.w)).norm();
        let rv = self.v.iter().zip(&self.w).map(|(a, b)| (a - b).norm_sqr()).sum::<T>().sqrt();
        Ok((ru.max(rv), change))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmallTimescaleSolver<T> {
    pub radio: Radio<T>,
    pub params: SmallTimescaleParams<T>,
}

/// Scaled problem data shared by every CCP run of one solve.
struct Scaled<T> {
    g1: Vec<Cx<T>>,
    g4: Vec<Cx<T>>,
    /// `p0 ‖h1‖²`
    signal_max: T,
    /// `‖h4‖ = 0`: interference is zero for every beamformer.
    no_interference: bool,
}

#[derive(Clone, Debug)]
struct Candidate<T> {
    x: Vec<Cx<T>>,
    p: T,
    rate: T,
}

#[derive(Default)]
struct Counters {
    ccp: usize,
    admm: usize,
}

impl<T: Real> SmallTimescaleSolver<T> {
    pub fn new(radio: Radio<T>, params: SmallTimescaleParams<T>) -> Result<Self> {
        params.validate(radio.sinr_target)?;
        if !(radio.bs_power > T::zero() && radio.noise_cu > T::zero() && radio.noise_dr > T::zero()) {
            return Err(Error::InvalidArgument("powers and noise must be positive".into()));
        }
        if !(radio.dt_max_power >= T::zero()) {
            return Err(Error::InvalidArgument("DT power cap must be non-negative".into()));
        }
        Ok(Self { radio, params })
    }

    pub fn from_config(config: &SystemConfig<T>, delta: T) -> Result<Self> {
        Self::new(Radio::from_config(config), SmallTimescaleParams::from_settings(&config.solver, delta))
    }

    pub fn with_delta(&self, delta: T) -> Result<Self> {
        Self::new(self.radio, self.params.with_delta(delta))
    }

    pub fn solve(&self, eff: &EffectiveChannels<T>) -> SmallTimescaleSolution<T> {
        self.run(eff, None)
    }

    pub fn solve_traced(&self, eff: &EffectiveChannels<T>) -> (SmallTimescaleSolution<T>, SolveTrace<T>) {
        let mut trace = SolveTrace::default();
        let sol = self.run(eff, Some(&mut trace));
        (sol, trace)
    }

    fn power_for(&self, eff: &EffectiveChannels<T>, w: &[Cx<T>]) -> T {
        let r = &self.radio;
        optimal_power(w, eff, r.sinr_target, self.params.delta, r.noise_cu, r.dt_max_power)
    }

    fn finish(
        &self,
        eff: &EffectiveChannels<T>,
        w: Vec<Cx<T>>,
        p: T,
        status: Status,
        outer: usize,
        counters: &Counters,
    ) -> SmallTimescaleSolution<T> {
        let r = &self.radio;
        let g_r = sinr_dr(eff, &w, p, r.noise_dr);
        SmallTimescaleSolution {
            sinr_cu: sinr_cu(eff, &w, p, r.noise_cu),
            sinr_dr: g_r,
            rate: rate(g_r),
            w,
            p,
            status,
            outer_iters: outer,
            ccp_iters: counters.ccp,
            admm_iters: counters.admm,
        }
    }

    fn run(&self, eff: &EffectiveChannels<T>, mut trace: Option<&mut SolveTrace<T>>) -> SmallTimescaleSolution<T> {
        let r = self.radio;
        let prm = self.params;
        let m = eff.antennas();
        let mut counters = Counters::default();
        let h1_norm = norm(&eff.h1);
        let need = r.sinr_target - prm.delta;
        let signal_max = r.bs_power * h1_norm * h1_norm;
        if !(h1_norm > T::zero()) || signal_max < need * r.noise_cu {
            let w = if h1_norm > T::zero() {
                eff.h1.iter().map(|h| h.conj() * (r.bs_power.sqrt() / h1_norm)).collect()
            } else {
                vec![czero(); m]
            };
            return self.finish(eff, w, T::zero(), Status::FallbackInfeasible, 0, &counters);
        }

        let h4_norm = norm(&eff.h4);
        let g1: Vec<Cx<T>> = eff.h1.iter().map(|h| h / h1_norm).collect();
        let no_interference = !(h4_norm > T::zero());
        let g4: Vec<Cx<T>> = if no_interference {
            vec![czero(); m]
        } else {
            eff.h4.iter().map(|h| h / h4_norm).collect()
        };
        let scaled = Scaled {
            g1,
            g4,
            signal_max,
            no_interference,
        };
        let mrt = conj(&scaled.g1);
        let sqrt_p0 = r.bs_power.sqrt();
        let to_w = |x: &[Cx<T>]| -> Vec<Cx<T>> { x.iter().map(|v| v * sqrt_p0).collect() };
        let mut admm = if no_interference {
            None
        } else {
            match AdmmState::new(&scaled.g1, &scaled.g4, prm.penalty, &mrt) {
                Ok(s) => Some(s),
                Err(_) => None,
            }
        };

        // Alternation: power at the edge of the CU constraint, then the
        // minimum-interference beamformer for that power.
        let mut x = mrt.clone();
        let mut p = self.power_for(eff, &to_w(&x));
        let mut best = Candidate {
            rate: rate(sinr_dr(eff, &to_w(&x), p, r.noise_dr)),
            x: x.clone(),
            p,
        };
        if let Some(t) = trace.as_deref_mut() {
            t.ao_rates.push(best.rate);
        }
        let mut outer = 0;
        while outer < prm.outer_max_iters {
            outer += 1;
            let zeta = self.scaled_zeta(eff, p, &scaled);
            x = self.ccp(&scaled, &x, zeta, admm.as_mut(), &mut counters, trace.as_deref_mut());
            let w = to_w(&x);
            let after_w = rate(sinr_dr(eff, &w, p, r.noise_dr));
            p = self.power_for(eff, &w);
            let after_p = rate(sinr_dr(eff, &w, p, r.noise_dr));
            if let Some(t) = trace.as_deref_mut() {
                t.ao_rates.push(after_w);
                t.ao_rates.push(after_p);
            }
            let gain = after_p - best.rate;
            if after_p >= best.rate {
                best = Candidate {
                    x: x.clone(),
                    p,
                    rate: after_p,
                };
            }
            if gain.abs() < prm.rate_tol {
                break;
            }
        }

        // The alternation stops where the beamformer leaves the CU
        // constraint exactly tight, so the power never moves off the value
        // set by the initial MRT beam. Search the power directly along the
        // envelope p ↦ rate(p, w⋆(p)) instead.
        if prm.power_search_iters > 0 && !scaled.no_interference && best.p > T::zero() {
            let hi = self.power_for(eff, &to_w(&mrt));
            // Each envelope point is solved from MRT: warm starts make the
            // envelope path dependent and stall on zero-forcing beams. The
            // search compares the envelope at `pp` itself; re-optimizing the
            // power first would flatten it onto the zero-forcing kink. The
            // candidate keeps the re-optimized power.
            let eval = |pp: T, counters: &mut Counters, admm: Option<&mut AdmmState<T>>| {
                let zeta = self.scaled_zeta(eff, pp, &scaled);
                let xs = self.ccp(&scaled, &mrt, zeta, admm, counters, None);
                let w = to_w(&xs);
                let envelope = rate(sinr_dr(eff, &w, pp, r.noise_dr));
                let pw = self.power_for(eff, &w);
                let rt = rate(sinr_dr(eff, &w, pw, r.noise_dr));
                (envelope, Candidate { x: xs, p: pw, rate: rt })
            };
            let consider = |cand: &Candidate<T>, best: &mut Candidate<T>, trace: &mut Option<&mut SolveTrace<T>>| {
                if cand.rate > best.rate {
                    *best = cand.clone();
                    if let Some(t) = trace.as_deref_mut() {
                        t.ao_rates.push(best.rate);
                    }
                }
            };
            // Coarse grid to bracket the maximum, then golden section inside.
            let grid = POWER_GRID;
            let step = hi / T::from_usize(grid).unwrap();
            let mut k_best = grid;
            let mut r_best = T::neg_infinity();
            for k in 1..=grid {
                let (env, cand) = eval(step * T::from_usize(k).unwrap(), &mut counters, admm.as_mut());
                if env > r_best {
                    r_best = env;
                    k_best = k;
                }
                consider(&cand, &mut best, &mut trace);
            }
            let (mut a, mut b) = (
                step * T::from_usize(k_best - 1).unwrap(),
                step * T::from_usize((k_best + 1).min(grid)).unwrap(),
            );
            let golden = T::lit(0.618_033_988_749_894_9);
            let mut c = b - golden * (b - a);
            let mut d = a + golden * (b - a);
            let mut fc = eval(c, &mut counters, admm.as_mut());
            let mut fd = eval(d, &mut counters, admm.as_mut());
            for _ in 0..prm.power_search_iters {
                consider(&fc.1, &mut best, &mut trace);
                consider(&fd.1, &mut best, &mut trace);
                if fc.0 >= fd.0 {
                    b = d;
                    d = c;
                    fd = fc.clone();
                    c = b - golden * (b - a);
                    fc = eval(c, &mut counters, admm.as_mut());
                } else {
                    a = c;
                    c = d;
                    fc = fd.clone();
                    d = a + golden * (b - a);
                    fd = eval(d, &mut counters, admm.as_mut());
                }
            }
            consider(&fc.1, &mut best, &mut trace);
            consider(&fd.1, &mut best, &mut trace);
        }

        let w = to_w(&best.x);
        self.finish(eff, w, best.p, Status::Feasible, outer, &counters)
    }

    /// CU requirement `ζ = (Γu − δ)(p|h2|² + σu²)` in units of `p0‖h1‖²`.
    fn scaled_zeta(&self, eff: &EffectiveChannels<T>, p: T, s: &Scaled<T>) -> T {
        let r = &self.radio;
        (r.sinr_target - self.params.delta) * (p * eff.h2.norm_sqr() + r.noise_cu) / s.signal_max
    }

    /// Convex-concave procedure on the scaled problem from a feasible
    /// `x0` (`|g1 x0|² ≥ zeta`, `‖x0‖ ≤ 1`). Every accepted iterate is
    /// feasible and strictly lowers `|g4 x|²`.
    fn ccp(
        &self,
        s: &Scaled<T>,
        x0: &[Cx<T>],
        zeta: T,
        admm: Option<&mut AdmmState<T>>,
        counters: &mut Counters,
        mut trace: Option<&mut SolveTrace<T>>,
    ) -> Vec<Cx<T>> {
        let prm = &self.params;
        let mut x = x0.to_vec();
        let mut f = dot(&s.g4, &x).norm_sqr();
        let mut history = vec![f];
        let Some(admm) = admm else {
            return x;
        };
        admm.reset(&x);
        for _ in 0..prm.ccp_max_iters {
            counters.ccp += 1;
            let anchor = dot(&s.g1, &x);
            let mut residual = T::infinity();
            let mut converged = false;
            for _ in 0..prm.admm_max_iters {
                counters.admm += 1;
                match admm.step(anchor, zeta, T::one()) {
                    Ok((res, change)) => {
                        residual = res;
                        if res.max(change) < prm.admm_tol {
                            converged = true;
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.admm_residuals.push(residual);
                t.admm_converged.push(converged);
            }
            // The ADMM output is only approximately feasible. Pull it back
            // along the segment to the anchor (feasible for the linearized
            // constraint, hence for the true one) until it is exactly
            // feasible; by convexity this keeps any descent it achieved.
            let mut cand = project_ball(&admm.w);
            let lin = |v: &[Cx<T>]| T::lit(2.0) * (anchor.conj() * dot(&s.g1, v)).re - anchor.norm_sqr();
            let l_anchor = anchor.norm_sqr();
            let l_cand = lin(&cand);
            if l_cand < zeta {
                let t = ((l_anchor - zeta) / (l_anchor - l_cand)).max(T::zero()).min(T::one());
                cand = x.iter().zip(&cand).map(|(a, b)| a + (b - a) * t).collect();
            }
            let f_cand = dot(&s.g4, &cand).norm_sqr();
            if !(f_cand < f) || dot(&s.g1, &cand).norm_sqr() < zeta {
                break;
            }
            let drop = f - f_cand;
            x = cand;
            f = f_cand;
            history.push(f);
            if drop <= prm.ccp_tol * (f + drop) {
                break;
            }
        }
        if let Some(t) = trace {
            t.ccp_objectives.push(history);
        }
        x
    }
}

/// Grid points used to bracket the envelope maximum before refining.
const POWER_GRID: usize = 8;

fn project_ball<T: Real>(x: &[Cx<T>]) -> Vec<Cx<T>> {
    let n2 = norm_sqr(x);
    if n2 <= T::one() {
        x.to_vec()
    } else {
        let s = T::one() / n2.sqrt();
        x.iter().map(|v| v * s).collect()
    }
}

impl<T: Real> Policy<T> for SmallTimescaleSolver<T> {
    fn decide(&self, eff: &EffectiveChannels<T>) -> Decision<T> {
        let s = self.solve(eff);
        Decision {
            infeasible: !s.is_feasible(),
            w: s.w,
            p: s.p,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cx, inner};
    use crate::rng::substream;
    use rand::Rng;

    fn rand_cx<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<Cx<f64>> {
        (0..n)
            .map(|_| cx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * scale)
            .collect()
    }

    #[test]
    fn power_examples() {
        let e = EffectiveChannels {
            h1: vec![cx(1.0, 0.0)],
            h2: cx(1.0, 0.0),
            h3: cx(1.0, 0.0),
            h4: vec![cx(0.0, 0.0)],
        };
        assert_eq!(optimal_power(&[cx(0.0, 0.0)], &e, 4.0, 1.0, 0.5, 10.0), 0.0);
        // |h1 w|² = 2(Γu − δ)σu² with |h2|² = σu² = 1.
        let w = [cx(6f64.sqrt(), 0.0)];
        assert!((optimal_power(&w, &e, 4.0, 1.0, 1.0, 100.0) - 1.0).abs() < 1e-12);
        let w = [cx(100.0, 0.0)];
        assert_eq!(optimal_power(&w, &e, 1.0, 0.0, 0.0, 2.0), 2.0);
        let tiny = EffectiveChannels {
            h2: cx(1e-9, 0.0),
            ..e.clone()
        };
        assert_eq!(optimal_power(&[cx(1.0, 0.0)], &tiny, 2.0, 0.0, 0.4, 3.0), 3.0);
        assert_eq!(optimal_power(&[cx(0.1, 0.0)], &tiny, 2.0, 0.0, 0.4, 3.0), 0.0);
    }

    #[test]
    fn ccp_minorant_is_tight_and_below() {
        let mut rng = substream(11, &[]);
        for _ in 0..1000 {
            let e = EffectiveChannels {
                h1: rand_cx(&mut rng, 3, 2.0),
                h2: cx(0.3, 0.1),
                h3: cx(1.0, 0.0),
                h4: rand_cx(&mut rng, 3, 1.0),
            };
            let w0 = rand_cx(&mut rng, 3, 1.0);
            let w = rand_cx(&mut rng, 3, 3.0);
            let lc = ccp_constraint(&w0, &e, 0.5, 2.0, 0.5, 0.1);
            let true0 = dot(&e.h1, &w0).norm_sqr();
            assert!((lc.lhs(&w0) - true0).abs() < 1e-12 * (1.0 + true0));
            assert!(lc.lhs(&w) <= dot(&e.h1, &w).norm_sqr() + 1e-12);
        }
        let e = EffectiveChannels {
            h1: vec![cx(1.0, 0.0)],
            h2: cx(2.0, 0.0),
            h3: cx(1.0, 0.0),
            h4: vec![cx(0.0, 0.0)],
        };
        let lc = ccp_constraint(&[cx(1.0, 0.0)], &e, 0.0, 3.0, 1.0, 0.25);
        assert_eq!(lc.zeta, 0.5);
    }

    #[test]
    fn u_update_inactive_and_projection() {
        let c = cx(1.0, 0.5);
        let t = cx(3.0, 1.0);
        assert_eq!(admm_u_update(c, t, 0.1), Some(t));
        let mut rng = substream(12, &[]);
        for _ in 0..200 {
            let c = cx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let t = cx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 3.0;
            let zeta = rng.random::<f64>();
            let u = admm_u_update(c, t, zeta).unwrap();
            let s = 2.0 * (c.conj() * u).re - c.norm_sqr() - zeta;
            assert!(s >= -1e-9);
        }
        assert_eq!(admm_u_update(cx(0.0, 0.0), cx(0.0, 0.0), 1.0), None);
    }

    #[test]
    fn u_update_matches_grid_projection() {
        let mut rng = substream(13, &[]);
        for _ in 0..5 {
            let c = Cx::from_polar(0.3 + 0.7 * rng.random::<f64>(), std::f64::consts::TAU * rng.random::<f64>());
            let t = cx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let zeta = 0.2 + rng.random::<f64>();
            let u = admm_u_update(c, t, zeta).unwrap();
            let feasible = |z: Cx<f64>| 2.0 * (c.conj() * z).re - c.norm_sqr() - zeta >= 0.0;
            // Nested grids with axes along and across the anchor direction
            // (so the half-plane boundary is parallel to a grid line), each
            // centred on the previous winner.
            let along = c / c.norm();
            let across = along * cx(0.0, 1.0);
            let mut best = (f64::INFINITY, cx(0.0, 0.0));
            let mut centre = cx(0.0, 0.0);
            let mut half = 6.0;
            for _ in 0..8 {
                let n = 200;
                for i in 0..=n {
                    for j in 0..=n {
                        let a = -half + 2.0 * half * i as f64 / n as f64;
                        let b = -half + 2.0 * half * j as f64 / n as f64;
                        let z = centre + along * a + across * b;
                        if feasible(z) && (z - t).norm_sqr() < best.0 {
                            best = ((z - t).norm_sqr(), z);
                        }
                    }
                }
                centre = best.1;
                half *= 0.1;
            }
            assert!((best.1 - u).norm() < 1e-4, "{:?} vs {:?}", best.1, u);
        }
    }

    #[test]
    fn v_update_examples() {
        let w = [cx(0.3f64, 0.0), cx(0.0, 0.4)];
        let z = [cx(0.0, 0.0); 2];
        assert_eq!(admm_v_update(&w, &z, 1.0), w.to_vec());
        let w2 = [cx(2.0, 0.0), cx(0.0, 0.0)];
        let v = admm_v_update(&w2, &z, 1.0);
        assert!((v[0].re - 1.0).abs() < 1e-15 && (norm(&v) - 1.0).abs() < 1e-15);
        assert_eq!(admm_v_update(&w, &w, 1.0), vec![cx(0.0, 0.0); 2]);
    }

    #[test]
    fn w_update_examples() {
        let h1 = [cx(1.0, 0.0)];
        let h4 = [cx(0.0, 0.0)];
        let inv = admm_normal_matrix(&h1, &h4, 1.0).hpd_inverse().unwrap();
        let (u, y, v, z) = (cx(0.3, 0.2), cx(0.1, 0.0), [cx(0.5, -0.1)], [cx(0.2, 0.4)]);
        let w = admm_w_update(&inv, &h1, u, y, &v, &z, 1.0);
        assert!((w[0] - ((u + y) + (v[0] + z[0])) / 2.0).norm() < 1e-15);
        let zero = [cx(0.0, 0.0); 2];
        let inv = admm_normal_matrix(&zero, &zero, 1.0).hpd_inverse().unwrap();
        let v = [cx(0.2, 0.1), cx(-0.3, 0.0)];
        let z = [cx(0.0, 0.5), cx(0.1, 0.1)];
        let w = admm_w_update(&inv, &zero, u, y, &v, &z, 1.0);
        for i in 0..2 {
            assert!((w[i] - (v[i] + z[i])).norm() < 1e-15);
        }
    }

    #[test]
    fn w_update_is_stationary_for_lagrangian() {
        let mut rng = substream(14, &[]);
        let m = 4;
        let rho = 0.7;
        let h1 = rand_cx(&mut rng, m, 1.0);
        let h4 = rand_cx(&mut rng, m, 1.0);
        let (u, y) = (cx(0.3, -0.2), cx(0.05, 0.1));
        let v = rand_cx(&mut rng, m, 1.0);
        let z = rand_cx(&mut rng, m, 0.2);
        let a = admm_normal_matrix(&h1, &h4, rho);
        let inv = a.hpd_inverse().unwrap();
        let prod = inv.mul(&a);
        for i in 0..m {
            for j in 0..m {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - cx(e, 0.0)).norm() < 1e-10);
            }
        }
        let w = admm_w_update(&inv, &h1, u, y, &v, &z, rho);
        let lag = |w: &[Cx<f64>]| {
            dot(&h4, w).norm_sqr()
                + rho / 2.0 * (u - dot(&h1, w) + y).norm_sqr()
                + rho / 2.0 * v.iter().zip(&z).zip(w).map(|((a, b), c)| (a - c + b).norm_sqr()).sum::<f64>()
        };
        let h = 1e-6;
        let mut g2 = 0.0;
        for k in 0..m {
            for dir in [cx(1.0, 0.0), cx(0.0, 1.0)] {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[k] += dir * h;
                wm[k] -= dir * h;
                let g = (lag(&wp) - lag(&wm)) / (2.0 * h);
                g2 += g * g;
            }
        }
        assert!(g2.sqrt() <= 1e-8, "gradient norm {}", g2.sqrt());
    }

    #[test]
    fn dual_update_examples() {
        let h1 = [cx(1.0, 1.0), cx(0.5, 0.0)];
        let w = [cx(0.2, 0.0), cx(0.1, 0.3)];
        let (mut y, mut z) = (cx(0.3, 0.0), vec![cx(0.1, 0.1); 2]);
        admm_dual_update(&mut y, &mut z, &h1, dot(&h1, &w), &w, &w);
        assert_eq!((y, z.clone()), (cx(0.3, 0.0), vec![cx(0.1, 0.1); 2]));
        let u = dot(&h1, &w) + cx(0.4, 0.0);
        let v = [w[0] + cx(0.0, 0.2), w[1]];
        let (mut y1, mut z1) = (cx(0.0, 0.0), vec![cx(0.0, 0.0); 2]);
        admm_dual_update(&mut y1, &mut z1, &h1, u, &v, &w);
        let u_half = dot(&h1, &w) + cx(0.2, 0.0);
        let v_half = [w[0] + cx(0.0, 0.1), w[1]];
        let (mut y2, mut z2) = (cx(0.0, 0.0), vec![cx(0.0, 0.0); 2]);
        admm_dual_update(&mut y2, &mut z2, &h1, u_half, &v_half, &w);
        assert!((y1 - y2 * 2.0).norm() < 1e-15 && (z1[0] - z2[0] * 2.0).norm() < 1e-15);
    }

    fn radio() -> Radio<f64> {
        Radio {
            bs_power: 2.0,
            dt_max_power: 1.5,
            noise_cu: 0.1,
            noise_dr: 0.1,
            sinr_target: 4.0,
        }
    }

    fn solver(delta: f64) -> SmallTimescaleSolver<f64> {
        SmallTimescaleSolver::new(radio(), SmallTimescaleParams::from_settings(&SolverSettings::default(), delta))
            .unwrap()
    }

    #[test]
    fn decoupled_problem_uses_mrt_and_full_power() {
        let e = EffectiveChannels {
            h1: vec![cx(0.6, 0.2), cx(-0.1, 0.5)],
            h2: cx(0.0, 0.0),
            h3: cx(0.7, 0.0),
            h4: vec![cx(0.0, 0.0); 2],
        };
        let s = solver(0.0).solve(&e);
        assert!(s.is_feasible());
        assert_eq!(s.p, 1.5);
        let h1n = norm(&e.h1);
        for (w, h) in s.w.iter().zip(&e.h1) {
            assert!((w - h.conj() * (2f64.sqrt() / h1n)).norm() < 1e-12);
        }
    }

    #[test]
    fn unreachable_target_falls_back() {
        let e = EffectiveChannels {
            h1: vec![cx(0.6, 0.2), cx(-0.1, 0.5)],
            h2: cx(0.3, 0.0),
            h3: cx(0.7, 0.0),
            h4: vec![cx(0.2, 0.1); 2],
        };
        let r = Radio {
            sinr_target: 1e12,
            ..radio()
        };
        let s = SmallTimescaleSolver::new(r, SmallTimescaleParams::from_settings(&SolverSettings::default(), 0.0))
            .unwrap()
            .solve(&e);
        assert_eq!(s.status, Status::FallbackInfeasible);
        assert_eq!(s.p, 0.0);
        assert!((norm_sqr(&s.w) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn solutions_respect_constraints_and_trace_is_monotone() {
        let mut rng = substream(15, &[]);
        for _ in 0..200 {
            let m = 1 + rng.random_range(0..4);
            let e = EffectiveChannels {
                h1: rand_cx(&mut rng, m, 2.0),
                h2: rand_cx(&mut rng, 1, 2.0)[0],
                h3: rand_cx(&mut rng, 1, 2.0)[0],
                h4: rand_cx(&mut rng, m, 2.0),
            };
            let delta = rng.random::<f64>() * 2.0;
            let (s, t) = solver(delta).solve_traced(&e);
            assert!(norm_sqr(&s.w) <= 2.0 * (1.0 + 1e-9));
            assert!(s.p >= 0.0 && s.p <= 1.5);
            if s.is_feasible() {
                assert!(s.sinr_cu >= 4.0 - delta - 1e-6, "{} < {}", s.sinr_cu, 4.0 - delta);
            }
            for pair in t.ao_rates.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-8, "{:?}", t.ao_rates);
            }
            for run in &t.ccp_objectives {
                for pair in run.windows(2) {
                    assert!(pair[1] <= pair[0] + 1e-8);
                }
            }
        }
    }

    #[test]
    fn common_phase_rotation_is_invisible() {
        let mut rng = substream(16, &[]);
        let e = EffectiveChannels {
            h1: rand_cx(&mut rng, 3, 2.0),
            h2: cx(0.4, -0.3),
            h3: cx(0.7, 0.2),
            h4: rand_cx(&mut rng, 3, 2.0),
        };
        let rot = Cx::from_polar(1.0, 0.7);
        let e2 = EffectiveChannels {
            h1: e.h1.iter().map(|h| h * rot).collect(),
            h2: e.h2 * rot,
            ..e.clone()
        };
        let a = solver(0.5).solve(&e);
        let b = solver(0.5).solve(&e2);
        assert!((a.sinr_cu - b.sinr_cu).abs() < 1e-6 * a.sinr_cu);
        assert!((a.sinr_dr - b.sinr_dr).abs() < 1e-6 * a.sinr_dr.max(1e-12));
        let _ = inner(&a.w, &b.w);
    }
}

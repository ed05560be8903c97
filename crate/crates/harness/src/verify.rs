//! Self-checks behind the `gradcheck` and `oracle` subcommands: gradients
//! against finite differences, the fast-timescale solver against brute-force
//! search, descent and constraint audits, and the `δ` calibration.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use irs_d2d::channel::{compose_effective, ChannelStatistics, EffectiveChannels, PhaseShifts, Reflection};
use irs_d2d::large_timescale::{grad_g0, grad_g1, OutageSmoothing};
use irs_d2d::linalg::{cx, dot, norm_sqr, Cx};
use irs_d2d::metrics::{is_outage, q_value, rate, sinr_cu, sinr_dr, smooth_step, SINR_TOLERANCE};
use irs_d2d::real::db_to_linear;
use irs_d2d::rng::{purpose, substream};
use irs_d2d::schemes::calibrate_delta_on;
use irs_d2d::small_timescale::SmallTimescaleSolver;
use irs_d2d::SystemConfig;

use crate::error::HarnessError;

/// Outcome of one verification suite.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckReport {
    pub fn line(&self) -> String {
        format!(
            "[{}] {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }

    pub fn into_result(self) -> Result<Self, HarnessError> {
        if self.passed {
            Ok(self)
        } else {
            Err(HarnessError::Check(self.line()))
        }
    }
}

fn timed(name: &str, f: impl FnOnce() -> (bool, String)) -> CheckReport {
    let t = Instant::now();
    let (passed, detail) = f();
    CheckReport {
        name: name.into(),
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// Reference geometry with a different array size and noise floor.
pub fn scenario(antennas: usize, elements: usize, noise_dbm: f64) -> SystemConfig {
    let mut c = SystemConfig::reference();
    c.antennas = antennas;
    c.elements = elements;
    c.noise_cu = db_to_linear(noise_dbm);
    c.noise_dr = c.noise_cu;
    c
}

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-6;

fn central(f: impl Fn(&[f64]) -> f64, phi: &[f64]) -> Vec<f64> {
    (0..phi.len())
        .map(|n| {
            let mut a = phi.to_vec();
            let mut b = phi.to_vec();
            a[n] += GRAD_STEP;
            b[n] -= GRAD_STEP;
            (f(&a) - f(&b)) / (2.0 * GRAD_STEP)
        })
        .collect()
}

fn rel_err(analytic: &[f64], reference: &[f64]) -> f64 {
    let d: f64 = analytic.iter().zip(reference).map(|(x, y)| (x - y) * (x - y)).sum();
    let n: f64 = reference.iter().map(|x| x * x).sum();
    (d / n).sqrt()
}

fn random_beamformer<R: Rng>(m: usize, budget: f64, rng: &mut R) -> Vec<Cx<f64>> {
    let w: Vec<Cx<f64>> = (0..m)
        .map(|_| cx(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect();
    let r = budget.sqrt() * rng.random::<f64>().powf(0.5 / m as f64) / norm_sqr(&w).sqrt();
    w.into_iter().map(|x| x * r).collect()
}

/// Analytic phase gradients of both sample functions against central
/// differences of the directly composed objectives.
pub fn gradcheck(points: usize, seed: u64) -> CheckReport {
    timed("gradient fidelity", || {
        let mut c = scenario(4, 8, -80.0);
        c.smoothing = 1e3;
        let st = ChannelStatistics::from_config(&c).expect("valid scenario");
        let sm = OutageSmoothing::from_config(&c);
        let mut rng = substream(seed, &[purpose::ORACLE, 1]);
        let (mut worst0, mut worst1) = (0.0f64, 0.0f64);
        let mut flat = 0;
        for _ in 0..points {
            let real = st.sample(&mut rng);
            let phi = PhaseShifts::random(c.elements, &mut rng).into_vec();
            let mut w = random_beamformer(c.antennas, c.bs_power, &mut rng);
            let p = c.dt_max_power * rng.random::<f64>();
            let ph = PhaseShifts::new(phi.clone());
            let compose = |x: &[f64]| compose_effective(&real, &PhaseShifts::new(x.to_vec())).expect("sizes agree");

            let fd0 = central(|x| -rate(sinr_dr(&compose(x), &w, p, c.noise_dr)), &phi);
            worst0 = worst0.max(rel_err(&grad_g0(&ph, &w, p, &real, c.noise_dr), &fd0));

            // Rescale w so the smoothed step sits in its transition region,
            // |βQ/scale| ≤ 4; far outside it both gradients underflow.
            let eff = compose(&phi);
            let gain = dot(&eff.h1, &w).norm_sqr();
            let q = q_value(&eff, &w, p, sm.sinr_target, sm.noise_cu);
            let u: f64 = rng.random::<f64>() * 8.0 - 4.0;
            let wanted = q + gain - u * sm.scale / sm.beta;
            if wanted > 0.0 && gain > 0.0 {
                let k = (wanted / gain).sqrt();
                w.iter_mut().for_each(|x| *x *= k);
            }
            let g1 = |x: &[f64]| {
                smooth_step(q_value(&compose(x), &w, p, sm.sinr_target, sm.noise_cu) / sm.scale, sm.beta)
                    - sm.tolerance
            };
            let an1 = grad_g1(&ph, &w, p, &real, &sm);
            if an1.iter().all(|g| *g == 0.0) {
                flat += 1;
                continue;
            }
            worst1 = worst1.max(rel_err(&an1, &central(g1, &phi)));
        }
        let passed = worst0 <= GRAD_REL_TOL && worst1 <= GRAD_REL_TOL && flat * 10 <= points;
        (
            passed,
            format!(
                "{points} points each, worst relative error g0 {worst0:.2e}, g1 {worst1:.2e} (bound {GRAD_REL_TOL:e}, step {GRAD_STEP:e}), {flat} flat g1 points"
            ),
        )
    })
}

/// `ζ`-free closed form of the best DT power for a fixed beamformer.
pub fn best_power(eff: &EffectiveChannels<f64>, w: &[Cx<f64>], c: &SystemConfig) -> Option<f64> {
    let s = dot(&eff.h1, w).norm_sqr();
    if s < c.sinr_target * c.noise_cu {
        return None;
    }
    let h2 = eff.h2.norm_sqr();
    let cap = if h2 > 0.0 {
        (s / c.sinr_target - c.noise_cu) / h2
    } else {
        f64::INFINITY
    };
    Some(cap.min(c.dt_max_power).max(0.0))
}

fn candidate_rate(eff: &EffectiveChannels<f64>, w: &[Cx<f64>], c: &SystemConfig) -> Option<f64> {
    if norm_sqr(w) > c.bs_power {
        return None;
    }
    best_power(eff, w, c).map(|p| rate(sinr_dr(eff, w, p, c.noise_dr)))
}

/// Random search over feasible beamformers followed by coordinate polish.
pub fn brute_force_rate<R: Rng>(
    eff: &EffectiveChannels<f64>,
    c: &SystemConfig,
    feasible_candidates: usize,
    rng: &mut R,
) -> Option<f64> {
    brute_force(eff, c, feasible_candidates, rng).map(|(r, _)| r)
}

/// As [`brute_force_rate`], also returning the maximizing beamformer.
pub fn brute_force<R: Rng>(
    eff: &EffectiveChannels<f64>,
    c: &SystemConfig,
    feasible_candidates: usize,
    rng: &mut R,
) -> Option<(f64, Vec<Cx<f64>>)> {
    let m = eff.antennas();
    let mut best: Option<(f64, Vec<Cx<f64>>)> = None;
    let mut found = 0;
    let mut drawn = 0usize;
    while found < feasible_candidates && drawn < feasible_candidates.saturating_mul(50) {
        drawn += 1;
        let w = random_beamformer(m, c.bs_power, rng);
        if let Some(r) = candidate_rate(eff, &w, c) {
            found += 1;
            if best.as_ref().is_none_or(|(b, _)| r > *b) {
                best = Some((r, w));
            }
        }
    }
    let (mut value, mut w) = best?;
    let mut step = 0.1 * c.bs_power.sqrt();
    let dirs = [cx(1.0, 0.0), cx(-1.0, 0.0), cx(0.0, 1.0), cx(0.0, -1.0)];
    while step > 1e-10 * c.bs_power.sqrt() {
        let mut improved = false;
        for k in 0..m {
            for d in dirs {
                let mut t = w.clone();
                t[k] += d * step;
                if let Some(r) = candidate_rate(eff, &t, c) {
                    if r > value {
                        value = r;
                        w = t;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Some((value, w))
}

pub const ORACLE_REL_GAP: f64 = 0.02;

/// Fast-timescale solver against [`brute_force_rate`] on CU-feasible
/// realizations at `M = 2`, `N = 4`.
pub fn oracle(realizations: usize, candidates: usize, noise_dbm: f64, seed: u64) -> CheckReport {
    timed("small-timescale optimality", || {
        let c = scenario(2, 4, noise_dbm);
        let st = ChannelStatistics::from_config(&c).expect("valid scenario");
        let solver = SmallTimescaleSolver::from_config(&c, 0.0).expect("valid solver");
        let mut rng = substream(seed, &[purpose::ORACLE, 2]);
        let mut worst = f64::NEG_INFINITY;
        let mut misses = 0;
        let mut skipped = 0;
        let mut done = 0;
        while done < realizations && skipped < 100 * realizations.max(1) {
            let ph = PhaseShifts::random(c.elements, &mut rng);
            let eff = compose_effective(&st.sample(&mut rng), &ph).expect("sizes agree");
            let sol = solver.solve(&eff);
            let reference = brute_force_rate(&eff, &c, candidates, &mut rng);
            match (sol.is_feasible(), reference) {
                (false, None) => skipped += 1,
                (false, Some(_)) => {
                    misses += 1;
                    done += 1;
                }
                (true, None) => {
                    // The search found nothing the solver could be compared with.
                    skipped += 1;
                }
                (true, Some(o)) => {
                    done += 1;
                    let gap = (o - sol.rate) / o.max(1e-300);
                    worst = worst.max(gap);
                }
            }
        }
        let passed = done == realizations && misses == 0 && worst <= ORACLE_REL_GAP;
        (
            passed,
            format!(
                "{done} feasible realizations at {noise_dbm} dBm noise ({skipped} skipped), worst shortfall vs search {:.3}% (bound {:.0}%), {misses} wrongly declared infeasible",
                100.0 * worst.max(0.0),
                100.0 * ORACLE_REL_GAP
            ),
        )
    })
}

pub const DESCENT_TOL: f64 = 1e-8;

/// Outer alternation never loses rate; CCP never raises interference.
pub fn descent(instances: usize, seed: u64) -> CheckReport {
    timed("monotone descent", || {
        let c = scenario(4, 16, -100.0);
        let st = ChannelStatistics::from_config(&c).expect("valid scenario");
        let solver = SmallTimescaleSolver::from_config(&c, 0.0).expect("valid solver");
        let mut rng = substream(seed, &[purpose::ORACLE, 3]);
        let (mut worst_ao, mut worst_ccp) = (0.0f64, 0.0f64);
        let mut feasible = 0;
        for _ in 0..instances {
            let ph = PhaseShifts::random(c.elements, &mut rng);
            let eff = compose_effective(&st.sample(&mut rng), &ph).expect("sizes agree");
            let (sol, trace) = solver.solve_traced(&eff);
            feasible += sol.is_feasible() as usize;
            for w in trace.ao_rates.windows(2) {
                worst_ao = worst_ao.max(w[0] - w[1]);
            }
            for run in &trace.ccp_objectives {
                for w in run.windows(2) {
                    worst_ccp = worst_ccp.max(w[1] - w[0]);
                }
            }
        }
        let passed = worst_ao <= DESCENT_TOL && worst_ccp <= DESCENT_TOL && feasible * 2 >= instances;
        (
            passed,
            format!(
                "{instances} instances ({feasible} feasible), worst rate drop {worst_ao:.2e}, worst normalized interference rise {worst_ccp:.2e} (bound {DESCENT_TOL:e})"
            ),
        )
    })
}

/// Every feasible-status solution meets its SINR floor and power budget.
pub fn honesty(instances: usize, seed: u64) -> CheckReport {
    timed("constraint honesty", || {
        let c = scenario(4, 16, -90.0);
        let st = ChannelStatistics::from_config(&c).expect("valid scenario");
        let base = SmallTimescaleSolver::from_config(&c, 0.0).expect("valid solver");
        let mut rng = substream(seed, &[purpose::ORACLE, 4]);
        let mut violations = 0;
        let mut feasible = 0;
        for _ in 0..instances {
            let delta = if rng.random::<bool>() { 0.0 } else { rng.random::<f64>() * 0.5 * c.sinr_target };
            let solver = base.with_delta(delta).expect("δ below target");
            let ph = PhaseShifts::random(c.elements, &mut rng);
            let eff = compose_effective(&st.sample(&mut rng), &ph).expect("sizes agree");
            let s = solver.solve(&eff);
            if !s.is_feasible() {
                continue;
            }
            feasible += 1;
            let g = sinr_cu(&eff, &s.w, s.p, c.noise_cu);
            let ok = g >= c.sinr_target - delta - SINR_TOLERANCE
                && norm_sqr(&s.w) <= c.bs_power * (1.0 + 1e-9)
                && s.p >= 0.0
                && s.p <= c.dt_max_power;
            violations += (!ok) as usize;
        }
        (
            violations == 0 && feasible > 0,
            format!("{instances} instances ({feasible} feasible), {violations} violations"),
        )
    })
}

pub const CALIBRATION_BAND: (f64, f64) = (0.03, 0.05);

/// Calibrates `δ` on `samples` draws and re-measures outage on as many
/// fresh draws, at `M = 4`, `N = 16`, `κ = 8 dB`.
pub fn calibration(samples: usize, noise_dbm: f64, seed: u64) -> CheckReport {
    timed("outage calibration", || {
        let c = scenario(4, 16, noise_dbm);
        let st = ChannelStatistics::from_config(&c).expect("valid scenario");
        let base = SmallTimescaleSolver::from_config(&c, 0.0).expect("valid solver");
        let ph = PhaseShifts::random(c.elements, &mut substream(seed, &[purpose::PHASE_INIT]));
        let draw = |tag: u64| -> Vec<EffectiveChannels<f64>> {
            let mut rng = substream(seed, &[purpose::CALIBRATION, tag]);
            (0..samples)
                .map(|_| Reflection::Irs(&ph).compose(&st.sample(&mut rng)).expect("sizes agree"))
                .collect()
        };
        let cal = calibrate_delta_on(&base, &draw(0), c.outage_tolerance).expect("valid δ range");
        let solver = base.with_delta(cal.delta).expect("δ below target");
        let fresh = draw(1);
        let outages = fresh
            .iter()
            .filter(|e| {
                let s = solver.solve(e);
                is_outage(sinr_cu(e, &s.w, s.p, c.noise_cu), c.sinr_target, !s.is_feasible())
            })
            .count();
        let at_zero = fresh
            .iter()
            .filter(|e| {
                let s = base.solve(e);
                is_outage(sinr_cu(e, &s.w, s.p, c.noise_cu), c.sinr_target, !s.is_feasible())
            })
            .count();
        let outage = outages as f64 / samples as f64;
        let (lo, hi) = CALIBRATION_BAND;
        (
            (lo..=hi).contains(&outage),
            format!(
                "noise {noise_dbm} dBm, δ = {:.4e} ({}), outage on {samples} fresh samples {outage:.4} (band [{lo}, {hi}]), outage at δ = 0: {:.4}",
                cal.delta,
                if cal.violated { "ε already exceeded at δ = 0" } else { "calibrated" },
                at_zero as f64 / samples as f64
            ),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_gradcheck_passes() {
        let r = gradcheck(5, 1);
        assert!(r.passed, "{}", r.line());
    }

    #[test]
    fn brute_force_matches_a_known_optimum() {
        // One antenna, no DR interference path: full BS power is optimal as
        // long as it lets the DT transmit at its cap.
        let c = scenario(1, 0, -80.0);
        let eff = EffectiveChannels {
            h1: vec![cx(1e-3, 0.0)],
            h2: cx(1e-5, 0.0),
            h3: cx(1e-4, 0.0),
            h4: vec![cx(0.0, 0.0)],
        };
        let want = rate(c.dt_max_power * 1e-8 / c.noise_dr);
        let got = brute_force_rate(&eff, &c, 200, &mut substream(2, &[])).unwrap();
        assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
    }

    #[test]
    fn check_report_formats() {
        let r = CheckReport {
            name: "x".into(),
            passed: false,
            detail: "d".into(),
            seconds: 0.5,
        };
        assert_eq!(r.line(), "[FAIL] x: d (0.5 s)");
        assert!(r.into_result().is_err());
    }
}

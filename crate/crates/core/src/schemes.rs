//! The proposed two-timescale scheme, its four comparison baselines and the
//! per-block calibration of the SINR slack `δ`.
//!
//! All schemes draw from the same per-block substreams (common random
//! numbers), so block `b` of every scheme sees the same evaluation
//! realizations and the same initial phases.

use rayon::prelude::*;

use crate::channel::{ChannelStatistics, EffectiveChannels, PhaseShifts, Reflection};
use crate::config::SystemConfig;
use crate::large_timescale::{cssca_run, deterministic_sca, CsscaParams, OutageSmoothing};
use crate::metrics::{is_outage, LinkBudget, Scoring};
use crate::real::Real;
use crate::rng::{purpose, substream};
use crate::small_timescale::SmallTimescaleSolver;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    Proposed,
    Instantaneous,
    Statistical,
    RandomPhase,
    NoIrs,
}

impl SchemeId {
    pub const ALL: [SchemeId; 5] = [
        SchemeId::Proposed,
        SchemeId::Instantaneous,
        SchemeId::Statistical,
        SchemeId::RandomPhase,
        SchemeId::NoIrs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Proposed => "proposed",
            SchemeId::Instantaneous => "instantaneous",
            SchemeId::Statistical => "statistical",
            SchemeId::RandomPhase => "random_phase",
            SchemeId::NoIrs => "no_irs",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Monte-Carlo budget of one scheme evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunPlan {
    pub blocks: usize,
    /// Small-timescale realizations per block.
    pub realizations: usize,
    /// Fresh samples per `δ` candidate during calibration.
    pub calibration_samples: usize,
}

impl RunPlan {
    /// `blocks` long blocks of `block_ratio` realizations each.
    pub fn from_config<T>(c: &SystemConfig<T>, blocks: usize, calibration_samples: usize) -> Self {
        Self {
            blocks,
            realizations: c.block_ratio,
            calibration_samples,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibration<T> {
    pub delta: T,
    /// Outage on the calibration samples at the returned `δ`.
    pub outage: T,
    /// Outage exceeds `ε` already at `δ = 0`.
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockOutcome<T> {
    pub mean_rate: T,
    pub outages: usize,
    pub realizations: usize,
    pub delta: T,
    pub delta_violated: bool,
    pub cssca_iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeResult<T> {
    pub scheme: SchemeId,
    /// Average DR rate (bits/s/Hz) over every evaluated realization.
    pub avg_rate: T,
    /// Fraction of evaluated realizations in CU outage.
    pub outage: T,
    /// Mean calibrated `δ` over blocks (0 for schemes without calibration).
    pub delta: T,
    pub blocks: Vec<BlockOutcome<T>>,
}

impl<T: Real> SchemeResult<T> {
    fn assemble(scheme: SchemeId, blocks: Vec<BlockOutcome<T>>) -> Self {
        let nb = T::lit(blocks.len().max(1) as f64);
        let total: usize = blocks.iter().map(|b| b.realizations).sum();
        let outages: usize = blocks.iter().map(|b| b.outages).sum();
        let rate_sum: T = blocks.iter().map(|b| b.mean_rate * T::lit(b.realizations as f64)).sum();
        let n = T::lit(total.max(1) as f64);
        Self {
            scheme,
            avg_rate: rate_sum / n,
            outage: T::lit(outages as f64) / n,
            delta: blocks.iter().map(|b| b.delta).sum::<T>() / nb,
            blocks,
        }
    }

    pub fn realizations(&self) -> usize {
        self.blocks.iter().map(|b| b.realizations).sum()
    }

    /// Standard error of `avg_rate`, treating blocks as the independent unit.
    pub fn rate_std_error(&self) -> T {
        block_std_error(self.blocks.iter().map(|b| b.mean_rate))
    }

    /// Binomial standard error of `outage`.
    pub fn outage_std_error(&self) -> T {
        let p = self.outage;
        (p * (T::one() - p) / T::lit(self.realizations().max(1) as f64)).sqrt()
    }

    pub fn delta_violations(&self) -> usize {
        self.blocks.iter().filter(|b| b.delta_violated).count()
    }
}

fn block_std_error<T: Real>(xs: impl Iterator<Item = T> + Clone) -> T {
    let n = xs.clone().count();
    if n < 2 {
        return T::zero();
    }
    let nf = T::lit(n as f64);
    let mean = xs.clone().sum::<T>() / nf;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<T>() / (nf - T::one());
    (var / nf).sqrt()
}

/// Standard error of the mean blockwise difference `a − b`; both results
/// must come from the same seed so that blocks pair up.
pub fn paired_std_error<T: Real>(a: &SchemeResult<T>, b: &SchemeResult<T>) -> T {
    block_std_error(a.blocks.iter().zip(&b.blocks).map(|(x, y)| x.mean_rate - y.mean_rate))
}

fn count_outages<T: Real>(
    solver: &SmallTimescaleSolver<T>,
    effs: &[EffectiveChannels<T>],
    scoring: Scoring<T>,
    max_outages: usize,
) -> usize {
    let mut outages = 0;
    for eff in effs {
        let s = solver.solve(eff);
        let b = LinkBudget::evaluate(eff, &s.w, s.p, scoring.noise_cu, scoring.noise_dr);
        if is_outage(b.sinr_cu, scoring.sinr_target, !s.is_feasible()) {
            outages += 1;
            if outages > max_outages {
                break;
            }
        }
    }
    outages
}

/// Largest `δ ∈ [0, Γu)` whose empirical outage over `effs` is at most
/// `epsilon`, by bisection to resolution `Γu / 2¹²`. Every candidate is
/// scored on the same samples.
pub fn calibrate_delta_on<T: Real>(
    base: &SmallTimescaleSolver<T>,
    effs: &[EffectiveChannels<T>],
    epsilon: T,
) -> Result<Calibration<T>> {
    let scoring = base.radio.scoring();
    let target = scoring.sinr_target;
    let s = effs.len().max(1);
    let allowed = (epsilon * T::lit(s as f64)).floor().to_usize().unwrap_or(usize::MAX).min(s);
    let frac = |k: usize| T::lit(k as f64) / T::lit(s as f64);
    let at = |delta: T| -> Result<usize> { Ok(count_outages(&base.with_delta(delta)?, effs, scoring, allowed)) };

    let step = target / T::lit(4096.0);
    let zero = at(T::zero())?;
    if zero > allowed {
        return Ok(Calibration {
            delta: T::zero(),
            outage: frac(zero),
            violated: true,
        });
    }
    let top = target - step;
    let top_count = at(top)?;
    if top_count <= allowed {
        return Ok(Calibration {
            delta: top,
            outage: frac(top_count),
            violated: false,
        });
    }
    let (mut lo, mut lo_count, mut hi) = (T::zero(), zero, top);
    while hi - lo > step {
        let mid = (lo + hi) / T::lit(2.0);
        let k = at(mid)?;
        if k <= allowed {
            lo = mid;
            lo_count = k;
        } else {
            hi = mid;
        }
    }
    Ok(Calibration {
        delta: lo,
        outage: frac(lo_count),
        violated: false,
    })
}

/// Draws `samples` realizations from `rng`'s stream and calibrates on them.
pub fn calibrate_delta<T: Real, R: rand::Rng + ?Sized>(
    reflection: Reflection<'_, T>,
    base: &SmallTimescaleSolver<T>,
    stats: &ChannelStatistics<T>,
    epsilon: T,
    samples: usize,
    rng: &mut R,
) -> Result<Calibration<T>> {
    let effs = (0..samples)
        .map(|_| reflection.compose(&stats.sample(rng)))
        .collect::<Result<Vec<_>>>()?;
    calibrate_delta_on(base, &effs, epsilon)
}

/// Shared inputs of every scheme.
#[derive(Clone, Debug)]
pub struct SchemeContext<T> {
    pub config: SystemConfig<T>,
    pub stats: ChannelStatistics<T>,
    pub plan: RunPlan,
    pub seed: u64,
    solver: SmallTimescaleSolver<T>,
    smoothing: OutageSmoothing<T>,
    cssca: CsscaParams<T>,
}

impl<T: Real> SchemeContext<T> {
    pub fn new(config: SystemConfig<T>, plan: RunPlan, seed: u64) -> Result<Self> {
        let stats = ChannelStatistics::from_config(&config)?;
        let solver = SmallTimescaleSolver::from_config(&config, T::zero())?;
        Ok(Self {
            smoothing: OutageSmoothing::from_config(&config),
            cssca: CsscaParams::from_config(&config),
            stats,
            plan,
            seed,
            solver,
            config,
        })
    }

    fn initial_phases(&self, block: usize) -> PhaseShifts<T> {
        PhaseShifts::random(self.config.elements, &mut substream(self.seed, &[purpose::PHASE_INIT, block as u64]))
    }

    fn calibrate(&self, reflection: Reflection<'_, T>, block: usize) -> Result<Calibration<T>> {
        let mut rng = substream(self.seed, &[purpose::CALIBRATION, block as u64]);
        calibrate_delta(
            reflection,
            &self.solver,
            &self.stats,
            self.config.outage_tolerance,
            self.plan.calibration_samples,
            &mut rng,
        )
    }

    fn evaluation_effs(&self, reflection: Reflection<'_, T>, block: usize) -> Result<Vec<EffectiveChannels<T>>> {
        let mut rng = substream(self.seed, &[purpose::EVALUATION, block as u64]);
        (0..self.plan.realizations)
            .map(|_| reflection.compose(&self.stats.sample(&mut rng)))
            .collect()
    }

    /// Calibrates `δ` for fixed reflection, then solves every evaluation
    /// realization with it.
    fn calibrated_block(&self, reflection: Reflection<'_, T>, block: usize, iters: usize) -> Result<BlockOutcome<T>> {
        let cal = self.calibrate(reflection, block)?;
        let solver = self.solver.with_delta(cal.delta)?;
        let scoring = solver.radio.scoring();
        let mut rate = T::zero();
        let mut outages = 0;
        let effs = self.evaluation_effs(reflection, block)?;
        for eff in &effs {
            let s = solver.solve(eff);
            let b = LinkBudget::evaluate(eff, &s.w, s.p, scoring.noise_cu, scoring.noise_dr);
            rate += b.rate_dr;
            outages += is_outage(b.sinr_cu, scoring.sinr_target, !s.is_feasible()) as usize;
        }
        Ok(BlockOutcome {
            mean_rate: rate / T::lit(effs.len().max(1) as f64),
            outages,
            realizations: effs.len(),
            delta: cal.delta,
            delta_violated: cal.violated,
            cssca_iterations: iters,
        })
    }

    fn proposed_block(&self, block: usize) -> Result<BlockOutcome<T>> {
        let mut rng = substream(self.seed, &[purpose::CSSCA_SAMPLES, block as u64]);
        let out = cssca_run(
            || self.stats.sample(&mut rng),
            self.initial_phases(block),
            &self.solver,
            &self.smoothing,
            &self.cssca,
        );
        self.calibrated_block(Reflection::Irs(&out.phases), block, out.iterations)
    }

    fn random_phase_block(&self, block: usize) -> Result<BlockOutcome<T>> {
        let phases = self.initial_phases(block);
        self.calibrated_block(Reflection::Irs(&phases), block, 0)
    }

    fn no_irs_block(&self, block: usize) -> Result<BlockOutcome<T>> {
        self.calibrated_block(Reflection::Absent, block, 0)
    }

    /// Joint design on the LoS-mean channels.
    fn mean_channel_design(&self, block: usize) -> crate::large_timescale::DeterministicOutcome<T> {
        let s = &self.config.solver;
        deterministic_sca(
            &self.stats.mean,
            self.initial_phases(block),
            &self.solver,
            &self.smoothing,
            &self.cssca,
            s.deterministic_max_iters,
            s.deterministic_rate_tol,
        )
    }

    fn statistical_block(&self, block: usize) -> Result<BlockOutcome<T>> {
        let design = self.mean_channel_design(block);
        let scoring = self.solver.radio.scoring();
        let effs = self.evaluation_effs(Reflection::Irs(&design.phases), block)?;
        let mut rate = T::zero();
        let mut outages = 0;
        for eff in &effs {
            let b = LinkBudget::evaluate(eff, &design.solution.w, design.solution.p, scoring.noise_cu, scoring.noise_dr);
            rate += b.rate_dr;
            outages += is_outage(b.sinr_cu, scoring.sinr_target, false) as usize;
        }
        Ok(BlockOutcome {
            mean_rate: rate / T::lit(effs.len().max(1) as f64),
            outages,
            realizations: effs.len(),
            delta: T::zero(),
            delta_violated: false,
            cssca_iterations: design.iterations,
        })
    }

    fn instantaneous_block(&self, block: usize) -> Result<BlockOutcome<T>> {
        let start = self.mean_channel_design(block).phases;
        let s = &self.config.solver;
        let scoring = self.solver.radio.scoring();
        let mut rng = substream(self.seed, &[purpose::EVALUATION, block as u64]);
        let mut rate = T::zero();
        let mut outages = 0;
        let mut iters = 0;
        for _ in 0..self.plan.realizations {
            let real = self.stats.sample(&mut rng);
            let d = deterministic_sca(
                &real,
                start.clone(),
                &self.solver,
                &self.smoothing,
                &self.cssca,
                s.deterministic_max_iters,
                s.deterministic_rate_tol,
            );
            iters += d.iterations;
            let eff = Reflection::Irs(&d.phases).compose(&real)?;
            let b = LinkBudget::evaluate(&eff, &d.solution.w, d.solution.p, scoring.noise_cu, scoring.noise_dr);
            rate += b.rate_dr;
            outages += is_outage(b.sinr_cu, scoring.sinr_target, !d.solution.is_feasible()) as usize;
        }
        let n = self.plan.realizations;
        Ok(BlockOutcome {
            mean_rate: rate / T::lit(n.max(1) as f64),
            outages,
            realizations: n,
            delta: T::zero(),
            delta_violated: false,
            cssca_iterations: iters,
        })
    }

    pub fn run_block(&self, scheme: SchemeId, block: usize) -> Result<BlockOutcome<T>> {
        match scheme {
            SchemeId::Proposed => self.proposed_block(block),
            SchemeId::Instantaneous => self.instantaneous_block(block),
            SchemeId::Statistical => self.statistical_block(block),
            SchemeId::RandomPhase => self.random_phase_block(block),
            SchemeId::NoIrs => self.no_irs_block(block),
        }
    }

    /// Runs every block (concurrently on the current rayon pool) and
    /// aggregates in block order.
    pub fn run(&self, scheme: SchemeId) -> Result<SchemeResult<T>> {
        let blocks = (0..self.plan.blocks)
            .into_par_iter()
            .map(|b| self.run_block(scheme, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(SchemeResult::assemble(scheme, blocks))
    }
}

pub fn run_scheme<T: Real>(scheme: SchemeId, config: &SystemConfig<T>, plan: RunPlan, seed: u64) -> Result<SchemeResult<T>> {
    SchemeContext::new(config.clone(), plan, seed)?.run(scheme)
}

pub fn run_proposed<T: Real>(config: &SystemConfig<T>, plan: RunPlan, seed: u64) -> Result<SchemeResult<T>> {
    run_scheme(SchemeId::Proposed, config, plan, seed)
}

pub fn run_instantaneous<T: Real>(config: &SystemConfig<T>, plan: RunPlan, seed: u64) -> Result<SchemeResult<T>> {
    run_scheme(SchemeId::Instantaneous, config, plan, seed)
}

pub fn run_statistical<T: Real>(config: &SystemConfig<T>, plan: RunPlan, seed: u64) -> Result<SchemeResult<T>> {
    run_scheme(SchemeId::Statistical, config, plan, seed)
}

pub fn run_random_phase<T: Real>(config: &SystemConfig<T>, plan: RunPlan, seed: u64) -> Result<SchemeResult<T>> {
    run_scheme(SchemeId::RandomPhase, config, plan, seed)
}

pub fn run_no_irs<T: Real>(config: &SystemConfig<T>, plan: RunPlan, seed: u64) -> Result<SchemeResult<T>> {
    run_scheme(SchemeId::NoIrs, config, plan, seed)
}

//! SINR, rate and outage functionals.

use rand::Rng;

use crate::channel::{ChannelStatistics, EffectiveChannels, Reflection};
use crate::linalg::{dot, Cx};
use crate::real::Real;

/// Absolute slack (linear SINR) below which a solution still counts as
/// meeting its SINR floor. Shared by the feasibility check and the outage
/// count so that boundary solutions are treated consistently.
pub const SINR_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkBudget<T> {
    pub sinr_cu: T,
    pub sinr_dr: T,
    pub rate_dr: T,
}

impl<T: Real> LinkBudget<T> {
    pub fn evaluate(eff: &EffectiveChannels<T>, w: &[Cx<T>], p: T, noise_cu: T, noise_dr: T) -> Self {
        let sinr_dr = sinr_dr(eff, w, p, noise_dr);
        Self {
            sinr_cu: sinr_cu(eff, w, p, noise_cu),
            sinr_dr,
            rate_dr: rate(sinr_dr),
        }
    }
}

/// `log2(1 + γ)`
pub fn rate<T: Real>(sinr: T) -> T {
    sinr.ln_1p() / T::LN_2()
}

/// `|h1 w|² / (p |h2|² + σu²)`
pub fn sinr_cu<T: Real>(eff: &EffectiveChannels<T>, w: &[Cx<T>], p: T, noise_cu: T) -> T {
    dot(&eff.h1, w).norm_sqr() / (p * eff.h2.norm_sqr() + noise_cu)
}

/// `p |h3|² / (|h4 w|² + σr²)`
pub fn sinr_dr<T: Real>(eff: &EffectiveChannels<T>, w: &[Cx<T>], p: T, noise_dr: T) -> T {
    p * eff.h3.norm_sqr() / (dot(&eff.h4, w).norm_sqr() + noise_dr)
}

/// CU margin `Γu (p |h2|² + σu²) − |h1 w|²`; non-positive iff `γu ≥ Γu`.
pub fn q_value<T: Real>(eff: &EffectiveChannels<T>, w: &[Cx<T>], p: T, target: T, noise_cu: T) -> T {
    target * (p * eff.h2.norm_sqr() + noise_cu) - dot(&eff.h1, w).norm_sqr()
}

/// Logistic step `1 / (1 + e^{−βx})`, evaluated without overflow.
pub fn smooth_step<T: Real>(x: T, beta: T) -> T {
    let z = beta * x;
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Derivative of [`smooth_step`] in `x`: `β e^{−βx} / (1 + e^{−βx})²`.
pub fn smooth_step_derivative<T: Real>(x: T, beta: T) -> T {
    let e = (-(beta * x).abs()).exp();
    beta * e / ((T::one() + e) * (T::one() + e))
}

/// Small-timescale decision for one effective channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision<T> {
    pub w: Vec<Cx<T>>,
    pub p: T,
    /// The policy could not protect the CU on this realization.
    pub infeasible: bool,
}

/// Anything that maps an effective channel to `(w, p)`.
pub trait Policy<T> {
    fn decide(&self, eff: &EffectiveChannels<T>) -> Decision<T>;
}

impl<T, F> Policy<T> for F
where
    F: Fn(&EffectiveChannels<T>) -> Decision<T>,
{
    fn decide(&self, eff: &EffectiveChannels<T>) -> Decision<T> {
        self(eff)
    }
}

/// Whether a realized CU SINR is an outage against target `Γu`.
pub fn is_outage<T: Real>(sinr_cu: T, target: T, infeasible: bool) -> bool {
    infeasible || sinr_cu < target - T::lit(SINR_TOLERANCE)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutageEstimate<T> {
    pub outage: T,
    pub mean_rate: T,
    pub samples: usize,
    pub outages: usize,
}

impl<T: Real> OutageEstimate<T> {
    /// Binomial standard error of the outage fraction.
    pub fn std_error(&self) -> T {
        let p = self.outage;
        (p * (T::one() - p) / T::lit(self.samples.max(1) as f64)).sqrt()
    }
}

/// Radio parameters needed to score a decision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scoring<T> {
    pub sinr_target: T,
    pub noise_cu: T,
    pub noise_dr: T,
}

/// Monte-Carlo estimate of `P[γu < Γu]` together with the mean DR
/// rate, over `samples` draws from `stats`. Realizations the policy flags as
/// infeasible count as outages.
pub fn estimate_outage<T: Real, P: Policy<T> + ?Sized, R: Rng + ?Sized>(
    reflection: Reflection<'_, T>,
    policy: &P,
    stats: &ChannelStatistics<T>,
    scoring: Scoring<T>,
    samples: usize,
    rng: &mut R,
) -> OutageEstimate<T> {
    estimate_outage_bounded(reflection, policy, stats, scoring, samples, usize::MAX, rng)
}

/// As [`estimate_outage`], stopping early once more than `max_outages`
/// outages have been observed. The returned fraction is then relative to the
/// samples actually drawn.
pub fn estimate_outage_bounded<T: Real, P: Policy<T> + ?Sized, R: Rng + ?Sized>(
    reflection: Reflection<'_, T>,
    policy: &P,
    stats: &ChannelStatistics<T>,
    scoring: Scoring<T>,
    samples: usize,
    max_outages: usize,
    rng: &mut R,
) -> OutageEstimate<T> {
    assert!(samples >= 1, "outage estimate needs at least one sample");
    let mut outages = 0usize;
    let mut rate_sum = T::zero();
    let mut drawn = 0usize;
    for _ in 0..samples {
        let real = stats.sample(rng);
        drawn += 1;
        let eff = reflection.compose(&real).expect("statistics and phases agree in size");
        let d = policy.decide(&eff);
        let b = LinkBudget::evaluate(&eff, &d.w, d.p, scoring.noise_cu, scoring.noise_dr);
        if is_outage(b.sinr_cu, scoring.sinr_target, d.infeasible) {
            outages += 1;
        }
        rate_sum += b.rate_dr;
        if outages > max_outages {
            break;
        }
    }
    let n = T::lit(drawn as f64);
    OutageEstimate {
        outage: T::lit(outages as f64) / n,
        mean_rate: rate_sum / n,
        samples: drawn,
        outages,
    }
}

//! Scenario and solver constants. All powers are linear milliwatts, all gains
//! and SINRs linear; decibel inputs are converted by the caller once.

use crate::error::{Error, Result};
use crate::real::{db_to_linear, Real};

/// The eight propagation links of the system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Link {
    /// BS to IRS
    Bi,
    /// BS to CU
    Bu,
    /// BS to DR
    Br,
    /// IRS to CU
    Iu,
    /// DT to IRS
    Ti,
    /// IRS to DR
    Ir,
    /// DT to CU
    Tu,
    /// DT to DR
    Tr,
}

impl Link {
    pub const ALL: [Link; 8] = [
        Link::Bi,
        Link::Bu,
        Link::Br,
        Link::Iu,
        Link::Ti,
        Link::Ir,
        Link::Tu,
        Link::Tr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Link::Bi => "bi",
            Link::Bu => "bu",
            Link::Br => "br",
            Link::Iu => "iu",
            Link::Ti => "ti",
            Link::Ir => "ir",
            Link::Tu => "tu",
            Link::Tr => "tr",
        }
    }

    pub fn from_name(name: &str) -> Option<Link> {
        Link::ALL.into_iter().find(|l| l.name() == name)
    }
}

/// One value per link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerLink<T> {
    pub bi: T,
    pub bu: T,
    pub br: T,
    pub iu: T,
    pub ti: T,
    pub ir: T,
    pub tu: T,
    pub tr: T,
}

impl<T: Copy> PerLink<T> {
    pub fn uniform(v: T) -> Self {
        Self {
            bi: v,
            bu: v,
            br: v,
            iu: v,
            ti: v,
            ir: v,
            tu: v,
            tr: v,
        }
    }

    pub fn get(&self, link: Link) -> T {
        match link {
            Link::Bi => self.bi,
            Link::Bu => self.bu,
            Link::Br => self.br,
            Link::Iu => self.iu,
            Link::Ti => self.ti,
            Link::Ir => self.ir,
            Link::Tu => self.tu,
            Link::Tr => self.tr,
        }
    }

    pub fn set(&mut self, link: Link, v: T) {
        *match link {
            Link::Bi => &mut self.bi,
            Link::Bu => &mut self.bu,
            Link::Br => &mut self.br,
            Link::Iu => &mut self.iu,
            Link::Ti => &mut self.ti,
            Link::Ir => &mut self.ir,
            Link::Tu => &mut self.tu,
            Link::Tr => &mut self.tr,
        } = v;
    }

    pub fn map<U>(&self, mut f: impl FnMut(T) -> U) -> PerLink<U> {
        PerLink {
            bi: f(self.bi),
            bu: f(self.bu),
            br: f(self.br),
            iu: f(self.iu),
            ti: f(self.ti),
            ir: f(self.ir),
            tu: f(self.tu),
            tr: f(self.tr),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodePositions<T> {
    pub bs: [T; 3],
    pub irs: [T; 3],
    pub cu: [T; 3],
    pub dt: [T; 3],
    pub dr: [T; 3],
}

impl<T: Real> NodePositions<T> {
    /// Endpoints `(from, to)` of a link.
    pub fn endpoints(&self, link: Link) -> ([T; 3], [T; 3]) {
        match link {
            Link::Bi => (self.bs, self.irs),
            Link::Bu => (self.bs, self.cu),
            Link::Br => (self.bs, self.dr),
            Link::Iu => (self.irs, self.cu),
            Link::Ti => (self.dt, self.irs),
            Link::Ir => (self.irs, self.dr),
            Link::Tu => (self.dt, self.cu),
            Link::Tr => (self.dt, self.dr),
        }
    }

    pub fn distance(&self, link: Link) -> T {
        let (a, b) = self.endpoints(link);
        distance(a, b)
    }
}

pub fn distance<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a.iter()
        .zip(&b)
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .sum::<T>()
        .sqrt()
}

/// Iteration caps, tolerances and schedules for both timescales.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverSettings<T> {
    pub admm_penalty: T,
    pub admm_max_iters: usize,
    pub admm_tol: T,
    pub ccp_max_iters: usize,
    pub ccp_tol: T,
    pub outer_max_iters: usize,
    pub rate_tol: T,
    pub cssca_max_iters: usize,
    /// Stop the phase recursion once `‖φᵗ − φᵗ⁻¹‖` falls below this.
    pub cssca_tol: T,
    pub dual_tol: T,
    /// `ρᵗ = t^(−rho_exponent)`
    pub rho_exponent: T,
    /// `γᵗ = t^(−gamma_exponent)`
    pub gamma_exponent: T,
    /// `None` keeps every past sample in the sample-average constants;
    /// `Some(w)` keeps the last `w`.
    pub sample_window: Option<usize>,
    /// The CU margin `Q` is divided by `outage_scale · σu²` before
    /// smoothing, so `β` acts on a dimensionless margin.
    pub outage_scale: T,
    pub deterministic_max_iters: usize,
    pub deterministic_rate_tol: T,
    /// Golden-section steps spent refining the D2D power along the
    /// interference envelope after the alternating updates settle; 0 keeps
    /// the plain alternation.
    pub power_search_iters: usize,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        Self {
            admm_penalty: T::one(),
            admm_max_iters: 500,
            admm_tol: T::lit(1e-6),
            ccp_max_iters: 50,
            ccp_tol: T::lit(1e-6),
            outer_max_iters: 30,
            rate_tol: T::lit(1e-7),
            cssca_max_iters: 500,
            cssca_tol: T::lit(1e-6),
            dual_tol: T::lit(1e-8),
            rho_exponent: T::lit(0.8),
            gamma_exponent: T::one(),
            sample_window: None,
            outage_scale: T::lit(1e4),
            deterministic_max_iters: 50,
            deterministic_rate_tol: T::lit(1e-6),
            power_search_iters: 24,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig<T> {
    /// BS antenna count `M`.
    pub antennas: usize,
    /// IRS element count `N`; zero means no IRS.
    pub elements: usize,
    pub positions: NodePositions<T>,
    /// Reference path gain `L0` (linear).
    pub ref_gain: T,
    /// Reference distance `d0` (m).
    pub ref_distance: T,
    /// Carrier wavelength used for the phase of scalar LoS links (m).
    pub carrier_wavelength: T,
    pub path_loss_exponent: PerLink<T>,
    /// Rician factors (linear). `0` is Rayleigh, `+inf` is pure LoS.
    pub rician: PerLink<T>,
    /// BS power budget `p0` (mW).
    pub bs_power: T,
    /// DT maximum power `p1` (mW).
    pub dt_max_power: T,
    pub noise_cu: T,
    pub noise_dr: T,
    /// CU SINR target `Γu` (linear).
    pub sinr_target: T,
    /// Outage tolerance `ε`.
    pub outage_tolerance: T,
    /// Smoothing parameter `β` of the outage step.
    pub smoothing: T,
    pub tau0: T,
    pub tau1: T,
    /// `Ts / Tc`
    pub block_ratio: usize,
    pub solver: SolverSettings<T>,
}

impl<T: Real> SystemConfig<T> {
    /// The evaluation scenario of the reference setup with `κ = 8 dB` on
    /// the user-side links.
    pub fn reference() -> Self {
        let l = T::lit;
        let kappa = db_to_linear(l(8.0));
        Self {
            antennas: 8,
            elements: 60,
            positions: NodePositions {
                bs: [l(12.0), l(0.0), l(3.0)],
                irs: [l(0.0), l(50.0), l(3.0)],
                cu: [l(12.0), l(50.0), l(0.0)],
                dt: [l(2.0), l(60.0), l(0.0)],
                dr: [l(2.0), l(40.0), l(0.0)],
            },
            ref_gain: db_to_linear(l(-30.0)),
            ref_distance: l(1.0),
            carrier_wavelength: l(0.1),
            path_loss_exponent: PerLink {
                bi: l(2.2),
                bu: l(3.6),
                br: l(3.6),
                iu: l(2.8),
                ti: l(2.8),
                ir: l(2.8),
                tu: l(2.8),
                tr: l(2.8),
            },
            rician: PerLink {
                bi: db_to_linear(l(20.0)),
                bu: T::zero(),
                br: T::zero(),
                iu: kappa,
                ti: kappa,
                ir: kappa,
                tu: kappa,
                tr: kappa,
            },
            bs_power: db_to_linear(l(10.0)),
            dt_max_power: db_to_linear(l(1.0)),
            noise_cu: db_to_linear(l(-80.0)),
            noise_dr: db_to_linear(l(-80.0)),
            sinr_target: db_to_linear(l(12.0)),
            outage_tolerance: l(0.05),
            smoothing: l(1e3),
            tau0: l(0.005),
            tau1: l(0.005),
            block_ratio: 200,
            solver: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: T| -> Result<()> {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive and finite, got {v}")))
            }
        };
        if self.antennas == 0 {
            return Err(Error::config("antennas", "must be at least 1"));
        }
        positive("ref_gain", self.ref_gain)?;
        positive("ref_distance", self.ref_distance)?;
        positive("carrier_wavelength", self.carrier_wavelength)?;
        positive("bs_power", self.bs_power)?;
        positive("dt_max_power", self.dt_max_power)?;
        positive("noise_cu", self.noise_cu)?;
        positive("noise_dr", self.noise_dr)?;
        positive("sinr_target", self.sinr_target)?;
        positive("smoothing", self.smoothing)?;
        positive("tau0", self.tau0)?;
        positive("tau1", self.tau1)?;
        if !(self.outage_tolerance > T::zero() && self.outage_tolerance <= T::one()) {
            return Err(Error::config(
                "outage_tolerance",
                format!("must lie in (0, 1], got {}", self.outage_tolerance),
            ));
        }
        if self.block_ratio == 0 {
            return Err(Error::config("block_ratio", "must be at least 1"));
        }
        for link in Link::ALL {
            let k = self.rician.get(link);
            if k.is_nan() || k < T::zero() {
                return Err(Error::config(
                    &format!("rician.{}", link.name()),
                    format!("must be non-negative, got {k}"),
                ));
            }
            let a = self.path_loss_exponent.get(link);
            if !a.is_finite() {
                return Err(Error::config(
                    &format!("path_loss_exponent.{}", link.name()),
                    "must be finite",
                ));
            }
            if !(self.positions.distance(link) > T::zero()) {
                return Err(Error::config(
                    &format!("positions.{}", link.name()),
                    "link endpoints coincide",
                ));
            }
        }
        let s = &self.solver;
        positive("solver.admm_penalty", s.admm_penalty)?;
        positive("solver.admm_tol", s.admm_tol)?;
        positive("solver.ccp_tol", s.ccp_tol)?;
        positive("solver.rate_tol", s.rate_tol)?;
        positive("solver.cssca_tol", s.cssca_tol)?;
        positive("solver.dual_tol", s.dual_tol)?;
        positive("solver.outage_scale", s.outage_scale)?;
        positive("solver.deterministic_rate_tol", s.deterministic_rate_tol)?;
        if !(s.rho_exponent > T::zero() && s.rho_exponent <= T::one()) {
            return Err(Error::config("solver.rho_exponent", "must lie in (0, 1]"));
        }
        if !(s.gamma_exponent > T::zero() && s.gamma_exponent <= T::one()) {
            return Err(Error::config("solver.gamma_exponent", "must lie in (0, 1]"));
        }
        if s.sample_window == Some(0) {
            return Err(Error::config("solver.sample_window", "must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_scenario_is_valid() {
        let c = SystemConfig::<f64>::reference();
        c.validate().unwrap();
        assert_eq!((c.antennas, c.elements, c.block_ratio), (8, 60, 200));
        assert!((c.sinr_target - 10f64.powf(1.2)).abs() < 1e-12);
        assert!((c.noise_cu - 1e-8).abs() < 1e-20);
        assert_eq!(c.rician.bu, 0.0);
    }

    #[test]
    fn rejects_out_of_range_outage_tolerance() {
        let mut c = SystemConfig::<f64>::reference();
        c.outage_tolerance = 1.5;
        let err = c.validate().unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref key, .. } if key == "outage_tolerance"));
    }

    #[test]
    fn link_names_round_trip() {
        for l in Link::ALL {
            assert_eq!(Link::from_name(l.name()), Some(l));
        }
    }
}

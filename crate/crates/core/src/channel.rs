//! Rician channel synthesis and effective-channel composition.

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{Link, PerLink, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{dot, hadamard, CMatrix, Cx};
use crate::real::Real;

/// `L0 (d / d0)^(−α)`
pub fn path_gain<T: Real>(distance: T, exponent: T, ref_gain: T, ref_distance: T) -> Result<T> {
    if !(distance > T::zero()) || !(ref_distance > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "path gain needs positive distances, got d = {distance}, d0 = {ref_distance}"
        )));
    }
    Ok(ref_gain * (distance / ref_distance).powf(-exponent))
}

/// Half-wavelength ULA response `[e^{−jπ k cos ψ}]_{k<n}` for a direction with
/// cosine `cos_angle` to the array axis.
pub fn ula_response<T: Real>(n: usize, cos_angle: T) -> Vec<Cx<T>> {
    (0..n)
        .map(|k| Complex::from_polar(T::one(), -T::PI() * T::lit(k as f64) * cos_angle))
        .collect()
}

const BS_AXIS: [f64; 3] = [1.0, 0.0, 0.0];
const IRS_AXIS: [f64; 3] = [0.0, 1.0, 0.0];

fn direction_cosine<T: Real>(from: [T; 3], to: [T; 3], axis: [f64; 3]) -> T {
    let d: Vec<T> = (0..3).map(|i| to[i] - from[i]).collect();
    let len = d.iter().map(|x| *x * *x).sum::<T>().sqrt();
    (0..3).map(|i| d[i] * T::lit(axis[i])).sum::<T>() / len
}

/// One draw of all eight links.
///
/// Shapes: `g_bi` is `N×M`; `h_iu`, `h_ir` are `1×N` rows; `h_ti` is an
/// `N×1` column; `h_bu`, `h_br` are `1×M` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization<T> {
    pub g_bi: CMatrix<T>,
    pub h_iu: Vec<Cx<T>>,
    pub h_bu: Vec<Cx<T>>,
    pub h_ti: Vec<Cx<T>>,
    pub h_ir: Vec<Cx<T>>,
    pub h_tr: Cx<T>,
    pub h_br: Vec<Cx<T>>,
    pub h_tu: Cx<T>,
}

impl<T: Real> ChannelRealization<T> {
    pub fn antennas(&self) -> usize {
        self.g_bi.cols().max(self.h_bu.len())
    }

    pub fn elements(&self) -> usize {
        self.h_iu.len()
    }

    fn check_shapes(&self) -> Result<()> {
        let m = self.h_bu.len();
        let n = self.h_iu.len();
        let ok = self.h_br.len() == m
            && self.h_ti.len() == n
            && self.h_ir.len() == n
            && self.g_bi.rows() == n
            && (n == 0 || self.g_bi.cols() == m);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "inconsistent channel shapes: M = {m}, N = {n}, G_bi = {}x{}",
                self.g_bi.rows(),
                self.g_bi.cols()
            )))
        }
    }

    /// The realization with every IRS link removed.
    pub fn without_irs(&self) -> Self {
        Self {
            g_bi: CMatrix::zeros(0, self.h_bu.len()),
            h_iu: Vec::new(),
            h_bu: self.h_bu.clone(),
            h_ti: Vec::new(),
            h_ir: Vec::new(),
            h_tr: self.h_tr,
            h_br: self.h_br.clone(),
            h_tu: self.h_tu,
        }
    }
}

/// LoS means and NLoS scales of every link.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStatistics<T> {
    /// Deterministic component, already scaled by `√(L κ/(κ+1))`.
    pub mean: ChannelRealization<T>,
    /// `√(L/(κ+1))` per link.
    pub nlos_scale: PerLink<T>,
    pub path_gain: PerLink<T>,
}

fn rician_weights<T: Real>(kappa: T) -> (T, T) {
    if kappa.is_infinite() {
        (T::one(), T::zero())
    } else {
        (kappa / (kappa + T::one()), T::one() / (kappa + T::one()))
    }
}

impl<T: Real> ChannelStatistics<T> {
    /// Builds LoS components from ULA responses whose angles follow the node
    /// geometry. The BS array lies along x, the IRS array along y.
    pub fn from_config(config: &SystemConfig<T>) -> Result<Self> {
        config.validate()?;
        let m = config.antennas;
        let n = config.elements;
        let pos = &config.positions;
        let mut gain = PerLink::uniform(T::zero());
        let mut los = PerLink::uniform(T::zero());
        let mut nlos = PerLink::uniform(T::zero());
        for link in Link::ALL {
            let g = path_gain(
                pos.distance(link),
                config.path_loss_exponent.get(link),
                config.ref_gain,
                config.ref_distance,
            )?;
            let (wl, wn) = rician_weights(config.rician.get(link));
            gain.set(link, g);
            los.set(link, (g * wl).sqrt());
            nlos.set(link, (g * wn).sqrt());
        }

        let bs_cos = |to: [T; 3]| direction_cosine(pos.bs, to, BS_AXIS);
        let irs_cos = |to: [T; 3]| direction_cosine(pos.irs, to, IRS_AXIS);
        let row = |v: Vec<Cx<T>>, s: T| -> Vec<Cx<T>> { v.into_iter().map(|x| x.conj().scale(s)).collect() };
        let col = |v: Vec<Cx<T>>, s: T| -> Vec<Cx<T>> { v.into_iter().map(|x| x.scale(s)).collect() };

        let a_irs_bs = ula_response(n, irs_cos(pos.bs));
        let a_bs_irs = ula_response(m, bs_cos(pos.irs));
        let g_bi = CMatrix::from_fn(n, m, |r, c| (a_irs_bs[r] * a_bs_irs[c].conj()).scale(los.bi));

        let scalar = |link: Link| -> Cx<T> {
            let d = pos.distance(link);
            Complex::from_polar(los.get(link), -T::TAU() * d / config.carrier_wavelength)
        };

        let mean = ChannelRealization {
            g_bi,
            h_iu: row(ula_response(n, irs_cos(pos.cu)), los.iu),
            h_bu: row(ula_response(m, bs_cos(pos.cu)), los.bu),
            h_ti: col(ula_response(n, irs_cos(pos.dt)), los.ti),
            h_ir: row(ula_response(n, irs_cos(pos.dr)), los.ir),
            h_tr: scalar(Link::Tr),
            h_br: row(ula_response(m, bs_cos(pos.dr)), los.br),
            h_tu: scalar(Link::Tu),
        };
        Ok(Self {
            mean,
            nlos_scale: nlos,
            path_gain: gain,
        })
    }

    pub fn antennas(&self) -> usize {
        self.mean.antennas()
    }

    pub fn elements(&self) -> usize {
        self.mean.elements()
    }

    /// Draws `mean + scale · CN(0, 1)` entrywise. The draw order is fixed
    /// (G_bi row-major, h_iu, h_bu, h_ti, h_ir, h_tr, h_br, h_tu) and
    /// does not depend on which scales are zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization<T> {
        let s = &self.nlos_scale;
        let mu = &self.mean;
        let g_data = draw_all(rng, mu.g_bi.as_slice(), s.bi);
        ChannelRealization {
            g_bi: CMatrix::from_rows(mu.g_bi.rows(), mu.g_bi.cols(), g_data),
            h_iu: draw_all(rng, &mu.h_iu, s.iu),
            h_bu: draw_all(rng, &mu.h_bu, s.bu),
            h_ti: draw_all(rng, &mu.h_ti, s.ti),
            h_ir: draw_all(rng, &mu.h_ir, s.ir),
            h_tr: draw(rng, mu.h_tr, s.tr),
            h_br: draw_all(rng, &mu.h_br, s.br),
            h_tu: draw(rng, mu.h_tu, s.tu),
        }
    }
}

fn draw<T: Real, R: Rng + ?Sized>(rng: &mut R, mean: Cx<T>, scale: T) -> Cx<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let k = std::f64::consts::FRAC_1_SQRT_2;
    mean + Complex::new(T::lit(re * k), T::lit(im * k)).scale(scale)
}

fn draw_all<T: Real, R: Rng + ?Sized>(rng: &mut R, mean: &[Cx<T>], scale: T) -> Vec<Cx<T>> {
    mean.iter().map(|&m| draw(rng, m, scale)).collect()
}

/// IRS phases `φ` (radians, unwrapped) with coefficients `θ_n = e^{jφ_n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseShifts<T> {
    phases: Vec<T>,
}

impl<T: Real> PhaseShifts<T> {
    pub fn new(phases: Vec<T>) -> Self {
        Self { phases }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![T::zero(); n])
    }

    /// Uniform in `[0, 2π)`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self::new(
            (0..n)
                .map(|_| T::lit(rng.random::<f64>() * std::f64::consts::TAU))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.phases
    }

    pub fn into_vec(self) -> Vec<T> {
        self.phases
    }

    /// Diagonal of `Θ`.
    pub fn coefficients(&self) -> Vec<Cx<T>> {
        self.phases.iter().map(|&p| Complex::from_polar(T::one(), p)).collect()
    }
}

/// `H_eff = {h1, h2, h3, h4}`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveChannels<T> {
    /// BS → CU, `1×M`.
    pub h1: Vec<Cx<T>>,
    /// DT → CU.
    pub h2: Cx<T>,
    /// DT → DR.
    pub h3: Cx<T>,
    /// BS → DR, `1×M`.
    pub h4: Vec<Cx<T>>,
}

impl<T: Real> EffectiveChannels<T> {
    pub fn antennas(&self) -> usize {
        self.h1.len()
    }

    /// Direct links only.
    pub fn direct(real: &ChannelRealization<T>) -> Self {
        Self {
            h1: real.h_bu.clone(),
            h2: real.h_tu,
            h3: real.h_tr,
            h4: real.h_br.clone(),
        }
    }
}

/// `h1 = h_iu Θ G_bi + h_bu`, `h2 = h_iu Θ h_ti + h_tu`,
/// `h3 = h_ir Θ h_ti + h_tr`, `h4 = h_ir Θ G_bi + h_br`.
pub fn compose_effective<T: Real>(
    real: &ChannelRealization<T>,
    phases: &PhaseShifts<T>,
) -> Result<EffectiveChannels<T>> {
    real.check_shapes()?;
    if phases.len() != real.elements() {
        return Err(Error::InvalidArgument(format!(
            "{} phases for {} IRS elements",
            phases.len(),
            real.elements()
        )));
    }
    if phases.is_empty() {
        return Ok(EffectiveChannels::direct(real));
    }
    let theta = phases.coefficients();
    let iu = hadamard(&real.h_iu, &theta);
    let ir = hadamard(&real.h_ir, &theta);
    let add = |a: Vec<Cx<T>>, b: &[Cx<T>]| -> Vec<Cx<T>> { a.into_iter().zip(b).map(|(x, y)| x + y).collect() };
    Ok(EffectiveChannels {
        h1: add(real.g_bi.vec_mul(&iu), &real.h_bu),
        h2: dot(&iu, &real.h_ti) + real.h_tu,
        h3: dot(&ir, &real.h_ti) + real.h_tr,
        h4: add(real.g_bi.vec_mul(&ir), &real.h_br),
    })
}

/// Whether the realization set uses an IRS or only direct links.
#[derive(Clone, Copy, Debug)]
pub enum Reflection<'a, T> {
    Irs(&'a PhaseShifts<T>),
    Absent,
}

impl<T: Real> Reflection<'_, T> {
    pub fn compose(&self, real: &ChannelRealization<T>) -> Result<EffectiveChannels<T>> {
        match self {
            Reflection::Irs(phases) => compose_effective(real, phases),
            Reflection::Absent => Ok(EffectiveChannels::direct(real)),
        }
    }
}

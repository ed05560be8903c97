//! Experiment configuration documents.
//!
//! The on-disk form is TOML with powers, gains and Rician factors in
//! decibels. [`ConfigDoc`] mirrors that document one-to-one; [`ExperimentSpec`]
//! is the resolved, linear-scale form the sweep runner consumes.

use serde::{Deserialize, Serialize};

use irs_d2d::config::{Link, NodePositions, PerLink, SolverSettings, SystemConfig};
use irs_d2d::real::db_to_linear;
use irs_d2d::schemes::{RunPlan, SchemeId};

use crate::error::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PositionsDoc {
    pub bs: [f64; 3],
    pub irs: [f64; 3],
    pub cu: [f64; 3],
    pub dt: [f64; 3],
    pub dr: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub bi: f64,
    pub bu: f64,
    pub br: f64,
    pub iu: f64,
    pub ti: f64,
    pub ir: f64,
    pub tu: f64,
    pub tr: f64,
}

impl LinkDoc {
    fn from_links(p: &PerLink<f64>, f: impl Fn(f64) -> f64) -> Self {
        Self {
            bi: f(p.bi),
            bu: f(p.bu),
            br: f(p.br),
            iu: f(p.iu),
            ti: f(p.ti),
            ir: f(p.ir),
            tu: f(p.tu),
            tr: f(p.tr),
        }
    }

    fn to_links(&self, f: impl Fn(f64) -> f64) -> PerLink<f64> {
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

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverDoc {
    pub admm_penalty: f64,
    pub admm_max_iters: usize,
    pub admm_tol: f64,
    pub ccp_max_iters: usize,
    pub ccp_tol: f64,
    pub outer_max_iters: usize,
    pub rate_tol: f64,
    pub power_search_iters: usize,
    pub cssca_max_iters: usize,
    pub cssca_tol: f64,
    pub dual_tol: f64,
    pub rho_exponent: f64,
    pub gamma_exponent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_window: Option<usize>,
    pub outage_scale: f64,
    pub deterministic_max_iters: usize,
    pub deterministic_rate_tol: f64,
}

impl Default for SolverDoc {
    fn default() -> Self {
        let s = SolverSettings::<f64>::default();
        Self {
            admm_penalty: s.admm_penalty,
            admm_max_iters: s.admm_max_iters,
            admm_tol: s.admm_tol,
            ccp_max_iters: s.ccp_max_iters,
            ccp_tol: s.ccp_tol,
            outer_max_iters: s.outer_max_iters,
            rate_tol: s.rate_tol,
            power_search_iters: s.power_search_iters,
            cssca_max_iters: s.cssca_max_iters,
            cssca_tol: s.cssca_tol,
            dual_tol: s.dual_tol,
            rho_exponent: s.rho_exponent,
            gamma_exponent: s.gamma_exponent,
            sample_window: s.sample_window,
            outage_scale: s.outage_scale,
            deterministic_max_iters: s.deterministic_max_iters,
            deterministic_rate_tol: s.deterministic_rate_tol,
        }
    }
}

impl SolverDoc {
    fn settings(&self) -> SolverSettings<f64> {
        SolverSettings {
            admm_penalty: self.admm_penalty,
            admm_max_iters: self.admm_max_iters,
            admm_tol: self.admm_tol,
            ccp_max_iters: self.ccp_max_iters,
            ccp_tol: self.ccp_tol,
            outer_max_iters: self.outer_max_iters,
            rate_tol: self.rate_tol,
            cssca_max_iters: self.cssca_max_iters,
            cssca_tol: self.cssca_tol,
            dual_tol: self.dual_tol,
            rho_exponent: self.rho_exponent,
            gamma_exponent: self.gamma_exponent,
            sample_window: self.sample_window,
            outage_scale: self.outage_scale,
            deterministic_max_iters: self.deterministic_max_iters,
            deterministic_rate_tol: self.deterministic_rate_tol,
            power_search_iters: self.power_search_iters,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    /// Rician factor in dB, applied to `kappa_links`.
    Kappa,
    /// DT power cap in dBm.
    P1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentDoc {
    pub sweep: SweepKind,
    pub values: Vec<f64>,
    pub kappa_links: Vec<String>,
    pub schemes: Vec<String>,
    pub blocks: usize,
    pub realizations: usize,
    pub calibration_samples: usize,
    pub output: String,
    /// Fill the `wall_time_s` column. Off by default so that results are
    /// byte-reproducible; timings always go to `timings.csv`.
    pub record_wall_time: bool,
}

impl Default for ExperimentDoc {
    fn default() -> Self {
        Self {
            sweep: SweepKind::Kappa,
            values: vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0],
            kappa_links: ["iu", "ti", "ir", "tu", "tr"].map(String::from).to_vec(),
            schemes: SchemeId::ALL.iter().map(|s| s.name().to_string()).collect(),
            blocks: 50,
            realizations: 50,
            calibration_samples: 200,
            output: "results".into(),
            record_wall_time: false,
        }
    }
}

/// The configuration document as written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigDoc {
    pub seed: u64,
    pub antennas: usize,
    pub elements: usize,
    pub ref_gain_db: f64,
    pub ref_distance_m: f64,
    pub wavelength_m: f64,
    pub bs_power_dbm: f64,
    pub dt_max_power_dbm: f64,
    pub noise_cu_dbm: f64,
    pub noise_dr_dbm: f64,
    pub sinr_target_db: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub tau0: f64,
    pub tau1: f64,
    pub block_ratio: usize,
    pub positions: PositionsDoc,
    pub path_loss_exponent: LinkDoc,
    pub rician_db: LinkDoc,
    pub solver: SolverDoc,
    pub experiment: ExperimentDoc,
}

fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn round_db(x: f64) -> f64 {
    if x.is_finite() {
        (x * 1e9).round() / 1e9
    } else {
        x
    }
}

impl Default for PositionsDoc {
    fn default() -> Self {
        let p = SystemConfig::<f64>::reference().positions;
        Self {
            bs: p.bs,
            irs: p.irs,
            cu: p.cu,
            dt: p.dt,
            dr: p.dr,
        }
    }
}

impl Default for LinkDoc {
    fn default() -> Self {
        Self::from_links(&SystemConfig::<f64>::reference().path_loss_exponent, |x| x)
    }
}

impl Default for ConfigDoc {
    fn default() -> Self {
        let r = SystemConfig::<f64>::reference();
        let db = |x: f64| round_db(linear_to_db(x));
        Self {
            seed: 1,
            antennas: r.antennas,
            elements: r.elements,
            ref_gain_db: db(r.ref_gain),
            ref_distance_m: r.ref_distance,
            wavelength_m: r.carrier_wavelength,
            bs_power_dbm: db(r.bs_power),
            dt_max_power_dbm: db(r.dt_max_power),
            noise_cu_dbm: db(r.noise_cu),
            noise_dr_dbm: db(r.noise_dr),
            sinr_target_db: db(r.sinr_target),
            epsilon: r.outage_tolerance,
            beta: r.smoothing,
            tau0: r.tau0,
            tau1: r.tau1,
            block_ratio: r.block_ratio,
            positions: PositionsDoc::default(),
            path_loss_exponent: LinkDoc::default(),
            rician_db: LinkDoc::from_links(&r.rician, db),
            solver: SolverDoc::default(),
            experiment: ExperimentDoc::default(),
        }
    }
}

/// Resolved experiment: linear-scale system, sweep and Monte-Carlo plan.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub base: SystemConfig<f64>,
    pub sweep: SweepKind,
    pub values: Vec<f64>,
    pub kappa_links: Vec<Link>,
    pub schemes: Vec<SchemeId>,
    pub plan: RunPlan,
    pub seed: u64,
    pub output: String,
    pub record_wall_time: bool,
    /// The document this spec was resolved from.
    pub doc: ConfigDoc,
}

impl ExperimentSpec {
    /// System configuration at one sweep value.
    pub fn config_at(&self, value: f64) -> SystemConfig<f64> {
        let mut c = self.base.clone();
        match self.sweep {
            SweepKind::Kappa => {
                for l in &self.kappa_links {
                    c.rician.set(*l, db_to_linear(value));
                }
            }
            SweepKind::P1 => c.dt_max_power = db_to_linear(value),
        }
        c
    }
}

/// 1-based line of `key` (dotted for tables) in `text`, if written there.
pub fn line_of(text: &str, key: &str) -> Option<usize> {
    let (table, leaf) = match key.rsplit_once('.') {
        Some((t, l)) => (t, l),
        None => ("", key),
    };
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == leaf {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn range_error(text: &str, key: &str, reason: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        key: key.to_string(),
        line: line_of(text, key),
        reason: reason.into(),
    }
}

/// Core validation keys, translated to document keys.
fn doc_key(core: &str) -> String {
    let mapped = match core {
        "ref_gain" => "ref_gain_db",
        "ref_distance" => "ref_distance_m",
        "carrier_wavelength" => "wavelength_m",
        "bs_power" => "bs_power_dbm",
        "dt_max_power" => "dt_max_power_dbm",
        "noise_cu" => "noise_cu_dbm",
        "noise_dr" => "noise_dr_dbm",
        "sinr_target" => "sinr_target_db",
        "smoothing" => "beta",
        "outage_tolerance" => "epsilon",
        other => {
            if let Some(l) = other.strip_prefix("rician.") {
                return format!("rician_db.{l}");
            }
            if other.starts_with("positions.") {
                return "positions".into();
            }
            other
        }
    };
    mapped.to_string()
}

/// Parses a `key=value` override. The value is read as a TOML value and
/// falls back to a bare string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value), HarnessError> {
    let (k, v) = s.split_once('=').ok_or_else(|| HarnessError::Config {
        key: s.to_string(),
        line: None,
        reason: "override must look like key=value".into(),
    })?;
    let key = k.trim().to_string();
    if key.is_empty() {
        return Err(HarnessError::Config {
            key: s.to_string(),
            line: None,
            reason: "empty key".into(),
        });
    }
    let v = v.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((key, value))
}

fn apply_override(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), HarnessError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().expect("split yields one part");
    let mut t = table;
    for p in parts {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry.as_table_mut().ok_or_else(|| HarnessError::Config {
            key: key.to_string(),
            line: None,
            reason: format!("`{p}` is not a table"),
        })?;
    }
    t.insert(leaf.to_string(), value);
    Ok(())
}

fn toml_error(text: &str, e: &toml::de::Error) -> HarnessError {
    let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    HarnessError::Parse {
        line,
        message: e.message().to_string(),
    }
}

/// Parses a configuration document, applies `overrides` and resolves it.
pub fn parse_config(text: &str, overrides: &[(String, toml::Value)]) -> Result<ExperimentSpec, HarnessError> {
    let doc: ConfigDoc = if overrides.is_empty() {
        toml::from_str(text).map_err(|e| toml_error(text, &e))?
    } else {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v.clone())?;
        }
        table.try_into().map_err(|e: toml::de::Error| HarnessError::Parse {
            line: None,
            message: format!("{} (after --set overrides)", e.message()),
        })?
    };
    resolve(&doc, text)
}

/// Canonical TOML text of a document.
pub fn emit_config(doc: &ConfigDoc) -> String {
    toml::to_string(doc).expect("configuration documents always serialize")
}

pub fn resolve(doc: &ConfigDoc, text: &str) -> Result<ExperimentSpec, HarnessError> {
    let err = |key: &str, reason: &str| range_error(text, key, reason);
    if !(doc.epsilon > 0.0 && doc.epsilon < 1.0) {
        return Err(err("epsilon", &format!("must lie in (0, 1), got {}", doc.epsilon)));
    }
    if doc.antennas == 0 {
        return Err(err("antennas", "must be at least 1"));
    }
    for (k, v) in [
        ("ref_gain_db", doc.ref_gain_db),
        ("bs_power_dbm", doc.bs_power_dbm),
        ("dt_max_power_dbm", doc.dt_max_power_dbm),
        ("noise_cu_dbm", doc.noise_cu_dbm),
        ("noise_dr_dbm", doc.noise_dr_dbm),
        ("sinr_target_db", doc.sinr_target_db),
    ] {
        if !v.is_finite() {
            return Err(err(k, &format!("must be finite, got {v}")));
        }
    }
    let e = &doc.experiment;
    if e.values.is_empty() {
        return Err(err("experiment.values", "needs at least one sweep value"));
    }
    if let Some(v) = e.values.iter().find(|v| !v.is_finite()) {
        return Err(err("experiment.values", &format!("sweep values must be finite, got {v}")));
    }
    if e.schemes.is_empty() {
        return Err(err("experiment.schemes", "needs at least one scheme"));
    }
    let mut schemes = Vec::new();
    for s in &e.schemes {
        match SchemeId::from_name(s) {
            Some(id) if !schemes.contains(&id) => schemes.push(id),
            Some(_) => return Err(err("experiment.schemes", &format!("scheme `{s}` listed twice"))),
            None => {
                let known: Vec<_> = SchemeId::ALL.iter().map(|k| k.name()).collect();
                return Err(err(
                    "experiment.schemes",
                    &format!("unknown scheme `{s}`, expected one of {}", known.join(", ")),
                ));
            }
        }
    }
    let mut kappa_links = Vec::new();
    for l in &e.kappa_links {
        kappa_links.push(Link::from_name(l).ok_or_else(|| err("experiment.kappa_links", &format!("unknown link `{l}`")))?);
    }
    if e.sweep == SweepKind::Kappa && kappa_links.is_empty() {
        return Err(err("experiment.kappa_links", "a kappa sweep needs at least one link"));
    }
    for (k, v) in [
        ("experiment.blocks", e.blocks),
        ("experiment.realizations", e.realizations),
        ("experiment.calibration_samples", e.calibration_samples),
    ] {
        if v == 0 {
            return Err(err(k, "must be at least 1"));
        }
    }
    let p = &doc.positions;
    let base = SystemConfig {
        antennas: doc.antennas,
        elements: doc.elements,
        positions: NodePositions {
            bs: p.bs,
            irs: p.irs,
            cu: p.cu,
            dt: p.dt,
            dr: p.dr,
        },
        ref_gain: db_to_linear(doc.ref_gain_db),
        ref_distance: doc.ref_distance_m,
        carrier_wavelength: doc.wavelength_m,
        path_loss_exponent: doc.path_loss_exponent.to_links(|x| x),
        rician: doc.rician_db.to_links(db_to_linear),
        bs_power: db_to_linear(doc.bs_power_dbm),
        dt_max_power: db_to_linear(doc.dt_max_power_dbm),
        noise_cu: db_to_linear(doc.noise_cu_dbm),
        noise_dr: db_to_linear(doc.noise_dr_dbm),
        sinr_target: db_to_linear(doc.sinr_target_db),
        outage_tolerance: doc.epsilon,
        smoothing: doc.beta,
        tau0: doc.tau0,
        tau1: doc.tau1,
        block_ratio: doc.block_ratio,
        solver: doc.solver.settings(),
    };
    base.validate().map_err(|e| match e {
        irs_d2d::Error::InvalidConfig { key, reason } => range_error(text, &doc_key(&key), reason),
        other => HarnessError::Core(other),
    })?;
    let spec = ExperimentSpec {
        base,
        sweep: e.sweep,
        values: e.values.clone(),
        kappa_links,
        schemes,
        plan: RunPlan {
            blocks: e.blocks,
            realizations: e.realizations,
            calibration_samples: e.calibration_samples,
        },
        seed: doc.seed,
        output: e.output.clone(),
        record_wall_time: e.record_wall_time,
        doc: doc.clone(),
    };
    // Every sweep point must be a valid system too.
    for v in &spec.values {
        spec.config_at(*v)
            .validate()
            .map_err(|_| err("experiment.values", &format!("sweep value {v} yields an invalid system")))?;
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_reference_setup() {
        let s = parse_config("", &[]).unwrap();
        let b = &s.base;
        assert_eq!((b.antennas, b.elements, b.block_ratio), (8, 60, 200));
        assert!((b.sinr_target - 10f64.powf(1.2)).abs() < 1e-9);
        assert_eq!(b.outage_tolerance, 0.05);
        assert_eq!(b.smoothing, 1e3);
        assert_eq!((b.tau0, b.tau1), (0.005, 0.005));
        assert!((b.noise_cu - 1e-8).abs() < 1e-18);
        assert!((b.bs_power - 10.0).abs() < 1e-9);
        assert_eq!(b.rician.bu, 0.0);
        assert!((b.rician.bi - 100.0).abs() < 1e-6);
        assert_eq!(s.plan.blocks, 50);
    }

    #[test]
    fn epsilon_out_of_range_names_key_and_line() {
        let text = "seed = 3\nepsilon = 1.5\n";
        match parse_config(text, &[]).unwrap_err() {
            HarnessError::Config { key, line, .. } => {
                assert_eq!(key, "epsilon");
                assert_eq!(line, Some(2));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let text = "seed = 3\n\n[solver]\nadmm_tol = 1e-6\nbogus = 2\n";
        match parse_config(text, &[]).unwrap_err() {
            HarnessError::Parse { line, message } => {
                assert_eq!(line, Some(5));
                assert!(message.contains("bogus"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn nested_range_error_maps_to_document_key() {
        let text = "[solver]\noutage_scale = -1.0\n";
        match parse_config(text, &[]).unwrap_err() {
            HarnessError::Config { key, line, .. } => {
                assert_eq!(key, "solver.outage_scale");
                assert_eq!(line, Some(2));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn emit_then_parse_is_identity() {
        let mut doc = ConfigDoc::default();
        doc.solver.sample_window = Some(40);
        doc.experiment.sweep = SweepKind::P1;
        let text = emit_config(&doc);
        let back = parse_config(&text, &[]).unwrap();
        assert_eq!(back.doc, doc);
        assert_eq!(back, resolve(&doc, "").unwrap());
        assert!(text.contains("-inf"));
    }

    #[test]
    fn overrides_replace_values() {
        let o = vec![
            parse_override("antennas=4").unwrap(),
            parse_override("experiment.schemes=[\"no_irs\"]").unwrap(),
            parse_override("experiment.sweep=p1").unwrap(),
        ];
        let s = parse_config("antennas = 2\n", &o).unwrap();
        assert_eq!(s.base.antennas, 4);
        assert_eq!(s.schemes, vec![SchemeId::NoIrs]);
        assert_eq!(s.sweep, SweepKind::P1);
        assert!(parse_config("", &[parse_override("nonsense=1").unwrap()]).is_err());
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn sweep_points_modify_the_right_fields() {
        let s = parse_config("", &[]).unwrap();
        let c = s.config_at(20.0);
        assert!((c.rician.iu - 100.0).abs() < 1e-9);
        assert_eq!(c.rician.bu, 0.0);
        let mut p = s.clone();
        p.sweep = SweepKind::P1;
        assert!((p.config_at(10.0).dt_max_power - 10.0).abs() < 1e-9);
    }

    #[test]
    fn bad_scheme_and_empty_sweep() {
        let e = parse_config("[experiment]\nschemes = [\"magic\"]\n", &[]).unwrap_err();
        assert!(e.to_string().contains("magic"));
        let e = parse_config("[experiment]\nvalues = []\n", &[]).unwrap_err();
        assert!(matches!(e, HarnessError::Config { ref key, line: Some(2), .. } if key == "experiment.values"));
    }
}

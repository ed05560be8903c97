//! Sweep execution.

use std::time::Instant;

use rayon::prelude::*;

use irs_d2d::schemes::{SchemeContext, SchemeId, SchemeResult};

use crate::config::ExperimentSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub scheme: SchemeId,
    /// Failures are kept per row so one bad point does not sink the sweep.
    pub result: Result<SchemeResult<f64>, String>,
    pub wall_time_s: f64,
}

fn run_point(spec: &ExperimentSpec, value: f64, scheme: SchemeId) -> SweepRow {
    let start = Instant::now();
    let result = SchemeContext::new(spec.config_at(value), spec.plan, spec.seed)
        .and_then(|ctx| ctx.run(scheme))
        .map_err(|e| e.to_string());
    SweepRow {
        sweep_value: value,
        scheme,
        result,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

/// Every (sweep value × scheme) pair, in document order. Points run
/// concurrently on the current rayon pool; every point reuses the master
/// seed so schemes and sweep values share common random numbers.
pub fn run_sweep(spec: &ExperimentSpec) -> Vec<SweepRow> {
    let jobs: Vec<(f64, SchemeId)> = spec
        .values
        .iter()
        .flat_map(|v| spec.schemes.iter().map(move |s| (*v, *s)))
        .collect();
    jobs.into_par_iter().map(|(v, s)| run_point(spec, v, s)).collect()
}

/// Lookup helper for analyses over a finished sweep.
pub fn find<'a>(rows: &'a [SweepRow], value: f64, scheme: SchemeId) -> Option<&'a SchemeResult<f64>> {
    rows.iter()
        .find(|r| r.sweep_value == value && r.scheme == scheme)
        .and_then(|r| r.result.as_ref().ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, parse_override};

    fn small() -> ExperimentSpec {
        let sets = [
            "antennas=2",
            "elements=3",
            "experiment.blocks=2",
            "experiment.realizations=3",
            "experiment.calibration_samples=10",
            "solver.cssca_max_iters=10",
            "solver.deterministic_max_iters=3",
            "experiment.values=[4.0, 8.0]",
            "experiment.schemes=[\"random_phase\", \"no_irs\"]",
        ];
        let o: Vec<_> = sets.iter().map(|s| parse_override(s).unwrap()).collect();
        parse_config("", &o).unwrap()
    }

    #[test]
    fn rows_follow_document_order() {
        let rows = run_sweep(&small());
        let keys: Vec<_> = rows.iter().map(|r| (r.sweep_value, r.scheme)).collect();
        assert_eq!(
            keys,
            vec![
                (4.0, SchemeId::RandomPhase),
                (4.0, SchemeId::NoIrs),
                (8.0, SchemeId::RandomPhase),
                (8.0, SchemeId::NoIrs)
            ]
        );
        assert!(rows.iter().all(|r| r.result.is_ok()));
    }

    #[test]
    fn points_are_independent_of_the_rest_of_the_sweep() {
        let joint = run_sweep(&small());
        let mut one = small();
        one.values = vec![8.0];
        let alone = run_sweep(&one);
        assert_eq!(alone[0].result, joint[2].result);
        assert_eq!(alone[1].result, joint[3].result);
    }

    #[test]
    fn single_point_single_scheme_gives_one_row() {
        let mut s = small();
        s.values = vec![0.0];
        s.schemes = vec![SchemeId::NoIrs];
        assert_eq!(run_sweep(&s).len(), 1);
    }
}

use proptest::prelude::*;

use irs_d2d::channel::{compose_effective, ChannelStatistics, PhaseShifts};
use irs_d2d::large_timescale::{solve_surrogate, SurrogateState, SurrogateStep};
use irs_d2d::linalg::{cx, norm_sqr, Cx};
use irs_d2d::metrics::{sinr_cu, smooth_step};
use irs_d2d::real::db_to_linear;
use irs_d2d::rng::substream;
use irs_d2d::small_timescale::{admm_u_update, optimal_power, SmallTimescaleSolver};
use irs_d2d::SystemConfig;

fn small(noise_dbm: f64) -> SystemConfig {
    let mut c = SystemConfig::reference();
    c.antennas = 3;
    c.elements = 6;
    c.noise_cu = db_to_linear(noise_dbm);
    c.noise_dr = c.noise_cu;
    c
}

fn surrogate(center: Vec<f64>, c1: f64, f0: Vec<f64>, f1: Vec<f64>) -> SurrogateState<f64> {
    let n = center.len();
    let mut s = SurrogateState::new(n);
    s.update(&center, 0.0, c1, &f0, &f1, 1.0);
    s
}

fn vecs(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-3.0..3.0f64, n),
        prop::collection::vec(-1.0..1.0f64, n),
        prop::collection::vec(-1.0..1.0f64, n),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composition_is_periodic_in_each_phase(seed in any::<u64>(), k in 0usize..6, turns in -3i32..3) {
        let c = small(-80.0);
        let st = ChannelStatistics::from_config(&c).unwrap();
        let mut rng = substream(seed, &[]);
        let real = st.sample(&mut rng);
        let ph = PhaseShifts::random(c.elements, &mut rng);
        let mut shifted = ph.clone().into_vec();
        shifted[k] += turns as f64 * std::f64::consts::TAU;
        let a = compose_effective(&real, &ph).unwrap();
        let b = compose_effective(&real, &PhaseShifts::new(shifted)).unwrap();
        let scale = norm_sqr(&a.h1).sqrt().max(1e-30);
        for (x, y) in a.h1.iter().zip(&b.h1) {
            prop_assert!((x - y).norm() <= 1e-12 * scale);
        }
        prop_assert!((a.h3 - b.h3).norm() <= 1e-12 * a.h3.norm().max(1e-30));
    }

    #[test]
    fn smooth_step_is_monotone_and_bounded(x in -1e3..1e3f64, dx in 0.0..10.0f64, beta in 1e-2..1e4f64) {
        let (a, b) = (smooth_step(x, beta), smooth_step(x + dx, beta));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a);
    }

    #[test]
    fn optimal_power_is_the_largest_feasible_power(
        seed in any::<u64>(),
        delta_frac in 0.0..0.9f64,
    ) {
        let c = small(-90.0);
        let st = ChannelStatistics::from_config(&c).unwrap();
        let mut rng = substream(seed, &[]);
        let eff = compose_effective(&st.sample(&mut rng), &PhaseShifts::random(c.elements, &mut rng)).unwrap();
        let w: Vec<Cx<f64>> = eff.h1.iter().map(|h| h.conj() * (c.bs_power / norm_sqr(&eff.h1)).sqrt()).collect();
        let delta = delta_frac * c.sinr_target;
        let p = optimal_power(&w, &eff, c.sinr_target, delta, c.noise_cu, c.dt_max_power);
        prop_assert!((0.0..=c.dt_max_power).contains(&p));
        let floor = c.sinr_target - delta;
        let g = sinr_cu(&eff, &w, p, c.noise_cu);
        if p > 0.0 {
            prop_assert!(g >= floor * (1.0 - 1e-9));
        }
        if p < c.dt_max_power && p > 0.0 {
            // Tight when not clamped.
            prop_assert!((g - floor).abs() <= 1e-9 * floor);
        }
    }

    #[test]
    fn u_update_lands_in_the_half_plane(
        ar in -2.0..2.0f64, ai in -2.0..2.0f64,
        tr in -3.0..3.0f64, ti in -3.0..3.0f64,
        zeta in 0.0..2.0f64,
    ) {
        prop_assume!(ar.abs() + ai.abs() > 1e-3);
        let anchor = cx(ar, ai);
        let u = admm_u_update(anchor, cx(tr, ti), zeta).unwrap();
        let s = |v: Cx<f64>| 2.0 * (anchor.conj() * v).re - anchor.norm_sqr() - zeta;
        prop_assert!(s(u) >= -1e-12);
        if s(cx(tr, ti)) >= 0.0 {
            prop_assert_eq!(u, cx(tr, ti));
        }
    }

    #[test]
    fn surrogate_step_is_feasible_and_no_worse_than_the_center(
        (center, f0, f1) in vecs(5),
        c1 in -0.5..0.5f64,
    ) {
        let (tau0, tau1) = (0.005, 0.005);
        let s = surrogate(center.clone(), c1, f0, f1);
        match solve_surrogate(&s, tau0, tau1, 1e-8) {
            SurrogateStep::Feasible { phases, lambda } => {
                prop_assert!(s.value(1, tau1, &phases) <= 1e-7);
                prop_assert!(lambda >= 0.0);
                if s.value(1, tau1, &center) <= 0.0 {
                    // The center is feasible, so the constrained minimum
                    // cannot be above it.
                    prop_assert!(s.value(0, tau0, &phases) <= s.value(0, tau0, &center) + 1e-9);
                }
            }
            SurrogateStep::Infeasible => {
                prop_assert!(c1 > 0.0);
            }
        }
    }

    #[test]
    fn feasible_solutions_respect_every_constraint(seed in any::<u64>(), delta_frac in 0.0..0.5f64) {
        let c = small(-95.0);
        let st = ChannelStatistics::from_config(&c).unwrap();
        let mut rng = substream(seed, &[]);
        let eff = compose_effective(&st.sample(&mut rng), &PhaseShifts::random(c.elements, &mut rng)).unwrap();
        let delta = delta_frac * c.sinr_target;
        let s = SmallTimescaleSolver::from_config(&c, delta).unwrap().solve(&eff);
        if s.is_feasible() {
            prop_assert!(sinr_cu(&eff, &s.w, s.p, c.noise_cu) >= c.sinr_target - delta - 1e-6);
            prop_assert!(norm_sqr(&s.w) <= c.bs_power * (1.0 + 1e-9));
            prop_assert!((0.0..=c.dt_max_power).contains(&s.p));
        } else {
            prop_assert_eq!(s.p, 0.0);
        }
    }
}

use std::sync::Arc;

use proptest::prelude::*;

use prion_lab::frag::FragMatrix;
use prion_lab::grid::{Density, GridSpec, SizeGrid};
use prion_lab::pde::{PrionPde, SimOptions, SystemState};
use prion_lab::profile::{compute_profile, LinearFlow, ProfileOptions};
use prion_lab::reduction::transform_from_pde;
use prion_lab::stability::{cooperative_check, endemic_residual, equilibria, jacobian_ee, lyapunov_monitor, routh_hurwitz};
use prion_lab::{FragKernel, ModelParams, Scheme};

fn rate() -> impl Strategy<Value = f64> {
    (-1.0f64..1.0).prop_map(|e| 10f64.powf(e))
}

fn kernel() -> impl Strategy<Value = FragKernel<f64>> {
    prop_oneof![Just(FragKernel::Uniform), (0.0f64..3.0).prop_map(|a| FragKernel::SymmetricPower { a })]
}

fn small_grid(params: &ModelParams<f64>, n: usize) -> Arc<SizeGrid<f64>> {
    GridSpec { n_cells: n, ..GridSpec::default() }.build(params).unwrap()
}

fn random_density(grid: &Arc<SizeGrid<f64>>, heights: &[f64], decay: f64) -> Density<f64> {
    let values = grid.centers().iter().zip(heights.iter().cycle()).map(|(&x, &h)| h * (-decay * x).exp()).collect();
    Density::new(grid.clone(), values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn r0_ignores_fragmentation(lambda in rate(), delta in rate(), tau in rate(), mu in rate(),
                                beta in rate(), gamma in rate(), kernel in kernel()) {
        let base = ModelParams { lambda, delta, tau, mu, ..ModelParams::canonical() };
        let other = ModelParams { beta, gamma, kernel, ..base };
        prop_assert_eq!(base.r0(), other.r0());
    }

    #[test]
    fn fragmentation_conserves_mass_and_keeps_gain_positive(
        heights in prop::collection::vec(0.0f64..1.0, 1..50),
        decay in 0.01f64..2.0,
        gamma in 0.3f64..2.0,
        beta in rate(),
        kernel in kernel(),
    ) {
        let params = ModelParams { gamma, beta, kernel, ..ModelParams::canonical() };
        let grid = small_grid(&params, 200);
        let frag = FragMatrix::assemble(grid.clone(), &params).unwrap();
        let u = random_density(&grid, &heights, decay / params.characteristic_size());
        let fu = frag.apply(&u);
        let m1 = grid.moment_of(&fu, 1.0).abs();
        prop_assert!(m1 <= 1e-12 * beta * u.moment(1.0 + gamma), "{m1:e}");
        let mut gain = vec![0.0; grid.len()];
        frag.gain_into(u.values(), &mut gain);
        prop_assert!(gain.iter().all(|&g| g >= 0.0));
    }

    #[test]
    fn uniform_fragmentation_doubles_number(heights in prop::collection::vec(0.0f64..1.0, 1..50), decay in 0.05f64..2.0) {
        let params = ModelParams::<f64>::canonical();
        let grid = GridSpec::default().build(&params).unwrap();
        let frag = FragMatrix::assemble(grid.clone(), &params).unwrap();
        let u = random_density(&grid, &heights, decay);
        prop_assume!(u.moment(1.0) > 0.0);
        let produced = grid.moment_of(&frag.apply(&u), 0.0);
        let expected = params.beta * u.moment(params.gamma);
        prop_assert!((produced / expected - 1.0).abs() < 1e-2, "{produced} vs {expected}");
    }

    #[test]
    fn routh_hurwitz_agrees_with_eigenvalues(lambda in rate(), delta in rate(), tau in rate(), mu in rate(),
                                             omega in rate(), p in 0.0f64..3.0, mp in rate()) {
        let params = ModelParams { lambda, delta, tau, mu, omega, p, r: p.max(1.0) + 1.0, ..ModelParams::canonical() };
        prop_assume!(params.r0() > 1.0);
        let ee = equilibria(&params, mp).endemic.unwrap();
        let (a, b) = endemic_residual(&params, mp, &ee);
        prop_assert!(a.abs() <= 1e-12 && b.abs() <= 1e-12);
        prop_assert!(ee.v > mu / tau && ee.v < lambda / delta);
        let j = jacobian_ee(&params, mp).unwrap();
        prop_assert!(j.t < 0.0 && j.d < 0.0 && j.m * j.t < j.d);
        let rh = routh_hurwitz(j.t, j.d, j.m).unwrap();
        prop_assert!(rh.consistent);
        prop_assert_eq!(rh.pass, rh.max_real_part < -1e-10);
    }

    #[test]
    fn cooperative_iff_p_at_least_one_and_delta_at_least_mu(p in 0.0f64..3.0, delta in rate(), mu in rate(), omega in rate()) {
        let params = ModelParams { p, delta, mu, omega, r: p.max(1.0) + 1.0, ..ModelParams::canonical() };
        prop_assert_eq!(cooperative_check(&params).cooperative, p >= 1.0 && delta >= mu);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn linear_flow_keeps_mass_and_positivity(heights in prop::collection::vec(0.0f64..1.0, 1..20), decay in 0.8f64..3.0,
                                             scheme in prop_oneof![Just(Scheme::Upwind), Just(Scheme::VanLeer)]) {
        let params = ModelParams::<f64>::canonical();
        let grid = GridSpec::default().build(&params).unwrap();
        let frag = Arc::new(FragMatrix::assemble(grid.clone(), &params).unwrap());
        let flow = LinearFlow::new(frag, params.mu, scheme);
        let mut u = random_density(&grid, &heights, decay);
        let m0 = u.moment(1.0);
        prop_assume!(m0 > 0.0);
        let dt = 0.9 * flow.max_dt();
        for _ in 0..300 {
            u = flow.step(&u, dt).unwrap();
            prop_assert!(u.values().iter().all(|&v| v >= 0.0));
        }
        // on coarse grids upwind diffusion fattens the tail enough to leak at x_max
        prop_assert!((u.moment(1.0) - m0).abs() / m0 <= 1e-10);
    }

    #[test]
    fn pde_runs_stay_positive_bounded_and_reducible(lambda in rate(), delta in rate(), omega in 0.0f64..2.0,
                                                    v0 in 0.0f64..3.0, amp in 0.01f64..1.0) {
        let params = ModelParams { lambda, delta, omega, ..ModelParams::canonical() };
        let grid = small_grid(&params, 120);
        let frag = Arc::new(FragMatrix::assemble(grid.clone(), &params).unwrap());
        let u0 = Density::from_fn(grid.clone(), |x| amp * (-x).exp()).unwrap();
        let state = SystemState::new(0.0, v0, u0, &params).unwrap();
        let opts = SimOptions { horizon: 8.0, output_every: 0.1, ..SimOptions::default() };
        let traj = PrionPde::new(params, frag.clone(), Scheme::VanLeer).simulate(state, &opts).unwrap();
        let first = traj.samples[0];
        let bound = (first.v + first.m1).max(lambda / delta.min(params.mu)) + 1e-8;
        for s in &traj.samples {
            prop_assert!(s.v >= 0.0 && s.m1 >= 0.0);
            prop_assert!(s.v + s.m1 <= bound, "V+P = {} > {bound}", s.v + s.m1);
        }
        prop_assert!(traj.final_state.u.values().iter().all(|&v| v >= 0.0));

        let profile = compute_profile(&frag, &params, &ProfileOptions::default()).unwrap();
        let tr = transform_from_pde(&traj, &params, &profile).unwrap();
        let gm = params.gamma * params.mu;
        for (i, s) in tr.samples.iter().enumerate() {
            prop_assert!(s.w * (1.0 + gm * s.t) >= 1.0 - 1e-8);
            prop_assert!(s.h >= (1.0 + gm * s.t).ln() / gm - 1e-8);
            prop_assert!((s.p / traj.samples[i].m1 - 1.0).abs() <= 1e-10);
            if i > 0 {
                prop_assert!(s.h > tr.samples[i - 1].h);
            }
        }
    }

    #[test]
    fn lyapunov_is_nonincreasing_below_threshold(lambda in 0.1f64..1.0, omega in 0.0f64..2.0, v0 in 0.0f64..3.0) {
        let params = ModelParams { lambda, omega, ..ModelParams::canonical() };
        let grid = small_grid(&params, 120);
        let frag = Arc::new(FragMatrix::assemble(grid.clone(), &params).unwrap());
        let u0 = Density::from_fn(grid.clone(), |x| 0.1 * (-x).exp()).unwrap();
        let state = SystemState::new(0.0, v0, u0, &params).unwrap();
        let opts = SimOptions { horizon: 10.0, output_every: 0.1, ..SimOptions::default() };
        let traj = PrionPde::new(params, frag, Scheme::VanLeer).simulate(state, &opts).unwrap();
        let l = lyapunov_monitor(&traj.samples, &params);
        prop_assert!(l.monotone, "max increment {:e} vs max L {}", l.max_increment, l.max_l);
    }
}

use nalgebra::DMatrix;
use proptest::prelude::*;

use switchpdmp::models::{lorenz_system, sirs_r0, sirs_system, Incidence, LorenzSwitchParams, SirsParams};
use switchpdmp::persistence::NormComponent;
use switchpdmp::system::{assemble_blocks, check_rates_at, fd_jacobian};
use switchpdmp::*;

fn small() -> impl Strategy<Value = f64> {
    -2.0..2.0f64
}

fn matrix(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(small(), r * c).prop_map(move |v| DMatrix::from_row_slice(r, c, &v))
}

fn two_state() -> impl Strategy<Value = RateMatrix> {
    (0.1..3.0f64, 0.1..3.0f64).prop_map(|(a, b)| RateMatrix::two_state(a, b).unwrap())
}

/// `A^i x` plus quadratic terms that vanish to first order at the origin and
/// keep the face `x_n = 0` invariant.
struct FromBlocks {
    mats: Vec<DMatrix<f64>>,
    n: usize,
    q: RateMatrix,
}

impl SwitchedSystem for FromBlocks {
    fn dim(&self) -> usize {
        self.mats[0].nrows()
    }
    fn modes(&self) -> usize {
        self.mats.len()
    }
    fn field(&self, mode: usize, x: &[f64], out: &mut [f64]) {
        let a = &self.mats[mode];
        let r2: f64 = x.iter().map(|v| v * v).sum();
        for i in 0..x.len() {
            let lin: f64 = (0..x.len()).map(|j| a[(i, j)] * x[j]).sum();
            let nl = if i < self.n { x[i] * r2 } else { x[i] * x[i] };
            out[i] = lin + 0.3 * nl;
        }
    }
    fn rates(&self, _: &[f64]) -> DMatrix<f64> {
        self.q.matrix().clone()
    }
    fn rate_bound(&self) -> f64 {
        self.q.max_exit_rate()
    }
    fn constant_rates(&self) -> bool {
        true
    }
    fn split(&self) -> Option<Split> {
        Some(Split::new(self.n, self.dim() - self.n).unwrap())
    }
}

fn sirs_params() -> impl Strategy<Value = SirsParams> {
    (
        0.1..5.0f64,
        0.05..2.0f64,
        prop::collection::vec(0.0..2.0f64, 2),
        prop::collection::vec(0.0..1.0f64, 2),
        prop::collection::vec(0.0..1.0f64, 2),
        prop::collection::vec(0.0..1.0f64, 2),
        prop::option::of(0.0..3.0f64),
        (0.1..3.0f64, 0.1..3.0f64),
    )
        .prop_map(|(inflow, death, beta, waning, disease_death, recovery, sat, (a, b))| SirsParams {
            inflow,
            death,
            beta,
            waning,
            disease_death,
            recovery,
            incidence: vec![sat.map_or(Incidence::Linear, |c| Incidence::Saturating { c }); 2],
            q: vec![vec![-a, a], vec![b, -b]],
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn built_in_rates_are_generators(x in prop::collection::vec(-30.0..30.0f64, 3), a in 0.1..5.0f64, b in 0.1..5.0f64) {
        let q = vec![vec![-a, a], vec![b, -b]];
        let lorenz = lorenz_system(LorenzSwitchParams { q: q.clone(), ..Default::default() }).unwrap();
        let sirs = sirs_system(SirsParams { q, ..Default::default() }).unwrap();
        for sys in [&lorenz as &dyn SwitchedSystem, &sirs] {
            let m = check_rates_at(sys, &x).unwrap();
            for i in 0..2 {
                prop_assert!(m.matrix().row(i).sum().abs() <= 1e-12);
                prop_assert!(m.matrix()[(i, 1 - i)] >= 0.0);
            }
        }
    }

    #[test]
    fn blocks_are_recovered(b in prop::collection::vec(matrix(2, 2), 2), c in prop::collection::vec(matrix(1, 2), 2),
                            d in prop::collection::vec(matrix(1, 1), 2), q in two_state()) {
        let mats: Vec<_> = (0..2).map(|i| assemble_blocks(&b[i], &c[i], &d[i])).collect();
        let sys = FromBlocks { mats, n: 2, q };
        let lin = linearize_at_origin(&sys).unwrap();
        let dec = block_decompose(&lin, 2, true).unwrap();
        for i in 0..2 {
            prop_assert!((&dec.b[i] - &b[i]).amax() <= 1e-9);
            prop_assert!((&dec.c[i] - &c[i]).amax() <= 1e-9);
            prop_assert!((&dec.d[i] - &d[i]).amax() <= 1e-9);
        }
        prop_assert!(validate_face_invariance(&sys, 50, 3.0, 1).unwrap().pass);
    }

    #[test]
    fn bracket_rank_grows_with_depth(x in prop::collection::vec(-20.0..20.0f64, 2), z in 0.0..60.0f64) {
        let sys = lorenz_system(LorenzSwitchParams::default()).unwrap();
        let p = [x[0], x[1], z];
        let mut prev = 0;
        for depth in 0..=3 {
            for kind in [BracketKind::Weak, BracketKind::Strong] {
                let r = bracket_rank(&sys, &p, kind, depth).unwrap();
                prop_assert!(r.rank <= 3 && r.depth_used <= depth);
                if kind == BracketKind::Strong {
                    prop_assert!(r.rank >= prev);
                    prev = r.rank;
                }
            }
        }
    }

    #[test]
    fn occupation_mass_is_a_probability(seed in 0u64..1000, half in 0.2..3.0f64, burn in 0.0..5.0f64) {
        let lin = models::triangular_2d(&[0.2, -1.0], &[1.0, -0.5], &[-0.3, 0.4], RateMatrix::two_state(1.0, 2.0).unwrap()).unwrap();
        let plan = SimulationPlan { horizon: 10.0, sample_dt: 0.05, seed, init_state: vec![0.5, -0.5], init_mode: 0 };
        let traj = simulate_pdmp(&lin, &plan, &IntegratorConfig::default()).unwrap();
        let region = BoundingBox::new(vec![-half; 2], vec![half; 2]).unwrap();
        let grid = GridSpec::new(region, 7, 2).unwrap();
        let h = occupation_measure(&traj, &grid, burn).unwrap();
        prop_assert!((h.total() - 1.0).abs() <= 1e-9);
        prop_assert!((h.mass.iter().sum::<f64>() + h.overflow_total() - 1.0).abs() <= 1e-9);
        prop_assert!(h.mass.iter().all(|m| *m >= 0.0));
    }

    #[test]
    fn sirs_threshold_sign(params in sirs_params()) {
        let r = sirs_r0(&params).unwrap();
        prop_assert!(r.sign_consistent);
        prop_assert_eq!(r.r0 < 1.0, r.lambda_b_plus < 0.0);
    }

    #[test]
    fn extinction_slope_ignores_time_shift(a in 0.1..3.0f64, shift in -50.0..50.0f64, seed in 0u64..100) {
        let lin = LinearSwitchedSystem::new(
            vec![DMatrix::from_element(1, 1, -a), DMatrix::from_element(1, 1, -0.5 * a)],
            RateMatrix::two_state(1.0, 1.0).unwrap(),
        ).unwrap();
        let plan = SimulationPlan { horizon: 20.0, sample_dt: 0.1, seed, init_state: vec![1.0], init_mode: 0 };
        let traj = simulate_pdmp(&lin, &plan, &IntegratorConfig::default()).unwrap();
        let shifted = Trajectory::from_parts(
            1,
            traj.times().iter().map(|t| t + shift).collect(),
            traj.states().flat_map(|x| x.to_vec()).collect(),
            traj.modes().to_vec(),
            traj.events().iter().map(|e| SwitchEvent { time: e.time + shift, ..*e }).collect(),
        ).unwrap();
        let r0 = extinction_rate(&traj, NormComponent::Full, 9.0, -a).unwrap();
        let r1 = extinction_rate(&shifted, NormComponent::Full, 9.0, -a).unwrap();
        prop_assert!((r0.slope - r1.slope).abs() <= 1e-9, "{} vs {}", r0.slope, r1.slope);
        prop_assert!(r0.slope <= -0.5 * a + 1e-6 && r0.slope >= -a - 1e-6);
    }

    #[test]
    fn analytic_jacobians_match_differences(u in prop::collection::vec(0.0..1.0f64, 3)) {
        let lorenz = lorenz_system(LorenzSwitchParams::default()).unwrap();
        let lp = [40.0 * u[0] - 20.0, 50.0 * u[1] - 25.0, 60.0 * u[2]];
        let params = SirsParams { incidence: vec![Incidence::Saturating { c: 0.7 }, Incidence::Linear], ..Default::default() };
        let sirs = sirs_system(params.clone()).unwrap();
        let k = params.capacity();
        let sp = params.from_original([k * u[0] / 3.0, k * u[1] / 3.0, k * u[2] / 3.0]);
        for (sys, p) in [(&lorenz as &dyn SwitchedSystem, &lp[..]), (&sirs, &sp[..])] {
            for mode in 0..2 {
                let fd = fd_jacobian(|y, o| sys.field(mode, y, o), p);
                prop_assert!((sys.jacobian(mode, p) - fd).amax() <= 1e-5);
            }
        }
    }
}

#[test]
fn built_in_split_models_keep_their_face() {
    for name in models::MODEL_NAMES {
        let model = build_model(name, &Default::default()).unwrap();
        let sys = model.system();
        let report = validate_face_invariance(sys, 200, 10.0, 4).unwrap();
        assert!(report.pass, "{name}: {}", report.max_residual);
        let lin = linearize_at_origin(sys).unwrap();
        let n = sys.split().unwrap().n;
        assert!(block_decompose(&lin, n, true).unwrap().is_valid(), "{name}");
    }
}

#[test]
fn same_seed_same_trajectory() {
    let sys = lorenz_system(LorenzSwitchParams::default()).unwrap();
    let plan = SimulationPlan { horizon: 50.0, sample_dt: 0.01, seed: 42, init_state: vec![0.0, 0.05, 0.05], init_mode: 0 };
    let a = simulate_pdmp(&sys, &plan, &IntegratorConfig::default()).unwrap();
    let b = simulate_pdmp(&sys, &plan, &IntegratorConfig::default()).unwrap();
    assert_eq!(a, b);
    let other = simulate_pdmp(&sys, &SimulationPlan { seed: 43, ..plan }, &IntegratorConfig::default()).unwrap();
    assert_ne!(a.events(), other.events());
}

#[test]
fn sphere_is_preserved_under_switching() {
    let lin = models::triangular_2d(&[2.0, -1.0], &[3.0, -2.0], &[-1.0, 1.5], RateMatrix::two_state(1.0, 1.0).unwrap()).unwrap();
    let spec = EnsembleSpec::new(100.0, 4, 3);
    let cfg = IntegratorConfig::rk4(1e-3);
    let th = [0.6, 0.8];
    for r in 0..spec.replicates {
        let run = lyapunov::run_angular(&lin, &th, &spec, r, &cfg, None).unwrap();
        assert!(run.max_norm_drift <= 1e-8, "{}", run.max_norm_drift);
    }
}

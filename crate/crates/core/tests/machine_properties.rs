use proptest::prelude::*;

use rckf_core::machine::{
    electrical_power, electrical_power_partials, rk4_step, state_derivative, MachineInputs, MachineParams,
    MachineState, TorqueMode,
};
use rckf_core::scenario::{simulate_truth, steady_state_init, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Terminal power from the dq voltage and current components.
fn dq_power(s: &MachineState, u: &MachineInputs, p: &MachineParams) -> f64 {
    let a = s.delta - u.phi;
    let (ud, uq) = (u.u_t * a.sin(), u.u_t * a.cos());
    let id = (s.e_q_prime - uq) / p.x_d_prime;
    let iq = (ud - s.e_d_prime) / p.x_q_prime;
    ud * id + uq * iq
}

/// The machine ODE written out independently of the library.
fn rhs(x: [f64; 4], u: &MachineInputs, p: &MachineParams) -> [f64; 4] {
    let s = MachineState::from_array(x);
    let a = s.delta - u.phi;
    let (ud, uq) = (u.u_t * a.sin(), u.u_t * a.cos());
    let id = (s.e_q_prime - uq) / p.x_d_prime;
    let iq = (ud - s.e_d_prime) / p.x_q_prime;
    let pe = ud * id + uq * iq;
    [
        p.omega_0 * s.delta_omega,
        (u.t_m - pe - p.d * s.delta_omega) / p.t_j,
        (u.e_f - s.e_q_prime - (p.x_d - p.x_d_prime) * id) / p.t_d0_prime,
        (-s.e_d_prime + (p.x_q - p.x_q_prime) * iq) / p.t_q0_prime,
    ]
}

fn euler(x0: [f64; 4], u: &MachineInputs, p: &MachineParams, t: f64, n: usize) -> [f64; 4] {
    let h = t / n as f64;
    let mut x = x0;
    for _ in 0..n {
        let k = rhs(x, u, p);
        for i in 0..4 {
            x[i] += h * k[i];
        }
    }
    x
}

fn random_point(rng: &mut impl Rng) -> (MachineState, MachineInputs) {
    (
        MachineState {
            delta: rng.random_range(-3.0..3.0),
            delta_omega: rng.random_range(-0.05..0.05),
            e_q_prime: rng.random_range(0.5..1.5),
            e_d_prime: rng.random_range(-0.8..0.8),
        },
        MachineInputs {
            t_m: rng.random_range(0.0..1.2),
            e_f: rng.random_range(1.0..3.0),
            u_t: rng.random_range(0.2..1.2),
            phi: rng.random_range(-1.0..1.0),
        },
    )
}

#[test]
fn power_equals_dq_product_on_many_points() {
    let p = MachineParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0_f64;
    for _ in 0..100_000 {
        let (s, u) = random_point(&mut rng);
        let (a, b) = (electrical_power(&s, &u, &p), dq_power(&s, &u, &p));
        worst = worst.max((a - b).abs() / b.abs().max(1.0));
    }
    assert!(worst <= 1e-12, "worst {worst:e}");
}

#[test]
fn partials_match_central_differences() {
    let p = MachineParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-6;
    for _ in 0..1000 {
        let (s, u) = random_point(&mut rng);
        let (du, dphi) = electrical_power_partials(&s, &u, &p);
        let at = |uu: MachineInputs| electrical_power(&s, &uu, &p);
        let num_u = (at(MachineInputs { u_t: u.u_t + h, ..u }) - at(MachineInputs { u_t: u.u_t - h, ..u })) / (2.0 * h);
        let num_phi = (at(MachineInputs { phi: u.phi + h, ..u }) - at(MachineInputs { phi: u.phi - h, ..u })) / (2.0 * h);
        assert!((du - num_u).abs() <= 1e-6 * du.abs().max(1.0), "dU {du} vs {num_u}");
        assert!((dphi - num_phi).abs() <= 1e-6 * dphi.abs().max(1.0), "dphi {dphi} vs {num_phi}");
    }
}

#[test]
fn derivative_matches_independent_ode() {
    let p = MachineParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let (s, u) = random_point(&mut rng);
        let a = state_derivative(&s, &u, &p, TorqueMode::PowerEqualsTorque);
        let b = rhs(s.to_array(), &u, &p);
        for i in 0..4 {
            assert!((a[i] - b[i]).abs() <= 1e-12 * b[i].abs().max(1.0));
        }
    }
}

#[test]
fn rk4_step_matches_extrapolated_euler() {
    let p = MachineParams::default();
    let u = MachineInputs {
        t_m: 0.8,
        e_f: 2.0,
        u_t: 0.6,
        phi: 0.0,
    };
    let x0 = MachineState {
        delta: 0.9,
        delta_omega: 0.002,
        e_q_prime: 1.05,
        e_d_prime: 0.35,
    };
    let dt = 0.005;
    let rk = rk4_step(&x0, &u, &p, dt, TorqueMode::PowerEqualsTorque).unwrap().to_array();
    // Richardson: 2·E(h/2) − E(h) cancels Euler's first-order error
    let coarse = euler(x0.to_array(), &u, &p, dt, 5_000);
    let fine = euler(x0.to_array(), &u, &p, dt, 10_000);
    for i in 0..4 {
        let reference = 2.0 * fine[i] - coarse[i];
        assert!((rk[i] - reference).abs() <= 1e-9, "component {i}: {} vs {reference}", rk[i]);
    }
}

#[test]
fn rk4_global_error_is_fourth_order() {
    let p = MachineParams::default();
    let u = MachineInputs {
        t_m: 0.8,
        e_f: 2.0,
        u_t: 0.5,
        phi: 0.0,
    };
    let x0 = MachineState {
        delta: 0.7,
        delta_omega: 0.0,
        e_q_prime: 1.1,
        e_d_prime: 0.3,
    };
    let horizon = 1.0;
    let roll = |h: f64| {
        let n = (horizon / h).round() as usize;
        let mut x = x0;
        for _ in 0..n {
            x = rk4_step(&x, &u, &p, h, TorqueMode::PowerEqualsTorque).unwrap();
        }
        x.to_array()
    };
    let reference = roll(0.02 / 64.0);
    let err = |h: f64| {
        let x = roll(h);
        (0..4).map(|i| (x[i] - reference[i]).abs()).fold(0.0, f64::max)
    };
    let ratio = err(0.04) / err(0.02);
    assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn truth_converges_with_integrator_step() {
    let base = ScenarioConfig::default();
    let a = simulate_truth(&base).unwrap();
    let half_grid = simulate_truth(&ScenarioConfig { dt: 0.01, ..base.clone() }).unwrap();
    let half_step = simulate_truth(&ScenarioConfig {
        truth_max_step: base.truth_max_step / 2.0,
        ..base.clone()
    })
    .unwrap();
    let mut worst = (0.0_f64, 0.0_f64);
    for (k, s) in a.states.iter().enumerate() {
        let g = half_grid.states[2 * k].to_array();
        let h = half_step.states[k].to_array();
        for (i, v) in s.to_array().iter().enumerate() {
            worst.0 = worst.0.max((v - g[i]).abs());
            worst.1 = worst.1.max((v - h[i]).abs());
        }
    }
    assert!(worst.0 <= 1e-7, "halved grid {:e}", worst.0);
    assert!(worst.1 <= 1e-7, "halved integrator step {:e}", worst.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn steady_state_is_an_equilibrium(
        t_m in 0.05f64..0.6,
        e_f in 1.5f64..2.5,
        u_t in 0.9f64..1.1,
        phi in -0.5f64..0.5,
        slow in any::<bool>(),
    ) {
        let p = MachineParams::default();
        let u = MachineInputs { t_m, e_f, u_t, phi };
        let mode = if slow { TorqueMode::DivideBySpeed } else { TorqueMode::PowerEqualsTorque };
        let x = steady_state_init(&u, &p, mode).unwrap();
        let dx = state_derivative(&x, &u, &p, mode);
        prop_assert!(dx.iter().all(|v| v.abs() <= 1e-10), "{:?}", dx);
        prop_assert!((electrical_power(&x, &u, &p) - t_m).abs() <= 1e-10);
        // stable branch: load angle below 90 degrees for this machine
        prop_assert!((x.delta - phi).abs() < std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn power_identity_holds(seed in any::<u64>()) {
        let p = MachineParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, u) = random_point(&mut rng);
        let b = dq_power(&s, &u, &p);
        prop_assert!((electrical_power(&s, &u, &p) - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

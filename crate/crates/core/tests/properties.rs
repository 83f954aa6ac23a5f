use std::f64::consts::PI;
use std::sync::OnceLock;

use matern_cardinal::config::{parse_h_list, RunConfig};
use matern_cardinal::interp::{interpolate, DataWindow, Halo, TestFunction};
use matern_cardinal::kernels::KernelSpec;
use matern_cardinal::lagrange::{decay_study, lagrange_function, LagrangeConfig, LagrangeFunction};
use matern_cardinal::lattice::{truncated_tail_bound, LatticeSum};
use matern_cardinal::symbol::symbol;
use proptest::prelude::*;

struct Fixture {
    l: LagrangeFunction,
    halo: Halo,
}

fn fixture(m: u32, d: usize, h: f64) -> Fixture {
    let l = lagrange_function(&KernelSpec::matern(m, d).unwrap(), h, &LagrangeConfig::default()).unwrap();
    let decay = decay_study(&l, 40.0, 1e-13).unwrap();
    let halo = Halo::from_decay(&decay, d, 1e-11);
    Fixture { l, halo }
}

fn d1() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| fixture(2, 1, 0.25))
}

fn d2() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| fixture(2, 2, 0.5))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaled_kernel_is_a_dilation(m in 1u32..4, h in 0.01f64..1.0, y in -20.0f64..20.0) {
        let spec = KernelSpec::matern(m, 1).unwrap();
        let a = spec.scaled_eval(h, &[y, 0.0, 0.0]);
        let b = spec.eval(&[h * y, 0.0, 0.0]);
        prop_assert!((a - b).abs() <= 1e-15 * b.abs().max(1e-300));
        prop_assert!(a > 0.0);
    }

    #[test]
    fn symbol_is_positive_and_even(m in 2u32..4, d in 1usize..3, k in 0u32..4) {
        let h = 0.5f64.powi(k as i32);
        let g = symbol(&KernelSpec::matern(m, d).unwrap(), h, 16, 1e-14).unwrap();
        for l in g.indices() {
            let mut mirror = l;
            for i in 0..d {
                mirror[i] = (16 - l[i]) % 16;
            }
            prop_assert!(g.sigma_at(&l) > 0.0);
            prop_assert_eq!(g.sigma_at(&l), g.sigma_at(&mirror));
        }
    }

    #[test]
    fn lagrange_function_is_even(y in -6.0f64..6.0, z in -6.0f64..6.0) {
        let f = d2();
        let a = f.l.eval(&[y, z, 0.0]);
        prop_assert!((a - f.l.eval(&[-y, -z, 0.0])).abs() < 1e-12);
        prop_assert!((a - f.l.eval(&[z, y, 0.0])).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, x in -2.0f64..2.0) {
        let f = d1();
        let h = f.l.h;
        let g1 = TestFunction::gaussian(1);
        let g2 = TestFunction::bump(1);
        let c = [0.0; 3];
        let w1 = DataWindow::sample(&g1, h, &c, 30.0);
        let w2 = DataWindow::sample(&g2, h, &c, 30.0);
        let wc = DataWindow::from_fn(1, h, &c, 30.0, |p| alpha * g1.eval(p) + beta * g2.eval(p));
        let p = [x, 0.0, 0.0];
        let i1 = interpolate(&f.l, &w1, &p, &f.halo).unwrap().value;
        let i2 = interpolate(&f.l, &w2, &p, &f.halo).unwrap().value;
        let ic = interpolate(&f.l, &wc, &p, &f.halo).unwrap().value;
        prop_assert!((ic - alpha * i1 - beta * i2).abs() < 1e-10);
    }

    #[test]
    fn h_lists_round_trip(k in 0u32..8) {
        let lo = 0.5f64.powi(k as i32);
        let list = parse_h_list(&format!("1..{lo}")).unwrap();
        prop_assert_eq!(list.len(), k as usize + 1);
        let mut cfg = RunConfig::default();
        cfg.h_list = list.clone();
        let back = RunConfig::from_text(&cfg.to_text().replace("threads = auto\n", "").replace("max = auto\n", "")).unwrap();
        prop_assert_eq!(back.h_list, list);
    }
}

/// Σ_k φ̂(2πk)cos(2πk·y)/Σ_k φ̂(2πk) with φ̂(ξ) ∝ (h² + ξ²)^{−m}, d = 1.
fn translate_sum(m: u32, h: f64, y: f64) -> (f64, f64) {
    let k_max = 2000;
    let mut num = 0.0;
    for k in (-k_max..=k_max).rev() {
        let w = (h * h + (2.0 * PI * k as f64).powi(2)).powi(-(m as i32));
        num += w * (2.0 * PI * k as f64 * y).cos();
    }
    let den = LatticeSum::new(1, m, h).sum(&[0.0; 3]);
    (num / den, truncated_tail_bound(1, m, k_max) / den)
}

#[test]
fn sum_of_translates_at_random_points() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let f = d1();
    let one = TestFunction::constant(1, 1.0);
    let data = DataWindow::sample(&one, f.l.h, &[0.0; 3], 40.0);
    for _ in 0..100 {
        let y: f64 = rng.gen_range(-8.0..8.0);
        let v = interpolate(&f.l, &data, &[y * f.l.h, 0.0, 0.0], &f.halo).unwrap().value;
        let (want, err) = translate_sum(2, f.l.h, y);
        assert!((v - want).abs() < 1e-9 + err, "y={y}: {v} vs {want}");
        // |cos − 1| ≤ 2 on each term: 4ζ(4)(h/2π)^4 bounds the deviation from 1
        let zeta4 = PI.powi(4) / 90.0;
        assert!((v - 1.0).abs() < 4.0 * zeta4 * (f.l.h / (2.0 * PI)).powi(4) + 1e-9);
    }
}

#[test]
fn constants_are_reproduced_to_1e6_for_small_h() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    let f = fixture(2, 1, 0.0625);
    let one = TestFunction::constant(1, 1.0);
    let data = DataWindow::sample(&one, f.l.h, &[0.0; 3], 20.0);
    for _ in 0..100 {
        let x: f64 = rng.gen_range(-5.0..5.0);
        let v = interpolate(&f.l, &data, &[x, 0.0, 0.0], &f.halo).unwrap().value;
        assert!((v - 1.0).abs() < 1e-6, "x={x}: {v}");
    }
}

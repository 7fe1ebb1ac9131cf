use lr_core::harness::generate_instance;
use lr_core::rng::split;
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

const SAMPLES: usize = 100_000;
const Z: f64 = 3.0;
/// Covers components whose estimator has zero variance.
const ABS_SLACK: f64 = 1e-12;

#[test]
fn monte_carlo_means_are_within_three_standard_errors() {
    let started = std::time::Instant::now();
    let inst = generate_instance(42, 5, 3, 0.5..0.95).unwrap();
    let ctx = &inst.ctx;
    for point in 0..5u64 {
        let mut rng = split(100 + point, 0);
        let theta = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
        let w = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));

        let exact = ctx.grad_h_w(&theta, &w).unwrap();
        let est = ctx.sampled_grad_h_w_stats(&theta, &w, &mut rng, SAMPLES).unwrap();
        for i in 0..3 {
            let gap = (est.mean[i] - exact[i]).abs();
            assert!(gap <= Z * est.std_err[i] + ABS_SLACK, "H, point {point}, component {i}: {gap:e} vs se {:e}", est.std_err[i]);
        }

        let exact = ctx.grad_g_theta(&theta, &w).unwrap();
        let est = ctx.sampled_grad_g_theta_stats(&theta, &w, &mut rng, SAMPLES).unwrap();
        for i in 0..3 {
            let gap = (est.mean[i] - exact[i]).abs();
            assert!(gap <= Z * est.std_err[i] + ABS_SLACK, "G, point {point}, component {i}: {gap:e} vs se {:e}", est.std_err[i]);
        }
    }
    println!("elapsed {:.2} s", started.elapsed().as_secs_f64());
}

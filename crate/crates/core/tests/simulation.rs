use pogit::rng::stream_rng;
use pogit::simulation::{make_proxy_covariates, simulate_dataset, SimulationConfig};

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let c: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    c / (va * vb).sqrt()
}

#[test]
fn covariates_relate_positively_to_counts() {
    let seeds = 40;
    let mut good = 0;
    for seed in 0..seeds {
        let (sim, truth) = simulate_dataset(&SimulationConfig { seed, ..SimulationConfig::default() }).unwrap();
        let y: Vec<f64> = truth.y.iter().map(|&v| v as f64).collect();
        let z: Vec<f64> = sim.table.z.iter().map(|&v| v as f64).collect();
        if pearson(&truth.x, &y) > 0.2 && pearson(&truth.w, &z) > 0.2 {
            good += 1;
        }
    }
    assert!(good as f64 >= 0.95 * seeds as f64, "{good}/{seeds}");
}

#[test]
fn mean_count_matches_mean_intensity() {
    let (mut sum_y, mut sum_lambda) = (0.0, 0.0);
    for seed in 0..1000 {
        let (_, truth) = simulate_dataset(&SimulationConfig {
            seed,
            proxy_rhos: Vec::new(),
            ..SimulationConfig::default()
        })
        .unwrap();
        sum_y += truth.y.iter().sum::<u64>() as f64;
        sum_lambda += truth.log_lambda.iter().map(|l| l.exp()).sum::<f64>();
    }
    let rel = sum_y / sum_lambda - 1.0;
    assert!(rel.abs() < 0.05, "relative gap {rel}");
}

#[test]
fn proxy_extremes() {
    let mut rng = stream_rng(4, 0, 0);
    let w: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 / 50.0 - 1.0).collect();
    let v = make_proxy_covariates(&w, &[1.0, 0.0], &mut rng).unwrap();
    assert_eq!(v[0], w);
    assert!(pearson(&v[1], &w).abs() < 0.2);
}

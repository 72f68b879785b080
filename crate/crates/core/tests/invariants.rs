use pogit::elicitation::{approximate_rate_distribution, average_of_normals, AveragingScale, Coupling, RateEstimate};
use pogit::graph::AdjacencyGraph;
use pogit::mcmc::{slice_update_scalar, Bounds};
use pogit::model::icar_log_density;
use pogit::rng::stream_rng;

#[test]
fn icar_density_ignores_labels_and_list_order() {
    let g = AdjacencyGraph::lattice(3, 4);
    let n = g.n_regions();
    let mut phi: Vec<f64> = (0..n).map(|s| ((s * 7) % 5) as f64 * 0.3).collect();
    let m = phi.iter().sum::<f64>() / n as f64;
    phi.iter_mut().for_each(|v| *v -= m);

    // perm[s] is the new label of region s.
    let perm: Vec<usize> = (0..n).map(|s| (s * 5 + 3) % n).collect();
    let mut lists = vec![Vec::new(); n];
    for s in 0..n {
        let mut nb: Vec<usize> = g.neighbors(s).iter().map(|&t| perm[t]).collect();
        nb.reverse();
        lists[perm[s]] = nb;
    }
    let h = AdjacencyGraph::from_neighbors(lists).unwrap();
    let mut psi = vec![0.0; n];
    for s in 0..n {
        psi[perm[s]] = phi[s];
    }
    let a = icar_log_density(&phi, 0.7, &g).unwrap();
    let b = icar_log_density(&psi, 0.7, &h).unwrap();
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

#[test]
fn slice_draws_match_exponential_cdf() {
    let mut rng = stream_rng(2, 0, 0);
    let n = 100_000;
    let mut x = 1.0;
    for _ in 0..1_000 {
        x = slice_update_scalar(x, |v| -v, 1.0, Bounds::POSITIVE, 100, &mut rng).value;
    }
    let mut draws: Vec<f64> = (0..n)
        .map(|_| {
            x = slice_update_scalar(x, |v| -v, 1.0, Bounds::POSITIVE, 100, &mut rng).value;
            x
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let ks = draws
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let f = 1.0 - (-v).exp();
            (f - k as f64 / n as f64).abs().max(((k + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.01, "KS {ks}");
}

#[test]
fn comonotone_average_is_at_least_as_spread_as_independent() {
    let comps: Vec<(f64, f64)> = [
        RateEstimate { point: 0.91, low: 0.78, high: 1.0 },
        RateEstimate { point: 0.84, low: 0.73, high: 0.99 },
        RateEstimate { point: 0.87, low: 0.75, high: 1.0 },
    ]
    .into_iter()
    .map(|e| {
        let a = approximate_rate_distribution(e).unwrap();
        (a.mean, a.sd)
    })
    .collect();
    let co = average_of_normals(&comps, 100_000, 1, AveragingScale::Logit, Coupling::Comonotone).unwrap();
    let ind = average_of_normals(&comps, 100_000, 1, AveragingScale::Logit, Coupling::Independent).unwrap();
    assert!(co.sd >= ind.sd, "{} vs {}", co.sd, ind.sd);
}

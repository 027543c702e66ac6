// Temporary scratch probe (removed before release).
use cavity_squeeze::cli::{optimize_fidelity, Scenario};
use cavity_squeeze::scheme::Scheme;

fn main() {
    let t0 = std::time::Instant::now();
    let nc = 1000.0;
    let n = (1000.0 * nc) as u64;
    let log10_s = -1.0;
    let s = 10f64.powf(log10_s);
    for scheme in [Scheme::OneAxis, Scheme::TwoAxis] {
        for r in [0.1, 3.0] {
            let mut eps = Vec::new();
            for k in 0..4 {
                let phase = 2.0 * std::f64::consts::PI * k as f64 / 4.0;
                let mut sc = Scenario::squeezing(scheme, n, nc, 7);
                sc.search.nm_evals = 800;
                let res = optimize_fidelity(&sc, s, r, phase).unwrap();
                eps.push(res.objective);
            }
            let mean = eps.iter().sum::<f64>() / eps.len() as f64;
            println!(
                "{scheme} r={r}: eps_mean={:.4e} per-phase={:?} [{:?}]",
                mean,
                eps.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
                t0.elapsed()
            );
        }
    }
}

// Temporary scratch probe (removed before release).
use cavity_squeeze::cli::{optimize_squeezing, Scenario};
use cavity_squeeze::scheme::Scheme;

fn main() {
    let mut one = Vec::new();
    let mut two = Vec::new();
    for nc in [100.0f64, 1000.0, 10_000.0] {
        for scheme in [Scheme::TwoAxis, Scheme::OneAxis] {
            let n = (1000.0 * nc) as u64;
            let sc = Scenario::squeezing(scheme, n, nc, 7);
            let r = optimize_squeezing(&sc).unwrap();
            println!(
                "{scheme} nc={nc}: xi2={:.4e} xi2*sqrt(nc)={:.3} delta={:.3} t2r2={:.3} evals={}",
                r.objective,
                r.objective * nc.sqrt(),
                r.delta,
                2.0 * (0.02f64).powi(2) * r.t,
                r.evaluations
            );
            if scheme == Scheme::OneAxis {
                one.push((nc, r.objective));
            } else {
                two.push((nc, r.objective));
            }
        }
    }
    println!(
        "slopes: one={:.3} two={:.3}",
        cavity_squeeze::cli::loglog_slope(&one),
        cavity_squeeze::cli::loglog_slope(&two)
    );
}

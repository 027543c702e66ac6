//! Embedded Dormand-Prince 5(4) integrator over flat `f64` state vectors.
//!
//! The solvers in this crate (moment equations, Schroedinger/Lindblad
//! propagation) all reduce their state to a flat real vector and share this
//! stepper. Output is produced exactly at caller-requested sample times by
//! clamping the step size, so no dense-output interpolant is needed.

/// Why an integration stopped before reaching the requested end time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Reached the final time.
    Done,
    /// Step size underflowed; the produced samples are a valid prefix.
    StepUnderflow,
    /// The right-hand side asked to stop (e.g. linearization breakdown).
    Halted,
}

/// Control returned by the RHS callback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsStatus {
    Ok,
    /// Abort the integration; the trajectory so far is kept.
    Halt,
}

pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_initial: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            h_initial: None,
            h_max: None,
            max_steps: 50_000_000,
        }
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `dy/dt = f(t, y)` from `t0`, emitting the state at each time in
/// `sample_times` (strictly increasing, first may equal `t0`).
///
/// `f` writes the derivative into its third argument. `observe` is called with
/// `(t, y)` at every sample time, including `t0` if requested.
pub fn integrate_sampled<F, O>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    sample_times: &[f64],
    opts: &OdeOptions,
    mut observe: O,
) -> StopReason
where
    F: FnMut(f64, &[f64], &mut [f64]) -> RhsStatus,
    O: FnMut(f64, &[f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;

    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    let mut y_stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    let mut samples = sample_times.iter().copied().peekable();
    while let Some(&ts) = samples.peek() {
        if ts <= t + 1e-15 * t.abs().max(1.0) {
            observe(ts, &y);
            samples.next();
        } else {
            break;
        }
    }
    let t_end = match sample_times.last() {
        Some(&te) => te,
        None => return StopReason::Done,
    };
    if t >= t_end {
        return StopReason::Done;
    }

    if f(t, &y, &mut k[0]) == RhsStatus::Halt {
        return StopReason::Halted;
    }

    // Initial step heuristic: scale against the first derivative.
    let mut h = opts.h_initial.unwrap_or_else(|| {
        let d0 = norm_scaled(&y, &y, opts);
        let d1 = norm_scaled(&k[0], &y, opts);
        let h0 = if d0 > 1e-10 && d1 > 1e-10 {
            0.01 * d0 / d1
        } else {
            1e-6 * (t_end - t0).abs().max(1e-12)
        };
        h0.min((t_end - t0) / 10.0)
    });
    if let Some(hm) = opts.h_max {
        h = h.min(hm);
    }

    let mut steps = 0usize;
    let mut fsal_valid = true;

    while t < t_end {
        if steps >= opts.max_steps {
            return StopReason::StepUnderflow;
        }
        steps += 1;

        let next_sample = samples.peek().copied().unwrap_or(t_end);
        let mut h_try = h.min(t_end - t);
        let mut hit_sample = false;
        if t + h_try >= next_sample - 1e-14 * next_sample.abs().max(1.0) {
            h_try = next_sample - t;
            hit_sample = true;
        }
        if h_try <= 1e-14 * t.abs().max(1.0) {
            // Degenerate interval; treat the sample as reached.
            observe(next_sample, &y);
            samples.next();
            t = next_sample;
            continue;
        }

        if !fsal_valid {
            if f(t, &y, &mut k[0]) == RhsStatus::Halt {
                return StopReason::Halted;
            }
            fsal_valid = true;
        }

        // Stages 2..7.
        let mut halted = false;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                y_stage[i] = y[i] + h_try * acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            if f(t + C[s] * h_try, &y_stage, &mut tail[0]) == RhsStatus::Halt {
                halted = true;
                break;
            }
        }
        if halted {
            return StopReason::Halted;
        }

        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                if B5[j] != 0.0 {
                    acc += B5[j] * kj[i];
                }
            }
            y_new[i] = y[i] + h_try * acc;
        }

        // Embedded error estimate.
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                let d = B5[j] - B4[j];
                if d != 0.0 {
                    e += d * kj[i];
                }
            }
            e *= h_try;
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc) * (e / sc);
        }
        let err = (err_sq / n as f64).sqrt();

        if err <= 1.0 {
            t += h_try;
            std::mem::swap(&mut y, &mut y_new);
            // FSAL: k7 of the accepted step is k1 of the next.
            k.swap(0, 6);
            fsal_valid = true;

            if hit_sample {
                observe(t, &y);
                samples.next();
            }

            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = h_try * fac;
            if let Some(hm) = opts.h_max {
                h = h.min(hm);
            }
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            h = h_try * fac;
            // y is unchanged, so k[0] = f(t, y) is still valid.
            if h < 1e-14 * t.abs().max(1.0) {
                return StopReason::StepUnderflow;
            }
        }
    }
    StopReason::Done
}

fn norm_scaled(v: &[f64], y: &[f64], opts: &OdeOptions) -> f64 {
    let mut s = 0.0;
    for i in 0..v.len() {
        let sc = opts.abs_tol + opts.rel_tol * y[i].abs();
        s += (v[i] / sc) * (v[i] / sc);
    }
    (s / v.len().max(1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let opts = OdeOptions::default();
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.3).collect();
        let mut got = Vec::new();
        let reason = integrate_sampled(
            |_t, y, dy| {
                dy[0] = -y[0];
                RhsStatus::Ok
            },
            0.0,
            &[1.0],
            &times,
            &opts,
            |t, y| got.push((t, y[0])),
        );
        assert_eq!(reason, StopReason::Done);
        assert_eq!(got.len(), times.len());
        for (t, v) in got {
            assert!((v - (-t).exp()).abs() < 1e-9, "t={t}: {v}");
        }
    }

    #[test]
    fn harmonic_oscillator_energy_conserved() {
        let opts = OdeOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            ..Default::default()
        };
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * 0.5).collect();
        let mut last = (0.0, 0.0);
        integrate_sampled(
            |_t, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                RhsStatus::Ok
            },
            0.0,
            &[1.0, 0.0],
            &times,
            &opts,
            |_t, y| last = (y[0], y[1]),
        );
        let e = last.0 * last.0 + last.1 * last.1;
        assert!((e - 1.0).abs() < 1e-8);
    }

    #[test]
    fn halt_stops_early() {
        let opts = OdeOptions::default();
        let times: Vec<f64> = vec![0.0, 1.0, 2.0];
        let mut seen = 0;
        let reason = integrate_sampled(
            |t, y, dy| {
                if t > 0.5 {
                    return RhsStatus::Halt;
                }
                dy[0] = y[0];
                RhsStatus::Ok
            },
            0.0,
            &[1.0],
            &times,
            &opts,
            |_t, _y| seen += 1,
        );
        assert_eq!(reason, StopReason::Halted);
        assert_eq!(seen, 1); // only t=0 emitted
    }
}

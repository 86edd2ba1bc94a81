//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS line with its measured numbers (visible under --nocapture).
//!
//! The band-limit sweep feeds two criteria and runs once via a shared
//! cache; heavy solves take a global lock so wall-clock budgets are
//! meaningful on small machines.

use ndarray::{Array2, Array3};
use rollscan_core::analysis::{dominant_period, temporal_contrast, temporal_spectrum};
use rollscan_core::forward::{ForwardOperator, VideoVolume, forward_apply};
use rollscan_core::optics::simulate_lenslet_psf;
use rollscan_core::scenegen::{LedArraySpec, make_led_scene};
use rollscan_core::shutter::{ShutterMask, ShutterMode, TimingConfig};
use rollscan_core::solver::{
    SolverParams, StepSize, fista_solve, gradient3d, tv_seminorm, tv3d_prox,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

static HEAVY: Mutex<()> = Mutex::new(());

fn timing(
    mode: ShutterMode,
    rows: usize,
    frames: usize,
    exposure_us: f64,
    line_us: f64,
) -> TimingConfig {
    TimingConfig {
        exposure_time_us: exposure_us,
        line_time_us: line_us,
        mode,
        num_rows: rows,
        num_frames: frames,
    }
}

fn dot2(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn dot3(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn norm2(a: &Array2<f64>) -> f64 {
    dot2(a, a).sqrt()
}

/// Criterion 1: the measurement operator and its adjoint satisfy the
/// inner-product identity to 1e-10 on 100 seeded random instances across
/// all three shutter modes, within 10 seconds.
#[test]
fn criterion_1_adjoint_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let modes = [
        ShutterMode::RollingSingle,
        ShutterMode::RollingDual,
        ShutterMode::Global,
    ];
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let mode = modes[trial % 3];
        let rows = 2 * rng.random_range(2..=8usize); // even for dual
        let cols = rng.random_range(4..=16usize);
        let frames = rng.random_range(1..=5usize);
        let n_l = rng.random_range(1..=3usize);
        let psf_rows = rng.random_range(1..=7usize);
        let psf_cols = rng.random_range(1..=7usize);

        let cfg = timing(mode, rows, frames, 100.0 * n_l as f64, 100.0);
        let mask = ShutterMask::build(&cfg).unwrap();
        let psf = Array2::from_shape_fn((psf_rows, psf_cols), |_| rng.random_range(0.0..1.0));
        let op = ForwardOperator::same_grid(&psf, mask, cols).unwrap();

        let v = Array3::from_shape_fn((frames, rows, cols), |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0));
        let av = op.apply(&v).unwrap();
        let atw = op.adjoint(&w).unwrap();
        let gap = (dot2(&av, &w) - dot3(&v, &atw)).abs();
        let scale = norm2(&av) * norm2(&w);
        if scale > 0.0 {
            worst = worst.max(gap / scale);
        }
        assert!(
            gap / scale.max(1e-300) < 1e-10,
            "trial {trial} ({mode:?}): relative adjoint gap {}",
            gap / scale
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "adjoint suite took {elapsed:.1}s");
    println!(
        "criterion 1 PASS: adjoint identity on 100 instances, worst relative gap {worst:.2e}, {elapsed:.1}s"
    );
}

/// Direct-sum evaluation of the full forward model: per-frame O(n^4)
/// convolution, centered crop, row masking, frame accumulation.
fn forward_direct(
    volume: &Array3<f64>,
    psf: &Array2<f64>,
    mask: &ShutterMask,
    sensor: (usize, usize),
) -> Array2<f64> {
    let (frames, sy, sx) = volume.dim();
    let (py, px) = psf.dim();
    let full = (sy + py - 1, sx + px - 1);
    let (oy, ox) = ((full.0 - sensor.0) / 2, (full.1 - sensor.1) / 2);
    let mut out = Array2::<f64>::zeros(sensor);
    for k in 0..frames {
        for r in 0..sensor.0 {
            if !mask.is_active(k, r) {
                continue;
            }
            for c in 0..sensor.1 {
                let (fr, fc) = (r + oy, c + ox);
                let mut acc = 0.0;
                for p in 0..py {
                    for q in 0..px {
                        if fr >= p && fc >= q {
                            let (ur, uc) = (fr - p, fc - q);
                            if ur < sy && uc < sx {
                                acc += psf[(p, q)] * volume[(k, ur, uc)];
                            }
                        }
                    }
                }
                out[(r, c)] += acc;
            }
        }
    }
    out
}

/// Criterion 2: the FFT-path forward model matches the direct-sum oracle
/// to 1e-10 relative on instances up to 32x32x4, within 30 seconds.
#[test]
fn criterion_2_forward_model_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let cases = [
        (8usize, 8usize, 2usize, 3usize, 3usize, ShutterMode::RollingSingle, 1usize),
        (8, 8, 2, 3, 3, ShutterMode::RollingDual, 1),
        (8, 8, 2, 3, 3, ShutterMode::Global, 2),
        (12, 10, 3, 5, 3, ShutterMode::RollingSingle, 2),
        (16, 16, 4, 7, 7, ShutterMode::RollingDual, 2),
        (16, 12, 4, 9, 5, ShutterMode::Global, 3),
        (24, 24, 4, 11, 11, ShutterMode::RollingSingle, 3),
        (32, 32, 4, 8, 8, ShutterMode::RollingSingle, 2),
        (32, 32, 4, 13, 13, ShutterMode::RollingDual, 3),
        (32, 32, 4, 32, 32, ShutterMode::Global, 2),
        (32, 24, 4, 16, 9, ShutterMode::RollingSingle, 4),
        (32, 32, 4, 5, 31, ShutterMode::RollingDual, 1),
    ];
    let mut worst: f64 = 0.0;
    for &(rows, cols, frames, py, px, mode, n_l) in &cases {
        let cfg = timing(mode, rows, frames, 100.0 * n_l as f64, 100.0);
        let mask = ShutterMask::build(&cfg).unwrap();
        let psf = Array2::from_shape_fn((py, px), |_| rng.random_range(0.0..1.0));
        let op = ForwardOperator::same_grid(&psf, mask.clone(), cols).unwrap();
        let v = Array3::from_shape_fn((frames, rows, cols), |_| rng.random_range(0.0..1.0));

        let fft_path = op.apply(&v).unwrap();
        let direct = forward_direct(&v, &psf, &mask, (rows, cols));
        let err = (&fft_path - &direct).iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = norm2(&direct).max(1e-300);
        worst = worst.max(err / scale);
        assert!(
            err / scale < 1e-10,
            "{mode:?} {rows}x{cols}x{frames} psf {py}x{px}: rel err {}",
            err / scale
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "oracle sweep took {elapsed:.1}s");
    println!(
        "criterion 2 PASS: FFT forward matches direct sum on {} instances, worst rel err {worst:.2e}, {elapsed:.1}s",
        cases.len()
    );
}

/// Criterion 3: a simulated LED measurement at pulse period 1980 us,
/// line time 220 us, exposure 660 us shows a dominant row-modulation
/// period of exactly 9 rows (FFT-bin exact), within a minute.
#[test]
fn criterion_3_envelope_period_reproduction() {
    let start = Instant::now();
    let rows = 108usize; // 12 envelope periods
    let cols = 64usize;
    let frames = 110usize; // covers the whole scan (>= 90 per the setup)
    let cfg = timing(ShutterMode::RollingSingle, rows, frames, 660.0, 220.0);
    assert!(frames >= 90 && frames >= cfg.frames_per_capture());
    let mask = ShutterMask::build(&cfg).unwrap();
    let psf = simulate_lenslet_psf(300, 1.5, (rows, cols), 11).unwrap();
    let spec = LedArraySpec {
        num_leds: 4,
        spacing_px: 10.0,
        pulse_period_us: 1980.0,
        duty_cycle: 0.5,
        amplitude: 1.0,
        spot_sigma_px: None,
    };
    let scene = make_led_scene(&spec, (cols, rows, frames), 220.0).unwrap();
    let measurement = forward_apply(&scene, &psf, &mask).unwrap();

    let profile: Vec<f64> = measurement
        .values
        .rows()
        .into_iter()
        .map(|r| r.sum() / r.len() as f64)
        .collect();
    let period = dominant_period(&profile).expect("no modulation detected");
    assert_eq!(period, 9.0, "row modulation period {period}");

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "envelope check took {elapsed:.1}s");
    println!(
        "criterion 3 PASS: dominant row modulation period {period} rows (exact), {elapsed:.1}s"
    );
}

struct SweepPoint {
    period_us: f64,
    contrast: f64,
    peak_hz: f64,
    bin_width_hz: f64,
}

struct SweepResults {
    points: Vec<SweepPoint>,
    elapsed_s: f64,
}

/// The shared simulate+reconstruct sweep over LED pulse periods
/// {2640, 1980, 1320, 660} us at 660 us exposure on a 64x64x64 grid.
fn band_limit_sweep() -> &'static SweepResults {
    static SWEEP: OnceLock<SweepResults> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let _guard = HEAVY.lock().unwrap();
        let start = Instant::now();
        let side = 64usize;
        let frames = 64usize;
        let cfg = timing(ShutterMode::RollingSingle, side, frames, 660.0, 220.0);
        let mask = ShutterMask::build(&cfg).unwrap();
        let psf = simulate_lenslet_psf(150, 1.2, (side, side), 21).unwrap();
        let plane = psf.plane(0).unwrap().clone();
        let op = ForwardOperator::same_grid(&plane, mask, side).unwrap();

        let params = SolverParams {
            tv_weight: 1e-6,
            temporal_weight: 10.0,
            max_iters: 300,
            rel_tol: 1e-10,
            step_size: StepSize::Auto,
            prox_inner_iters: 4,
            nonneg: true,
        };

        let mut points = Vec::new();
        for period_us in [2640.0, 1980.0, 1320.0, 660.0] {
            let spec = LedArraySpec {
                num_leds: 4,
                spacing_px: 10.0,
                pulse_period_us: period_us,
                duty_cycle: 0.5,
                amplitude: 1.0,
                spot_sigma_px: None,
            };
            let scene = make_led_scene(&spec, (side, side, frames), 220.0).unwrap();
            let b = op.apply(&scene.values).unwrap();
            let (x, _) = fista_solve(&op, &b, &params).unwrap();
            let recon = VideoVolume {
                values: x,
                lateral_pitch_um: 1.0,
                frame_spacing_us: 220.0,
                channel_id: 0,
            };
            let positions = spec.positions(side, side).unwrap();
            let contrast = temporal_contrast(&recon, &positions, 1).unwrap();

            let mut voxel_mask = Array2::from_elem((side, side), false);
            for &(x, y) in &positions {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let yy = (y as i64 + dy).clamp(0, side as i64 - 1) as usize;
                        let xx = (x as i64 + dx).clamp(0, side as i64 - 1) as usize;
                        voxel_mask[(yy, xx)] = true;
                    }
                }
            }
            let spectrum = temporal_spectrum(&recon, Some(&voxel_mask)).unwrap();
            points.push(SweepPoint {
                period_us,
                contrast,
                peak_hz: spectrum.peak_hz.unwrap_or(0.0),
                bin_width_hz: spectrum.bin_width_hz(),
            });
        }
        SweepResults {
            points,
            elapsed_s: start.elapsed().as_secs_f64(),
        }
    })
}

/// Criterion 4: the reconstruction sweep reproduces the exposure-time
/// band limit: temporal contrast decreases monotonically with pulse
/// frequency, is above 0.5 at the 2640 us period, and collapses below
/// 0.1 at the 660 us period (the exposure time), within 10 minutes.
#[test]
fn criterion_4_band_limit_reproduction() {
    let sweep = band_limit_sweep();
    let contrasts: Vec<f64> = sweep.points.iter().map(|p| p.contrast).collect();
    for pair in sweep.points.windows(2) {
        assert!(
            pair[1].contrast <= pair[0].contrast + 1e-9,
            "contrast not monotone: {:?}",
            contrasts
        );
    }
    assert!(
        sweep.points[0].contrast > 0.5,
        "contrast at 2640 us: {}",
        sweep.points[0].contrast
    );
    assert!(
        sweep.points[3].contrast < 0.1,
        "contrast at 660 us: {}",
        sweep.points[3].contrast
    );
    assert!(
        sweep.elapsed_s < 600.0,
        "band-limit sweep took {:.0}s",
        sweep.elapsed_s
    );
    println!(
        "criterion 4 PASS: contrasts {:.3}/{:.3}/{:.3}/{:.3} for periods 2640/1980/1320/660 us, {:.0}s",
        contrasts[0], contrasts[1], contrasts[2], contrasts[3], sweep.elapsed_s
    );
}

/// Criterion 5: for pulse periods >= 1320 us the reconstruction's
/// temporal spectrum peaks at the driven LED frequency within one DFT
/// bin.
#[test]
fn criterion_5_spectral_peak_recovery() {
    let sweep = band_limit_sweep();
    for point in sweep.points.iter().filter(|p| p.period_us >= 1320.0) {
        let f_led = 1e6 / point.period_us;
        assert!(
            (point.peak_hz - f_led).abs() <= point.bin_width_hz,
            "period {}: peak {:.1} Hz vs driven {:.1} Hz (bin {:.1})",
            point.period_us,
            point.peak_hz,
            f_led,
            point.bin_width_hz
        );
    }
    let described: Vec<String> = sweep
        .points
        .iter()
        .filter(|p| p.period_us >= 1320.0)
        .map(|p| format!("{:.0}us->{:.0}Hz", p.period_us, p.peak_hz))
        .collect();
    println!(
        "criterion 5 PASS: spectral peaks within one bin of the drive ({})",
        described.join(", ")
    );
}

/// High-accuracy reference prox: accelerated projected gradient on the
/// dual problem.
fn prox_reference(
    z: &Array3<f64>,
    lambda: f64,
    alpha: f64,
    iters: usize,
) -> Array3<f64> {
    let dims = z.dim();
    let bounds = [lambda, lambda, lambda * alpha];
    let mut p: Vec<Array3<f64>> = (0..3).map(|_| Array3::zeros(dims)).collect();
    let mut p_prev = p.clone();
    let step = 1.0 / 12.0;
    let mut momentum = 1.0f64;

    let primal = |p: &[Array3<f64>]| -> Array3<f64> {
        let (k, rows, cols) = dims;
        let mut x = z.clone();
        for f in 0..k {
            for r in 0..rows {
                for c in 0..cols {
                    let mut acc = 0.0;
                    if c + 1 < cols {
                        acc -= p[0][(f, r, c)];
                    }
                    if c > 0 {
                        acc += p[0][(f, r, c - 1)];
                    }
                    if r + 1 < rows {
                        acc -= p[1][(f, r, c)];
                    }
                    if r > 0 {
                        acc += p[1][(f, r - 1, c)];
                    }
                    if f + 1 < k {
                        acc -= p[2][(f, r, c)];
                    }
                    if f > 0 {
                        acc += p[2][(f - 1, r, c)];
                    }
                    x[(f, r, c)] -= acc;
                }
            }
        }
        x
    };

    for _ in 0..iters {
        let y: Vec<Array3<f64>> = {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            momentum = next;
            (0..3)
                .map(|a| &p[a] + &((&p[a] - &p_prev[a]) * beta))
                .collect()
        };
        let x = primal(&y);
        let (dx, dy, dt) = gradient3d(&x, 1.0);
        let grads = [dx, dy, dt];
        p_prev = p.clone();
        p = (0..3)
            .map(|a| {
                let bound = bounds[a];
                let mut next = &y[a] + &(&grads[a] * step);
                next.mapv_inplace(|v| v.clamp(-bound, bound));
                next
            })
            .collect();
    }
    primal(&p)
}

fn prox_objective(x: &Array3<f64>, z: &Array3<f64>, lambda: f64, alpha: f64) -> f64 {
    let quad: f64 = x
        .iter()
        .zip(z.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        * 0.5;
    quad + lambda * tv_seminorm(x, alpha)
}

/// Criterion 6: the TV prox lands within 1e-3 (relative objective) of a
/// high-accuracy reference on 50 random instances up to 4x4x3, and never
/// increases the prox objective on 1000 random instances, within 2
/// minutes.
#[test]
fn criterion_6_tv_prox_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let mut worst_rel: f64 = 0.0;
    for trial in 0..50 {
        let dims = (
            rng.random_range(1..=3usize),
            rng.random_range(2..=4usize),
            rng.random_range(2..=4usize),
        );
        let z = Array3::from_shape_fn(dims, |_| rng.random_range(-1.0..1.0));
        let lambda = rng.random_range(0.02..0.5);
        let alpha = rng.random_range(0.5..4.0);
        let ours = tv3d_prox(&z, lambda, alpha, 400);
        let reference = prox_reference(&z, lambda, alpha, 20_000);
        let obj_ours = prox_objective(&ours, &z, lambda, alpha);
        let obj_ref = prox_objective(&reference, &z, lambda, alpha);
        let rel = (obj_ours - obj_ref).abs() / obj_ref.abs().max(1e-300);
        worst_rel = worst_rel.max(rel);
        assert!(rel < 1e-3, "trial {trial} dims {dims:?}: rel objective gap {rel}");
    }

    for trial in 0..1000 {
        let dims = (
            rng.random_range(1..=3usize),
            rng.random_range(1..=3usize),
            rng.random_range(2..=3usize),
        );
        let z = Array3::from_shape_fn(dims, |_| rng.random_range(-1.0..1.0));
        let lambda = rng.random_range(0.0..1.0);
        let alpha = rng.random_range(0.5..3.0);
        let out = tv3d_prox(&z, lambda, alpha, 4);
        let before = prox_objective(&z, &z, lambda, alpha);
        let after = prox_objective(&out, &z, lambda, alpha);
        assert!(after <= before + 1e-12, "trial {trial}: {after} > {before}");
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "prox oracle took {elapsed:.1}s");
    println!(
        "criterion 6 PASS: prox within {worst_rel:.2e} of the dual reference on 50 instances; objective never increased on 1000, {elapsed:.1}s"
    );
}

/// Criterion 7: solver sanity — analytic gradient vs central differences
/// to 1e-5; unregularized toy solve reaches the least-squares solution to
/// 1e-6; sparse flashing-point support recovery at 64x64x16 reaches
/// precision and recall >= 0.9; all within 5 minutes.
#[test]
fn criterion_7_solver_sanity() {
    let _guard = HEAVY.lock().unwrap();
    let start = Instant::now();

    // gradient check
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let cfg = timing(ShutterMode::RollingSingle, 6, 4, 200.0, 100.0);
    let mask = ShutterMask::build(&cfg).unwrap();
    let psf = Array2::from_shape_fn((3, 3), |_| rng.random_range(0.0..1.0));
    let op = ForwardOperator::same_grid(&psf, mask, 6).unwrap();
    let v = Array3::from_shape_fn((4, 6, 6), |_| rng.random_range(-1.0..1.0));
    let b = Array2::from_shape_fn((6, 6), |_| rng.random_range(-1.0..1.0));
    let grad = op.adjoint(&(op.apply(&v).unwrap() - &b)).unwrap();
    let f = |vv: &Array3<f64>| -> f64 {
        let r = op.apply(vv).unwrap() - &b;
        0.5 * r.iter().map(|x| x * x).sum::<f64>()
    };
    let eps = 1e-6;
    let mut worst_grad: f64 = 0.0;
    for _ in 0..20 {
        let idx = (
            rng.random_range(0..4),
            rng.random_range(0..6),
            rng.random_range(0..6),
        );
        let mut plus = v.clone();
        plus[idx] += eps;
        let mut minus = v.clone();
        minus[idx] -= eps;
        let fd = (f(&plus) - f(&minus)) / (2.0 * eps);
        let rel = (fd - grad[idx]).abs() / grad[idx].abs().max(1e-8);
        worst_grad = worst_grad.max(rel);
        assert!(rel < 1e-5, "gradient mismatch: fd {fd} vs {}", grad[idx]);
    }

    // unregularized toy converges to the least-squares solution
    let cfg = timing(ShutterMode::Global, 8, 1, 100.0, 100.0);
    let mask = ShutterMask::build(&cfg).unwrap();
    let mut impulse = Array2::<f64>::zeros((3, 3));
    impulse[(1, 1)] = 1.0;
    let toy = ForwardOperator::same_grid(&impulse, mask, 8).unwrap();
    let v_true = Array3::from_shape_fn((1, 8, 8), |_| rng.random_range(0.0..1.0));
    let b = toy.apply(&v_true).unwrap();
    let params = SolverParams {
        tv_weight: 0.0,
        nonneg: false,
        max_iters: 200,
        rel_tol: 1e-14,
        ..SolverParams::default()
    };
    let (x, _) = fista_solve(&toy, &b, &params).unwrap();
    let rel_err = (&x - &v_true).iter().map(|d| d * d).sum::<f64>().sqrt()
        / v_true.iter().map(|d| d * d).sum::<f64>().sqrt();
    assert!(rel_err < 1e-6, "least-squares error {rel_err}");

    // sparse support recovery at 64x64x16, dual shutter, noiseless
    let side = 64usize;
    let frames = 16usize;
    let cfg = timing(ShutterMode::RollingDual, side, frames, 440.0, 220.0);
    let mask = ShutterMask::build(&cfg).unwrap();
    let psf = simulate_lenslet_psf(150, 1.0, (side, side), 7).unwrap();
    let plane = psf.plane(0).unwrap().clone();
    let op = ForwardOperator::same_grid(&plane, mask, side).unwrap();

    let mut v_true = Array3::<f64>::zeros((frames, side, side));
    let points = [(20usize, 14usize), (32, 40), (45, 27)];
    for k in 0..frames {
        if k % 6 < 3 {
            for &(y, x) in &points {
                v_true[(k, y, x)] = 1.0;
            }
        }
    }
    let b = op.apply(&v_true).unwrap();
    let params = SolverParams {
        tv_weight: 5e-8,
        temporal_weight: 5.0,
        max_iters: 1000,
        rel_tol: 1e-12,
        ..SolverParams::default()
    };
    let (x, _) = fista_solve(&op, &b, &params).unwrap();
    let metrics = rollscan_core::analysis::recon_metrics(&x, &v_true).unwrap();
    assert!(
        metrics.support_precision >= 0.9 && metrics.support_recall >= 0.9,
        "precision {} recall {}",
        metrics.support_precision,
        metrics.support_recall
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "solver sanity took {elapsed:.1}s");
    println!(
        "criterion 7 PASS: gradient gap {worst_grad:.2e}, LS error {rel_err:.2e}, support precision {:.3} recall {:.3}, {elapsed:.0}s",
        metrics.support_precision, metrics.support_recall
    );
}

/// Criterion 8: timing arithmetic matches the published sensor values
/// exactly.
#[test]
fn criterion_8_timing_arithmetic() {
    let cfg = timing(ShutterMode::RollingSingle, 64, 64, 660.0, 220.0);
    assert_eq!(cfg.lines_per_exposure(), 3);

    assert!((cfg.effective_frame_rate_fps() - 1e6 / 220.0).abs() < 1e-9);
    assert!((cfg.effective_frame_rate_fps() - 4545.4545).abs() < 0.01);

    let dual = timing(ShutterMode::RollingDual, 280, 140, 27.5, 27.5);
    assert_eq!(dual.frames_per_capture(), 140);
    assert_eq!(dual.frames_per_capture(), 280 / 2);

    println!(
        "criterion 8 PASS: lines_per_exposure {}, frame rate {:.2} fps, dual capture {} frames",
        cfg.lines_per_exposure(),
        cfg.effective_frame_rate_fps(),
        dual.frames_per_capture()
    );
}

/// Criterion 9: simulate + reconstruct write bit-identical artifacts for
/// repeated runs of the same manifest under different thread counts.
#[test]
fn criterion_9_determinism_across_thread_counts() {
    let _guard = HEAVY.lock().unwrap();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();

    let run = |label: &str, threads: usize| -> Vec<(String, Vec<u8>)> {
        let out = dir.path().join(label);
        let text = format!(
            "\
timing.exposure_time_us = 440
timing.line_time_us = 220
timing.mode = rolling_dual
timing.num_frames = 10
scene.width = 24
scene.height = 24
scene.kind = led_array
scene.num_leds = 2
scene.led_spacing_px = 8
scene.pulse_period_us = 1320
psf.kind = lenslet
psf.num_lenslets = 60
psf.spot_sigma_px = 1.0
noise.gaussian_sigma = 0.0001
noise.poisson_scale = 1e6
solver.tv_weight = 1e-7
solver.temporal_weight = 5
solver.max_iters = 40
solver.rel_tol = 1e-9
output_dir = {}
seed = 13
",
            out.display()
        );
        let config = rollscan_cli::config::RunConfig::from_str(&text).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let sim = rollscan_cli::cmd_simulate(&config, &out).unwrap();
            let recon_text = format!("{text}measurement.path = {}\n", sim.measurement_path.display());
            let recon_config = rollscan_cli::config::RunConfig::from_str(&recon_text).unwrap();
            rollscan_cli::cmd_reconstruct(&recon_config, &out).unwrap();
        });

        let mut artifacts: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().to_string(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        artifacts.sort_by(|a, b| a.0.cmp(&b.0));
        artifacts
    };

    let single = run("threads1", 1);
    let quad = run("threads4", 4);
    let again = run("threads1_again", 1);

    // manifests embed the user-chosen output locations, which differ by
    // construction here; compare them with those lines masked and every
    // computed artifact byte-for-byte
    let normalize = |name: &str, bytes: &[u8]| -> Vec<u8> {
        if name == "manifest.txt" {
            String::from_utf8_lossy(bytes)
                .lines()
                .filter(|l| {
                    !l.starts_with("output_dir =") && !l.starts_with("measurement.path =")
                })
                .collect::<Vec<_>>()
                .join("\n")
                .into_bytes()
        } else {
            bytes.to_vec()
        }
    };

    assert_eq!(single.len(), quad.len());
    assert!(single.len() > 5, "expected a full artifact set");
    for ((name_a, bytes_a), (name_b, bytes_b)) in single.iter().zip(quad.iter()) {
        assert_eq!(name_a, name_b);
        assert_eq!(
            normalize(name_a, bytes_a),
            normalize(name_b, bytes_b),
            "{name_a} differs between 1 and 4 threads"
        );
    }
    for ((name_a, bytes_a), (name_b, bytes_b)) in single.iter().zip(again.iter()) {
        assert_eq!(name_a, name_b);
        assert_eq!(
            normalize(name_a, bytes_a),
            normalize(name_b, bytes_b),
            "{name_a} differs between repeated runs"
        );
    }

    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 9 PASS: {} artifacts bit-identical across thread counts and repeats, {elapsed:.0}s",
        single.len()
    );
}

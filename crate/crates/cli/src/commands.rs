//! The four pipeline commands. Each writes its artifacts plus a manifest
//! of every resolved parameter (and derived quantities under `derived.`)
//! into the output directory; manifests are themselves loadable configs.

use crate::config::{PsfSource, RunConfig, SceneSpec};
use ndarray::{Array2, Array3};
use rollscan_core::analysis::{
    Reducer, dominant_period, recon_metrics, temporal_contrast, temporal_spectrum, xt_projection,
};
use rollscan_core::error::{CoreError, Result};
use rollscan_core::forward::{ForwardOperator, Measurement, VideoVolume};
use rollscan_core::io;
use rollscan_core::optics::{Psf, PsfNormalization, autocorrelation_slice, bin_array,
    simulate_lenslet_psf};
use rollscan_core::scenegen::{add_noise, make_led_scene, make_moving_disk_scene};
use rollscan_core::shutter::ShutterMask;
use rollscan_core::solver::fista_solve;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Saturation fraction above which a calibration image draws a warning.
const SATURATION_WARN_FRACTION: f64 = 0.01;

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_manifest(
    dir: &Path,
    config: &RunConfig,
    derived: &[(String, String)],
) -> Result<PathBuf> {
    let mut text = String::new();
    for (k, v) in config.manifest_lines() {
        writeln!(text, "{k} = {v}").unwrap();
    }
    for (k, v) in derived {
        writeln!(text, "derived.{k} = {v}").unwrap();
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, text)?;
    Ok(path)
}

/// Resolve the PSF source: load a container/PNG or synthesize lenslets at
/// the sensor extent, seeded by the run seed.
pub fn resolve_psf(config: &RunConfig) -> Result<Psf> {
    match &config.psf {
        PsfSource::Lenslet {
            num_lenslets,
            spot_sigma_px,
        } => simulate_lenslet_psf(
            *num_lenslets,
            *spot_sigma_px,
            (config.timing.num_rows, config.scene_width),
            config.seed,
        ),
        PsfSource::File(path) => {
            let ext = path
                .extension()
                .and_then(|e| e.to_str())
                .unwrap_or("")
                .to_ascii_lowercase();
            if ext == "png" {
                let planes = io::read_png(path)?;
                Psf::new(planes, 1.0, PsfNormalization::SumToOne)
            } else {
                io::read_psf(path)
            }
        }
    }
}

fn build_scene(config: &RunConfig) -> Result<VideoVolume> {
    let dims = (
        config.scene_width,
        config.scene_height,
        config.timing.num_frames,
    );
    match config.scene.as_ref().ok_or_else(|| {
        CoreError::Config("scene.kind is required for simulation".into())
    })? {
        SceneSpec::LedArray(spec) => make_led_scene(spec, dims, config.timing.line_time_us),
        SceneSpec::MovingDisk {
            radius_px,
            velocity_px_per_frame,
        } => make_moving_disk_scene(
            *radius_px,
            *velocity_px_per_frame,
            dims,
            config.timing.line_time_us,
        ),
    }
}

fn timing_derived(config: &RunConfig) -> Vec<(String, String)> {
    let t = &config.timing;
    let mut derived = vec![
        ("lines_per_exposure".to_string(), format!("{}", t.lines_per_exposure())),
        (
            "effective_frame_rate_fps".to_string(),
            format!("{:.2}", t.effective_frame_rate_fps()),
        ),
        ("frames_per_capture".to_string(), format!("{}", t.frames_per_capture())),
        ("aliasing_free".to_string(), format!("{}", t.is_aliasing_free())),
    ];
    if let Some(SceneSpec::LedArray(spec)) = &config.scene {
        derived.push((
            "envelope_period_rows".to_string(),
            format!("{:.4}", spec.pulse_period_us / t.line_time_us),
        ));
    }
    derived
}

pub struct SimulateOutputs {
    pub measurement_path: PathBuf,
    pub truth_path: PathBuf,
    pub psf_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Generate scene, PSF, and shutter; write the measurement, ground truth,
/// PSF, and manifest.
pub fn cmd_simulate(config: &RunConfig, out_dir: &Path) -> Result<SimulateOutputs> {
    config.check_inputs()?;
    ensure_dir(out_dir)?;
    let psf = resolve_psf(config)?;
    let scene = build_scene(config)?;
    let mask = ShutterMask::build(&config.timing)?;

    let mut measurement_planes: Vec<Array2<f64>> = Vec::new();
    for channel in 0..psf.num_channels() {
        let channel_scene = VideoVolume {
            values: scene.values.clone(),
            lateral_pitch_um: scene.lateral_pitch_um,
            frame_spacing_us: scene.frame_spacing_us,
            channel_id: channel,
        };
        let clean = rollscan_core::forward::forward_apply(&channel_scene, &psf, &mask)?;
        // FFT roundoff can leave values a hair below zero; shot noise
        // needs a physical (nonnegative) exposure
        let clamped = Measurement {
            values: clean.values.mapv(|v| v.max(0.0)),
            timing: clean.timing,
            channel_id: clean.channel_id,
        };
        let noise = rollscan_core::scenegen::NoiseSpec {
            seed: config.noise.seed.wrapping_add(channel as u64),
            ..config.noise
        };
        let noisy = add_noise(&clamped, &noise)?;
        measurement_planes.push(noisy.values);
    }

    let measurement_path = out_dir.join("measurement.vol");
    {
        let as_volumes: Vec<Array3<f64>> = measurement_planes
            .iter()
            .map(|p| {
                let (rows, cols) = p.dim();
                p.clone().into_shape_with_order((1, rows, cols)).unwrap()
            })
            .collect();
        let refs: Vec<&Array3<f64>> = as_volumes.iter().collect();
        io::write_volumes(&measurement_path, &refs)?;
    }
    let plane_refs: Vec<&Array2<f64>> = measurement_planes.iter().collect();
    if plane_refs.len() == 1 || plane_refs.len() == 3 {
        io::write_png16(&out_dir.join("measurement.png"), &plane_refs)?;
    }

    let truth_path = out_dir.join("truth.vol");
    io::write_volumes(&truth_path, &[&scene.values])?;

    let psf_path = out_dir.join("psf.psf");
    io::write_psf(&psf_path, &psf)?;

    let manifest_path = write_manifest(out_dir, config, &timing_derived(config))?;
    Ok(SimulateOutputs {
        measurement_path,
        truth_path,
        psf_path,
        manifest_path,
    })
}

pub struct ReconstructOutputs {
    pub volume_path: PathBuf,
    pub objective_csv_paths: Vec<PathBuf>,
    pub manifest_path: PathBuf,
    pub converged: Vec<bool>,
}

/// Bin the measurement and PSF, run the solver per channel, and write the
/// recovered volume, per-frame PNGs, and objective traces.
pub fn cmd_reconstruct(config: &RunConfig, out_dir: &Path) -> Result<ReconstructOutputs> {
    config.check_inputs()?;
    ensure_dir(out_dir)?;

    let measurement_path = config.measurement_path.as_ref().ok_or_else(|| {
        CoreError::Config("measurement.path is required for reconstruction".into())
    })?;
    let measurement_channels = io::read_volumes(measurement_path)?;
    let psf = resolve_psf(config)?;
    if psf.num_channels() != measurement_channels.len() {
        return Err(CoreError::Dimension(format!(
            "PSF has {} channels but the measurement has {}",
            psf.num_channels(),
            measurement_channels.len()
        )));
    }

    let timing = config.timing.binned(config.binning_factor)?;
    let factor = config.binning_factor;
    let mask = ShutterMask::build(&timing)?;

    let mut recon_channels: Vec<Array3<f64>> = Vec::new();
    let mut objective_csv_paths = Vec::new();
    let mut converged = Vec::new();
    let mut iteration_notes: Vec<(String, String)> = Vec::new();

    for (channel, raw) in measurement_channels.iter().enumerate() {
        let (frames, rows, cols) = raw.dim();
        if frames != 1 {
            return Err(CoreError::Dimension(format!(
                "measurement channel {channel} has {frames} frames; expected a single exposure"
            )));
        }
        let full = raw.index_axis(ndarray::Axis(0), 0).to_owned();
        if rows != config.timing.num_rows {
            return Err(CoreError::Dimension(format!(
                "measurement has {rows} rows but timing.num_rows is {}",
                config.timing.num_rows
            )));
        }
        let binned = bin_array(&full, factor)?;
        let psf_plane = bin_array(psf.plane(channel)?, factor)?;

        let scene_shape = binned.dim();
        let op = ForwardOperator::new(scene_shape, scene_shape, &psf_plane, mask.clone())?;
        let (volume, report) = fista_solve(&op, &binned, &config.solver)?;

        let recovered = VideoVolume {
            values: volume,
            lateral_pitch_um: psf.pixel_pitch_um * factor as f64,
            frame_spacing_us: timing.line_time_us,
            channel_id: channel,
        };
        let recovered = recovered.bin_frames(config.temporal_bin)?;
        let _ = cols;

        let csv = out_dir.join(format!("objective_c{channel}.csv"));
        io::write_solve_report_csv(&csv, &report)?;
        objective_csv_paths.push(csv);
        converged.push(report.converged);
        iteration_notes.push((
            format!("solver_iterations_c{channel}"),
            format!("{}", report.iterations_run),
        ));
        iteration_notes.push((
            format!("solver_converged_c{channel}"),
            format!("{}", report.converged),
        ));
        recon_channels.push(recovered.values);
    }

    let volume_path = out_dir.join("recon.vol");
    {
        let refs: Vec<&Array3<f64>> = recon_channels.iter().collect();
        io::write_volumes(&volume_path, &refs)?;
    }

    // per-frame PNGs (grayscale for one channel, RGB for three)
    let frames = recon_channels[0].dim().0;
    for frame in 0..frames {
        let slices: Vec<Array2<f64>> = recon_channels
            .iter()
            .map(|v| v.index_axis(ndarray::Axis(0), frame).to_owned())
            .collect();
        let refs: Vec<&Array2<f64>> = slices.iter().collect();
        if refs.len() == 1 || refs.len() == 3 {
            io::write_png16(&out_dir.join(format!("frame_{frame:04}.png")), &refs)?;
        }
    }

    let mut derived = timing_derived(config);
    derived.push(("binned_rows".to_string(), format!("{}", timing.num_rows)));
    derived.push((
        "binned_line_time_us".to_string(),
        format!("{}", timing.line_time_us),
    ));
    derived.append(&mut iteration_notes);
    let manifest_path = write_manifest(out_dir, config, &derived)?;

    Ok(ReconstructOutputs {
        volume_path,
        objective_csv_paths,
        manifest_path,
        converged,
    })
}

pub struct CalibrateOutputs {
    pub psf_path: PathBuf,
    pub autocorrelation_csv: PathBuf,
    pub saturated_fraction: f64,
}

/// Load a point-source calibration image, subtract the background mode,
/// normalize each channel to unit sum, and write the PSF container plus
/// an autocorrelation-slice diagnostic.
pub fn cmd_calibrate(image_path: &Path, out_dir: &Path) -> Result<CalibrateOutputs> {
    ensure_dir(out_dir)?;
    let planes = io::read_png(image_path)?;

    // saturation warning on the raw image
    let mut saturated = 0usize;
    let mut total = 0usize;
    for plane in &planes {
        for v in plane.iter() {
            total += 1;
            if *v >= 1.0 - 0.5 / 65535.0 {
                saturated += 1;
            }
        }
    }
    let saturated_fraction = saturated as f64 / total.max(1) as f64;
    if saturated_fraction > SATURATION_WARN_FRACTION {
        eprintln!(
            "warning: {:.2}% of calibration pixels are saturated; the PSF may be clipped",
            saturated_fraction * 100.0
        );
    }

    // dark level = per-channel mode of the quantized histogram
    let dark_subtracted: Vec<Array2<f64>> = planes
        .iter()
        .map(|plane| {
            let mut histogram = std::collections::HashMap::<u32, usize>::new();
            for v in plane.iter() {
                *histogram.entry((v * 65535.0).round() as u32).or_default() += 1;
            }
            let mode = histogram
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(level, _)| level as f64 / 65535.0)
                .unwrap_or(0.0);
            plane.mapv(|v| (v - mode).max(0.0))
        })
        .collect();

    for (c, plane) in dark_subtracted.iter().enumerate() {
        if plane.sum() <= 0.0 {
            return Err(CoreError::Numerical(format!(
                "calibration channel {c} is empty after dark subtraction"
            )));
        }
    }

    let psf = Psf::new(dark_subtracted, 1.0, PsfNormalization::SumToOne)?;
    let psf_path = out_dir.join("psf.psf");
    io::write_psf(&psf_path, &psf)?;

    // autocorrelation slice of the first channel as CSV and a rendered curve
    let slice = autocorrelation_slice(psf.plane(0)?)?;
    let half = (slice.len() / 2) as isize;
    let series: Vec<(f64, f64)> = slice
        .iter()
        .enumerate()
        .map(|(i, v)| ((i as isize - half) as f64, *v))
        .collect();
    let autocorrelation_csv = out_dir.join("autocorrelation.csv");
    io::write_series_csv(&autocorrelation_csv, "lag_px", &series)?;
    io::write_png16(
        &out_dir.join("autocorrelation.png"),
        &[&render_curve(&slice, 200)],
    )?;

    Ok(CalibrateOutputs {
        psf_path,
        autocorrelation_csv,
        saturated_fraction,
    })
}

/// Render a 1D series as a simple curve image (rows = value axis).
fn render_curve(values: &[f64], height: usize) -> Array2<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    let mut img = Array2::<f64>::zeros((height, values.len()));
    for (x, v) in values.iter().enumerate() {
        let y = ((hi - v) / span * (height as f64 - 1.0)).round() as usize;
        img[(y.min(height - 1), x)] = 1.0;
    }
    img
}

pub struct AnalyzeOutputs {
    pub report_path: PathBuf,
    pub spectrum_csv: PathBuf,
    pub xt_png: PathBuf,
}

/// Emit x-t projections, the temporal spectrum, temporal contrast at the
/// configured source positions, and metrics against a truth volume when
/// given.
pub fn cmd_analyze(
    volume_path: &Path,
    config: &RunConfig,
    truth_path: Option<&Path>,
    out_dir: &Path,
) -> Result<AnalyzeOutputs> {
    ensure_dir(out_dir)?;
    let channels = io::read_volumes(volume_path)?;
    let frame_spacing_us = config.timing.line_time_us
        * config.binning_factor as f64
        * config.temporal_bin as f64;
    let volume = VideoVolume {
        values: channels[0].clone(),
        lateral_pitch_um: 1.0,
        frame_spacing_us,
        channel_id: 0,
    };

    let xt = xt_projection(&volume, Reducer::Max)?;
    let xt_png = out_dir.join("xt_projection.png");
    io::write_png16(&xt_png, &[&xt.values])?;

    let spectrum = temporal_spectrum(&volume, None)?;
    let spectrum_csv = out_dir.join("spectrum.csv");
    io::write_spectrum_csv(&spectrum_csv, &spectrum.frequencies_hz, &spectrum.power)?;

    let mut report = String::new();
    writeln!(report, "frames = {}", volume.num_frames()).unwrap();
    writeln!(report, "frame_spacing_us = {frame_spacing_us}").unwrap();
    match spectrum.peak_hz {
        Some(hz) => writeln!(report, "spectral_peak_hz = {hz:.4}").unwrap(),
        None => writeln!(report, "spectral_peak_hz = none").unwrap(),
    }

    if let Some(SceneSpec::LedArray(spec)) = &config.scene {
        let factor = config.binning_factor;
        let positions: Vec<(usize, usize)> = spec
            .positions(config.scene_width, config.scene_height)?
            .into_iter()
            .map(|(x, y)| (x / factor, y / factor))
            .collect();
        match temporal_contrast(&volume, &positions, 1) {
            Ok(contrast) => writeln!(report, "temporal_contrast = {contrast:.6}").unwrap(),
            Err(err) => writeln!(report, "temporal_contrast = unavailable ({err})").unwrap(),
        }
        // dominant row modulation of the x-t projection's time axis is
        // reported via the mean row profile when a truth volume is absent
    }

    if let Some(truth) = truth_path {
        let truth_channels = io::read_volumes(truth)?;
        let m = recon_metrics(&channels[0], &truth_channels[0])?;
        writeln!(report, "psnr_db = {:.4}", m.psnr_db).unwrap();
        writeln!(report, "support_precision = {:.6}", m.support_precision).unwrap();
        writeln!(report, "support_recall = {:.6}", m.support_recall).unwrap();
    }

    let report_path = out_dir.join("analysis.txt");
    fs::write(&report_path, report)?;
    Ok(AnalyzeOutputs {
        report_path,
        spectrum_csv,
        xt_png,
    })
}

/// Mean over columns of each measurement row; the profile that carries
/// the pulsed-scene envelope modulation.
pub fn row_profile(measurement: &Array2<f64>) -> Vec<f64> {
    measurement
        .rows()
        .into_iter()
        .map(|row| row.sum() / row.len() as f64)
        .collect()
}

/// Dominant row-modulation period of a measurement, in rows.
pub fn measurement_row_period(measurement: &Array2<f64>) -> Option<f64> {
    dominant_period(&row_profile(measurement))
}

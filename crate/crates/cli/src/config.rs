//! Plain-text run configuration: flat `key = value` lines with dotted
//! section prefixes (`timing.exposure_time_us = 660`). Lines starting
//! with `#` and blank lines are ignored, as are keys under `derived.`,
//! so a run manifest is itself a loadable configuration.

use rollscan_core::CoreError;
use rollscan_core::scenegen::{LedArraySpec, NoiseSpec};
use rollscan_core::shutter::{ShutterMode, TimingConfig};
use rollscan_core::solver::{SolverParams, StepSize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub type Result<T> = std::result::Result<T, CoreError>;

fn config_err(msg: impl Into<String>) -> CoreError {
    CoreError::Config(msg.into())
}

#[derive(Debug, Clone)]
pub enum PsfSource {
    /// PSF0 container or PNG calibration image.
    File(PathBuf),
    Lenslet {
        num_lenslets: usize,
        spot_sigma_px: f64,
    },
}

#[derive(Debug, Clone)]
pub enum SceneSpec {
    LedArray(LedArraySpec),
    MovingDisk {
        radius_px: f64,
        velocity_px_per_frame: (f64, f64),
    },
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub timing: TimingConfig,
    pub scene_width: usize,
    pub scene_height: usize,
    pub scene: Option<SceneSpec>,
    pub psf: PsfSource,
    pub measurement_path: Option<PathBuf>,
    pub solver: SolverParams,
    pub noise: NoiseSpec,
    pub binning_factor: usize,
    pub temporal_bin: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
}

struct KeyMap {
    values: BTreeMap<String, String>,
    used: std::collections::BTreeSet<String>,
}

impl KeyMap {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                config_err(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(config_err(format!("line {}: empty key", lineno + 1)));
            }
            if values.insert(key.clone(), value).is_some() {
                return Err(config_err(format!("duplicate config key '{key}'")));
            }
        }
        Ok(KeyMap {
            values,
            used: Default::default(),
        })
    }

    fn get(&mut self, key: &str) -> Option<&str> {
        if self.values.contains_key(key) {
            self.used.insert(key.to_string());
            self.values.get(key).map(|s| s.as_str())
        } else {
            None
        }
    }

    fn required(&mut self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| config_err(format!("missing required config key '{key}'")))
    }

    fn parse_num<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| config_err(format!("config key '{key}' has invalid value '{raw}'"))),
        }
    }

    fn parse_required<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let raw = self.required(key)?.to_string();
        raw.parse()
            .map_err(|_| config_err(format!("config key '{key}' has invalid value '{raw}'")))
    }

    fn finish(self) -> Result<()> {
        for key in self.values.keys() {
            if !self.used.contains(key) && !key.starts_with("derived.") {
                return Err(config_err(format!("unknown config key '{key}'")));
            }
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<RunConfig> {
        let mut map = KeyMap::parse(text)?;

        let scene_width: usize = map.parse_required("scene.width")?;
        let scene_height: usize = map.parse_required("scene.height")?;

        let mode: ShutterMode = map.required("timing.mode")?.parse()?;
        let timing = TimingConfig {
            exposure_time_us: map.parse_required("timing.exposure_time_us")?,
            line_time_us: map.parse_required("timing.line_time_us")?,
            mode,
            num_rows: map.parse_num("timing.num_rows", scene_height)?,
            num_frames: map.parse_required("timing.num_frames")?,
        };
        timing.validate()?;

        let scene = match map.get("scene.kind").map(str::to_string) {
            None => None,
            Some(kind) => match kind.as_str() {
                "led_array" => Some(SceneSpec::LedArray(LedArraySpec {
                    num_leds: map.parse_num("scene.num_leds", 4usize)?,
                    spacing_px: map.parse_num("scene.led_spacing_px", 8.0)?,
                    pulse_period_us: map.parse_required("scene.pulse_period_us")?,
                    duty_cycle: map.parse_num("scene.duty_cycle", 0.5)?,
                    amplitude: map.parse_num("scene.amplitude", 1.0)?,
                    spot_sigma_px: match map.get("scene.led_spot_sigma_px") {
                        None => None,
                        Some(raw) => Some(raw.parse().map_err(|_| {
                            config_err(format!("invalid scene.led_spot_sigma_px '{raw}'"))
                        })?),
                    },
                })),
                "moving_disk" => Some(SceneSpec::MovingDisk {
                    radius_px: map.parse_num("scene.disk_radius_px", 3.0)?,
                    velocity_px_per_frame: (
                        map.parse_num("scene.disk_velocity_x", 1.0)?,
                        map.parse_num("scene.disk_velocity_y", 0.0)?,
                    ),
                }),
                other => {
                    return Err(config_err(format!(
                        "unknown scene.kind '{other}' (expected led_array or moving_disk)"
                    )));
                }
            },
        };

        let psf = match map.required("psf.kind")?.to_string().as_str() {
            "file" => PsfSource::File(PathBuf::from(map.required("psf.path")?)),
            "lenslet" => PsfSource::Lenslet {
                num_lenslets: map.parse_num("psf.num_lenslets", 100usize)?,
                spot_sigma_px: map.parse_num("psf.spot_sigma_px", 1.5)?,
            },
            other => {
                return Err(config_err(format!(
                    "unknown psf.kind '{other}' (expected lenslet or file)"
                )));
            }
        };

        let step_size = match map.get("solver.step_size") {
            None => StepSize::Auto,
            Some("auto") => StepSize::Auto,
            Some(raw) => StepSize::Fixed(raw.parse().map_err(|_| {
                config_err(format!("invalid solver.step_size '{raw}' (number or 'auto')"))
            })?),
        };
        let solver = SolverParams {
            tv_weight: map.parse_num("solver.tv_weight", 1e-3)?,
            temporal_weight: map.parse_num("solver.temporal_weight", 10.0)?,
            max_iters: map.parse_num("solver.max_iters", 500usize)?,
            rel_tol: map.parse_num("solver.rel_tol", 1e-6)?,
            step_size,
            prox_inner_iters: map.parse_num("solver.prox_inner_iters", 4usize)?,
            nonneg: map.parse_num("solver.nonneg", true)?,
        };
        solver.validate()?;

        let seed: u64 = map.parse_num("seed", 0u64)?;
        let noise = NoiseSpec {
            gaussian_sigma: map.parse_num("noise.gaussian_sigma", 0.0)?,
            poisson_scale: map.parse_num("noise.poisson_scale", 0.0)?,
            seed,
        };
        noise.validate()?;

        let binning_factor: usize = map.parse_num("binning_factor", 1usize)?;
        if ![1, 2, 4, 8].contains(&binning_factor) {
            return Err(config_err(format!(
                "binning_factor must be one of 1, 2, 4, 8; got {binning_factor}"
            )));
        }
        let temporal_bin: usize = map.parse_num("temporal_bin", 1usize)?;
        if temporal_bin == 0 {
            return Err(config_err("temporal_bin must be positive"));
        }

        let measurement_path = map.get("measurement.path").map(PathBuf::from);
        let output_dir = PathBuf::from(map.get("output_dir").unwrap_or("out"));

        map.finish()?;

        Ok(RunConfig {
            timing,
            scene_width,
            scene_height,
            scene,
            psf,
            measurement_path,
            solver,
            noise,
            binning_factor,
            temporal_bin,
            output_dir,
            seed,
        })
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        RunConfig::from_str(&text)
    }

    /// Referenced input files must exist before a run starts.
    pub fn check_inputs(&self) -> Result<()> {
        if let PsfSource::File(path) = &self.psf {
            if !path.exists() {
                return Err(config_err(format!("psf.path '{}' does not exist", path.display())));
            }
        }
        if let Some(path) = &self.measurement_path {
            if !path.exists() {
                return Err(config_err(format!(
                    "measurement.path '{}' does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// Serialize the fully resolved configuration as config-file lines,
    /// every default made explicit. Deterministic ordering.
    pub fn manifest_lines(&self) -> Vec<(String, String)> {
        let mut lines: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| lines.push((k.to_string(), v));

        push("timing.exposure_time_us", format!("{}", self.timing.exposure_time_us));
        push("timing.line_time_us", format!("{}", self.timing.line_time_us));
        push("timing.mode", self.timing.mode.as_str().to_string());
        push("timing.num_rows", format!("{}", self.timing.num_rows));
        push("timing.num_frames", format!("{}", self.timing.num_frames));
        push("scene.width", format!("{}", self.scene_width));
        push("scene.height", format!("{}", self.scene_height));
        match &self.scene {
            None => {}
            Some(SceneSpec::LedArray(spec)) => {
                push("scene.kind", "led_array".to_string());
                push("scene.num_leds", format!("{}", spec.num_leds));
                push("scene.led_spacing_px", format!("{}", spec.spacing_px));
                push("scene.pulse_period_us", format!("{}", spec.pulse_period_us));
                push("scene.duty_cycle", format!("{}", spec.duty_cycle));
                push("scene.amplitude", format!("{}", spec.amplitude));
                if let Some(sigma) = spec.spot_sigma_px {
                    push("scene.led_spot_sigma_px", format!("{sigma}"));
                }
            }
            Some(SceneSpec::MovingDisk {
                radius_px,
                velocity_px_per_frame,
            }) => {
                push("scene.kind", "moving_disk".to_string());
                push("scene.disk_radius_px", format!("{radius_px}"));
                push("scene.disk_velocity_x", format!("{}", velocity_px_per_frame.0));
                push("scene.disk_velocity_y", format!("{}", velocity_px_per_frame.1));
            }
        }
        match &self.psf {
            PsfSource::File(path) => {
                push("psf.kind", "file".to_string());
                push("psf.path", path.display().to_string());
            }
            PsfSource::Lenslet {
                num_lenslets,
                spot_sigma_px,
            } => {
                push("psf.kind", "lenslet".to_string());
                push("psf.num_lenslets", format!("{num_lenslets}"));
                push("psf.spot_sigma_px", format!("{spot_sigma_px}"));
            }
        }
        if let Some(path) = &self.measurement_path {
            push("measurement.path", path.display().to_string());
        }
        push("solver.tv_weight", format!("{}", self.solver.tv_weight));
        push("solver.temporal_weight", format!("{}", self.solver.temporal_weight));
        push("solver.max_iters", format!("{}", self.solver.max_iters));
        push("solver.rel_tol", format!("{}", self.solver.rel_tol));
        push(
            "solver.step_size",
            match self.solver.step_size {
                StepSize::Auto => "auto".to_string(),
                StepSize::Fixed(s) => format!("{s}"),
            },
        );
        push("solver.prox_inner_iters", format!("{}", self.solver.prox_inner_iters));
        push("solver.nonneg", format!("{}", self.solver.nonneg));
        push("noise.gaussian_sigma", format!("{}", self.noise.gaussian_sigma));
        push("noise.poisson_scale", format!("{}", self.noise.poisson_scale));
        push("binning_factor", format!("{}", self.binning_factor));
        push("temporal_bin", format!("{}", self.temporal_bin));
        push("output_dir", self.output_dir.display().to_string());
        push("seed", format!("{}", self.seed));
        lines
    }
}

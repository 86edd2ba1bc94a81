//! File formats: raw little-endian float containers for PSFs ("PSF0") and
//! volumes/measurements ("VOL0"), 16-bit PNG import/export for images and
//! frame stacks, and CSV reports.
//!
//! PSF0 layout: magic `PSF0`, u32 rows, u32 cols, u32 channels, then
//! channels x rows x cols f32 values (channel-major, row-major planes).
//!
//! VOL0 layout: magic `VOL0`, u32 dims[3] = (cols, rows, frames),
//! u32 channels, then per channel frames x rows x cols f32 values
//! (frame-major, row-major). A 2D measurement is a volume with one frame.

use crate::error::{CoreError, Result};
use crate::optics::{Psf, PsfNormalization};
use crate::solver::SolveReport;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Array3};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const PSF_MAGIC: &[u8; 4] = b"PSF0";
const VOL_MAGIC: &[u8; 4] = b"VOL0";

pub fn write_psf(path: &Path, psf: &Psf) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let (rows, cols) = psf.dim();
    w.write_all(PSF_MAGIC)?;
    w.write_u32::<LittleEndian>(rows as u32)?;
    w.write_u32::<LittleEndian>(cols as u32)?;
    w.write_u32::<LittleEndian>(psf.num_channels() as u32)?;
    for plane in psf.planes() {
        for v in plane.iter() {
            w.write_f32::<LittleEndian>(*v as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a PSF0 file. The stored values are kept as-is (Raw
/// normalization); pixel pitch is not part of the container and defaults
/// to 1.
pub fn read_psf(path: &Path) -> Result<Psf> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != PSF_MAGIC {
        return Err(CoreError::Format(format!(
            "{} is not a PSF container (magic {:?})",
            path.display(),
            magic
        )));
    }
    let rows = r.read_u32::<LittleEndian>()? as usize;
    let cols = r.read_u32::<LittleEndian>()? as usize;
    let channels = r.read_u32::<LittleEndian>()? as usize;
    if rows == 0 || cols == 0 || channels == 0 {
        return Err(CoreError::Format(format!(
            "degenerate PSF dimensions {rows}x{cols}x{channels}"
        )));
    }
    let mut planes = Vec::with_capacity(channels);
    for _ in 0..channels {
        let mut plane = Array2::<f64>::zeros((rows, cols));
        for v in plane.iter_mut() {
            *v = r.read_f32::<LittleEndian>()? as f64;
        }
        planes.push(plane);
    }
    Psf::new(planes, 1.0, PsfNormalization::Raw)
}

/// Write per-channel volumes; all channels must share one shape.
pub fn write_volumes(path: &Path, channels: &[&Array3<f64>]) -> Result<()> {
    let first = channels
        .first()
        .ok_or_else(|| CoreError::Config("no channels to write".into()))?;
    let (frames, rows, cols) = first.dim();
    for (c, vol) in channels.iter().enumerate() {
        if vol.dim() != first.dim() {
            return Err(CoreError::Dimension(format!(
                "channel {c} shape {:?} differs from {:?}",
                vol.dim(),
                first.dim()
            )));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(VOL_MAGIC)?;
    w.write_u32::<LittleEndian>(cols as u32)?;
    w.write_u32::<LittleEndian>(rows as u32)?;
    w.write_u32::<LittleEndian>(frames as u32)?;
    w.write_u32::<LittleEndian>(channels.len() as u32)?;
    for vol in channels {
        for v in vol.iter() {
            w.write_f32::<LittleEndian>(*v as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_volumes(path: &Path) -> Result<Vec<Array3<f64>>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != VOL_MAGIC {
        return Err(CoreError::Format(format!(
            "{} is not a volume container (magic {:?})",
            path.display(),
            magic
        )));
    }
    let cols = r.read_u32::<LittleEndian>()? as usize;
    let rows = r.read_u32::<LittleEndian>()? as usize;
    let frames = r.read_u32::<LittleEndian>()? as usize;
    let channels = r.read_u32::<LittleEndian>()? as usize;
    if cols == 0 || rows == 0 || frames == 0 || channels == 0 {
        return Err(CoreError::Format(format!(
            "degenerate volume dimensions {cols}x{rows}x{frames}x{channels}"
        )));
    }
    let mut out = Vec::with_capacity(channels);
    for _ in 0..channels {
        let mut vol = Array3::<f64>::zeros((frames, rows, cols));
        for v in vol.iter_mut() {
            *v = r.read_f32::<LittleEndian>()? as f64;
        }
        out.push(vol);
    }
    Ok(out)
}

/// Write a single 2D image as a one-frame, one-channel volume.
pub fn write_image(path: &Path, image: &Array2<f64>) -> Result<()> {
    let (rows, cols) = image.dim();
    let vol = image
        .to_owned()
        .into_shape_with_order((1, rows, cols))
        .map_err(|e| CoreError::Dimension(e.to_string()))?;
    write_volumes(path, &[&vol])
}

/// Read a one-frame volume back as a 2D image (first channel).
pub fn read_image(path: &Path) -> Result<Array2<f64>> {
    let vols = read_volumes(path)?;
    let vol = &vols[0];
    let (frames, _, _) = vol.dim();
    if frames != 1 {
        return Err(CoreError::Format(format!(
            "expected a single-frame volume, found {frames} frames"
        )));
    }
    Ok(vol.index_axis(ndarray::Axis(0), 0).to_owned())
}

/// Export planes as a 16-bit PNG, scaled so the global maximum maps to
/// 65535 (a view, not a data container). One plane writes grayscale,
/// three write RGB.
pub fn write_png16(path: &Path, planes: &[&Array2<f64>]) -> Result<()> {
    if planes.is_empty() {
        return Err(CoreError::Config("no planes to write".into()));
    }
    let dim = planes[0].dim();
    for p in planes {
        if p.dim() != dim {
            return Err(CoreError::Dimension("PNG planes differ in shape".into()));
        }
    }
    let (rows, cols) = dim;
    let peak = planes
        .iter()
        .flat_map(|p| p.iter())
        .cloned()
        .fold(0.0, f64::max)
        .max(1e-300);
    let quantize = |v: f64| -> u16 { ((v.max(0.0) / peak) * 65535.0).round() as u16 };

    match planes.len() {
        1 => {
            let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(
                cols as u32,
                rows as u32,
            );
            for (r, row) in planes[0].rows().into_iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    img.put_pixel(c as u32, r as u32, image::Luma([quantize(*v)]));
                }
            }
            img.save(path)?;
        }
        3 => {
            let mut img = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::new(
                cols as u32,
                rows as u32,
            );
            for r in 0..rows {
                for c in 0..cols {
                    let px = image::Rgb([
                        quantize(planes[0][(r, c)]),
                        quantize(planes[1][(r, c)]),
                        quantize(planes[2][(r, c)]),
                    ]);
                    img.put_pixel(c as u32, r as u32, px);
                }
            }
            img.save(path)?;
        }
        n => {
            return Err(CoreError::Config(format!(
                "PNG export supports 1 or 3 planes, got {n}"
            )));
        }
    }
    Ok(())
}

/// Load a PNG as per-channel planes scaled to [0, 1] (16-bit aware).
/// Grayscale yields one plane, RGB three.
pub fn read_png(path: &Path) -> Result<Vec<Array2<f64>>> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        image::DynamicImage::ImageLuma16(buf) => {
            let mut plane = Array2::<f64>::zeros((h, w));
            for (x, y, px) in buf.enumerate_pixels() {
                plane[(y as usize, x as usize)] = px.0[0] as f64 / 65535.0;
            }
            Ok(vec![plane])
        }
        image::DynamicImage::ImageRgb16(buf) => {
            let mut planes = vec![Array2::<f64>::zeros((h, w)); 3];
            for (x, y, px) in buf.enumerate_pixels() {
                for c in 0..3 {
                    planes[c][(y as usize, x as usize)] = px.0[c] as f64 / 65535.0;
                }
            }
            Ok(planes)
        }
        image::DynamicImage::ImageLuma8(buf) => {
            let mut plane = Array2::<f64>::zeros((h, w));
            for (x, y, px) in buf.enumerate_pixels() {
                plane[(y as usize, x as usize)] = px.0[0] as f64 / 255.0;
            }
            Ok(vec![plane])
        }
        image::DynamicImage::ImageRgb8(buf) => {
            let mut planes = vec![Array2::<f64>::zeros((h, w)); 3];
            for (x, y, px) in buf.enumerate_pixels() {
                for c in 0..3 {
                    planes[c][(y as usize, x as usize)] = px.0[c] as f64 / 255.0;
                }
            }
            Ok(planes)
        }
        other => {
            // normalize anything else through 16-bit RGB
            let buf = other.into_rgb16();
            let mut planes = vec![Array2::<f64>::zeros((h, w)); 3];
            for (x, y, px) in buf.enumerate_pixels() {
                for c in 0..3 {
                    planes[c][(y as usize, x as usize)] = px.0[c] as f64 / 65535.0;
                }
            }
            Ok(planes)
        }
    }
}

/// Objective trace as `iteration,objective,step` CSV.
pub fn write_solve_report_csv(path: &Path, report: &SolveReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iteration,objective,step")?;
    for (i, obj) in report.objective_trace.iter().enumerate() {
        writeln!(w, "{},{:.17e},{:.17e}", i + 1, obj, report.final_step_size)?;
    }
    w.flush()?;
    Ok(())
}

/// Frequency/power pairs as CSV.
pub fn write_spectrum_csv(
    path: &Path,
    frequencies_hz: &[f64],
    power: &[f64],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "frequency_hz,power")?;
    for (f, p) in frequencies_hz.iter().zip(power) {
        writeln!(w, "{f:.17e},{p:.17e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Lag/value pairs (autocorrelation slices and similar) as CSV.
pub fn write_series_csv(path: &Path, index_name: &str, values: &[(f64, f64)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{index_name},value")?;
    for (i, v) in values {
        writeln!(w, "{i},{v:.17e}")?;
    }
    w.flush()?;
    Ok(())
}

//! CSV and JSON artifacts.
//!
//! Every CSV with run metadata has a JSON sidecar next to it, named by
//! appending `.json` to the CSV path. Numbers are written in the shortest form
//! that parses back to the same value.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::detection::{CountModel, CountRecord, DetectionParams, LinearConstants};
use crate::dynamics::{StateKind, Trajectory};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::Psd;
use crate::tomography::{MarginalSet, WignerGrid};

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// Shortest round-trip text, in exponent form outside `[1e-4, 1e6)`.
fn num<T: Real>(x: T) -> String {
    let a = x.abs();
    if x == T::zero() || !x.is_finite() || (a >= T::lit(1e-4) && a < T::lit(1e6)) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse<T: Real>(field: &str, path: &Path, row: usize) -> Result<T> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .and_then(T::from_f64)
        .ok_or_else(|| Error::InvalidArgument(format!("{}: row {row}: bad number `{field}`", path.display())))
}

/// Reads a header line and numeric columns.
fn read_columns<T: Real>(path: &Path) -> Result<(Vec<String>, Vec<Vec<T>>)> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::InvalidArgument(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                i + 1,
                rec.len(),
                header.len()
            )));
        }
        for (c, field) in rec.iter().enumerate() {
            cols[c].push(parse(field, path, i + 1)?);
        }
    }
    Ok((header, cols))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct TrajectoryMeta<T> {
    sample_rate_hz: T,
    t0_s: T,
    n_samples: usize,
    seed: Option<u64>,
    state_kind: StateKind,
}

/// `t_s,z_m` plus a sidecar with the sample rate, seed and state label.
pub fn write_trajectory<T: Real>(path: &Path, traj: &Trajectory<T>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t_s", "z_m"])?;
    for (i, z) in traj.z_m.iter().enumerate() {
        w.write_record([num(traj.time_f64(i)), num(*z)])?;
    }
    finish(w, path)?;
    write_json(
        &sidecar_path(path),
        &TrajectoryMeta {
            sample_rate_hz: traj.sample_rate_hz,
            t0_s: traj.t0_s,
            n_samples: traj.len(),
            seed: traj.seed,
            state_kind: traj.state_kind,
        },
    )
}

/// Reads a trajectory; without a sidecar the rate comes from the first time step.
pub fn read_trajectory<T: Real>(path: &Path) -> Result<Trajectory<T>> {
    let (_, cols) = read_columns::<T>(path)?;
    if cols.len() != 2 {
        return Err(Error::InvalidArgument(format!("{}: expected columns t_s,z_m", path.display())));
    }
    let side = sidecar_path(path);
    let mut traj = if side.exists() {
        let meta: TrajectoryMeta<T> = read_json(&side)?;
        let mut t = Trajectory::new(meta.sample_rate_hz, meta.t0_s, cols[1].clone(), meta.state_kind)?;
        t.seed = meta.seed;
        t
    } else {
        if cols[0].len() < 2 {
            return Err(Error::TooFewSamples {
                got: cols[0].len(),
                required: 2,
            });
        }
        let rate = (cols[0][1] - cols[0][0]).recip();
        Trajectory::new(rate, cols[0][0], cols[1].clone(), StateKind::Custom)?
    };
    traj.z_m.shrink_to_fit();
    Ok(traj)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct CountMeta<T> {
    params: DetectionParams<T>,
    model: CountModel,
    linear_constants: Option<LinearConstants<T>>,
    samples_per_window: usize,
    source_sample_rate_hz: T,
    n_windows: usize,
}

/// `t_s,counts` plus a sidecar with scheme, constants, seed and noise settings.
pub fn write_counts<T: Real>(path: &Path, rec: &CountRecord<T>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t_s", "counts"])?;
    for (t, c) in rec.window_start_s.iter().zip(&rec.counts) {
        w.write_record([num(*t), num(*c)])?;
    }
    finish(w, path)?;
    write_json(
        &sidecar_path(path),
        &CountMeta {
            params: rec.params.clone(),
            model: rec.model,
            linear_constants: rec.linear_constants,
            samples_per_window: rec.samples_per_window,
            source_sample_rate_hz: rec.source_sample_rate_hz,
            n_windows: rec.counts.len(),
        },
    )
}

pub fn read_counts<T: Real>(path: &Path) -> Result<CountRecord<T>> {
    let (_, cols) = read_columns::<T>(path)?;
    if cols.len() != 2 {
        return Err(Error::InvalidArgument(format!("{}: expected columns t_s,counts", path.display())));
    }
    let meta: CountMeta<T> = read_json(&sidecar_path(path))?;
    let mut cols = cols.into_iter();
    Ok(CountRecord {
        window_start_s: cols.next().expect("two columns"),
        counts: cols.next().expect("two columns"),
        params: meta.params,
        model: meta.model,
        linear_constants: meta.linear_constants,
        samples_per_window: meta.samples_per_window,
        source_sample_rate_hz: meta.source_sample_rate_hz,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct MarginalMeta<T> {
    omega_used_rad_s: T,
    occupancy: Vec<usize>,
    min_occupancy: usize,
    under_sampled: bool,
    counts_per_bin: Vec<Vec<u64>>,
}

/// Matrix with rows over `z_m` and one column per angle bin; the header holds the angles.
pub fn write_marginals<T: Real>(path: &Path, m: &MarginalSet<T>) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["z_m".to_string()];
    header.extend(m.angles_rad.iter().map(|&a| num(a)));
    w.write_record(&header)?;
    for (j, z) in m.z_grid_m.iter().enumerate() {
        let mut row = vec![num(*z)];
        row.extend(m.densities.iter().map(|d| num(d[j])));
        w.write_record(&row)?;
    }
    finish(w, path)?;
    write_json(
        &sidecar_path(path),
        &MarginalMeta {
            omega_used_rad_s: m.omega_used_rad_s,
            occupancy: m.occupancy.clone(),
            min_occupancy: m.min_occupancy,
            under_sampled: m.under_sampled,
            counts_per_bin: m.counts_per_bin.clone(),
        },
    )
}

pub fn read_marginals<T: Real>(path: &Path) -> Result<MarginalSet<T>> {
    let (header, cols) = read_columns::<T>(path)?;
    if header.len() < 2 {
        return Err(Error::InvalidArgument(format!("{}: no angle columns", path.display())));
    }
    let angles = header[1..]
        .iter()
        .map(|h| parse(h, path, 0))
        .collect::<Result<Vec<T>>>()?;
    let mut cols = cols.into_iter();
    let grid = cols.next().expect("checked");
    let mut m = MarginalSet::from_densities(angles, grid, cols.collect())?;
    let side = sidecar_path(path);
    if side.exists() {
        let meta: MarginalMeta<T> = read_json(&side)?;
        m.omega_used_rad_s = meta.omega_used_rad_s;
        m.occupancy = meta.occupancy;
        m.min_occupancy = meta.min_occupancy;
        m.under_sampled = meta.under_sampled;
        m.counts_per_bin = meta.counts_per_bin;
    }
    Ok(m)
}

/// Matrix with `z_m` down the first column and the momentum axis in the header row.
pub fn write_wigner<T: Real>(path: &Path, w: &WignerGrid<T>) -> Result<()> {
    let mut out = writer(path)?;
    let mut header = vec!["z_m\\p_scaled_m".to_string()];
    header.extend(w.p_grid.iter().map(|&p| num(p)));
    out.write_record(&header)?;
    for (iz, z) in w.z_grid_m.iter().enumerate() {
        let mut row = vec![num(*z)];
        row.extend((0..w.np()).map(|ip| num(w.at(iz, ip))));
        out.write_record(&row)?;
    }
    finish(out, path)
}

pub fn read_wigner<T: Real>(path: &Path) -> Result<WignerGrid<T>> {
    let (header, cols) = read_columns::<T>(path)?;
    let p_grid = header[1..]
        .iter()
        .map(|h| parse(h, path, 0))
        .collect::<Result<Vec<T>>>()?;
    let z_grid = cols[0].clone();
    let mut values = Vec::with_capacity(z_grid.len() * p_grid.len());
    for iz in 0..z_grid.len() {
        for col in &cols[1..] {
            values.push(col[iz]);
        }
    }
    WignerGrid::new(z_grid, p_grid, values)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct PsdMeta<T> {
    n_segments: usize,
    segment_len: usize,
    window_kind: String,
    sample_rate_hz: T,
    resolution_hz: T,
}

/// `freq_Hz,power` plus a sidecar with the segment layout.
pub fn write_psd<T: Real>(path: &Path, psd: &Psd<T>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["freq_Hz", "power"])?;
    for (f, p) in psd.freqs_hz.iter().zip(&psd.power) {
        w.write_record([num(*f), num(*p)])?;
    }
    finish(w, path)?;
    write_json(
        &sidecar_path(path),
        &PsdMeta {
            n_segments: psd.n_segments,
            segment_len: psd.segment_len,
            window_kind: psd.window_kind.clone(),
            sample_rate_hz: psd.sample_rate_hz,
            resolution_hz: psd.resolution_hz(),
        },
    )
}

pub fn read_psd<T: Real>(path: &Path) -> Result<Psd<T>> {
    let (_, cols) = read_columns::<T>(path)?;
    let meta: PsdMeta<T> = read_json(&sidecar_path(path))?;
    let mut cols = cols.into_iter();
    Ok(Psd {
        freqs_hz: cols.next().unwrap_or_default(),
        power: cols.next().unwrap_or_default(),
        n_segments: meta.n_segments,
        segment_len: meta.segment_len,
        window_kind: meta.window_kind,
        sample_rate_hz: meta.sample_rate_hz,
    })
}

/// Generic columnar CSV for plot data.
pub fn write_columns<T: Real>(path: &Path, names: &[&str], columns: &[&[T]]) -> Result<()> {
    let n = columns.first().map_or(0, |c| c.len());
    if names.len() != columns.len() || columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidArgument("column names and lengths disagree".into()));
    }
    let mut w = writer(path)?;
    w.write_record(names)?;
    for i in 0..n {
        w.write_record(columns.iter().map(|c| num(c[i])))?;
    }
    finish(w, path)
}

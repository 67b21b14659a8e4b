//! Synthetic federated linear-regression instances and their ground truth.
//!
//! Each device holds `X ∈ ℝ^{m×d}` and `Y ∈ ℝ^{m×o}`; the global objective is
//! `f(W) = Σᵢ ½‖XᵢW − Yᵢ‖²_F`. Features are uniform on `[−1, 1]`, the true model
//! is uniform on `[0, 1/30]` and labels are `Y = X·W_true` unless label noise is
//! switched on.

use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::{eig_min_sym, spd_solve, sym_eigenvalues, uniform_matrix, Matrix, RngStream};

/// Smallest admissible eigenvalue of `XᵀX` for a device to count as full column rank.
pub const RANK_TOL: f64 = 1e-10;

/// Upper end of the uniform range used for the true model.
pub const W_TRUE_MAX: f64 = 1.0 / 30.0;

const MAX_RANK_RETRIES: u64 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct DeviceData {
    x: Matrix,
    y: Matrix,
}

impl DeviceData {
    /// Validates `m > d`, entries within `[−1, 1]` and full column rank of `X`.
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        let (m, d) = x.shape();
        if y.rows() != m {
            return Err(Error::Shape {
                op: "DeviceData::new",
                expected: (m, y.cols()),
                actual: y.shape(),
            });
        }
        if m <= d {
            return Err(Error::param(
                "x",
                format!("need more samples than features (m = {m}, d = {d}); full column rank unattainable"),
            ));
        }
        if x.max_abs() > 1.0 || y.max_abs() > 1.0 {
            return Err(Error::param("x/y", "all feature and label entries must lie in [-1, 1]"));
        }
        let smallest = eig_min_sym(&x.gram())?;
        if !(smallest > RANK_TOL) {
            return Err(Error::param(
                "x",
                format!("not full column rank: eig_min(XᵀX) = {smallest:e}"),
            ));
        }
        Ok(DeviceData { x, y })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn samples(&self) -> usize {
        self.x.rows()
    }

    pub fn features(&self) -> usize {
        self.x.cols()
    }

    pub fn outputs(&self) -> usize {
        self.y.cols()
    }

    /// `½‖XW − Y‖²_F` for this device alone.
    pub fn loss(&self, w: &Matrix) -> Result<f64> {
        w.expect_shape("DeviceData::loss", (self.features(), self.outputs()))?;
        let resid = self.x.matmul(w)?.sub(&self.y)?;
        Ok(0.5 * resid.frobenius_norm_sq())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FederatedDataset {
    devices: Vec<DeviceData>,
    w_true: Option<Matrix>,
}

impl FederatedDataset {
    pub fn new(devices: Vec<DeviceData>, w_true: Option<Matrix>) -> Result<Self> {
        let first = devices
            .first()
            .ok_or_else(|| Error::param("devices", "at least one device is required"))?;
        let (d, o) = (first.features(), first.outputs());
        for (i, dev) in devices.iter().enumerate() {
            if (dev.features(), dev.outputs()) != (d, o) {
                return Err(Error::param(
                    format!("devices[{i}]"),
                    format!(
                        "shape (d, o) = ({}, {}) disagrees with ({d}, {o})",
                        dev.features(),
                        dev.outputs()
                    ),
                ));
            }
        }
        if let Some(w) = &w_true {
            w.expect_shape("FederatedDataset::new", (d, o))?;
        }
        Ok(FederatedDataset { devices, w_true })
    }

    pub fn devices(&self) -> &[DeviceData] {
        &self.devices
    }

    pub fn n_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn features(&self) -> usize {
        self.devices[0].features()
    }

    pub fn outputs(&self) -> usize {
        self.devices[0].outputs()
    }

    pub fn w_true(&self) -> Option<&Matrix> {
        self.w_true.as_ref()
    }

    /// `Σᵢ XᵢᵀXᵢ` in device order.
    pub fn gram_sum(&self) -> Matrix {
        let d = self.features();
        let mut acc = Matrix::zeros(d, d);
        for dev in &self.devices {
            acc.add_scaled_assign(1.0, &dev.x.gram()).expect("shapes validated");
        }
        acc
    }

    /// `Σᵢ XᵢᵀYᵢ` in device order.
    pub fn cross_sum(&self) -> Matrix {
        let mut acc = Matrix::zeros(self.features(), self.outputs());
        for dev in &self.devices {
            acc.add_scaled_assign(1.0, &dev.x.t_matmul(&dev.y).expect("shapes validated"))
                .expect("shapes validated");
        }
        acc
    }
}

/// Generates the noiseless synthetic benchmark.
pub fn generate(n_devices: usize, m: usize, d: usize, o: usize, stream: &RngStream) -> Result<FederatedDataset> {
    generate_with_label_noise(n_devices, m, d, o, 0.0, stream)
}

/// As [`generate`], with optional i.i.d. Gaussian label noise of standard
/// deviation `label_noise_sd` (labels are clipped back into `[−1, 1]`).
pub fn generate_with_label_noise(
    n_devices: usize,
    m: usize,
    d: usize,
    o: usize,
    label_noise_sd: f64,
    stream: &RngStream,
) -> Result<FederatedDataset> {
    if n_devices == 0 {
        return Err(Error::param("n_devices", "must be at least 1"));
    }
    if d == 0 || o == 0 {
        return Err(Error::param("d/o", "feature and output dimensions must be positive"));
    }
    if m <= d {
        return Err(Error::param(
            "m",
            format!("samples per device ({m}) must exceed d ({d}); full column rank unattainable"),
        ));
    }
    if !(label_noise_sd >= 0.0) || !label_noise_sd.is_finite() {
        return Err(Error::param("label_noise_sd", "must be finite and non-negative"));
    }

    let w_true = uniform_matrix(&mut stream.child(0).rng(), d, o, 0.0, W_TRUE_MAX)?;
    let mut devices = Vec::with_capacity(n_devices);
    for i in 0..n_devices as u64 {
        let x = draw_full_rank_features(&stream.child(1).child(i), m, d)?;
        let mut y = x.matmul(&w_true)?;
        if label_noise_sd > 0.0 {
            let normal = Normal::new(0.0, label_noise_sd).expect("validated sd");
            let mut rng = stream.child(2).child(i).rng();
            y = Matrix::from_fn(m, o, |r, c| (y[(r, c)] + normal.sample(&mut rng)).clamp(-1.0, 1.0));
        }
        devices.push(DeviceData::new(x, y)?);
    }
    FederatedDataset::new(devices, Some(w_true))
}

fn draw_full_rank_features(stream: &RngStream, m: usize, d: usize) -> Result<Matrix> {
    let mut last = 0.0;
    for attempt in 0..=MAX_RANK_RETRIES {
        let x = uniform_matrix(&mut stream.child(attempt).rng(), m, d, -1.0, 1.0)?;
        last = eig_min_sym(&x.gram())?;
        if last > RANK_TOL {
            return Ok(x);
        }
    }
    Err(Error::Numeric(format!(
        "feature matrix stayed rank deficient after {MAX_RANK_RETRIES} retries (eig_min = {last:e})"
    )))
}

/// `f(W) = Σᵢ ½‖XᵢW − Yᵢ‖²_F`.
pub fn loss(w: &Matrix, ds: &FederatedDataset) -> Result<f64> {
    ds.devices.iter().map(|dev| dev.loss(w)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemFacts {
    /// Minimizer of the global objective.
    pub w_star: Matrix,
    /// Strong-convexity constant `eig_min(Σᵢ XᵢᵀXᵢ)`; drives the `1/(λt)` schedule.
    pub lambda: f64,
    /// `Σᵢ eig_min(XᵢᵀXᵢ)`, kept for reporting. Never larger than `lambda`.
    pub lambda_device_sum: f64,
    /// Largest eigenvalue of `Σᵢ XᵢᵀXᵢ` (smoothness constant).
    pub smoothness: f64,
    pub loss_at_optimum: f64,
}

/// Solves the normal equations `(Σ XᵢᵀXᵢ) W = Σ XᵢᵀYᵢ` and reports the curvature constants.
pub fn optimum(ds: &FederatedDataset) -> Result<ProblemFacts> {
    let gram = ds.gram_sum();
    let w_star = spd_solve(&gram, &ds.cross_sum())?;
    let eig = sym_eigenvalues(&gram)?;
    let lambda = eig[0];
    if !(lambda > 0.0) {
        return Err(Error::Numeric(format!("Gram sum is singular (eig_min = {lambda:e})")));
    }
    let lambda_device_sum = ds
        .devices
        .iter()
        .map(|dev| eig_min_sym(&dev.x.gram()))
        .sum::<Result<f64>>()?;
    let loss_at_optimum = loss(&w_star, ds)?;
    Ok(ProblemFacts {
        w_star,
        lambda,
        lambda_device_sum,
        smoothness: *eig.last().expect("non-empty spectrum"),
        loss_at_optimum,
    })
}

fn header(d: usize, o: usize) -> Vec<String> {
    (1..=d)
        .map(|j| format!("x_{j}"))
        .chain((1..=o).map(|k| format!("y_{k}")))
        .collect()
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes one `device_NNNN.csv` per device (header `x_1..x_d,y_1..y_o`) and,
/// when known, `w_true.csv`. Returns the written paths.
pub fn write_csv_dir(ds: &FederatedDataset, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (d, o) = (ds.features(), ds.outputs());
    let mut written = Vec::new();
    for (i, dev) in ds.devices.iter().enumerate() {
        let path = dir.join(format!("device_{i:04}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        w.write_record(header(d, o)).map_err(csv_err(&path))?;
        for r in 0..dev.samples() {
            let row = dev.x.row(r).iter().chain(dev.y.row(r)).map(|v| v.to_string());
            w.write_record(row).map_err(csv_err(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    if let Some(wt) = &ds.w_true {
        let path = dir.join("w_true.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        w.write_record((1..=o).map(|k| format!("w_{k}"))).map_err(csv_err(&path))?;
        for r in 0..d {
            w.write_record(wt.row(r).iter().map(|v| v.to_string()))
                .map_err(csv_err(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a directory written by [`write_csv_dir`].
pub fn read_csv_dir(dir: &Path) -> Result<FederatedDataset> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("device_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    let mut devices = Vec::with_capacity(paths.len());
    for path in &paths {
        let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
        let head = rdr.headers().map_err(csv_err(path))?.clone();
        let d = head.iter().filter(|h| h.starts_with("x_")).count();
        let o = head.iter().filter(|h| h.starts_with("y_")).count();
        if d == 0 || o == 0 || d + o != head.len() {
            return Err(Error::param(path.display().to_string(), "header must be x_1..x_d,y_1..y_o"));
        }
        let (mut xs, mut ys, mut m) = (Vec::new(), Vec::new(), 0);
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err(path))?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::param(path.display().to_string(), format!("row {m}: {e}")))?;
            xs.extend_from_slice(&vals[..d]);
            ys.extend_from_slice(&vals[d..]);
            m += 1;
        }
        devices.push(DeviceData::new(Matrix::new(m, d, xs)?, Matrix::new(m, o, ys)?)?);
    }
    let wt_path = dir.join("w_true.csv");
    let w_true = if wt_path.exists() {
        let mut rdr = csv::Reader::from_path(&wt_path).map_err(csv_err(&wt_path))?;
        let o = rdr.headers().map_err(csv_err(&wt_path))?.len();
        let mut vals = Vec::new();
        for rec in rdr.records() {
            for s in rec.map_err(csv_err(&wt_path))?.iter() {
                vals.push(s.trim().parse::<f64>().map_err(|e| {
                    Error::param(wt_path.display().to_string(), e.to_string())
                })?);
            }
        }
        let d = vals.len() / o.max(1);
        Some(Matrix::new(d, o, vals)?)
    } else {
        None
    };
    FederatedDataset::new(devices, w_true)
}

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::PopulationModel;
use crate::error::{invalid, Error, Result};
use crate::estimators::MethodId;
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetTag {
    pub design_id: u32,
    pub method: Option<MethodId>,
    pub replicate: u32,
    pub seed: u64,
}

/// One simulated sample: `n × p` predictors and `n × m` responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    pub x: DMatrix<T>,
    pub y: DMatrix<T>,
    pub tag: DatasetTag,
}

impl<T: Real> Dataset<T> {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.y.ncols()
    }
}

/// Draws `n` independent observations of `(y, x)`.
///
/// Each row is a standard-normal `(m + p)`-vector multiplied by the latent
/// Cholesky factor and then by the block rotation `diag(rot_y, rot_x)`,
/// which is a square-root factor of the joint covariance.
pub fn sample_dataset<T: Real, R: Rng + ?Sized>(
    model: &PopulationModel<T>,
    n: usize,
    tag: DatasetTag,
    rng: &mut R,
) -> Result<Dataset<T>> {
    if n == 0 {
        return Err(invalid!("sample size must be positive"));
    }
    let (m, p) = (model.m(), model.p());
    let factor = model.latent_factor()?;
    let mut z = DMatrix::<T>::zeros(n, m + p);
    for i in 0..n {
        for j in 0..m + p {
            let v: f64 = StandardNormal.sample(rng);
            z[(i, j)] = lit(v);
        }
    }
    let latent = z * factor.transpose();
    let y = latent.columns(0, m) * model.rot_y.transpose();
    let x = latent.columns(m, p) * model.rot_x.transpose();
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("non-finite draw".into()));
    }
    Ok(Dataset { x, y, tag })
}

/// Writes `y1..ym, x1..xp` with a header row.
pub fn write_dataset_csv<T: Real, W: Write>(data: &Dataset<T>, mut out: W) -> Result<()> {
    let header: Vec<String> = (1..=data.m())
        .map(|j| format!("y{j}"))
        .chain((1..=data.p()).map(|i| format!("x{i}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for r in 0..data.n() {
        line.clear();
        for (k, v) in data.y.row(r).iter().chain(data.x.row(r).iter()).enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&to_f64(*v).to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

const POPULATION_MAGIC: &str = "# mrcompare population v1";

fn write_matrix<W: Write, T: Real>(out: &mut W, name: &str, m: &DMatrix<T>) -> Result<()> {
    writeln!(out, "matrix {name} {} {}", m.nrows(), m.ncols())?;
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{:e}", to_f64(*v))).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Writes every block of a population model as named plain-text matrices.
///
/// ```text
/// # mrcompare population v1
/// design_id 9
/// matrix lambda 20 1
/// 1e0
/// ...
/// ```
pub fn write_population<T: Real, W: Write>(model: &PopulationModel<T>, mut out: W) -> Result<()> {
    writeln!(out, "{POPULATION_MAGIC}")?;
    writeln!(out, "design_id {}", model.design_id)?;
    let col = |v: &DVector<T>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    write_matrix(&mut out, "lambda", &col(&model.lambda))?;
    write_matrix(&mut out, "kappa", &col(&model.kappa))?;
    write_matrix(&mut out, "sigma_zw", &model.sigma_zw)?;
    write_matrix(&mut out, "rot_x", &model.rot_x)?;
    write_matrix(&mut out, "rot_y", &model.rot_y)?;
    write_matrix(&mut out, "sigma_xx", &model.sigma_xx)?;
    write_matrix(&mut out, "sigma_xy", &model.sigma_xy)?;
    write_matrix(&mut out, "sigma_yy", &model.sigma_yy)?;
    write_matrix(&mut out, "beta_true", &model.beta_true)?;
    write_matrix(&mut out, "sigma2_y", &col(&model.sigma2_y))?;
    write_matrix(&mut out, "sigma2_eps", &col(&model.sigma2_eps))?;
    Ok(())
}

/// Reads the container written by [`write_population`].
pub fn read_population<R: BufRead>(input: R) -> Result<PopulationModel<f64>> {
    let mut lines = input.lines();
    let mut next = || -> Result<Option<String>> { lines.next().transpose().map_err(Error::from) };
    match next()? {
        Some(l) if l.trim() == POPULATION_MAGIC => {}
        other => return Err(Error::Parse(format!("bad population header: {other:?}"))),
    }
    let id_line = next()?.ok_or_else(|| Error::Parse("missing design_id".into()))?;
    let design_id = id_line
        .strip_prefix("design_id ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad design_id line: {id_line}")))?;
    let mut blocks = std::collections::HashMap::new();
    while let Some(head) = next()? {
        if head.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "matrix" {
            return Err(Error::Parse(format!("bad matrix header: {head}")));
        }
        let rows: usize = parts[2].parse().map_err(|_| Error::Parse(head.clone()))?;
        let cols: usize = parts[3].parse().map_err(|_| Error::Parse(head.clone()))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = next()?.ok_or_else(|| Error::Parse(format!("truncated matrix {}", parts[1])))?;
            for tok in line.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {tok}")))?);
            }
        }
        if data.len() != rows * cols {
            return Err(Error::Parse(format!("matrix {} has wrong entry count", parts[1])));
        }
        blocks.insert(parts[1].to_string(), DMatrix::from_row_slice(rows, cols, &data));
    }
    let mut take = |name: &str| blocks.remove(name).ok_or_else(|| Error::Parse(format!("missing matrix {name}")));
    let vec = |m: DMatrix<f64>| DVector::from_column_slice(m.as_slice());
    Ok(PopulationModel {
        design_id,
        lambda: vec(take("lambda")?),
        kappa: vec(take("kappa")?),
        sigma_zw: take("sigma_zw")?,
        rot_x: take("rot_x")?,
        rot_y: take("rot_y")?,
        sigma_xx: take("sigma_xx")?,
        sigma_xy: take("sigma_xy")?,
        sigma_yy: take("sigma_yy")?,
        beta_true: take("beta_true")?,
        sigma2_y: vec(take("sigma2_y")?),
        sigma2_eps: vec(take("sigma2_eps")?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{assemble_population, SimDesign, SimRng};
    use rand::SeedableRng;

    fn tag() -> DatasetTag {
        DatasetTag { design_id: 1, method: None, replicate: 1, seed: 0 }
    }

    fn population(p: usize, gamma: f64) -> PopulationModel<f64> {
        let d = SimDesign { design_id: 1, p, n: 100, m: 4, gamma, eta: 0.4, relpos: vec![1, 3], r2: 0.8, base_seed: 0 };
        assemble_population(&d, &mut SimRng::seed_from_u64(99)).unwrap()
    }

    #[test]
    fn rejects_empty_sample() {
        let pop = population(5, 0.2);
        assert!(sample_dataset(&pop, 0, tag(), &mut SimRng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let pop = population(6, 0.2);
        let a = sample_dataset(&pop, 30, tag(), &mut SimRng::seed_from_u64(5)).unwrap();
        let b = sample_dataset(&pop, 30, tag(), &mut SimRng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.n(), a.p(), a.m()), (30, 6, 4));
    }

    #[test]
    fn large_sample_covariance_converges() {
        let pop = population(6, 0.5);
        let data = sample_dataset(&pop, 100_000, tag(), &mut SimRng::seed_from_u64(17)).unwrap();
        let n = data.n() as f64;
        let xm = data.x.row_mean();
        let mut xc = data.x.clone();
        for mut r in xc.row_iter_mut() {
            r -= &xm;
        }
        let sxx = xc.transpose() * &xc / (n - 1.0);
        let rel = (&sxx - &pop.sigma_xx).norm() / pop.sigma_xx.norm();
        assert!(rel < 0.05, "relative Frobenius distance {rel}");
    }

    #[test]
    fn wide_population_samples_finite() {
        let pop = population(250, 0.9);
        let data = sample_dataset(&pop, 100, tag(), &mut SimRng::seed_from_u64(3)).unwrap();
        assert!(data.x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn population_container_round_trip() {
        let pop = population(5, 0.2);
        let mut buf = Vec::new();
        write_population(&pop, &mut buf).unwrap();
        let back = read_population(&buf[..]).unwrap();
        assert_eq!(back.design_id, pop.design_id);
        assert!(crate::linalg::max_abs_diff(&back.beta_true, &pop.beta_true) < 1e-14);
        assert!(crate::linalg::max_abs_diff(&back.rot_x, &pop.rot_x) < 1e-15);
    }

    #[test]
    fn dataset_csv_layout() {
        let pop = population(3, 0.2);
        let data = sample_dataset(&pop, 2, tag(), &mut SimRng::seed_from_u64(1)).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "y1,y2,y3,y4,x1,x2,x3");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').count(), 7);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const GRID_P: [usize; 2] = [20, 250];
pub const GRID_GAMMA: [f64; 2] = [0.2, 0.9];
pub const GRID_ETA: [f64; 4] = [0.0, 0.4, 0.8, 1.2];
pub const GRID_RELPOS: [[usize; 4]; 2] = [[1, 2, 3, 4], [5, 6, 7, 8]];
pub const GRID_N: usize = 100;
pub const GRID_M: usize = 4;
pub const GRID_R2: f64 = 0.8;

/// One cell of the factorial simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub design_id: u32,
    pub p: usize,
    pub n: usize,
    pub m: usize,
    /// Decay rate of the latent predictor eigenvalues.
    pub gamma: f64,
    /// Decay rate of the latent response eigenvalues.
    pub eta: f64,
    /// 1-based positions of the relevant latent predictor components.
    pub relpos: Vec<usize>,
    pub r2: f64,
    pub base_seed: u64,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n == 0 || self.m == 0 {
            return Err(invalid!("p, n and m must be positive (p={}, n={}, m={})", self.p, self.n, self.m));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(invalid!("eta must be finite and >= 0, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.r2) {
            return Err(invalid!("r2 must lie in [0, 1), got {}", self.r2));
        }
        validate_relpos(&self.relpos, self.p)
    }

    /// Index of `p` within the grid levels, if it is a grid level.
    pub fn p_level(&self) -> Option<usize> {
        GRID_P.iter().position(|&v| v == self.p)
    }

    pub fn gamma_level(&self) -> Option<usize> {
        GRID_GAMMA.iter().position(|&v| v == self.gamma)
    }

    pub fn eta_level(&self) -> Option<usize> {
        GRID_ETA.iter().position(|&v| v == self.eta)
    }

    pub fn relpos_level(&self) -> Option<usize> {
        GRID_RELPOS.iter().position(|r| r[..] == self.relpos[..])
    }

    /// `"5:8"` for contiguous runs, comma-separated otherwise.
    pub fn relpos_label(&self) -> String {
        relpos_label(&self.relpos)
    }
}

pub fn relpos_label(relpos: &[usize]) -> String {
    let contiguous = relpos.windows(2).all(|w| w[1] == w[0] + 1);
    match (relpos.first(), relpos.last()) {
        (Some(a), Some(b)) if contiguous && relpos.len() > 1 => format!("{a}:{b}"),
        _ => relpos.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","),
    }
}

pub(crate) fn validate_relpos(relpos: &[usize], p: usize) -> Result<()> {
    if relpos.is_empty() {
        return Err(invalid!("relpos must not be empty"));
    }
    let mut seen = vec![false; p + 1];
    for &i in relpos {
        if i == 0 || i > p {
            return Err(invalid!("relpos index {i} outside 1..={p}"));
        }
        if seen[i] {
            return Err(invalid!("duplicate relpos index {i}"));
        }
        seen[i] = true;
    }
    Ok(())
}

/// The 32-design factorial grid.
///
/// Designs are numbered 1..=32 lexicographically over
/// (eta, relpos, gamma, p), with p varying fastest.
pub fn design_grid() -> Vec<SimDesign> {
    let mut out = Vec::with_capacity(32);
    let mut id = 1;
    for &eta in &GRID_ETA {
        for relpos in &GRID_RELPOS {
            for &gamma in &GRID_GAMMA {
                for &p in &GRID_P {
                    out.push(SimDesign {
                        design_id: id,
                        p,
                        n: GRID_N,
                        m: GRID_M,
                        gamma,
                        eta,
                        relpos: relpos.to_vec(),
                        r2: GRID_R2,
                        base_seed: 0,
                    });
                    id += 1;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn grid_has_32_complete_cells() {
        let grid = design_grid();
        assert_eq!(grid.len(), 32);
        let mut seen = HashSet::new();
        for (i, d) in grid.iter().enumerate() {
            assert_eq!(d.design_id as usize, i + 1);
            assert_eq!((d.n, d.m, d.r2), (100, 4, 0.8));
            d.validate().unwrap();
            let key = (
                d.p_level().unwrap(),
                d.gamma_level().unwrap(),
                d.eta_level().unwrap(),
                d.relpos_level().unwrap(),
            );
            assert!(seen.insert(key), "duplicate cell {key:?}");
        }
        assert_eq!(seen.len(), 32);
    }

    #[test]
    fn grid_order_has_p_fastest() {
        let grid = design_grid();
        assert_eq!((grid[0].p, grid[1].p), (20, 250));
        assert_eq!(grid[2].gamma, 0.9);
        assert_eq!(grid[4].relpos, vec![5, 6, 7, 8]);
        assert_eq!(grid[8].eta, 0.4);
    }

    #[test]
    fn rejects_bad_relpos() {
        assert!(validate_relpos(&[0, 1], 5).is_err());
        assert!(validate_relpos(&[1, 1], 5).is_err());
        assert!(validate_relpos(&[6], 5).is_err());
        assert!(validate_relpos(&[], 5).is_err());
        assert!(validate_relpos(&[5, 1], 5).is_ok());
    }

    #[test]
    fn relpos_labels() {
        assert_eq!(relpos_label(&[5, 6, 7, 8]), "5:8");
        assert_eq!(relpos_label(&[1, 3]), "1,3");
        assert_eq!(relpos_label(&[2]), "2");
    }
}

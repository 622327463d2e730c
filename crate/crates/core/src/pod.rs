//! Weighted proper orthogonal decomposition by the method of snapshots.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::geometry::ParamVector;
use crate::postprocess::seminorm_error;
use crate::sparse::CsrMatrix;

/// Relative eigenvalue cutoff below which directions are treated as noise.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Snapshot coefficient vectors as columns, with their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    pub data: DMatrix<f64>,
    pub params: Vec<ParamVector>,
}

impl SnapshotMatrix {
    pub fn new(columns: &[Vec<f64>], params: Vec<ParamVector>) -> Result<Self> {
        let n = columns.first().map(Vec::len).ok_or_else(|| Error::Input("no snapshots".into()))?;
        if columns.len() != params.len() {
            return Err(Error::Input(format!("{} snapshots but {} parameter vectors", columns.len(), params.len())));
        }
        if let Some(j) = columns.iter().position(|c| c.len() != n) {
            return Err(Error::Input(format!("snapshot {j} has length {}, expected {n}", columns[j].len())));
        }
        let data = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        Ok(Self { data, params })
    }

    pub fn n_dofs(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.data.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.column(j).iter().copied().collect()
    }
}

/// How many modes to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelector {
    Count(usize),
    /// Smallest `m` whose relative cumulative energy reaches the tolerance.
    Energy(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// `N x m`, W-orthonormal columns.
    pub modes: DMatrix<f64>,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Every eigenvalue of the Gram matrix (negative round-off clipped to 0).
    pub spectrum: Vec<f64>,
    /// Retained share of the total eigenvalue sum.
    pub energy: f64,
    pub weighting_hash: String,
    /// Set when fewer modes than requested were numerically available.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodHeader {
    pub format: String,
    pub version: u32,
    pub n_dofs: usize,
    pub n_modes: usize,
    pub eigenvalues: Vec<f64>,
    pub spectrum: Vec<f64>,
    pub energy: f64,
    pub weighting_hash: String,
    pub truncated: bool,
    pub created_by: String,
}

const FORMAT: &str = "igapod-pod-basis";

/// Relative cumulative energy `sum_{i<m} lambda_i / sum lambda_i`.
pub fn cumulative_energy(spectrum: &[f64], m: usize) -> f64 {
    let total: f64 = spectrum.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    spectrum.iter().take(m).sum::<f64>() / total
}

pub fn weighted_pod(s: &SnapshotMatrix, w: &CsrMatrix, selector: ModeSelector) -> Result<PodBasis> {
    let n = s.n_dofs();
    if w.nrows() != n || w.ncols() != n {
        return Err(Error::Input(format!("weighting is {}x{}, snapshots have {n} rows", w.nrows(), w.ncols())));
    }
    if !w.is_symmetric(1e-10) {
        return Err(Error::Input("weighting matrix is not symmetric".into()));
    }
    match selector {
        ModeSelector::Count(0) => return Err(Error::Input("at least one mode is required".into())),
        ModeSelector::Energy(t) if !(t > 0.0 && t <= 1.0) => {
            return Err(Error::Input(format!("energy tolerance {t} outside (0, 1]")))
        }
        _ => {}
    }

    let ws = w.mul_dense(&s.data);
    let mut gram = s.data.transpose() * &ws;
    let gt = gram.transpose();
    gram = (gram + gt) * 0.5;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let lambda1 = spectrum[0];
    if !(lambda1 > 0.0) {
        return Err(Error::Input("snapshot matrix has zero weighted norm".into()));
    }
    let rank = spectrum.iter().take_while(|&&l| l > RANK_TOLERANCE * lambda1).count();
    let wanted = match selector {
        ModeSelector::Count(m) => m,
        ModeSelector::Energy(t) => (1..=spectrum.len())
            .find(|&m| cumulative_energy(&spectrum, m) >= t * (1.0 - 1e-15))
            .unwrap_or(spectrum.len()),
    };
    let m = wanted.min(rank);
    let truncated = m < wanted;
    if truncated {
        log::warn!("requested {wanted} POD modes, numerical rank is {rank}; keeping {m}");
    }

    let mut q = DMatrix::zeros(n, m);
    for (c, &i) in order.iter().take(m).enumerate() {
        let phi = eig.eigenvectors.column(i);
        let col = (&s.data * phi) / spectrum[c].sqrt();
        q.set_column(c, &col);
    }
    reorthonormalize(&mut q, w)?;
    reorthonormalize(&mut q, w)?;
    for mut col in q.column_iter_mut() {
        let (k, _) = col.iter().enumerate().fold((0, 0.0f64), |acc, (k, v)| if v.abs() > acc.1 { (k, v.abs()) } else { acc });
        if col[k] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(PodBasis {
        modes: q,
        eigenvalues: spectrum[..m].to_vec(),
        energy: cumulative_energy(&spectrum, m),
        spectrum,
        weighting_hash: w.content_hash(),
        truncated,
    })
}

/// `Q <- Q L^{-T}` with `Q^T W Q = L L^T`; leaves the span unchanged.
fn reorthonormalize(q: &mut DMatrix<f64>, w: &CsrMatrix) -> Result<()> {
    let gram = q.transpose() * w.mul_dense(q);
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Solver("POD modes lost W-orthogonality".into()))?;
    let solved = chol
        .l()
        .solve_lower_triangular(&q.transpose())
        .ok_or_else(|| Error::Solver("singular POD Gram factor".into()))?;
    *q = solved.transpose();
    Ok(())
}

impl PodBasis {
    pub fn n_dofs(&self) -> usize {
        self.modes.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.modes.ncols()
    }

    fn check_weighting(&self, w: &CsrMatrix) -> Result<()> {
        if w.nrows() != self.n_dofs() || w.content_hash() != self.weighting_hash {
            return Err(Error::Usage(
                "weighting matrix differs from the one the basis was built with".into(),
            ));
        }
        Ok(())
    }

    /// Reduced coefficients `Q^T W u`.
    pub fn project(&self, w: &CsrMatrix, u: &[f64]) -> Result<Vec<f64>> {
        self.check_weighting(w)?;
        if u.len() != self.n_dofs() {
            return Err(Error::Input(format!("vector has length {}, basis has {} rows", u.len(), self.n_dofs())));
        }
        let wu = DVector::from_vec(w.mul_vec(u));
        Ok((self.modes.transpose() * wu).iter().copied().collect())
    }

    /// Full coefficients `Q r`.
    pub fn reconstruct(&self, reduced: &[f64]) -> Result<Vec<f64>> {
        if reduced.len() != self.n_modes() {
            return Err(Error::Input(format!(
                "reduced vector has length {}, basis has {} modes",
                reduced.len(),
                self.n_modes()
            )));
        }
        Ok((&self.modes * DVector::from_column_slice(reduced)).iter().copied().collect())
    }

    /// Relative W-seminorm error of the projection of `u`.
    pub fn reconstruction_error(&self, w: &CsrMatrix, u: &[f64]) -> Result<f64> {
        let v = self.reconstruct(&self.project(w, u)?)?;
        seminorm_error(u, &v, w)
    }

    /// The leading `m` modes as a basis of their own.
    pub fn truncated_to(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.n_modes() {
            return Err(Error::Input(format!("cannot keep {m} of {} modes", self.n_modes())));
        }
        Ok(Self {
            modes: self.modes.columns(0, m).into_owned(),
            eigenvalues: self.eigenvalues[..m].to_vec(),
            spectrum: self.spectrum.clone(),
            energy: cumulative_energy(&self.spectrum, m),
            weighting_hash: self.weighting_hash.clone(),
            truncated: false,
        })
    }

    pub fn header(&self) -> PodHeader {
        PodHeader {
            format: FORMAT.into(),
            version: 1,
            n_dofs: self.n_dofs(),
            n_modes: self.n_modes(),
            eigenvalues: self.eigenvalues.clone(),
            spectrum: self.spectrum.clone(),
            energy: self.energy,
            weighting_hash: self.weighting_hash.clone(),
            truncated: self.truncated,
            created_by: concat!("igapod ", env!("CARGO_PKG_VERSION")).into(),
        }
    }

    /// Content hash of the stored modes (used to tie networks to a basis).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.n_dofs() as u64).to_le_bytes());
        h.update((self.n_modes() as u64).to_le_bytes());
        h.update(container::encode_f64(self.modes.as_slice()));
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write(path, &self.header(), self.modes.as_slice())
    }

    pub fn read_header(path: &Path) -> Result<PodHeader> {
        let h: PodHeader = container::read_header(path)?;
        check_format(path, &h)?;
        Ok(h)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, q) = container::read(path, |h: &PodHeader| h.n_dofs * h.n_modes)?;
        check_format(path, &h)?;
        if h.eigenvalues.len() != h.n_modes {
            return Err(Error::Format(format!("{}: eigenvalue count mismatch", path.display())));
        }
        Ok(Self {
            modes: DMatrix::from_vec(h.n_dofs, h.n_modes, q),
            eigenvalues: h.eigenvalues,
            spectrum: h.spectrum,
            energy: h.energy,
            weighting_hash: h.weighting_hash,
            truncated: h.truncated,
        })
    }
}

fn check_format(path: &Path, h: &PodHeader) -> Result<()> {
    if h.format != FORMAT || h.version != 1 {
        return Err(Error::Format(format!("{} is not a POD basis file", path.display())));
    }
    Ok(())
}

//! Convolutive NMF model: `X[k,n] = Σ_m Σ_j W[k,j] U[j,n-m] H[k,m]`.
//!
//! Lags are zero-based (`H[k,0]` is the direct path) and the convolution is
//! truncated at the first frame, so frames before the start contribute
//! nothing.

use std::path::Path;

use ndarray::{s, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Floor applied to multiplicative-update numerators and to the model
/// before it is raised to negative powers.
pub const EPSILON: f64 = 1e-10;

pub const FACTORS_SCHEMA_VERSION: u32 = 1;

/// Spectral atoms, `K x J`, columns of unit L1 norm once normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary(pub Array2<f64>);

/// Atom gains over time, `J x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations(pub Array2<f64>);

/// Per-band power-domain reverberation filters, `K x M`, rows of unit max.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverbKernel(pub Array2<f64>);

impl Dictionary {
    pub fn random<R: Rng>(bins: usize, atoms: usize, rng: &mut R) -> Self {
        Self(Array2::from_shape_simple_fn((bins, atoms), || rng.gen::<f64>()))
    }

    pub fn bins(&self) -> usize {
        self.0.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.0.ncols()
    }
}

impl Activations {
    pub fn random<R: Rng>(atoms: usize, frames: usize, rng: &mut R) -> Self {
        Self(Array2::from_shape_simple_fn((atoms, frames), || rng.gen::<f64>()))
    }
}

impl ReverbKernel {
    /// `H[k,0] = 1`, zero elsewhere: no reverberation.
    pub fn delta(bins: usize, taps: usize) -> Self {
        let mut h = Array2::zeros((bins, taps.max(1)));
        h.column_mut(0).fill(1.0);
        Self(h)
    }

    /// `H[k,m] = exp(-m)` for every band.
    pub fn exponential(bins: usize, taps: usize) -> Self {
        Self(Array2::from_shape_fn((bins, taps.max(1)), |(_, m)| (-(m as f64)).exp()))
    }

    pub fn taps(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_delta(&self) -> bool {
        self.0
            .indexed_iter()
            .all(|((_, m), &v)| if m == 0 { v == 1.0 } else { v == 0.0 })
    }
}

/// Evaluates the model for the given factors.
pub fn synthesize(w: &Dictionary, u: &Activations, h: &ReverbKernel) -> Result<Array2<f64>> {
    let (bins, atoms) = w.0.dim();
    let (u_atoms, frames) = u.0.dim();
    if u_atoms != atoms {
        return Err(shape_err("activations", (atoms, frames), u.0.dim()));
    }
    if h.0.nrows() != bins || h.0.ncols() == 0 {
        return Err(shape_err("kernel", (bins, h.0.ncols().max(1)), h.0.dim()));
    }
    let v = w.0.dot(&u.0);
    Ok(convolve_rows(&v, &h.0))
}

/// `X[k,n] = Σ_{m ≤ n} V[k,n-m] H[k,m]`, row by row.
pub(crate) fn convolve_rows(v: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
    let (bins, frames) = v.dim();
    let mut x = Array2::zeros((bins, frames));
    for k in 0..bins {
        let vrow = v.row(k);
        let mut xrow = x.row_mut(k);
        for (m, &hm) in h.row(k).iter().enumerate() {
            if hm == 0.0 || m >= frames {
                continue;
            }
            let mut dst = xrow.slice_mut(s![m..]);
            dst.scaled_add(hm, &vrow.slice(s![..frames - m]));
        }
    }
    x
}

/// Factors plus the cached synthesis `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub dictionary: Dictionary,
    pub activations: Activations,
    pub kernel: ReverbKernel,
    synthesis: Array2<f64>,
}

impl ModelState {
    pub fn new(dictionary: Dictionary, activations: Activations, kernel: ReverbKernel) -> Result<Self> {
        let synthesis = synthesize(&dictionary, &activations, &kernel)?;
        Ok(Self {
            dictionary,
            activations,
            kernel,
            synthesis,
        })
    }

    pub fn synthesis(&self) -> &Array2<f64> {
        &self.synthesis
    }

    /// `(K, J, N, M)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (
            self.dictionary.bins(),
            self.dictionary.atoms(),
            self.activations.0.ncols(),
            self.kernel.taps(),
        )
    }

    /// Low-rank part `W U`, the model with reverberation removed.
    pub fn dry(&self) -> Array2<f64> {
        self.dictionary.0.dot(&self.activations.0)
    }

    /// Recomputes `X` after a factor changed.
    pub fn refresh(&mut self) {
        self.synthesis = convolve_rows(&self.dry(), &self.kernel.0);
    }

    pub fn set_dictionary(&mut self, w: Dictionary) -> Result<()> {
        if w.0.dim() != self.dictionary.0.dim() {
            return Err(shape_err("dictionary", self.dictionary.0.dim(), w.0.dim()));
        }
        self.dictionary = w;
        self.refresh();
        Ok(())
    }

    pub fn set_activations(&mut self, u: Activations) -> Result<()> {
        if u.0.dim() != self.activations.0.dim() {
            return Err(shape_err("activations", self.activations.0.dim(), u.0.dim()));
        }
        self.activations = u;
        self.refresh();
        Ok(())
    }

    pub fn set_kernel(&mut self, h: ReverbKernel) -> Result<()> {
        if h.0.dim() != self.kernel.0.dim() {
            return Err(shape_err("kernel", self.kernel.0.dim(), h.0.dim()));
        }
        self.kernel = h;
        self.refresh();
        Ok(())
    }

    /// Scales dictionary columns to unit L1 norm and multiplies the scales
    /// into the matching activation rows. The synthesis is unchanged.
    pub fn normalize_dictionary(&mut self) -> Result<()> {
        let sums = self.dictionary.0.sum_axis(Axis(0));
        if let Some(j) = sums.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::DegenerateFactor(format!("dictionary column {j} is zero")));
        }
        for (j, &s) in sums.iter().enumerate() {
            self.dictionary.0.column_mut(j).mapv_inplace(|v| v / s);
            self.activations.0.row_mut(j).mapv_inplace(|v| v * s);
        }
        self.refresh();
        Ok(())
    }

    /// Divides every kernel row by its maximum. This is a projection onto the
    /// constraint set: no other factor compensates, so `X` changes unless all
    /// row maxima were already 1.
    pub fn normalize_kernel(&mut self) -> Result<()> {
        for (k, mut row) in self.kernel.0.rows_mut().into_iter().enumerate() {
            let max = row.fold(0.0f64, |m, &v| m.max(v));
            if !(max > 0.0) {
                return Err(Error::DegenerateFactor(format!("kernel row {k} is zero")));
            }
            row.mapv_inplace(|v| v / max);
        }
        self.refresh();
        Ok(())
    }

    /// Both constraints: unit-L1 dictionary columns, unit-max kernel rows.
    pub fn normalize(mut self) -> Result<Self> {
        self.normalize_dictionary()?;
        self.normalize_kernel()?;
        Ok(self)
    }

    #[cfg(debug_assertions)]
    pub(crate) fn debug_check(&self) {
        let fresh = convolve_rows(&self.dry(), &self.kernel.0);
        let scale = fresh.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let err = (&fresh - &self.synthesis)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        debug_assert!(err <= 1e-9 * scale, "stale synthesis cache: {err}");
    }

    pub fn to_dump(&self) -> FactorDump {
        let (k, j, n, m) = self.dims();
        FactorDump {
            schema_version: FACTORS_SCHEMA_VERSION,
            k,
            n,
            j,
            m,
            w: self.dictionary.0.iter().copied().collect(),
            u: self.activations.0.iter().copied().collect(),
            h: self.kernel.0.iter().copied().collect(),
        }
    }
}

/// JSON container for checkpointing factors; matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDump {
    pub schema_version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    #[serde(rename = "U")]
    pub u: Vec<f64>,
    #[serde(rename = "H")]
    pub h: Vec<f64>,
}

impl FactorDump {
    pub fn into_state(self) -> Result<ModelState> {
        let mat = |rows: usize, cols: usize, data: Vec<f64>, name: &str| {
            Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| Error::Shape(format!("{name}: {e}")))
        };
        ModelState::new(
            Dictionary(mat(self.k, self.j, self.w, "W")?),
            Activations(mat(self.j, self.n, self.u, "U")?),
            ReverbKernel(mat(self.k, self.m, self.h, "H")?),
        )
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

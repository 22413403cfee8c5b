//! Codebook types, phase quantization and the JSON codebook container.
//!
//! RF codewords are stored as integer indices into the uniform phase grid
//! `2π·i/2^phase_bits`, so saved codebooks are exact across platforms.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::steering;
use crate::error::{Error, Result};
use crate::linalg::{c, semi_unitary_error, CMat, C64};

pub const CODEBOOK_VERSION: u32 = 1;

/// Unit-modulus matrix stored as grid phase indices, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub idx: Vec<u32>,
}

impl PhaseMatrix {
    pub fn at(&self, i: usize, j: usize) -> u32 {
        self.idx[i * self.cols + j]
    }

    pub fn to_matrix(&self, phase_bits: u32) -> CMat {
        let step = grid_step(phase_bits);
        CMat::from_fn(self.rows, self.cols, |i, j| {
            C64::from_polar(1.0, step * self.at(i, j) as f64)
        })
    }
}

fn grid_step(phase_bits: u32) -> f64 {
    2.0 * PI / (1u64 << phase_bits) as f64
}

fn check_phase_bits(phase_bits: u32) -> Result<()> {
    if (1..=24).contains(&phase_bits) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "phase_bits must lie in 1..=24, got {phase_bits}"
        )))
    }
}

/// Index of the grid angle nearest to `arg(z)`; ties go to the smaller index, zero maps to 0.
pub fn quantize_phase(z: C64, phase_bits: u32) -> u32 {
    if z.norm() == 0.0 {
        return 0;
    }
    let m = 1u64 << phase_bits;
    let step = grid_step(phase_bits);
    let mut a = z.arg();
    if a < 0.0 {
        a += 2.0 * PI;
    }
    let q = a / step;
    let lo = q.floor();
    let d_lo = (q - lo) * step;
    let d_hi = step - d_lo;
    let lo_idx = (lo as u64) % m;
    let hi_idx = (lo_idx + 1) % m;
    let pick = if (d_lo - d_hi).abs() <= 1e-12 {
        lo_idx.min(hi_idx)
    } else if d_lo < d_hi {
        lo_idx
    } else {
        hi_idx
    };
    pick as u32
}

/// Entrywise nearest quantized phase of `f_u`.
pub fn rf_project(f_u: &CMat, phase_bits: u32) -> Result<PhaseMatrix> {
    check_phase_bits(phase_bits)?;
    let (rows, cols) = f_u.shape();
    let mut idx = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            idx.push(quantize_phase(f_u[(i, j)], phase_bits));
        }
    }
    Ok(PhaseMatrix { rows, cols, idx })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RfKind {
    #[serde(rename = "rf-matrix")]
    Matrix,
    #[serde(rename = "rf-vector")]
    Vector,
}

/// Codebook of quantized-phase RF precoders (`n × r` each; `r = 1` for vector codebooks).
#[derive(Debug, Clone, PartialEq)]
pub struct RfCodebook {
    pub kind: RfKind,
    pub n: usize,
    pub r: usize,
    pub phase_bits: u32,
    pub codewords: Vec<PhaseMatrix>,
    /// Unconstrained semi-unitary counterparts, when the codebook was trained.
    pub twins: Vec<CMat>,
}

impl RfCodebook {
    pub fn new(
        kind: RfKind,
        n: usize,
        r: usize,
        phase_bits: u32,
        codewords: Vec<PhaseMatrix>,
    ) -> Result<Self> {
        check_phase_bits(phase_bits)?;
        if codewords.is_empty() {
            return Err(Error::invalid("codebook must hold at least one codeword"));
        }
        if kind == RfKind::Vector && r != 1 {
            return Err(Error::invalid("vector codebooks have one column"));
        }
        let m = 1u64 << phase_bits;
        for cw in &codewords {
            if cw.rows != n || cw.cols != r || cw.idx.len() != n * r {
                return Err(Error::invalid(format!(
                    "codeword shape {}x{} does not match {n}x{r}",
                    cw.rows, cw.cols
                )));
            }
            if cw.idx.iter().any(|&i| i as u64 >= m) {
                return Err(Error::invalid("phase index outside the grid"));
            }
        }
        Ok(RfCodebook {
            kind,
            n,
            r,
            phase_bits,
            codewords,
            twins: Vec::new(),
        })
    }

    /// Quantizes each unconstrained codeword and keeps it as the twin.
    pub fn from_unconstrained(kind: RfKind, twins: Vec<CMat>, phase_bits: u32) -> Result<Self> {
        let first = twins
            .first()
            .ok_or_else(|| Error::invalid("codebook must hold at least one codeword"))?;
        let (n, r) = first.shape();
        let codewords = twins
            .iter()
            .map(|t| rf_project(t, phase_bits))
            .collect::<Result<Vec<_>>>()?;
        let mut cb = RfCodebook::new(kind, n, r, phase_bits, codewords)?;
        cb.twins = twins;
        Ok(cb)
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn matrix(&self, i: usize) -> CMat {
        self.codewords[i].to_matrix(self.phase_bits)
    }

    pub fn matrices(&self) -> Vec<CMat> {
        (0..self.len()).map(|i| self.matrix(i)).collect()
    }

    /// All codewords as the columns of one `n × (len·r)` matrix.
    pub fn stacked(&self) -> CMat {
        let mut out = CMat::zeros(self.n, self.len() * self.r);
        for (i, m) in self.matrices().iter().enumerate() {
            out.columns_mut(i * self.r, self.r).copy_from(m);
        }
        out
    }
}

/// Codebook of semi-unitary equivalent-baseband precoders (`n × r` each).
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandCodebook {
    pub n: usize,
    pub r: usize,
    pub codewords: Vec<CMat>,
}

impl BasebandCodebook {
    pub fn new(codewords: Vec<CMat>) -> Result<Self> {
        let first = codewords
            .first()
            .ok_or_else(|| Error::invalid("codebook must hold at least one codeword"))?;
        let (n, r) = first.shape();
        for cw in &codewords {
            if cw.shape() != (n, r) {
                return Err(Error::invalid("baseband codewords differ in shape"));
            }
            if semi_unitary_error(cw) > 1e-8 {
                return Err(Error::invalid("baseband codewords must be semi-unitary"));
            }
        }
        Ok(BasebandCodebook { n, r, codewords })
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }
}

/// Beamsteering vector codebook: `n_cb` steering vectors on a uniform grid in sine space,
/// `sin φ_i = −1 + 2i/n_cb`, scaled to unit modulus and phase-quantized.
pub fn beamsteering_vcb(n_bs: usize, n_cb: usize, spacing: f64, phase_bits: u32) -> Result<RfCodebook> {
    if n_bs == 0 || n_cb == 0 {
        return Err(Error::invalid("beamsteering codebook needs n_bs, n_cb > 0"));
    }
    let scale = (n_bs as f64).sqrt();
    let codewords = (0..n_cb)
        .map(|i| {
            let s: f64 = -1.0 + 2.0 * i as f64 / n_cb as f64;
            let v = steering(s.asin(), n_bs, spacing);
            let col = CMat::from_fn(n_bs, 1, |m, _| v[m] * scale);
            rf_project(&col, phase_bits)
        })
        .collect::<Result<Vec<_>>>()?;
    RfCodebook::new(RfKind::Vector, n_bs, 1, phase_bits, codewords)
}

// ---------------------------------------------------------------------------
// File container
// ---------------------------------------------------------------------------

type ComplexRows = Vec<Vec<[f64; 2]>>;

#[derive(Deserialize)]
struct Header {
    version: u32,
    kind: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RfFile {
    version: u32,
    kind: RfKind,
    n: usize,
    r: usize,
    phase_bits: u32,
    codewords: Vec<Vec<Vec<u32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    twins: Option<Vec<ComplexRows>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasebandFile {
    version: u32,
    kind: String,
    n: usize,
    r: usize,
    codewords: Vec<ComplexRows>,
}

fn to_rows(m: &CMat) -> ComplexRows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn from_rows(rows: &ComplexRows, n: usize, r: usize) -> Result<CMat> {
    if rows.len() != n || rows.iter().any(|row| row.len() != r) {
        return Err(Error::invalid(format!("matrix entry is not {n}x{r}")));
    }
    Ok(CMat::from_fn(n, r, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

/// Any codebook kind, as read from a file.
#[derive(Debug, Clone, PartialEq)]
pub enum Codebook {
    Rf(RfCodebook),
    Baseband(BasebandCodebook),
}

impl Codebook {
    pub fn to_json(&self) -> String {
        let json = match self {
            Codebook::Rf(cb) => serde_json::to_string_pretty(&RfFile {
                version: CODEBOOK_VERSION,
                kind: cb.kind,
                n: cb.n,
                r: cb.r,
                phase_bits: cb.phase_bits,
                codewords: cb
                    .codewords
                    .iter()
                    .map(|cw| cw.idx.chunks(cw.cols).map(|row| row.to_vec()).collect())
                    .collect(),
                twins: (!cb.twins.is_empty()).then(|| cb.twins.iter().map(to_rows).collect()),
            }),
            Codebook::Baseband(cb) => serde_json::to_string_pretty(&BasebandFile {
                version: CODEBOOK_VERSION,
                kind: "baseband".into(),
                n: cb.n,
                r: cb.r,
                codewords: cb.codewords.iter().map(to_rows).collect(),
            }),
        };
        json.expect("codebook serialization cannot fail") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parse_err = |e: serde_json::Error| Error::invalid(format!("codebook: {e}"));
        let header: Header = serde_json::from_str(text).map_err(parse_err)?;
        if header.version != CODEBOOK_VERSION {
            return Err(Error::Version {
                found: header.version,
                expected: CODEBOOK_VERSION,
            });
        }
        match header.kind.as_str() {
            "rf-matrix" | "rf-vector" => {
                let f: RfFile = serde_json::from_str(text).map_err(parse_err)?;
                let codewords = f
                    .codewords
                    .into_iter()
                    .map(|rows| {
                        if rows.len() != f.n || rows.iter().any(|row| row.len() != f.r) {
                            return Err(Error::invalid(format!("codeword is not {}x{}", f.n, f.r)));
                        }
                        Ok(PhaseMatrix {
                            rows: f.n,
                            cols: f.r,
                            idx: rows.into_iter().flatten().collect(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut cb = RfCodebook::new(f.kind, f.n, f.r, f.phase_bits, codewords)?;
                if let Some(twins) = f.twins {
                    if twins.len() != cb.len() {
                        return Err(Error::invalid("twin count differs from codeword count"));
                    }
                    cb.twins = twins
                        .iter()
                        .map(|t| from_rows(t, f.n, f.r))
                        .collect::<Result<Vec<_>>>()?;
                }
                Ok(Codebook::Rf(cb))
            }
            "baseband" => {
                let f: BasebandFile = serde_json::from_str(text).map_err(parse_err)?;
                let codewords = f
                    .codewords
                    .iter()
                    .map(|t| from_rows(t, f.n, f.r))
                    .collect::<Result<Vec<_>>>()?;
                let cb = BasebandCodebook::new(codewords)?;
                if cb.n != f.n || cb.r != f.r {
                    return Err(Error::invalid("baseband codeword shape differs from header"));
                }
                Ok(Codebook::Baseband(cb))
            }
            other => Err(Error::invalid(format!("unknown codebook kind {other:?}"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Codebook::from_json(&text).map_err(|e| match e {
            Error::InvalidArgument(message) => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn into_rf(self) -> Result<RfCodebook> {
        match self {
            Codebook::Rf(cb) => Ok(cb),
            Codebook::Baseband(_) => Err(Error::Config(
                "expected an RF codebook, found a baseband codebook".into(),
            )),
        }
    }

    pub fn into_baseband(self) -> Result<BasebandCodebook> {
        match self {
            Codebook::Baseband(cb) => Ok(cb),
            Codebook::Rf(_) => Err(Error::Config(
                "expected a baseband codebook, found an RF codebook".into(),
            )),
        }
    }
}

//! Thresholding the relaxed solution λ into binary masks, contour extraction,
//! and the iteration × threshold sweep protocol.
//!
//! Any threshold of the relaxed global optimum is a binary global optimum, so
//! different levels yield nested contours of the same segmentation. Foreground
//! is where λ ≥ level; the tie λ = level maps to foreground, so level 0 gives
//! the all-ones mask.

use crate::error::{Error, Result};
use crate::field::{GridDomain, ScalarField};
use crate::solver::{self, CapacityMaps, SolverConfig};

/// A binary labeling of the grid: values are exactly 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    domain: GridDomain,
    values: Vec<u8>,
}

impl Mask {
    pub fn zeros(domain: GridDomain) -> Self {
        Self {
            domain,
            values: vec![0; domain.len()],
        }
    }

    pub fn from_vec(domain: GridDomain, values: Vec<u8>) -> Self {
        assert_eq!(values.len(), domain.len(), "value count must match domain");
        assert!(values.iter().all(|&v| v <= 1), "mask values must be 0 or 1");
        Self { domain, values }
    }

    pub fn from_fn(domain: GridDomain, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut values = Vec::with_capacity(domain.len());
        for row in 0..domain.height() {
            for col in 0..domain.width() {
                values.push(f(row, col) as u8);
            }
        }
        Self { domain, values }
    }

    pub fn domain(&self) -> GridDomain {
        self.domain
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.values[self.domain.index(row, col)]
    }

    /// Number of foreground pixels.
    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    /// The mask as a 0.0/1.0 scalar field.
    pub fn to_field(&self) -> ScalarField {
        ScalarField::from_vec(
            self.domain,
            self.values.iter().map(|&v| v as f64).collect(),
        )
    }

    /// Pointwise intersection.
    pub fn intersect(&self, other: &Mask) -> Mask {
        assert_eq!(self.domain, other.domain, "domain mismatch");
        Mask {
            domain: self.domain,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a & b)
                .collect(),
        }
    }

    /// True when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        assert_eq!(self.domain, other.domain, "domain mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .all(|(&a, &b)| a <= b)
    }

    /// Complement mask.
    pub fn not(&self) -> Mask {
        Mask {
            domain: self.domain,
            values: self.values.iter().map(|&v| 1 - v).collect(),
        }
    }
}

/// Boundary pixels of a mask in row-major order: foreground pixels with a
/// 4-neighbour background pixel or lying on the image border.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Contour {
    pub pixels: Vec<(usize, usize)>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Foreground where `lambda ≥ level`. `level` must lie in [0,1].
pub fn threshold(lambda: &ScalarField, level: f64) -> Mask {
    assert!((0.0..=1.0).contains(&level), "level must be in [0,1]");
    Mask {
        domain: lambda.domain(),
        values: lambda.values().iter().map(|&v| (v >= level) as u8).collect(),
    }
}

/// Extract the mask boundary (row-major).
pub fn extract_contour(mask: &Mask) -> Contour {
    let d = mask.domain();
    let (h, w) = (d.height(), d.width());
    let mut pixels = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if mask.at(row, col) == 0 {
                continue;
            }
            let on_border = row == 0 || row == h - 1 || col == 0 || col == w - 1;
            let has_bg_neighbor = (row > 0 && mask.at(row - 1, col) == 0)
                || (row + 1 < h && mask.at(row + 1, col) == 0)
                || (col > 0 && mask.at(row, col - 1) == 0)
                || (col + 1 < w && mask.at(row, col + 1) == 0);
            if on_border || has_bg_neighbor {
                pixels.push((row, col));
            }
        }
    }
    Contour { pixels }
}

/// Run one solve, snapshot λ at each checkpoint iteration, and threshold each
/// snapshot at each level. Checkpoints must be ascending, ≥ 1 and within the
/// iteration budget. Snapshots honor `cfg.clamp_lambda_final`.
pub fn sweep(
    caps: &CapacityMaps,
    cfg: &SolverConfig,
    iteration_checkpoints: &[usize],
    levels: &[f64],
) -> Result<Vec<(usize, f64, Mask)>> {
    caps.validate()?;
    cfg.validate()?;
    for pair in iteration_checkpoints.windows(2) {
        if pair[1] < pair[0] {
            return Err(Error::Config("checkpoints must be ascending".into()));
        }
    }
    for &ck in iteration_checkpoints {
        if ck == 0 || ck > cfg.iterations {
            return Err(Error::CheckpointOutOfRange {
                checkpoint: ck,
                budget: cfg.iterations,
            });
        }
    }

    let mut state = solver::initialize(caps);
    let mut out = Vec::with_capacity(iteration_checkpoints.len() * levels.len());
    let mut next = iteration_checkpoints.iter().peekable();
    for iter in 1..=cfg.iterations {
        state = solver::step(&state, caps, cfg);
        while next.peek() == Some(&&iter) {
            next.next();
            let snapshot = if cfg.clamp_lambda_final {
                state.lambda.map(|v| v.clamp(0.0, 1.0))
            } else {
                state.lambda.clone()
            };
            for &level in levels {
                out.push((iter, level, threshold(&snapshot, level)));
            }
        }
        if next.peek().is_none() && iter >= *iteration_checkpoints.last().unwrap_or(&0) {
            break;
        }
    }
    Ok(out)
}

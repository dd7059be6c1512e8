use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::mlp::argmax;
use crate::error::{BsiError, Result};
use crate::numkit::{Matrix, RngStream};

/// Class labels or per-row target distributions `p̂`.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Distributions(Matrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Distributions(p) => p.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn class_of(&self, row: usize) -> usize {
        match self {
            Targets::Classes(c) => c[row],
            Targets::Distributions(p) => argmax(p.row(row)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub targets: Targets,
}

impl Batch {
    pub fn new(inputs: Matrix, targets: Targets) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return Err(BsiError::invalid(format!(
                "{} input rows but {} targets",
                inputs.rows(),
                targets.len()
            )));
        }
        if let Targets::Distributions(p) = &targets {
            for r in 0..p.rows() {
                let row = p.row(r);
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > 1e-12 {
                    return Err(BsiError::invalid(format!(
                        "target row {r} is not a distribution (sum {sum})"
                    )));
                }
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenates class-labelled batches into one.
    pub fn concat(batches: &[Batch]) -> Result<Batch> {
        let cols = batches.first().map_or(0, |b| b.inputs.cols());
        let mut data = Vec::new();
        let mut classes = Vec::new();
        for b in batches {
            if b.inputs.cols() != cols {
                return Err(BsiError::invalid("batches have different feature widths"));
            }
            data.extend_from_slice(b.inputs.as_slice());
            match &b.targets {
                Targets::Classes(c) => classes.extend_from_slice(c),
                Targets::Distributions(_) => {
                    return Err(BsiError::invalid("concat supports class targets only"))
                }
            }
        }
        Batch::new(
            Matrix::new(classes.len(), cols, data)?,
            Targets::Classes(classes),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// Gaussian clusters around random class means.
    Blobs,
    /// Interleaved 2-D spiral arms, padded with low-variance noise dimensions.
    Spirals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub classes: usize,
    pub dims: usize,
    pub n: usize,
    pub batch_size: usize,
    /// Distance scale of blob means; ignored for spirals.
    #[serde(default = "default_separation")]
    pub separation: f64,
}

fn default_separation() -> f64 {
    3.0
}

impl DatasetSpec {
    pub fn blobs(classes: usize, dims: usize, n: usize, batch_size: usize) -> Self {
        Self {
            kind: DatasetKind::Blobs,
            classes,
            dims,
            n,
            batch_size,
            separation: default_separation(),
        }
    }
}

/// Deterministic synthetic classification data split into batches.
/// Labels cycle through the classes before shuffling, so every class
/// holds `n / classes` or one more samples.
pub fn make_dataset(spec: &DatasetSpec, rng: &mut RngStream) -> Result<Vec<Batch>> {
    if spec.classes < 2 || spec.dims < 2 {
        return Err(BsiError::invalid(format!(
            "dataset needs classes >= 2 and dims >= 2 (got {} and {})",
            spec.classes, spec.dims
        )));
    }
    if spec.batch_size == 0 {
        return Err(BsiError::invalid("batch_size must be positive"));
    }
    if spec.n == 0 {
        return Ok(Vec::new());
    }
    let mut labels: Vec<usize> = (0..spec.n).map(|i| i % spec.classes).collect();
    rng.shuffle(&mut labels);

    let rows: Vec<Vec<f64>> = match spec.kind {
        DatasetKind::Blobs => {
            let means: Vec<Vec<f64>> = (0..spec.classes)
                .map(|_| {
                    (0..spec.dims)
                        .map(|_| rng.standard_normal() * spec.separation)
                        .collect()
                })
                .collect();
            labels
                .iter()
                .map(|&c| {
                    means[c]
                        .iter()
                        .map(|mu| mu + rng.standard_normal())
                        .collect()
                })
                .collect()
        }
        DatasetKind::Spirals => labels
            .iter()
            .map(|&c| {
                let t = rng.uniform();
                let radius = 0.2 + 2.0 * t;
                let theta = 3.0 * PI * t
                    + 2.0 * PI * c as f64 / spec.classes as f64
                    + 0.15 * rng.standard_normal();
                let mut x = vec![radius * theta.cos(), radius * theta.sin()];
                x.extend((2..spec.dims).map(|_| 0.1 * rng.standard_normal()));
                x
            })
            .collect(),
    };

    rows.chunks(spec.batch_size)
        .zip(labels.chunks(spec.batch_size))
        .map(|(r, l)| {
            Batch::new(
                Matrix::new(r.len(), spec.dims, r.concat())?,
                Targets::Classes(l.to_vec()),
            )
        })
        .collect()
}

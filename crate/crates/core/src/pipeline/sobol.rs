//! Unscrambled Sobol sequence with Joe–Kuo direction numbers.

use crate::error::{Error, Result};
use crate::geometry::{ParamRanges, ParamVector};

const BITS: usize = 32;

/// `(s, a, m_1..m_s)` for dimensions 2 and up; dimension 1 is van der Corput.
const PRIMITIVES: [(u32, u32, &[u32]); 7] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

/// Largest supported dimension.
pub const MAX_DIM: usize = PRIMITIVES.len() + 1;

#[derive(Debug, Clone)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Input(format!("Sobol dimension {dim} outside 1..={MAX_DIM}")));
        }
        let mut directions = Vec::with_capacity(dim);
        directions.push(std::array::from_fn(|k| 1u32 << (BITS - 1 - k)));
        for &(s, a, m) in &PRIMITIVES[..dim - 1] {
            let s = s as usize;
            let mut v = [0u32; BITS];
            for k in 0..BITS {
                v[k] = if k < s {
                    m[k] << (BITS - 1 - k)
                } else {
                    let mut x = v[k - s] ^ (v[k - s] >> s);
                    for i in 1..s {
                        if (a >> (s - 1 - i)) & 1 == 1 {
                            x ^= v[k - i];
                        }
                    }
                    x
                };
            }
            directions.push(v);
        }
        Ok(Self { directions })
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// Point with index `i` in Gray-code order (index 0 is the origin).
    pub fn point(&self, i: u64) -> Vec<f64> {
        let gray = i ^ (i >> 1);
        self.directions
            .iter()
            .map(|v| {
                let x = (0..BITS).filter(|&k| (gray >> k) & 1 == 1).fold(0u32, |x, k| x ^ v[k]);
                x as f64 / (1u64 << BITS) as f64
            })
            .collect()
    }
}

/// Points `skip + 1 ..= skip + n` of the 4D sequence mapped into `ranges`.
/// The origin is never returned.
pub fn sobol_sample(ranges: &ParamRanges, n: usize, skip: u64) -> Result<Vec<ParamVector>> {
    if n == 0 {
        return Err(Error::Input("at least one sample is required".into()));
    }
    ranges.validate()?;
    let seq = Sobol::new(4)?;
    Ok((0..n as u64)
        .map(|i| {
            let x = seq.point(skip + 1 + i);
            ranges.scale([x[0], x[1], x[2], x[3]])
        })
        .collect())
}

/// Star discrepancy of a one-dimensional point set in `[0, 1]`.
pub fn star_discrepancy_1d(points: &[f64]) -> f64 {
    let mut x = points.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| ((i as f64 + 1.0) / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

//! Sample designs on the unit cube mapped to the input space by quantile
//! transform, plus pick-freeze and Morris trajectory designs.

use ndarray::Array2;
use rand::distr::Open01;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::InputSpace;
use crate::error::{Error, Result};

/// Highest dimension covered by [`SobolSequence`].
pub const MAX_SOBOL_DIM: usize = 40;

/// Primitive polynomials `(degree, coefficients)` and initial direction
/// numbers for dimensions 2..=40 (Joe & Kuo, new-joe-kuo-6.21201).
/// Dimension 1 is the van der Corput sequence.
const JOE_KUO: [(u32, u32, &[u32]); MAX_SOBOL_DIM - 1] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
    (7, 7, &[1, 1, 3, 13, 7, 35, 63]),
    (7, 8, &[1, 3, 5, 9, 1, 25, 53]),
    (7, 14, &[1, 3, 1, 13, 9, 35, 107]),
    (7, 19, &[1, 3, 1, 5, 27, 61, 31]),
    (7, 21, &[1, 1, 5, 11, 19, 41, 61]),
    (7, 28, &[1, 3, 5, 3, 3, 13, 69]),
    (7, 31, &[1, 1, 7, 13, 1, 19, 1]),
    (7, 32, &[1, 3, 7, 5, 13, 19, 59]),
    (7, 37, &[1, 1, 3, 9, 25, 29, 41]),
    (7, 41, &[1, 3, 5, 13, 23, 1, 55]),
    (7, 42, &[1, 3, 7, 3, 13, 59, 17]),
    (7, 50, &[1, 3, 1, 3, 5, 53, 69]),
    (7, 55, &[1, 1, 5, 5, 23, 33, 13]),
    (7, 56, &[1, 1, 7, 7, 1, 61, 123]),
    (7, 59, &[1, 1, 7, 9, 13, 61, 49]),
    (7, 62, &[1, 3, 3, 5, 3, 55, 33]),
    (8, 14, &[1, 3, 1, 15, 31, 13, 49, 245]),
    (8, 21, &[1, 3, 5, 15, 31, 59, 63, 97]),
    (8, 22, &[1, 3, 1, 11, 11, 11, 77, 249]),
];

const BITS: usize = 32;

/// Base-2 digital sequence (Sobol') in natural index order.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    directions: Vec<[u32; BITS]>,
}

impl SobolSequence {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_SOBOL_DIM {
            return Err(Error::TooManyDimensions {
                requested: dim,
                max: MAX_SOBOL_DIM,
            });
        }
        let mut directions = Vec::with_capacity(dim);
        let mut first = [0u32; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1u32 << (31 - k);
        }
        directions.push(first);
        for &(s, a, m) in JOE_KUO.iter().take(dim - 1) {
            let s = s as usize;
            let mut v = [0u32; BITS];
            for k in 0..s.min(BITS) {
                v[k] = m[k] << (31 - k);
            }
            for k in s..BITS {
                let mut val = v[k - s] ^ (v[k - s] >> s);
                for l in 1..s {
                    if (a >> (s - 1 - l)) & 1 == 1 {
                        val ^= v[k - l];
                    }
                }
                v[k] = val;
            }
            directions.push(v);
        }
        Ok(Self { directions })
    }

    pub fn dimension(&self) -> usize {
        self.directions.len()
    }

    /// Point number `index` (index 0 is the origin).
    pub fn point(&self, index: u32, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(&self.directions) {
            let mut x = 0u32;
            let mut bits = index;
            let mut k = 0;
            while bits != 0 {
                if bits & 1 == 1 {
                    x ^= v[k];
                }
                bits >>= 1;
                k += 1;
            }
            *o = x as f64 / 4_294_967_296.0;
        }
    }
}

/// Source of unit-cube points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// ChaCha8 keyed by `seed` (a counter-based stream cipher generator).
    Pseudo { seed: u64 },
    /// Sobol' points `skip + 1, skip + 2, ...`; the origin is never used.
    LowDiscrepancy { skip: u64 },
}

impl Generator {
    /// Fills an `n x dim` matrix of unit points. `stream` selects
    /// independent pseudo-random substreams; it is ignored for Sobol'.
    fn unit_matrix(&self, n: usize, dim: usize, stream: u64) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((n, dim));
        match *self {
            Generator::Pseudo { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                for v in out.iter_mut() {
                    *v = rng.sample(Open01);
                }
            }
            Generator::LowDiscrepancy { skip } => {
                let seq = SobolSequence::new(dim)?;
                let last = skip + n as u64;
                if last > u32::MAX as u64 {
                    return Err(Error::InvalidParameter(format!(
                        "low-discrepancy index {last} exceeds 2^32 - 1"
                    )));
                }
                let mut row = vec![0.0; dim];
                for r in 0..n {
                    seq.point((skip + r as u64 + 1) as u32, &mut row);
                    out.row_mut(r).iter_mut().zip(&row).for_each(|(o, v)| *o = *v);
                }
            }
        }
        Ok(out)
    }
}

fn map_matrix(space: &InputSpace, unit: &Array2<f64>) -> Result<Array2<f64>> {
    let mut points = Array2::zeros(unit.raw_dim());
    for (i, m) in space.marginals().iter().enumerate() {
        for r in 0..unit.nrows() {
            points[[r, i]] = m.quantile(unit[[r, i]])?;
        }
    }
    Ok(points)
}

/// `N` points in the input space together with their unit-cube preimages.
#[derive(Debug, Clone)]
pub struct SampleDesign {
    pub unit_points: Array2<f64>,
    pub points: Array2<f64>,
    /// Support of each marginal, used to keep finite differences inside.
    pub bounds: Vec<(f64, f64)>,
    pub generator: Generator,
}

impl SampleDesign {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dimension(&self) -> usize {
        self.points.ncols()
    }

    /// Wraps explicit points (already inside the support).
    pub fn from_points(space: &InputSpace, points: Array2<f64>) -> Result<Self> {
        if points.ncols() != space.dimension() {
            return Err(Error::DimensionMismatch {
                expected: space.dimension(),
                got: points.ncols(),
            });
        }
        let mut unit = Array2::zeros(points.raw_dim());
        for (i, m) in space.marginals().iter().enumerate() {
            for r in 0..points.nrows() {
                unit[[r, i]] = m.cdf(points[[r, i]]);
            }
        }
        Ok(Self {
            unit_points: unit,
            points,
            bounds: space.supports(),
            generator: Generator::Pseudo { seed: 0 },
        })
    }
}

/// Deterministic design of `n` points for a given generator.
pub fn generate(space: &InputSpace, n: usize, generator: Generator) -> Result<SampleDesign> {
    let unit = generator.unit_matrix(n, space.dimension(), 0)?;
    let points = map_matrix(space, &unit)?;
    Ok(SampleDesign {
        unit_points: unit,
        points,
        bounds: space.supports(),
        generator,
    })
}

/// Two independent base matrices for pick-freeze estimators.
#[derive(Debug, Clone)]
pub struct PickFreezeDesign {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
}

impl PickFreezeDesign {
    pub fn len(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.a.nrows() == 0
    }

    pub fn dimension(&self) -> usize {
        self.a.ncols()
    }

    /// `A` with column `i` taken from `B`.
    pub fn a_b(&self, i: usize) -> Array2<f64> {
        let mut m = self.a.clone();
        m.column_mut(i).assign(&self.b.column(i));
        m
    }

    /// `A` with columns `i` and `j` taken from `B`.
    pub fn a_b_pair(&self, i: usize, j: usize) -> Array2<f64> {
        let mut m = self.a_b(i);
        m.column_mut(j).assign(&self.b.column(j));
        m
    }
}

/// Builds `A` and `B` from disjoint parts of the generator: two pseudo
/// substreams, or the two halves of `2d`-dimensional Sobol' points.
pub fn pick_freeze(space: &InputSpace, n: usize, generator: Generator) -> Result<PickFreezeDesign> {
    if n == 0 {
        return Err(Error::EmptySample("pick-freeze needs N >= 1".into()));
    }
    let d = space.dimension();
    let (ua, ub) = match generator {
        Generator::Pseudo { .. } => (
            generator.unit_matrix(n, d, 0)?,
            generator.unit_matrix(n, d, 1)?,
        ),
        Generator::LowDiscrepancy { .. } => {
            let joined = generator.unit_matrix(n, 2 * d, 0)?;
            (
                joined.slice(ndarray::s![.., ..d]).to_owned(),
                joined.slice(ndarray::s![.., d..]).to_owned(),
            )
        }
    };
    Ok(PickFreezeDesign {
        a: map_matrix(space, &ua)?,
        b: map_matrix(space, &ub)?,
    })
}

/// One-at-a-time path of `d + 1` points.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `(d + 1) x d` points on the level grid.
    pub unit_points: Array2<f64>,
    pub points: Array2<f64>,
    /// Axis changed between point `k` and `k + 1`.
    pub order: Vec<usize>,
    /// Signed step (`+delta` or `-delta`) taken at each move.
    pub steps: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MorrisDesign {
    pub trajectories: Vec<Trajectory>,
    pub levels: usize,
    pub delta: f64,
}

impl MorrisDesign {
    pub fn evaluations(&self) -> usize {
        self.trajectories.iter().map(|t| t.unit_points.nrows()).sum()
    }
}

/// `r` random trajectories on a `p`-level grid with step
/// `delta = delta_levels / (p - 1)`.
///
/// Each coordinate starts on a level from which at least one of `+delta`,
/// `-delta` stays in `[0, 1]`; the step sign is drawn at random and
/// reflected when it would leave the cube.
pub fn morris_trajectories(
    space: &InputSpace,
    r: usize,
    p: usize,
    delta_levels: usize,
    seed: u64,
) -> Result<MorrisDesign> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!("morris needs p >= 2, got {p}")));
    }
    if delta_levels < 1 || delta_levels > p - 1 {
        return Err(Error::InvalidParameter(format!(
            "infeasible step: delta_levels = {delta_levels} must lie in [1, {}]",
            p - 1
        )));
    }
    let d = space.dimension();
    let top = p - 1;
    let delta = delta_levels as f64 / top as f64;
    let feasible: Vec<usize> = (0..p)
        .filter(|&k| k + delta_levels <= top || k >= delta_levels)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trajectories = Vec::with_capacity(r);
    for _ in 0..r {
        let mut level: Vec<usize> = (0..d)
            .map(|_| feasible[rng.random_range(0..feasible.len())])
            .collect();
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(&mut rng);
        let mut unit = Array2::zeros((d + 1, d));
        let to_unit = |k: usize| k as f64 / top as f64;
        for i in 0..d {
            unit[[0, i]] = to_unit(level[i]);
        }
        let mut steps = Vec::with_capacity(d);
        for (step, &axis) in order.iter().enumerate() {
            let up = rng.random_bool(0.5);
            let can_up = level[axis] + delta_levels <= top;
            let can_down = level[axis] >= delta_levels;
            let go_up = (up && can_up) || !can_down;
            if go_up {
                level[axis] += delta_levels;
                steps.push(delta);
            } else {
                level[axis] -= delta_levels;
                steps.push(-delta);
            }
            for i in 0..d {
                unit[[step + 1, i]] = to_unit(level[i]);
            }
        }
        let mut points = Array2::zeros(unit.raw_dim());
        for (i, m) in space.marginals().iter().enumerate() {
            for k in 0..=d {
                points[[k, i]] = m.quantile_closed(unit[[k, i]])?;
            }
        }
        trajectories.push(Trajectory {
            unit_points: unit,
            points,
            order,
            steps,
        });
    }
    Ok(MorrisDesign {
        trajectories,
        levels: p,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::InputDistribution;

    #[test]
    fn first_sobol_point_is_one_half() {
        let design = generate(&InputSpace::unit_cube(1), 1, Generator::LowDiscrepancy { skip: 0 }).unwrap();
        assert_eq!(design.unit_points[[0, 0]], 0.5);
    }

    #[test]
    fn too_many_dimensions() {
        let err = generate(&InputSpace::unit_cube(41), 4, Generator::LowDiscrepancy { skip: 0 }).unwrap_err();
        assert_eq!(err, Error::TooManyDimensions { requested: 41, max: 40 });
        let err = pick_freeze(&InputSpace::unit_cube(21), 4, Generator::LowDiscrepancy { skip: 0 }).unwrap_err();
        assert!(err.to_string().contains("40"));
    }

    #[test]
    fn pseudo_is_deterministic() {
        let space = InputSpace::unit_cube(2);
        let a = generate(&space, 5, Generator::Pseudo { seed: 7 }).unwrap();
        let b = generate(&space, 5, Generator::Pseudo { seed: 7 }).unwrap();
        assert_eq!(a.unit_points, b.unit_points);
        let c = generate(&space, 5, Generator::Pseudo { seed: 8 }).unwrap();
        assert_ne!(a.unit_points, c.unit_points);
    }

    #[test]
    fn quantile_transform() {
        let space = InputSpace::new(vec![InputDistribution::uniform(2.0, 4.0).unwrap()]).unwrap();
        let d = generate(&space, 1, Generator::LowDiscrepancy { skip: 0 }).unwrap();
        assert_eq!(d.points[[0, 0]], 3.0);
    }

    #[test]
    fn pick_freeze_columns() {
        let pf = pick_freeze(&InputSpace::unit_cube(3), 16, Generator::Pseudo { seed: 3 }).unwrap();
        for i in 0..3 {
            let m = pf.a_b(i);
            for j in 0..3 {
                if j == i {
                    assert_eq!(m.column(j), pf.b.column(j));
                } else {
                    assert_eq!(m.column(j), pf.a.column(j));
                }
            }
        }
        assert_ne!(pf.a, pf.b);
    }

    #[test]
    fn pick_freeze_low_discrepancy_splits_one_point() {
        let pf = pick_freeze(&InputSpace::unit_cube(1), 1, Generator::LowDiscrepancy { skip: 0 }).unwrap();
        // first Sobol' point in two dimensions is (1/2, 1/2)
        assert_eq!(pf.a[[0, 0]], 0.5);
        assert_eq!(pf.b[[0, 0]], 0.5);
        assert!(pick_freeze(&InputSpace::unit_cube(1), 0, Generator::Pseudo { seed: 1 }).is_err());
    }

    #[test]
    fn trajectories_move_one_coordinate_at_a_time() {
        let design = morris_trajectories(&InputSpace::unit_cube(3), 1, 4, 2, 11).unwrap();
        let t = &design.trajectories[0];
        assert_eq!(t.unit_points.nrows(), 4);
        let mut seen = [false; 3];
        for k in 0..3 {
            let diff: Vec<f64> = (0..3)
                .map(|i| t.unit_points[[k + 1, i]] - t.unit_points[[k, i]])
                .collect();
            let moved: Vec<usize> = (0..3).filter(|&i| diff[i] != 0.0).collect();
            assert_eq!(moved.len(), 1);
            assert!((diff[moved[0]].abs() - 2.0 / 3.0).abs() < 1e-15);
            seen[moved[0]] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn two_level_grid_uses_endpoints() {
        let design = morris_trajectories(&InputSpace::unit_cube(2), 5, 2, 1, 1).unwrap();
        assert_eq!(design.delta, 1.0);
        for t in &design.trajectories {
            assert!(t.unit_points.iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn infeasible_steps() {
        let space = InputSpace::unit_cube(2);
        assert!(morris_trajectories(&space, 2, 4, 0, 1).is_err());
        assert!(morris_trajectories(&space, 2, 4, 4, 1).is_err());
        assert!(morris_trajectories(&space, 2, 1, 1, 1).is_err());
    }
}

//! Scalp topography feature: electrode projection onto the head plane and
//! biharmonic spline interpolation onto a 32x32 grid.
//!
//! Plane convention: `x = r·sin(theta)` points toward the right ear and
//! `y = r·cos(theta)` toward the nose. Grid row `i` samples `y = axis[i]` and
//! column `j` samples `x = axis[j]`, where `axis` is 32 evenly spaced points
//! from `-HEAD_RADIUS` to `+HEAD_RADIUS` inclusive. Rows therefore run from the
//! back of the head to the nose, and flipping columns mirrors left and right.

use thiserror::Error;

use crate::dataset::{ChannelLoc, EegDataset};
use crate::linalg::{LinalgError, Lu, Matrix};

pub const GRID_SIZE: usize = 32;
/// Radius of the head disk on the grid, in squeezed plane units.
pub const HEAD_RADIUS: f64 = 0.5;

const DUPLICATE_DISTANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopoError {
    #[error("only {0} electrodes have usable positions; at least 3 are needed")]
    TooFewElectrodes(usize),
    #[error("electrodes {0} and {1} share a position")]
    DuplicatePosition(usize, usize),
    #[error("interpolation system is singular: {0}")]
    SingularSystem(LinalgError),
    #[error("expected {expected} electrode values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("component {comp} out of range ({n_comp} components)")]
    NoSuchComponent { comp: usize, n_comp: usize },
}

/// Retained electrodes projected and squeezed onto the head plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodePlane {
    pub xy: Vec<[f64; 2]>,
    /// Index into the channel list passed to [`project_electrodes`].
    pub kept_indices: Vec<usize>,
    /// Unsqueezed radius mapped onto `HEAD_RADIUS`.
    pub plot_radius: f64,
}

impl ElectrodePlane {
    pub fn squeeze_factor(&self) -> f64 {
        HEAD_RADIUS / self.plot_radius
    }
}

/// Interpolated map, row-major `GRID_SIZE x GRID_SIZE`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalpGrid {
    pub values: Vec<f64>,
    pub inside_mask: Vec<bool>,
}

impl ScalpGrid {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * GRID_SIZE + col]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The 32 sample coordinates shared by both grid axes.
pub fn grid_axis() -> [f64; GRID_SIZE] {
    let mut axis = [0.0; GRID_SIZE];
    let step = 2.0 * HEAD_RADIUS / (GRID_SIZE - 1) as f64;
    for (i, a) in axis.iter_mut().enumerate() {
        *a = -HEAD_RADIUS + step * i as f64;
    }
    axis
}

/// Cells whose sample point lies within the head disk.
pub fn head_mask() -> Vec<bool> {
    let axis = grid_axis();
    (0..GRID_SIZE * GRID_SIZE)
        .map(|k| {
            let (y, x) = (axis[k / GRID_SIZE], axis[k % GRID_SIZE]);
            x.hypot(y) <= HEAD_RADIUS
        })
        .collect()
}

/// Projects positioned channels to the plane.
///
/// The plot radius is `max(0.5, min(1.0, 1.02 · max radius))`; channels
/// farther out than the plot radius are dropped, and the remainder are
/// scaled by `HEAD_RADIUS / plot_radius`.
pub fn project_electrodes(chanlocs: &[ChannelLoc]) -> Result<ElectrodePlane, TopoError> {
    let positioned: Vec<usize> = (0..chanlocs.len())
        .filter(|&i| {
            let c = &chanlocs[i];
            c.has_position && c.theta.is_finite() && c.radius.is_finite()
        })
        .collect();
    let max_radius = positioned
        .iter()
        .map(|&i| chanlocs[i].radius)
        .fold(f64::NEG_INFINITY, f64::max);
    let plot_radius = (max_radius * 1.02).clamp(0.5, 1.0);

    let kept_indices: Vec<usize> = positioned
        .into_iter()
        .filter(|&i| chanlocs[i].radius <= plot_radius)
        .collect();
    if kept_indices.len() < 3 {
        return Err(TopoError::TooFewElectrodes(kept_indices.len()));
    }

    let squeeze = HEAD_RADIUS / plot_radius;
    let xy: Vec<[f64; 2]> = kept_indices
        .iter()
        .map(|&i| {
            let (sin, cos) = chanlocs[i].theta.to_radians().sin_cos();
            let r = chanlocs[i].radius * squeeze;
            [r * sin, r * cos]
        })
        .collect();

    for a in 0..xy.len() {
        for b in a + 1..xy.len() {
            if distance(xy[a], xy[b]) <= DUPLICATE_DISTANCE {
                return Err(TopoError::DuplicatePosition(
                    kept_indices[a],
                    kept_indices[b],
                ));
            }
        }
    }
    Ok(ElectrodePlane {
        xy,
        kept_indices,
        plot_radius,
    })
}

#[inline]
fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Biharmonic Green's function `r²(ln r − 1)`, zero at the origin.
#[inline]
pub fn green(r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        r * r * (r.ln() - 1.0)
    }
}

/// Biharmonic spline through scattered points, without polynomial terms.
#[derive(Debug, Clone)]
pub struct BiharmonicSpline {
    sites: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl BiharmonicSpline {
    pub fn fit(sites: &[[f64; 2]], values: &[f64]) -> Result<Self, TopoError> {
        if sites.len() != values.len() {
            return Err(TopoError::LengthMismatch {
                expected: sites.len(),
                found: values.len(),
            });
        }
        let n = sites.len();
        let g = Matrix::from_fn(n, n, |j, k| green(distance(sites[j], sites[k])));
        let lu = Lu::factor(&g).map_err(TopoError::SingularSystem)?;
        Ok(BiharmonicSpline {
            sites: sites.to_vec(),
            weights: lu.solve(values),
        })
    }

    pub fn eval(&self, q: [f64; 2]) -> f64 {
        self.sites
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * green(distance(q, p)))
            .sum()
    }
}

/// Interpolates one value per retained electrode onto the grid. Cells
/// outside the head disk are zero.
pub fn biharmonic_interpolate(plane: &ElectrodePlane, v: &[f64]) -> Result<ScalpGrid, TopoError> {
    let spline = BiharmonicSpline::fit(&plane.xy, v)?;
    let axis = grid_axis();
    let inside_mask = head_mask();
    let values = inside_mask
        .iter()
        .enumerate()
        .map(|(k, &inside)| {
            if inside {
                spline.eval([axis[k % GRID_SIZE], axis[k / GRID_SIZE]])
            } else {
                0.0
            }
        })
        .collect();
    Ok(ScalpGrid {
        values,
        inside_mask,
    })
}

/// Raw (unnormalized) scalp map of one component: its `icawinv` column over
/// positioned ICA channels, average-referenced, then interpolated.
pub fn topo_feature(ds: &EegDataset, comp: usize) -> Result<ScalpGrid, TopoError> {
    let plane = ica_plane(ds)?;
    topo_feature_on(ds, &plane, comp)
}

/// Electrode plane for the channels covered by the ICA decomposition.
pub fn ica_plane(ds: &EegDataset) -> Result<ElectrodePlane, TopoError> {
    let locs: Vec<ChannelLoc> = ds
        .ica
        .chan_indices
        .iter()
        .map(|&c| ds.chanlocs[c].clone())
        .collect();
    project_electrodes(&locs)
}

pub(crate) fn topo_feature_on(
    ds: &EegDataset,
    plane: &ElectrodePlane,
    comp: usize,
) -> Result<ScalpGrid, TopoError> {
    let n_comp = ds.n_components();
    if comp >= n_comp {
        return Err(TopoError::NoSuchComponent { comp, n_comp });
    }
    let column = ds.ica.winv.column(comp);
    let mut v: Vec<f64> = plane.kept_indices.iter().map(|&i| column[i]).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    biharmonic_interpolate(plane, &v)
}

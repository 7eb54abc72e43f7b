//! Steady 1D shallow-water state and Lagrangian light history.
//!
//! The water height is the design object: `h(x) = a₀ + Σ aₖ sin(2kπx/L)`.
//! Velocity follows from constant discharge (`hu = Q₀`) and the topography is
//! recovered from the Bernoulli constant:
//!
//! ```text
//! z_b = M₀/g - Q₀²/(2gh²) - h,   M₀ = Q₀²/(2h(0)²) + g(h(0) + z_b(0))
//! ```
//!
//! Particles released at relative depth `q` keep that relative depth, so the
//! light they see is `I = I_s exp(-ε q h(x))`.

use std::f64::consts::PI;

use crate::error::{ModelError, Result};
use crate::kinetics::ArealParams;

/// Uniform node-centred grid on `[0, L]`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub length: f64,
    pub cells: usize,
}

impl Grid {
    /// `cells = round(L / dx)`.
    pub fn from_step(length: f64, dx: f64) -> Result<Self> {
        if !(length > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "L",
                value: length,
                reason: "raceway length must be positive",
            });
        }
        if !(dx > 0.0 && dx <= length) {
            return Err(ModelError::InvalidParameter {
                name: "dx",
                value: dx,
                reason: "grid step must be positive and at most L",
            });
        }
        let cells = (length / dx).round().max(1.0) as usize;
        Ok(Self { length, cells })
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.cells + 1
    }

    #[inline]
    pub fn step(&self) -> f64 {
        self.length / self.cells as f64
    }

    #[inline]
    pub fn x(&self, node: usize) -> f64 {
        node as f64 * self.step()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.nodes()).map(|n| self.x(n)).collect()
    }

    /// Trapezoidal quadrature weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let dx = self.step();
        let mut w = vec![dx; self.nodes()];
        w[0] = 0.5 * dx;
        w[self.cells] = 0.5 * dx;
        w
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.nodes());
        let dx = self.step();
        let interior: f64 = values[1..self.cells].iter().sum();
        dx * (interior + 0.5 * (values[0] + values[self.cells]))
    }
}

/// How the light extinction coefficient is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extinction {
    /// Constant ε (m⁻¹).
    Fixed(f64),
    /// ε = ln(I_s / I_zb) / a₀, tracking the mean depth.
    Areal(ArealParams),
}

impl Extinction {
    /// ε such that only `bottom_light` reaches depth `depth`.
    pub fn from_bottom_light(surface: f64, bottom_light: f64, depth: f64) -> Self {
        Extinction::Fixed((surface / bottom_light).ln() / depth)
    }

    pub fn coefficient(&self, mean_depth: f64) -> f64 {
        match self {
            Extinction::Fixed(eps) => *eps,
            Extinction::Areal(ap) => ap.extinction(mean_depth),
        }
    }

    /// dε/da₀.
    pub fn mean_depth_derivative(&self, mean_depth: f64) -> f64 {
        match self {
            Extinction::Fixed(_) => 0.0,
            Extinction::Areal(ap) => -ap.optical_depth() / (mean_depth * mean_depth),
        }
    }
}

/// Raceway geometry and hydraulic constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydroConfig {
    pub grid: Grid,
    /// Discharge per unit width Q₀ (m²·s⁻¹).
    pub discharge: f64,
    pub gravity: f64,
    /// Topography at the inlet, z_b(0) (m).
    pub zb0: f64,
    /// Surface light I_s (µmol·m⁻²·s⁻¹).
    pub surface_light: f64,
}

impl Default for HydroConfig {
    fn default() -> Self {
        Self {
            grid: Grid {
                length: 100.0,
                cells: 10_000,
            },
            discharge: 0.04,
            gravity: 9.81,
            zb0: -0.4,
            surface_light: 2000.0,
        }
    }
}

impl HydroConfig {
    /// Critical height h_c = (Q₀²/g)^{1/3}, where the Froude number reaches 1.
    pub fn critical_height(&self) -> f64 {
        (self.discharge * self.discharge / self.gravity).cbrt()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("Q0", self.discharge),
            ("g", self.gravity),
            ("I_s", self.surface_light),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParameter {
                    name,
                    value,
                    reason: "must be strictly positive",
                });
            }
        }
        Ok(())
    }
}

/// Truncated sine series for the water height.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierShape {
    /// Mean height a₀ (m), also h(0).
    pub a0: f64,
    /// a₁…a_N (m).
    pub coeffs: Vec<f64>,
}

impl FourierShape {
    pub fn flat(a0: f64, order: usize) -> Self {
        Self {
            a0,
            coeffs: vec![0.0; order],
        }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn height_at(&self, x: f64, length: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .fold(self.a0, |h, (k, a)| {
                h + a * (2.0 * (k + 1) as f64 * PI * x / length).sin()
            })
    }
}

/// Sine modes sampled on a grid; row k holds sin(2(k+1)πxₙ/L).
#[derive(Debug, Clone)]
pub struct FourierBasis {
    pub modes: Vec<Vec<f64>>,
    nodes: usize,
}

impl FourierBasis {
    pub fn new(grid: &Grid, order: usize) -> Self {
        let cells = grid.cells;
        let modes = (1..=order)
            .map(|k| {
                (0..grid.nodes())
                    .map(|n| {
                        // Reduce k·n mod cells so the argument stays in [0, 2π).
                        let phase = (k * n) % cells;
                        (2.0 * PI * phase as f64 / cells as f64).sin()
                    })
                    .collect()
            })
            .collect();
        Self {
            modes,
            nodes: grid.nodes(),
        }
    }

    pub fn order(&self) -> usize {
        self.modes.len()
    }

    /// h(xₙ) = a₀ + Σ aₖ sin(2kπxₙ/L).
    pub fn height_profile(&self, shape: &FourierShape) -> Result<Vec<f64>> {
        if shape.order() > self.order() {
            return Err(ModelError::DimensionMismatch {
                what: "Fourier coefficients",
                expected: self.order(),
                found: shape.order(),
            });
        }
        let mut h = vec![shape.a0; self.nodes];
        for (coeff, mode) in shape.coeffs.iter().zip(&self.modes) {
            if *coeff != 0.0 {
                for (hn, s) in h.iter_mut().zip(mode) {
                    *hn += coeff * s;
                }
            }
        }
        Ok(h)
    }
}

/// Convenience wrapper building a fresh basis.
pub fn height_profile(shape: &FourierShape, grid: &Grid) -> Vec<f64> {
    FourierBasis::new(grid, shape.order())
        .height_profile(shape)
        .expect("basis built for this shape")
}

/// Steady subcritical flow on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub grid: Grid,
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub u: Vec<f64>,
    pub eta: Vec<f64>,
    pub zb: Vec<f64>,
    pub froude: Vec<f64>,
    /// Bernoulli constant M₀ (m²·s⁻²).
    pub bernoulli: f64,
    pub discharge: f64,
    pub gravity: f64,
}

impl FlowField {
    /// Builds the flow for a given height profile, with h(0) = `h[0]` and
    /// z_b(0) taken from the configuration.
    pub fn from_height(h: Vec<f64>, cfg: &HydroConfig) -> Result<Self> {
        let grid = cfg.grid;
        if h.len() != grid.nodes() {
            return Err(ModelError::DimensionMismatch {
                what: "height profile",
                expected: grid.nodes(),
                found: h.len(),
            });
        }
        let (min_node, min_h) = h
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("grid has nodes");
        if !(min_h > 0.0) {
            return Err(ModelError::NonPositiveHeight {
                min_h,
                x: grid.x(min_node),
            });
        }
        let h_c = cfg.critical_height();
        if !(min_h > h_c) {
            return Err(ModelError::SupercriticalFlow {
                min_h,
                h_c,
                x: grid.x(min_node),
            });
        }

        let q0 = cfg.discharge;
        let g = cfg.gravity;
        let h0 = h[0];
        let bernoulli = q0 * q0 / (2.0 * h0 * h0) + g * (h0 + cfg.zb0);
        let u: Vec<f64> = h.iter().map(|hn| q0 / hn).collect();
        let zb: Vec<f64> = h
            .iter()
            .map(|hn| bernoulli / g - q0 * q0 / (2.0 * g * hn * hn) - hn)
            .collect();
        let eta = h.iter().zip(&zb).map(|(hn, z)| hn + z).collect();
        let froude = h.iter().zip(&u).map(|(hn, un)| un / (g * hn).sqrt()).collect();
        Ok(Self {
            grid,
            x: grid.coordinates(),
            h,
            u,
            eta,
            zb,
            froude,
            bernoulli,
            discharge: q0,
            gravity: g,
        })
    }

    pub fn nodes(&self) -> usize {
        self.h.len()
    }

    pub fn max_velocity(&self) -> f64 {
        self.u.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_height(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// du/dx, second order: centred inside, one-sided at the ends.
    pub fn velocity_gradient(&self) -> Vec<f64> {
        let n = self.nodes();
        let dx = self.grid.step();
        let u = &self.u;
        if n < 3 {
            let d = (u[n - 1] - u[0]) / dx;
            return vec![d; n];
        }
        let mut du = vec![0.0; n];
        du[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dx);
        for k in 1..n - 1 {
            du[k] = (u[k + 1] - u[k - 1]) / (2.0 * dx);
        }
        du[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * dx);
        du
    }

    /// Vertical velocity w(x, z) = (M₀/g - 3u²/(2g) - z) u'(x) at a grid node.
    pub fn vertical_velocity(&self, node: usize, z: f64, du_dx: &[f64]) -> f64 {
        let g = self.gravity;
        let u = self.u[node];
        (self.bernoulli / g - 1.5 * u * u / g - z) * du_dx[node]
    }
}

/// Relative release depths qᵢ = (i - ½)/N_z, i = 1…N_z.
pub fn depth_fractions(nz: usize) -> Vec<f64> {
    (1..=nz).map(|i| (i as f64 - 0.5) / nz as f64).collect()
}

/// Particle paths and received light for a set of release depths.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    /// Relative depths below the free surface at release.
    pub fractions: Vec<f64>,
    /// Extinction coefficient ε (m⁻¹).
    pub extinction: f64,
    pub surface_light: f64,
    /// zᵢ(xₙ) (m).
    pub depth: Vec<Vec<f64>>,
    /// Iᵢ(xₙ) (µmol·m⁻²·s⁻¹).
    pub light: Vec<Vec<f64>>,
}

impl TrajectoryBundle {
    pub fn new(flow: &FlowField, fractions: Vec<f64>, extinction: f64, surface_light: f64) -> Self {
        let u_in = flow.u[0];
        let eta_in = flow.eta[0];
        let h_in = flow.h[0];
        let depth = fractions
            .iter()
            .map(|q| {
                let z_in = eta_in - q * h_in;
                flow.eta
                    .iter()
                    .zip(&flow.u)
                    .map(|(eta, u)| eta + (u_in / u) * (z_in - eta_in))
                    .collect()
            })
            .collect();
        let light = fractions
            .iter()
            .map(|q| {
                flow.h
                    .iter()
                    .map(|h| surface_light * (-extinction * q * h).exp())
                    .collect()
            })
            .collect();
        Self {
            fractions,
            extinction,
            surface_light,
            depth,
            light,
        }
    }

    /// Uniformly spread trajectories, `nz` of them.
    pub fn uniform(flow: &FlowField, nz: usize, extinction: f64, surface_light: f64) -> Self {
        Self::new(flow, depth_fractions(nz), extinction, surface_light)
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }
}

//! Permittivity of the insulating layer and the family of boundary data
//! `(h1, h2)` that prescribes the potential on the outer boundary.
//!
//! The layer occupies `[-L, L] x [-H - d, -H]`; above it (the gap between the
//! layer and the elastic plate) the permittivity is the constant `sigma2`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DielectricError {
    #[error("the layered lift requires z-independent σ₁")]
    DependsOnZ,
    #[error("permittivity must be positive, found {value} at x = {x}, z = {z}")]
    NonPositive { x: f64, z: f64, value: f64 },
    #[error("invalid σ bounds: {0}")]
    Bounds(String),
    #[error("non-finite derivative of h{part} at (x, z, w) = ({x}, {z}, {w})")]
    NonFinite { part: u8, x: f64, z: f64, w: f64 },
    #[error("w_max = {w_max} must be at least -H = {min}")]
    Range { w_max: f64, min: f64 },
}

/// Geometry shared by the permittivity and the boundary data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerGeometry {
    pub half_width: f64,
    pub gap: f64,
    pub thickness: f64,
}

impl LayerGeometry {
    pub fn layer_bottom(&self) -> f64 {
        -self.gap - self.thickness
    }
    pub fn interface(&self) -> f64 {
        -self.gap
    }
}

/// Horizontal permittivity profiles selectable from a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Sigma1Profile {
    Constant { value: f64 },
    /// `value + slope * x`
    Affine { value: f64, slope: f64 },
    /// `base + amplitude * (1 + cos(pi x / L)) / 2`
    Bump { base: f64, amplitude: f64 },
}

impl Sigma1Profile {
    pub fn eval(&self, x: f64, half_width: f64) -> f64 {
        match *self {
            Sigma1Profile::Constant { value } => value,
            Sigma1Profile::Affine { value, slope } => value + slope * x,
            Sigma1Profile::Bump { base, amplitude } => {
                base + 0.5 * amplitude * (1.0 + (PI * x / half_width).cos())
            }
        }
    }

    pub fn derivative(&self, x: f64, half_width: f64) -> f64 {
        match *self {
            Sigma1Profile::Constant { .. } => 0.0,
            Sigma1Profile::Affine { slope, .. } => slope,
            Sigma1Profile::Bump { amplitude, .. } => {
                -0.5 * amplitude * PI / half_width * (PI * x / half_width).sin()
            }
        }
    }

    /// Exact extremes over `[-L, L]`.
    fn range(&self, half_width: f64) -> (f64, f64) {
        match *self {
            Sigma1Profile::Constant { value } => (value, value),
            Sigma1Profile::Affine { value, slope } => {
                let (a, b) = (value - slope * half_width, value + slope * half_width);
                (a.min(b), a.max(b))
            }
            Sigma1Profile::Bump { base, amplitude } => {
                let (a, b) = (base, base + amplitude);
                (a.min(b), a.max(b))
            }
        }
    }
}

pub type Field2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Sigma1 {
    Profile(Sigma1Profile),
    Field { f: Field2, depends_on_z: bool },
}

/// Layer permittivity `sigma1(x, z)` together with the gap constant `sigma2`
/// and certified bounds over the closed layer and the gap.
#[derive(Clone)]
pub struct PermittivityModel {
    sigma1: Sigma1,
    pub sigma2: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub geometry: LayerGeometry,
}

impl fmt::Debug for PermittivityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s1 = match &self.sigma1 {
            Sigma1::Profile(p) => format!("{p:?}"),
            Sigma1::Field { depends_on_z, .. } => format!("Field {{ depends_on_z: {depends_on_z} }}"),
        };
        f.debug_struct("PermittivityModel")
            .field("sigma1", &s1)
            .field("sigma2", &self.sigma2)
            .field("sigma_min", &self.sigma_min)
            .field("sigma_max", &self.sigma_max)
            .finish()
    }
}

const BOUND_SAMPLES_X: usize = 257;
const BOUND_SAMPLES_Z: usize = 33;

impl PermittivityModel {
    pub fn from_profile(
        profile: Sigma1Profile,
        sigma2: f64,
        geometry: LayerGeometry,
    ) -> Result<Self, DielectricError> {
        let (lo, hi) = profile.range(geometry.half_width);
        if !(lo > 0.0) {
            let x = if profile.eval(-geometry.half_width, geometry.half_width) <= lo {
                -geometry.half_width
            } else {
                geometry.half_width
            };
            return Err(DielectricError::NonPositive {
                x,
                z: geometry.interface(),
                value: lo,
            });
        }
        if !(sigma2 > 0.0) {
            return Err(DielectricError::NonPositive {
                x: 0.0,
                z: 0.0,
                value: sigma2,
            });
        }
        Ok(Self {
            sigma1: Sigma1::Profile(profile),
            sigma2,
            sigma_min: lo.min(sigma2),
            sigma_max: hi.max(sigma2),
            geometry,
        })
    }

    /// General layer permittivity; bounds are taken from a sampled grid.
    pub fn from_field(
        f: Field2,
        depends_on_z: bool,
        sigma2: f64,
        geometry: LayerGeometry,
    ) -> Result<Self, DielectricError> {
        let (mut lo, mut hi) = (sigma2, sigma2);
        if !(sigma2 > 0.0) {
            return Err(DielectricError::NonPositive {
                x: 0.0,
                z: 0.0,
                value: sigma2,
            });
        }
        for (x, z) in layer_samples(&geometry) {
            let s = f(x, z);
            if !(s > 0.0) {
                return Err(DielectricError::NonPositive { x, z, value: s });
            }
            lo = lo.min(s);
            hi = hi.max(s);
        }
        Ok(Self {
            sigma1: Sigma1::Field { f, depends_on_z },
            sigma2,
            sigma_min: lo,
            sigma_max: hi,
            geometry,
        })
    }

    /// Replaces the computed bounds by user-certified ones after checking that
    /// they enclose every sampled value.
    pub fn with_certified_bounds(mut self, lo: f64, hi: f64) -> Result<Self, DielectricError> {
        if !(lo > 0.0) {
            return Err(DielectricError::Bounds(format!("sigma_min = {lo} must be positive")));
        }
        if lo > self.sigma_min {
            return Err(DielectricError::Bounds(format!(
                "sigma_min = {lo} exceeds sampled minimum {}",
                self.sigma_min
            )));
        }
        if hi < self.sigma_max {
            return Err(DielectricError::Bounds(format!(
                "sigma_max = {hi} is below sampled maximum {}",
                self.sigma_max
            )));
        }
        self.sigma_min = lo;
        self.sigma_max = hi;
        Ok(self)
    }

    pub fn sigma1(&self, x: f64, z: f64) -> f64 {
        match &self.sigma1 {
            Sigma1::Profile(p) => p.eval(x, self.geometry.half_width),
            Sigma1::Field { f, .. } => f(x, z),
        }
    }

    /// Piecewise permittivity: `sigma1` in the layer, `sigma2` above it.
    pub fn sigma(&self, x: f64, z: f64) -> f64 {
        if z < self.geometry.interface() {
            self.sigma1(x, z)
        } else {
            self.sigma2
        }
    }

    pub fn depends_on_z(&self) -> bool {
        matches!(self.sigma1, Sigma1::Field { depends_on_z: true, .. })
    }

    pub fn profile(&self) -> Option<Sigma1Profile> {
        match self.sigma1 {
            Sigma1::Profile(p) => Some(p),
            Sigma1::Field { .. } => None,
        }
    }

    /// `(sigma1(x), d sigma1/dx)` for z-independent layers.
    fn horizontal(&self, x: f64) -> (f64, f64) {
        let l = self.geometry.half_width;
        match &self.sigma1 {
            Sigma1::Profile(p) => (p.eval(x, l), p.derivative(x, l)),
            Sigma1::Field { f, .. } => {
                let z = self.geometry.interface();
                let h = 1e-6 * l;
                (f(x, z), (f(x + h, z) - f(x - h, z)) / (2.0 * h))
            }
        }
    }

    /// Largest sampled deviation of `sigma1` from the bounds; zero when the
    /// invariant `sigma_min <= sigma <= sigma_max` holds on the sample grid.
    pub fn bound_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (x, z) in layer_samples(&self.geometry) {
            let s = self.sigma1(x, z);
            worst = worst.max(self.sigma_min - s).max(s - self.sigma_max);
        }
        worst
    }
}

fn layer_samples(g: &LayerGeometry) -> impl Iterator<Item = (f64, f64)> + '_ {
    (0..BOUND_SAMPLES_X).flat_map(move |i| {
        let x = -g.half_width + 2.0 * g.half_width * i as f64 / (BOUND_SAMPLES_X - 1) as f64;
        (0..BOUND_SAMPLES_Z).map(move |j| {
            let z = g.layer_bottom() + g.thickness * j as f64 / (BOUND_SAMPLES_Z - 1) as f64;
            (x, z)
        })
    })
}

/// Boundary-data family. `h1` lives on the layer, `h2` on `z >= -H`; the third
/// argument `w` is the local plate deflection. Gradients are ordered
/// `[d/dx, d/dz, d/dw]`.
pub trait BoundaryData: Send + Sync {
    fn potential(&self) -> f64;
    fn h1(&self, x: f64, z: f64, w: f64) -> f64;
    fn h2(&self, x: f64, z: f64, w: f64) -> f64;
    fn grad_h1(&self, x: f64, z: f64, w: f64) -> [f64; 3];
    fn grad_h2(&self, x: f64, z: f64, w: f64) -> [f64; 3];
}

/// Closed-form boundary data for a layer whose permittivity depends on `x`
/// only: the exact potential of a flat plate at height `w`, column by column.
#[derive(Clone)]
pub struct LayeredLift {
    perm: PermittivityModel,
    potential: f64,
}

impl LayeredLift {
    #[inline]
    fn parts(&self, x: f64, w: f64) -> (f64, f64, f64, f64) {
        let g = &self.perm.geometry;
        let (s, ds) = self.perm.horizontal(x);
        let den = self.perm.sigma2 * g.thickness + s * (g.gap + w);
        (s, ds, den, self.perm.sigma2)
    }
}

impl BoundaryData for LayeredLift {
    fn potential(&self) -> f64 {
        self.potential
    }

    fn h1(&self, x: f64, z: f64, w: f64) -> f64 {
        let g = &self.perm.geometry;
        let (_, _, den, s2) = self.parts(x, w);
        self.potential * s2 * (g.gap + z + g.thickness) / den
    }

    fn h2(&self, x: f64, z: f64, w: f64) -> f64 {
        let g = &self.perm.geometry;
        let (s, _, den, s2) = self.parts(x, w);
        self.potential * (s2 * g.thickness + s * (g.gap + z)) / den
    }

    fn grad_h1(&self, x: f64, z: f64, w: f64) -> [f64; 3] {
        let g = &self.perm.geometry;
        let v = self.potential;
        let (s, ds, den, s2) = self.parts(x, w);
        let depth = g.gap + z + g.thickness;
        [
            -v * s2 * depth * ds * (g.gap + w) / (den * den),
            v * s2 / den,
            -v * s2 * depth * s / (den * den),
        ]
    }

    fn grad_h2(&self, x: f64, z: f64, w: f64) -> [f64; 3] {
        let g = &self.perm.geometry;
        let v = self.potential;
        let (s, ds, den, s2) = self.parts(x, w);
        [
            v * ds * s2 * g.thickness * (z - w) / (den * den),
            v * s / den,
            -v * (s2 * g.thickness + s * (g.gap + z)) * s / (den * den),
        ]
    }
}

/// Boundary data paired with the geometry it was built for.
#[derive(Clone)]
pub struct BoundaryDataModel {
    data: Arc<dyn BoundaryData>,
    pub geometry: LayerGeometry,
}

impl fmt::Debug for BoundaryDataModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryDataModel")
            .field("potential", &self.data.potential())
            .field("geometry", &self.geometry)
            .finish()
    }
}

impl BoundaryDataModel {
    pub fn new(data: Arc<dyn BoundaryData>, geometry: LayerGeometry) -> Self {
        Self { data, geometry }
    }

    pub fn potential(&self) -> f64 {
        self.data.potential()
    }
    pub fn h1(&self, x: f64, z: f64, w: f64) -> f64 {
        self.data.h1(x, z, w)
    }
    pub fn h2(&self, x: f64, z: f64, w: f64) -> f64 {
        self.data.h2(x, z, w)
    }
    pub fn grad_h1(&self, x: f64, z: f64, w: f64) -> [f64; 3] {
        self.data.grad_h1(x, z, w)
    }
    pub fn grad_h2(&self, x: f64, z: f64, w: f64) -> [f64; 3] {
        self.data.grad_h2(x, z, w)
    }

    /// `h_w(x, z)`: `h1` below the interface, `h2` on and above it.
    pub fn lifted(&self, x: f64, z: f64, w: f64) -> f64 {
        if z < self.geometry.interface() {
            self.h1(x, z, w)
        } else {
            self.h2(x, z, w)
        }
    }
}

/// Builds the closed-form boundary data for a z-independent layer.
pub fn layered_lift_model(
    perm: &PermittivityModel,
    potential: f64,
) -> Result<BoundaryDataModel, DielectricError> {
    if perm.depends_on_z() {
        return Err(DielectricError::DependsOnZ);
    }
    let data = LayeredLift {
        perm: perm.clone(),
        potential,
    };
    Ok(BoundaryDataModel::new(Arc::new(data), perm.geometry))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompatReport {
    pub continuity: f64,
    pub flux: f64,
    /// `|h1(x, -H-d, w)|`
    pub bottom: f64,
    /// `|h2(x, w, w) - V|`
    pub plate: f64,
}

impl CompatReport {
    pub fn max_violation(&self) -> f64 {
        self.continuity.max(self.flux).max(self.bottom).max(self.plate)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if n == 1 {
            a
        } else {
            a + (b - a) * i as f64 / (n - 1) as f64
        }
    })
}

/// Samples `(x, w)` on `samples x samples` points over `[-L, L] x [-H, w_max]`
/// and reports the interface and Dirichlet mismatches of the boundary data.
pub fn check_transmission_compat(
    model: &BoundaryDataModel,
    perm: &PermittivityModel,
    samples: usize,
    w_max: f64,
) -> CompatReport {
    let g = model.geometry;
    let n = samples.max(2);
    let zi = g.interface();
    let mut rep = CompatReport {
        continuity: 0.0,
        flux: 0.0,
        bottom: 0.0,
        plate: 0.0,
    };
    for x in linspace(-g.half_width, g.half_width, n) {
        for w in linspace(-g.gap, w_max.max(-g.gap), n) {
            let c = (model.h1(x, zi, w) - model.h2(x, zi, w)).abs();
            let f1 = perm.sigma1(x, zi) * model.grad_h1(x, zi, w)[1];
            let f2 = perm.sigma2 * model.grad_h2(x, zi, w)[1];
            rep.continuity = rep.continuity.max(c);
            rep.flux = rep.flux.max((f1 - f2).abs());
            rep.bottom = rep.bottom.max(model.h1(x, g.layer_bottom(), w).abs());
            rep.plate = rep.plate.max((model.h2(x, w, w) - model.potential()).abs());
        }
    }
    rep
}

/// Constants of the gradient bounds on `h1`, `h2` over a deflection range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MConstants {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub w_max: f64,
}

/// Sampling resolution of [`estimate_m_constants`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub nx: usize,
    pub nz: usize,
    pub nw: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            nx: 41,
            nz: 17,
            nw: 65,
        }
    }
}

/// Inflation applied to every sampled supremum.
pub const M_INFLATION: f64 = 1.05;

/// Sampled estimate of `m1, m2, m3` such that, for `w` in `[-H, w_max]`,
///
/// * `|dx h1| + |dz h1| <= sqrt(m1 + m2 w^2)` and `|dw h1| <= sqrt(m3)` on the layer,
/// * `|dx h2| + |dz h2| <= sqrt((m1 + m2 w^2)/(H + w))` and
///   `|dw h2| <= sqrt(m3/(H + w))` for `-H <= z <= w`.
///
/// On a bounded deflection range the quadratic-in-`w` allowance is absorbed
/// into `m1`, so `m2` is reported as zero.
pub fn estimate_m_constants(
    model: &BoundaryDataModel,
    w_max: f64,
    res: Resolution,
) -> Result<MConstants, DielectricError> {
    let g = model.geometry;
    if !(w_max >= -g.gap) || !w_max.is_finite() {
        return Err(DielectricError::Range {
            w_max,
            min: -g.gap,
        });
    }
    let nw = if w_max > -g.gap { res.nw.max(2) } else { 1 };
    let (mut s1, mut s3) = (0.0_f64, 0.0_f64);
    for w in linspace(-g.gap, w_max, nw) {
        let gap_height = g.gap + w;
        for x in linspace(-g.half_width, g.half_width, res.nx.max(2)) {
            for z in linspace(g.layer_bottom(), g.interface(), res.nz.max(2)) {
                let d = model.grad_h1(x, z, w);
                if d.iter().any(|v| !v.is_finite()) {
                    return Err(DielectricError::NonFinite { part: 1, x, z, w });
                }
                s1 = s1.max((d[0].abs() + d[1].abs()).powi(2));
                s3 = s3.max(d[2] * d[2]);
            }
            if gap_height > 0.0 {
                for z in linspace(g.interface(), w, res.nz.max(2)) {
                    let d = model.grad_h2(x, z, w);
                    if d.iter().any(|v| !v.is_finite()) {
                        return Err(DielectricError::NonFinite { part: 2, x, z, w });
                    }
                    s1 = s1.max(gap_height * (d[0].abs() + d[1].abs()).powi(2));
                    s3 = s3.max(gap_height * d[2] * d[2]);
                }
            }
        }
    }
    Ok(MConstants {
        m1: M_INFLATION * s1,
        m2: 0.0,
        m3: M_INFLATION * s3,
        w_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> LayerGeometry {
        LayerGeometry {
            half_width: 1.0,
            gap: 1.0,
            thickness: 1.0,
        }
    }

    fn model(s1: f64, s2: f64, v: f64) -> (PermittivityModel, BoundaryDataModel) {
        let perm =
            PermittivityModel::from_profile(Sigma1Profile::Constant { value: s1 }, s2, geom())
                .unwrap();
        let bd = layered_lift_model(&perm, v).unwrap();
        (perm, bd)
    }

    #[test]
    fn closed_form_plug_in_values() {
        let (_, bd) = model(1.0, 2.0, 2.0);
        for x in [-1.0, 0.0, 0.3] {
            assert!(bd.h1(x, -2.0, 0.0).abs() < 1e-15);
            assert!((bd.h2(x, 0.0, 0.0) - 2.0).abs() < 1e-15);
            assert!((bd.h1(x, -1.0, 0.0) - 4.0 / 3.0).abs() < 1e-15);
            assert!((bd.h2(x, -1.0, 0.0) - 4.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let g = geom();
        let perm = PermittivityModel::from_profile(
            Sigma1Profile::Bump {
                base: 1.0,
                amplitude: 0.7,
            },
            2.0,
            g,
        )
        .unwrap();
        let bd = layered_lift_model(&perm, 1.5).unwrap();
        let e = 1e-6;
        for &(x, z, w) in &[(0.3, -1.4, 0.2), (-0.7, -1.9, -0.5)] {
            let d = bd.grad_h1(x, z, w);
            let fd = [
                (bd.h1(x + e, z, w) - bd.h1(x - e, z, w)) / (2.0 * e),
                (bd.h1(x, z + e, w) - bd.h1(x, z - e, w)) / (2.0 * e),
                (bd.h1(x, z, w + e) - bd.h1(x, z, w - e)) / (2.0 * e),
            ];
            for k in 0..3 {
                assert!((d[k] - fd[k]).abs() < 1e-7, "h1 component {k}");
            }
        }
        for &(x, z, w) in &[(0.3, -0.4, 0.2), (-0.7, -0.9, -0.5)] {
            let d = bd.grad_h2(x, z, w);
            let fd = [
                (bd.h2(x + e, z, w) - bd.h2(x - e, z, w)) / (2.0 * e),
                (bd.h2(x, z + e, w) - bd.h2(x, z - e, w)) / (2.0 * e),
                (bd.h2(x, z, w + e) - bd.h2(x, z, w - e)) / (2.0 * e),
            ];
            for k in 0..3 {
                assert!((d[k] - fd[k]).abs() < 1e-7, "h2 component {k}");
            }
        }
    }

    #[test]
    fn z_dependent_layer_is_rejected() {
        let perm = PermittivityModel::from_field(
            Arc::new(|_x, z| 2.0 + 0.1 * z),
            true,
            1.0,
            geom(),
        )
        .unwrap();
        assert_eq!(
            layered_lift_model(&perm, 1.0).unwrap_err().to_string(),
            "the layered lift requires z-independent σ₁"
        );
    }

    #[test]
    fn compat_holds_to_machine_precision() {
        let perm = PermittivityModel::from_profile(
            Sigma1Profile::Affine {
                value: 2.0,
                slope: 0.5,
            },
            1.3,
            geom(),
        )
        .unwrap();
        let bd = layered_lift_model(&perm, 3.0).unwrap();
        let rep = check_transmission_compat(&bd, &perm, 21, 2.0);
        assert!(rep.max_violation() <= 1e-12, "{rep:?}");
    }

    struct Shifted(BoundaryDataModel);
    impl BoundaryData for Shifted {
        fn potential(&self) -> f64 {
            self.0.potential()
        }
        fn h1(&self, x: f64, z: f64, w: f64) -> f64 {
            self.0.h1(x, z, w)
        }
        fn h2(&self, x: f64, z: f64, w: f64) -> f64 {
            let bump = if (z + 1.0).abs() < 1e-14 { 0.1 } else { 0.0 };
            self.0.h2(x, z, w) + bump
        }
        fn grad_h1(&self, x: f64, z: f64, w: f64) -> [f64; 3] {
            self.0.grad_h1(x, z, w)
        }
        fn grad_h2(&self, x: f64, z: f64, w: f64) -> [f64; 3] {
            self.0.grad_h2(x, z, w)
        }
    }

    #[test]
    fn injected_defects_are_reported() {
        let (perm, bd) = model(1.0, 2.0, 2.0);
        let broken = BoundaryDataModel::new(Arc::new(Shifted(bd.clone())), bd.geometry);
        let rep = check_transmission_compat(&broken, &perm, 11, 1.0);
        assert!((rep.continuity - 0.1).abs() < 1e-12);

        let doubled =
            PermittivityModel::from_profile(Sigma1Profile::Constant { value: 1.0 }, 4.0, geom())
                .unwrap();
        let rep = check_transmission_compat(&bd, &doubled, 11, 1.0);
        assert!(rep.flux > 0.1);
    }

    #[test]
    fn m_constants_bound_the_samples_and_are_resolution_stable() {
        let (_, bd) = model(1.0, 1.0, 1.0);
        let coarse = estimate_m_constants(&bd, 1.0, Resolution::default()).unwrap();
        let fine = estimate_m_constants(
            &bd,
            1.0,
            Resolution {
                nx: 81,
                nz: 33,
                nw: 129,
            },
        )
        .unwrap();
        assert!((coarse.m3 - fine.m3).abs() <= 0.02 * fine.m3);
        assert!((coarse.m1 - fine.m1).abs() <= 0.02 * fine.m1);
        // The dw bound at an off-grid point.
        let (x, z, w) = (0.123, -1.37, 0.41);
        assert!(bd.grad_h1(x, z, w)[2].abs() <= coarse.m3.sqrt());
        let zg = -0.2;
        assert!(bd.grad_h2(x, zg, w)[2].abs() <= (coarse.m3 / (1.0 + w)).sqrt());
    }

    #[test]
    fn m1_scales_with_potential_squared() {
        let (_, b1) = model(1.0, 1.0, 1.0);
        let (_, b2) = model(1.0, 1.0, 2.0);
        let r = Resolution::default();
        let a = estimate_m_constants(&b1, 0.0, r).unwrap();
        let b = estimate_m_constants(&b2, 0.0, r).unwrap();
        let sup = |bd: &BoundaryDataModel| bd.grad_h1(0.0, -1.5, -1.0)[1].abs();
        assert!((sup(&b2) / sup(&b1) - 2.0).abs() < 1e-14);
        assert!((b.m1 / a.m1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_range_and_monotonicity() {
        let (_, bd) = model(1.0, 1.0, 1.0);
        let r = Resolution::default();
        let m = estimate_m_constants(&bd, -1.0, r).unwrap();
        assert!(m.m1.is_finite() && m.m3.is_finite());
        let mut prev = m;
        for w_max in [-0.5, 0.0, 0.5, 1.0, 2.0] {
            let m = estimate_m_constants(&bd, w_max, r).unwrap();
            assert!(m.m1 >= prev.m1 * (1.0 - 1e-12) && m.m3 >= prev.m3 * (1.0 - 1e-12));
            prev = m;
        }
        assert!(estimate_m_constants(&bd, -1.5, r).is_err());
    }

    #[test]
    fn bounds_invariant_and_certification() {
        let perm = PermittivityModel::from_profile(
            Sigma1Profile::Bump {
                base: 1.0,
                amplitude: 2.0,
            },
            1.5,
            geom(),
        )
        .unwrap();
        assert_eq!(perm.bound_violation(), 0.0);
        assert_eq!((perm.sigma_min, perm.sigma_max), (1.0, 3.0));
        assert!(perm.clone().with_certified_bounds(0.5, 4.0).is_ok());
        assert!(perm.clone().with_certified_bounds(1.2, 4.0).is_err());
        assert!(perm.with_certified_bounds(0.5, 2.0).is_err());
        let bad = PermittivityModel::from_profile(
            Sigma1Profile::Affine {
                value: 1.0,
                slope: 2.0,
            },
            1.0,
            geom(),
        );
        assert!(bad.is_err());
    }
}
